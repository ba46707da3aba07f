use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{binarize, dice, iou};
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::hough::{hough_detect, HoughParams};
use crate::lunet::{surfaces_to_tensor, LUnetModel};
use crate::preprocess::{prepare_frame, PolarityMode, PreprocessConfig, TimeSurface};
use crate::synth::LabeledSample;

/// A segmenter under evaluation.
#[derive(Clone, Debug)]
pub enum Method {
    Lunet(LUnetModel),
    Hough(HoughParams),
    /// Returns the ground truth. Upper bound and harness check.
    Oracle,
    /// Predicts nothing.
    Empty,
}

impl Method {
    /// Resolves a method name. `lunet` needs a model.
    pub fn from_name(name: &str, model: Option<LUnetModel>, hough: HoughParams) -> Result<Self> {
        match name {
            "lunet" => model
                .map(Method::Lunet)
                .ok_or_else(|| Error::MissingModel("lunet evaluation requires a model".into())),
            "hough" => Ok(Method::Hough(hough)),
            "oracle" => Ok(Method::Oracle),
            "empty" => Ok(Method::Empty),
            other => Err(Error::InvalidParams(format!("unknown method {other:?}"))),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Lunet(_) => "lunet",
            Method::Hough(_) => "hough",
            Method::Oracle => "oracle",
            Method::Empty => "empty",
        }
    }

    /// Surface layout the method consumes.
    pub fn polarity_mode(&self) -> PolarityMode {
        match self {
            Method::Lunet(m) if m.config().in_channels == 1 => PolarityMode::Merged,
            Method::Lunet(_) => PolarityMode::Separate,
            _ => PolarityMode::Merged,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub preprocess: PreprocessConfig,
    /// Probability threshold for network output.
    pub threshold: f64,
    /// Untimed runs on the first sample before measuring.
    pub warmup: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            threshold: 0.5,
            warmup: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub index: usize,
    pub iou: f64,
    pub dice: f64,
    /// Segmentation time for the prepared surfaces, excluding preprocessing.
    pub infer_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub samples: Vec<SampleScore>,
    pub mean_iou: f64,
    pub mean_dice: f64,
    pub mean_infer_ms: f64,
    pub config: EvalConfig,
}

/// Segments prepared surfaces. `gt` is only read by the oracle.
pub fn segment(
    method: &Method,
    surfaces: &[TimeSurface],
    gt: &Mask,
    threshold: f64,
) -> Result<Mask> {
    match method {
        Method::Lunet(model) => {
            let input = surfaces_to_tensor::<f32>(surfaces)?;
            Ok(binarize(&model.predict(&input)?, threshold))
        }
        Method::Hough(params) => {
            let s = surfaces
                .first()
                .ok_or_else(|| Error::EmptyInput("no surface".into()))?;
            hough_detect(s, params)
        }
        Method::Oracle => Ok(gt.clone()),
        Method::Empty => Ok(Mask::zeros(gt.width(), gt.height())),
    }
}

/// Scores `method` on every sample.
pub fn run_eval(
    method: &Method,
    samples: &[LabeledSample],
    config: &EvalConfig,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("evaluation set".into()));
    }
    let mode = method.polarity_mode();
    let frames = samples
        .iter()
        .map(|s| prepare_frame(&s.recording, s.t_ref_us, &config.preprocess, mode))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..config.warmup {
        segment(method, &frames[0], &samples[0].gt_mask, config.threshold)?;
    }
    let mut scores = Vec::with_capacity(samples.len());
    for (index, (sample, surfaces)) in samples.iter().zip(&frames).enumerate() {
        let start = Instant::now();
        let pred = segment(method, surfaces, &sample.gt_mask, config.threshold)?;
        let infer_ms = start.elapsed().as_secs_f64() * 1e3;
        scores.push(SampleScore {
            index,
            iou: iou(&pred, &sample.gt_mask)?,
            dice: dice(&pred, &sample.gt_mask)?,
            infer_ms,
        });
    }
    let n = scores.len() as f64;
    Ok(EvalReport {
        method: method.tag().to_string(),
        mean_iou: scores.iter().map(|s| s.iou).sum::<f64>() / n,
        mean_dice: scores.iter().map(|s| s.dice).sum::<f64>() / n,
        mean_infer_ms: scores.iter().map(|s| s.infer_ms).sum::<f64>() / n,
        samples: scores,
        config: config.clone(),
    })
}

/// Plain-text summary table, one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut out = format!(
        "{:<8} | {:>8} | {:>9} | {:>19}\n",
        "Method", "Mean IoU", "Mean Dice", "Mean Inference Time"
    );
    out.push_str(&format!("{}\n", "-".repeat(53)));
    for r in reports {
        out.push_str(&format!(
            "{:<8} | {:>8.4} | {:>9.4} | {:>16.3} ms\n",
            r.method, r.mean_iou, r.mean_dice, r.mean_infer_ms
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_sample, SceneDistribution};

    fn samples() -> Vec<LabeledSample> {
        let dist = SceneDistribution {
            width: 48,
            height: 48,
            ..SceneDistribution::default()
        };
        dist.sample_many(7, 3)
            .iter()
            .map(|s| generate_sample(s).unwrap())
            .collect()
    }

    #[test]
    fn oracle_and_empty() {
        let s = samples();
        let cfg = EvalConfig::default();
        let oracle = run_eval(&Method::Oracle, &s, &cfg).unwrap();
        assert_eq!(oracle.mean_iou, 1.0);
        assert_eq!(oracle.mean_dice, 1.0);
        let empty = run_eval(&Method::Empty, &s, &cfg).unwrap();
        assert_eq!(empty.mean_dice, 0.0);
        assert_eq!(empty.samples.len(), 3);
        let table = render_table(&[oracle, empty]);
        assert!(table.contains("Mean Inference Time"));
        assert_eq!(table.lines().count(), 4);
    }

    #[test]
    fn lunet_requires_model() {
        assert!(matches!(
            Method::from_name("lunet", None, HoughParams::default()),
            Err(Error::MissingModel(_))
        ));
        assert!(Method::from_name("bogus", None, HoughParams::default()).is_err());
        assert!(run_eval(&Method::Oracle, &[], &EvalConfig::default()).is_err());
    }
}
