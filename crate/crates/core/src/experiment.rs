//! A reproducible experiment: scene distribution, seeded splits, network and
//! training setup, all in one serializable record.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::grid::Mask;
use crate::lunet::{surfaces_to_tensor, LUnetConfig, TrainOptions, TrainSample};
use crate::preprocess::{prepare_frame, PolarityMode, PreprocessConfig, TimeSurface};
use crate::synth::{generate_sample, LabeledSample, SceneDistribution, SceneSpec};

/// Scenes `seed, seed + 1, ..., seed + count - 1` of the distribution.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub count: usize,
}

impl Split {
    fn overlaps(&self, other: &Split) -> bool {
        let end = |s: &Split| s.seed.saturating_add(s.count as u64);
        self.count > 0 && other.count > 0 && self.seed < end(other) && other.seed < end(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    #[serde(default)]
    pub distribution: SceneDistribution,
    pub train: Split,
    pub dev: Split,
    pub test: Split,
    #[serde(default)]
    pub model: LUnetConfig,
    #[serde(default)]
    pub training: TrainOptions,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl Experiment {
    pub fn from_json(text: &str) -> Result<Self> {
        let exp: Self = serde_json::from_str(text)?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Splits must not share scenes.
    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        let splits = [
            ("train", self.train),
            ("dev", self.dev),
            ("test", self.test),
        ];
        for (i, (a, sa)) in splits.iter().enumerate() {
            for (b, sb) in &splits[i + 1..] {
                if sa.overlaps(sb) {
                    return Err(Error::InvalidParams(format!(
                        "{a} and {b} splits share seeds"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn specs(&self, split: Split) -> Vec<SceneSpec> {
        self.distribution.sample_many(split.seed, split.count)
    }

    pub fn samples(&self, split: Split) -> Result<Vec<LabeledSample>> {
        self.specs(split).iter().map(generate_sample).collect()
    }
}

/// Network inputs for labeled samples.
pub fn training_pairs(
    samples: &[LabeledSample],
    config: &PreprocessConfig,
    mode: PolarityMode,
) -> Result<Vec<TrainSample>> {
    samples
        .iter()
        .map(|s| {
            let surfaces = prepare_frame(&s.recording, s.t_ref_us, config, mode)?;
            Ok(TrainSample {
                input: surfaces_to_tensor(&surfaces)?,
                target: s.gt_mask.clone(),
            })
        })
        .collect()
}

/// Merged surfaces with their masks, as consumed by Hough tuning.
pub fn hough_pairs(
    samples: &[LabeledSample],
    config: &PreprocessConfig,
) -> Result<Vec<(TimeSurface, Mask)>> {
    samples
        .iter()
        .map(|s| {
            let mut surfaces =
                prepare_frame(&s.recording, s.t_ref_us, config, PolarityMode::Merged)?;
            Ok((surfaces.remove(0), s.gt_mask.clone()))
        })
        .collect()
}
