//! Browser demo. A [`Scene`] holds one simulated frame; the page rebuilds its
//! time surface with or without STC filtering and overlays Hough detections
//! and the ground truth.

use skyshield::eval::dice;
use skyshield::grid::Mask;
use skyshield::hough::{hough_detect, HoughParams};
use skyshield::preprocess::{build_time_surface, stc_filter, PolarityMode, StcParams, TimeSurface};
use skyshield::synth::{generate_sample, LabeledSample, SceneDistribution};
use wasm_bindgen::prelude::*;

/// One simulated frame and the current view of it.
pub struct Scene {
    sample: LabeledSample,
    surface: TimeSurface,
    kept: usize,
    detection: Option<Mask>,
}

impl Scene {
    /// Draws scene `seed` at `size × size` with a fixed noise rate
    /// (events per pixel per second).
    pub fn simulate(seed: u64, size: u16, noise_rate: f64) -> skyshield::Result<Self> {
        let dist = SceneDistribution {
            width: size,
            height: size,
            noise_rate: [noise_rate, noise_rate],
            ..SceneDistribution::default()
        };
        dist.validate()?;
        let sample = generate_sample(&dist.sample(seed))?;
        let (surface, kept) = frame(&sample, true, 30.0)?;
        Ok(Self {
            sample,
            surface,
            kept,
            detection: None,
        })
    }

    pub fn rebuild(&mut self, use_stc: bool, tau_ms: f64) -> skyshield::Result<()> {
        (self.surface, self.kept) = frame(&self.sample, use_stc, tau_ms)?;
        self.detection = None;
        Ok(())
    }

    /// Runs the baseline on the current surface; returns its Dice score.
    pub fn detect(&mut self, threshold: u32, binarize: f64) -> skyshield::Result<f64> {
        let params = HoughParams {
            accumulator_threshold: threshold,
            binarize_threshold: binarize,
            ..HoughParams::default()
        };
        let mask = hough_detect(&self.surface, &params)?;
        let score = dice(&mask, &self.sample.gt_mask)?;
        self.detection = Some(mask);
        Ok(score)
    }

    pub fn events(&self) -> usize {
        self.sample.recording.len()
    }

    pub fn kept(&self) -> usize {
        self.kept
    }

    pub fn surface(&self) -> &TimeSurface {
        &self.surface
    }

    pub fn ground_truth(&self) -> &Mask {
        &self.sample.gt_mask
    }

    pub fn detection(&self) -> Option<&Mask> {
        self.detection.as_ref()
    }

    /// RGBA pixels: the surface in grey, ground truth in green, detections
    /// in red (yellow where both).
    pub fn render(&self, show_truth: bool, show_detection: bool) -> Vec<u8> {
        let (w, h) = (self.surface.width(), self.surface.height());
        let mut out = Vec::with_capacity(w * h * 4);
        for y in 0..h {
            for x in 0..w {
                let g = (self.surface.get(x, y) * 200.0).round() as u8;
                let truth = show_truth && self.sample.gt_mask.get(x, y);
                let hit = show_detection && self.detection.as_ref().is_some_and(|m| m.get(x, y));
                let px = match (truth, hit) {
                    (true, true) => [255, 230, 0],
                    (true, false) => [0, 220, 90],
                    (false, true) => [255, 40, 40],
                    (false, false) => [g, g, g],
                };
                out.extend_from_slice(&[px[0], px[1], px[2], 255]);
            }
        }
        out
    }
}

/// Merged surface at the frame end and the number of events used.
fn frame(
    sample: &LabeledSample,
    use_stc: bool,
    tau_ms: f64,
) -> skyshield::Result<(TimeSurface, usize)> {
    let rec = &sample.recording;
    let filtered = if use_stc {
        stc_filter(rec, &StcParams::default())?
    } else {
        rec.clone()
    };
    let mut surfaces = build_time_surface(
        &filtered,
        sample.t_ref_us,
        tau_ms * 1000.0,
        PolarityMode::Merged,
    )?;
    Ok((surfaces.remove(0), filtered.len()))
}

fn js(e: skyshield::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: u16, noise_rate: f64) -> Result<Demo, JsError> {
        Ok(Self {
            scene: Scene::simulate(u64::from(seed), size, noise_rate).map_err(js)?,
        })
    }

    pub fn size(&self) -> u32 {
        self.scene.surface().width() as u32
    }

    pub fn events(&self) -> u32 {
        self.scene.events() as u32
    }

    pub fn kept(&self) -> u32 {
        self.scene.kept() as u32
    }

    pub fn rebuild(&mut self, use_stc: bool, tau_ms: f64) -> Result<(), JsError> {
        self.scene.rebuild(use_stc, tau_ms).map_err(js)
    }

    pub fn detect(&mut self, threshold: u32, binarize: f64) -> Result<f64, JsError> {
        self.scene.detect(threshold, binarize).map_err(js)
    }

    pub fn render(&self, show_truth: bool, show_detection: bool) -> Vec<u8> {
        self.scene.render(show_truth, show_detection)
    }
}
