//! Exponentially decayed time surfaces.
//!
//! `S(x, y) = exp(-(t_ref - T(x, y)) / tau)` where `T` is the timestamp of
//! the most recent event at the pixel no later than `t_ref`; pixels that
//! never fired are 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{EventRecording, Polarity};
use crate::grid::FloatImage;

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarityMode {
    /// One surface, polarity ignored.
    Merged,
    /// Positive surface then negative surface.
    #[default]
    Separate,
}

impl PolarityMode {
    pub fn channels(self) -> usize {
        match self {
            PolarityMode::Merged => 1,
            PolarityMode::Separate => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSurface {
    width: usize,
    height: usize,
    values: Vec<f64>,
    t_ref_us: u64,
    tau_us: f64,
}

impl TimeSurface {
    /// A surface from precomputed values, which must lie in [0, 1].
    pub fn from_values(
        width: usize,
        height: usize,
        values: Vec<f64>,
        t_ref_us: u64,
        tau_us: f64,
    ) -> Result<Self> {
        crate::grid::check_len(width, height, values.len())?;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParams(format!(
                "surface value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            t_ref_us,
            tau_us,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn t_ref_us(&self) -> u64 {
        self.t_ref_us
    }

    pub fn tau_us(&self) -> f64 {
        self.tau_us
    }

    pub fn to_float_image(&self) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            data: self.values.iter().map(|&v| v as f32).collect(),
        }
    }

    /// Wraps a stored surface (e.g. read from PFM). Values are clamped to
    /// [0, 1]; NaN becomes 0.
    pub fn from_float_image(img: &FloatImage, t_ref_us: u64, tau_us: f64) -> Self {
        Self {
            width: img.width,
            height: img.height,
            values: img
                .data
                .iter()
                .map(|&v| {
                    if v.is_nan() {
                        0.0
                    } else {
                        f64::from(v).clamp(0.0, 1.0)
                    }
                })
                .collect(),
            t_ref_us,
            tau_us,
        }
    }
}

/// Builds the time surface(s) of `rec` at `t_ref_us`. Returns one surface in
/// merged mode, `[positive, negative]` in separate mode.
pub fn build_time_surface(
    rec: &EventRecording,
    t_ref_us: u64,
    tau_us: f64,
    mode: PolarityMode,
) -> Result<Vec<TimeSurface>> {
    if !(tau_us > 0.0 && tau_us.is_finite()) {
        return Err(Error::InvalidTau(tau_us));
    }
    Ok(match mode {
        PolarityMode::Merged => vec![single(rec, t_ref_us, tau_us, None)],
        PolarityMode::Separate => vec![
            single(rec, t_ref_us, tau_us, Some(Polarity::Positive)),
            single(rec, t_ref_us, tau_us, Some(Polarity::Negative)),
        ],
    })
}

fn single(rec: &EventRecording, t_ref_us: u64, tau_us: f64, only: Option<Polarity>) -> TimeSurface {
    let (w, h) = (rec.width() as usize, rec.height() as usize);
    let end = rec.events().partition_point(|e| e.t <= t_ref_us);
    let mut last: Vec<Option<u64>> = vec![None; w * h];
    for e in &rec.events()[..end] {
        if only.is_none_or(|p| p == e.polarity) {
            last[e.y as usize * w + e.x as usize] = Some(e.t);
        }
    }
    let values = last
        .into_iter()
        .map(|t| match t {
            Some(t) => (-((t_ref_us - t) as f64) / tau_us).exp(),
            None => 0.0,
        })
        .collect();
    TimeSurface {
        width: w,
        height: h,
        values,
        t_ref_us,
        tau_us,
    }
}
