//! Event-stream preprocessing: STC noise filtering and time surfaces.

mod stc;
mod surface;

pub use stc::{stc_filter, Causality, StcParams};
pub use surface::{build_time_surface, PolarityMode, TimeSurface};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::event::EventRecording;

pub const DEFAULT_TAU_US: f64 = 30_000.0;
pub const DEFAULT_WINDOW_US: u64 = 33_000;

/// Front-end settings: filter, then build surfaces at the frame end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// `None` disables filtering.
    pub stc: Option<StcParams>,
    pub tau_us: f64,
    pub window_us: u64,
    pub polarity: PolarityMode,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            stc: Some(StcParams::default()),
            tau_us: DEFAULT_TAU_US,
            window_us: DEFAULT_WINDOW_US,
            polarity: PolarityMode::Separate,
        }
    }
}

/// Filtered surfaces for one frame ending at `t_ref_us` (inclusive). Only
/// events in the accumulation window `[t_ref - window, t_ref]` are used.
pub fn prepare_frame(
    rec: &EventRecording,
    t_ref_us: u64,
    config: &PreprocessConfig,
    mode: PolarityMode,
) -> Result<Vec<TimeSurface>> {
    let window = rec.slice_by_time(
        t_ref_us.saturating_sub(config.window_us),
        t_ref_us.saturating_add(1),
    )?;
    let filtered = match &config.stc {
        Some(p) => stc_filter(&window, p)?,
        None => window,
    };
    build_time_surface(&filtered, t_ref_us, config.tau_us, mode)
}
