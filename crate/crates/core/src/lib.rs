//! Thin-line segmentation for event cameras: synthetic scenes, event
//! preprocessing, a small U-net with a contour-regularized loss, a Hough
//! baseline and evaluation tools.

pub mod error;
pub mod eval;
pub mod event;
pub mod experiment;
pub mod grid;
pub mod hough;
pub mod loss;
pub mod lunet;
pub mod pnm;
pub mod preprocess;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
