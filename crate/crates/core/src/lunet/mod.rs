//! LUnet: a small U-shaped encoder-decoder that maps time-surface channels to
//! a per-pixel line probability, with hand-written backpropagation.

pub mod checkpoint;
mod model;
pub mod ops;
mod train;

pub use model::{to_heatmap, ForwardCache, Gradients, LUnet, LUnetConfig, LUnetModel};
pub use ops::{Scalar, Tensor};
pub use train::{sample_gradients, train, train_with, EpochLog, TrainOptions, TrainSample};

use crate::error::{Error, Result};
use crate::grid::FloatImage;
use crate::preprocess::TimeSurface;

/// Stacks surfaces into a network input.
pub fn surfaces_to_tensor<T: Scalar>(surfaces: &[TimeSurface]) -> Result<Tensor<T>> {
    let first = surfaces
        .first()
        .ok_or_else(|| Error::ShapeMismatch("no input channels".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(surfaces.len() * h * w);
    for s in surfaces {
        if (s.height(), s.width()) != (h, w) {
            return Err(Error::ShapeMismatch(
                "surface channels differ in size".into(),
            ));
        }
        data.extend(s.values().iter().map(|&v| T::of_f64(v)));
    }
    Ok(Tensor::from_vec(surfaces.len(), h, w, data))
}

/// Stacks float images (e.g. PFM files) into a network input.
pub fn images_to_tensor<T: Scalar>(images: &[FloatImage]) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::ShapeMismatch("no input channels".into()))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        if (img.height, img.width) != (h, w) {
            return Err(Error::ShapeMismatch("input channels differ in size".into()));
        }
        data.extend(img.data.iter().map(|&v| T::of_f64(f64::from(v))));
    }
    Ok(Tensor::from_vec(images.len(), h, w, data))
}
