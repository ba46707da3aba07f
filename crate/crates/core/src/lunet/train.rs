//! Mini-batch SGD with momentum on the dice-contour loss.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Gradients, LUnet};
use super::ops::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::loss::{self, LossBreakdown, LossParams};

/// One training pair: stacked surface channels and the line mask.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub input: Tensor<f32>,
    pub target: Mask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossParams,
    /// Train on random square crops of this side instead of whole samples.
    pub crop: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 4,
            seed: 0,
            loss: LossParams::default(),
            crop: Some(64),
        }
    }
}

/// Mean loss terms over one epoch, as logged.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub dice: f64,
    pub reg: f64,
    pub area: f64,
    pub perimeter: f64,
}

impl EpochLog {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradients<T: Scalar>(
    model: &LUnet<T>,
    input: &Tensor<T>,
    target: &Mask,
    params: &LossParams,
) -> Result<(LossBreakdown, Gradients<T>)> {
    if (input.width, input.height) != (target.width(), target.height()) {
        return Err(Error::ShapeMismatch(format!(
            "input {}x{} vs target {}x{}",
            input.width,
            input.height,
            target.width(),
            target.height()
        )));
    }
    let cache = model.forward_cached(input)?;
    let out = cache.output();
    let probs: Vec<f64> = out.data.iter().map(|v| v.as_f64()).collect();
    let mut dp = vec![0.0; probs.len()];
    let breakdown = loss::evaluate(
        &probs,
        target.data(),
        out.width,
        out.height,
        params,
        Some(&mut dp),
    );
    let upstream = Tensor::from_vec(
        1,
        out.height,
        out.width,
        dp.into_iter().map(T::of_f64).collect(),
    );
    let mut grads = Gradients::zeros_like(model);
    model.backward(&cache, &upstream, &mut grads)?;
    Ok((breakdown, grads))
}

/// Trains `model` in place and returns the per-epoch log. Deterministic for
/// a given seed.
pub fn train(
    model: &mut LUnet<f32>,
    dataset: &[TrainSample],
    opts: &TrainOptions,
) -> Result<Vec<EpochLog>> {
    train_with(model, dataset, opts, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    model: &mut LUnet<f32>,
    dataset: &[TrainSample],
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(opts.lr >= 0.0 && opts.lr.is_finite())
        || !(0.0..1.0).contains(&opts.momentum)
        || opts.batch_size == 0
    {
        return Err(Error::InvalidParams(format!(
            "lr {} momentum {} batch {}",
            opts.lr, opts.momentum, opts.batch_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut velocity = Gradients::zeros_like(model);
    let lr = opts.lr as f32;
    let momentum = opts.momentum as f32;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for batch in order.chunks(opts.batch_size) {
            let mut acc = Gradients::zeros_like(model);
            for &i in batch {
                let sample = &dataset[i];
                let (input, target) = match opts.crop {
                    Some(c) => random_crop(sample, c, &mut rng),
                    None => (sample.input.clone(), sample.target.clone()),
                };
                let (b, g) = sample_gradients(model, &input, &target, &opts.loss)?;
                if !b.total.is_finite() {
                    return Err(Error::DivergedLoss {
                        epoch,
                        detail: format!("{b:?}"),
                    });
                }
                sum.total += b.total;
                sum.dice += b.dice;
                sum.reg += b.reg;
                sum.area += b.area;
                sum.perimeter += b.perimeter;
                acc.add(&g);
            }
            acc.scale(1.0 / batch.len() as f32);
            velocity.scale(momentum);
            velocity.add(&acc);
            for (param, v) in model.tensors_mut().into_iter().zip(velocity.tensors()) {
                for (p, &dv) in param.iter_mut().zip(v) {
                    *p -= lr * dv;
                }
            }
        }
        let n = dataset.len() as f64;
        let entry = EpochLog {
            epoch,
            total: sum.total / n,
            dice: sum.dice / n,
            reg: sum.reg / n,
            area: sum.area / n,
            perimeter: sum.perimeter / n,
        };
        if model
            .tensors()
            .iter()
            .any(|t| t.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::DivergedLoss {
                epoch,
                detail: "non-finite parameters".into(),
            });
        }
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(log)
}

fn random_crop(sample: &TrainSample, size: usize, rng: &mut ChaCha8Rng) -> (Tensor<f32>, Mask) {
    let (h, w) = (sample.input.height, sample.input.width);
    if size >= h && size >= w {
        return (sample.input.clone(), sample.target.clone());
    }
    let ch = size.min(h);
    let cw = size.min(w);
    let y0 = rng.random_range(0..=h - ch);
    let x0 = rng.random_range(0..=w - cw);
    let input = sample.input.window(y0, x0, ch, cw);
    let target = Mask::from_fn(cw, ch, |x, y| sample.target.get(x0 + x, y0 + y));
    (input, target)
}
