use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{
    concat, max_pool2, max_pool2_backward, relu, relu_backward, sigmoid, split, upsample2,
    upsample2_backward, Conv, ConvGrad, Scalar, Tensor,
};
use crate::error::{Error, Result};
use crate::grid::Heatmap;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LUnetConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    /// Encoder levels, including the bottleneck.
    pub depth: usize,
    pub kernel_size: usize,
    pub seed: u64,
}

impl Default for LUnetConfig {
    fn default() -> Self {
        Self {
            in_channels: 2,
            base_channels: 8,
            depth: 2,
            kernel_size: 3,
            seed: 0,
        }
    }
}

impl LUnetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(1..=2).contains(&self.in_channels) {
            return bad("in_channels must be 1 or 2");
        }
        if self.base_channels == 0 {
            return bad("base_channels must be positive");
        }
        if self.depth == 0 || self.depth > 6 {
            return bad("depth must be between 1 and 6");
        }
        if self.kernel_size.is_multiple_of(2) {
            return bad("kernel_size must be odd");
        }
        Ok(())
    }

    /// Channel width of encoder level `l`.
    pub fn level_channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Inputs are padded to a multiple of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }

    /// `(in, out, kernel)` of every convolution in declaration order:
    /// encoder levels top-down, decoder levels bottom-up, then the 1×1 head.
    pub fn layer_table(&self) -> Vec<(usize, usize, usize)> {
        let k = self.kernel_size;
        let mut layers = Vec::new();
        for l in 0..self.depth {
            let cin = if l == 0 {
                self.in_channels
            } else {
                self.level_channels(l - 1)
            };
            let c = self.level_channels(l);
            layers.push((cin, c, k));
            layers.push((c, c, k));
        }
        for l in (0..self.depth - 1).rev() {
            let c = self.level_channels(l);
            layers.push((self.level_channels(l + 1) + c, c, k));
            layers.push((c, c, k));
        }
        layers.push((self.base_channels, 1, 1));
        layers
    }

    pub fn param_count(&self) -> usize {
        self.layer_table()
            .iter()
            .map(|&(i, o, k)| o * i * k * k + o)
            .sum()
    }
}

/// The encoder-decoder network. Encoder level `l` is two conv+ReLU at
/// `base * 2^l` channels with 2×2 max-pooling between levels; each decoder
/// level upsamples, concatenates the matching encoder output and applies two
/// conv+ReLU; a 1×1 conv and sigmoid produce the heatmap.
#[derive(Clone, Debug, PartialEq)]
pub struct LUnet<T> {
    config: LUnetConfig,
    /// All convolutions in [`LUnetConfig::layer_table`] order.
    layers: Vec<Conv<T>>,
}

pub type LUnetModel = LUnet<f32>;

/// Parameter gradients, one entry per convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<ConvGrad<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(model: &LUnet<T>) -> Self {
        Self {
            layers: model.layers.iter().map(ConvGrad::zeros_like).collect(),
        }
    }

    /// Flattened tensors in the same order as [`LUnet::tensors`].
    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weight.as_slice(), g.bias.as_slice()])
            .collect()
    }

    pub fn scale(&mut self, s: T) {
        for g in &mut self.layers {
            for v in g.weight.iter_mut().chain(g.bias.iter_mut()) {
                *v = *v * s;
            }
        }
    }

    pub fn add(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weight.iter_mut().zip(&b.weight) {
                *x = *x + y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x = *x + y;
            }
        }
    }
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardCache<T> {
    orig_h: usize,
    orig_w: usize,
    /// Input of every convolution, in layer order.
    conv_inputs: Vec<Tensor<T>>,
    /// Post-ReLU output of every convolution except the head.
    conv_outputs: Vec<Tensor<T>>,
    /// Shape of the pooled tensor and its argmax, per pooling step.
    pools: Vec<((usize, usize, usize), Vec<usize>)>,
    /// Padded-size output probabilities.
    probs: Tensor<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Output probabilities cropped to the input size.
    pub fn output(&self) -> Tensor<T> {
        self.probs.crop(self.orig_h, self.orig_w)
    }
}

impl<T: Scalar> LUnet<T> {
    /// Fan-in scaled uniform weights, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`,
    /// zero biases.
    pub fn init(config: LUnetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .layer_table()
            .into_iter()
            .map(|(cin, cout, k)| {
                let mut conv = Conv::zeros(cin, cout, k);
                let bound = (6.0 / (cin * k * k) as f64).sqrt();
                for w in &mut conv.weight {
                    *w = T::of_f64(rng.random_range(-bound..bound));
                }
                conv
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub(crate) fn from_layers(config: LUnetConfig, layers: Vec<Conv<T>>) -> Result<Self> {
        config.validate()?;
        let table = config.layer_table();
        if table.len() != layers.len()
            || table
                .iter()
                .zip(&layers)
                .any(|(&(i, o, k), c)| (c.in_channels, c.out_channels, c.kernel) != (i, o, k))
        {
            return Err(Error::InvalidConfig(
                "layer shapes do not match the configuration".into(),
            ));
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &LUnetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Conv<T>] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Conv::param_count).sum()
    }

    /// Weight and bias of each layer, in declaration order.
    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|c| [c.weight.as_slice(), c.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|c| [c.weight.as_mut_slice(), c.bias.as_mut_slice()])
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> LUnet<U> {
        LUnet {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|c| Conv {
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                    kernel: c.kernel,
                    weight: c.weight.iter().map(|v| U::of_f64(v.as_f64())).collect(),
                    bias: c.bias.iter().map(|v| U::of_f64(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.channels != self.config.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} input channels, got {}",
                self.config.in_channels, input.channels
            )));
        }
        if input.height == 0 || input.width == 0 {
            return Err(Error::ShapeMismatch("empty input".into()));
        }
        Ok(())
    }

    /// Output probabilities, `1 × H × W`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(input)?.output())
    }

    /// Forward pass as a [`Heatmap`].
    pub fn predict(&self, input: &Tensor<T>) -> Result<Heatmap> {
        to_heatmap(&self.forward(input)?)
    }

    pub fn forward_cached(&self, input: &Tensor<T>) -> Result<ForwardCache<T>> {
        self.check_input(input)?;
        let m = self.config.size_multiple();
        let (h, w) = (input.height, input.width);
        let x = input.pad_to(h.div_ceil(m) * m, w.div_ceil(m) * m);

        let depth = self.config.depth;
        let mut conv_inputs = Vec::with_capacity(self.layers.len());
        let mut conv_outputs = Vec::with_capacity(self.layers.len());
        let mut pools = Vec::new();
        let mut skips = Vec::new();
        let mut layer = 0;
        let run = |x: Tensor<T>,
                   layer: &mut usize,
                   ins: &mut Vec<Tensor<T>>,
                   outs: &mut Vec<Tensor<T>>| {
            let y = relu(self.layers[*layer].forward(&x));
            ins.push(x);
            outs.push(y.clone());
            *layer += 1;
            y
        };

        let mut x = x;
        for l in 0..depth {
            if l > 0 {
                let (pooled, arg) = max_pool2(&x);
                pools.push((x.shape(), arg));
                x = pooled;
            }
            x = run(x, &mut layer, &mut conv_inputs, &mut conv_outputs);
            x = run(x, &mut layer, &mut conv_inputs, &mut conv_outputs);
            if l + 1 < depth {
                skips.push(x.clone());
            }
        }
        for _ in (0..depth - 1).rev() {
            let skip = skips.pop().expect("one skip per decoder level");
            x = concat(&upsample2(&x), &skip);
            x = run(x, &mut layer, &mut conv_inputs, &mut conv_outputs);
            x = run(x, &mut layer, &mut conv_inputs, &mut conv_outputs);
        }
        let logits = self.layers[layer].forward(&x);
        conv_inputs.push(x);
        let mut probs = logits;
        for v in &mut probs.data {
            *v = sigmoid(*v);
        }
        Ok(ForwardCache {
            orig_h: h,
            orig_w: w,
            conv_inputs,
            conv_outputs,
            pools,
            probs,
        })
    }

    /// Back-propagates `grad_probs` (gradient of the objective with respect
    /// to the cropped output probabilities). Parameter gradients are added
    /// into `grads`; the input gradient is returned.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_probs: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        if grad_probs.shape() != (1, cache.orig_h, cache.orig_w) {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient {:?} vs output (1, {}, {})",
                grad_probs.shape(),
                cache.orig_h,
                cache.orig_w
            )));
        }
        let (ph, pw) = (cache.probs.height, cache.probs.width);
        // through the sigmoid; padded positions receive no gradient
        let mut g = Tensor::zeros(1, ph, pw);
        for y in 0..cache.orig_h {
            for x in 0..cache.orig_w {
                let p = cache.probs.data[y * pw + x];
                g.data[y * pw + x] = grad_probs.data[y * cache.orig_w + x] * p * (T::one() - p);
            }
        }

        let depth = self.config.depth;
        let n = self.layers.len();
        let mut layer = n - 1;
        g = self.layers[layer].backward(&cache.conv_inputs[layer], &g, &mut grads.layers[layer]);

        let mut back = |g: Tensor<T>, layer: &mut usize| {
            *layer -= 1;
            let g = relu_backward(&cache.conv_outputs[*layer], g);
            self.layers[*layer].backward(&cache.conv_inputs[*layer], &g, &mut grads.layers[*layer])
        };

        let mut skip_grads = Vec::with_capacity(depth.saturating_sub(1));
        for l in 0..depth - 1 {
            g = back(g, &mut layer);
            g = back(g, &mut layer);
            let skip_c = self.config.level_channels(l);
            let (up, skip) = split(&g, g.channels - skip_c);
            skip_grads.push(skip);
            g = upsample2_backward(&up);
        }
        for l in (0..depth).rev() {
            g = back(g, &mut layer);
            g = back(g, &mut layer);
            if l > 0 {
                // this level's skip gradient joins the flow before pooling
                let (shape, arg) = &cache.pools[l - 1];
                g = max_pool2_backward(*shape, arg, &g);
                if let Some(s) = skip_grads.pop() {
                    for (a, &b) in g.data.iter_mut().zip(&s.data) {
                        *a = *a + b;
                    }
                }
            }
        }
        debug_assert_eq!(layer, 0);
        Ok(g.crop(cache.orig_h, cache.orig_w))
    }
}

/// Probabilities as a heatmap. A saturated f32 sigmoid rounds to exactly 0
/// or 1; those are pulled back inside the open interval.
pub fn to_heatmap<T: Scalar>(t: &Tensor<T>) -> Result<Heatmap> {
    const LO: f64 = f64::MIN_POSITIVE;
    const HI: f64 = 1.0 - f64::EPSILON / 2.0;
    Heatmap::new(
        t.width,
        t.height,
        t.data.iter().map(|v| v.as_f64().clamp(LO, HI)).collect(),
    )
}
