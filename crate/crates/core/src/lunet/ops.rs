//! Channel-major tensors and the handful of layers LUnet needs, each with an
//! explicit backward pass.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

/// Element type of the network: `f32` for training and inference, `f64` for
/// gradient verification.
pub trait Scalar: Float + Debug + Default + Sum + Send + Sync + 'static {
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn of_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// A `channels × height × width` tensor stored channel-major, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor data length");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }

    /// Zero-pads on the bottom and right to `height × width`.
    pub fn pad_to(&self, height: usize, width: usize) -> Self {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut out = Self::zeros(self.channels, height, width);
        for c in 0..self.channels {
            for y in 0..self.height {
                let src = &self.plane(c)[y * self.width..(y + 1) * self.width];
                let start = (c * height + y) * width;
                out.data[start..start + self.width].copy_from_slice(src);
            }
        }
        out
    }

    /// Top-left `height × width` window.
    pub fn crop(&self, height: usize, width: usize) -> Self {
        self.window(0, 0, height, width)
    }

    pub fn window(&self, y0: usize, x0: usize, height: usize, width: usize) -> Self {
        if y0 == 0 && x0 == 0 && height == self.height && width == self.width {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            for y in y0..y0 + height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + width]);
            }
        }
        Self::from_vec(self.channels, height, width, data)
    }
}

/// 2-D convolution with "same" zero padding and odd square kernels.
/// `weight` is `[out][in][k][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: vec![T::zero(); out_channels * in_channels * kernel * kernel],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> T {
        let k = self.kernel;
        self.weight[((o * self.in_channels + i) * k + ky) * k + kx]
    }

    pub fn forward(&self, input: &Tensor<T>) -> Tensor<T> {
        debug_assert_eq!(input.channels, self.in_channels);
        let (h, w) = (input.height, input.width);
        let mut out = Tensor::zeros(self.out_channels, h, w);
        for o in 0..self.out_channels {
            let plane = out.plane_mut(o);
            plane.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let src = input.plane(i);
                for ky in 0..self.kernel {
                    for kx in 0..self.kernel {
                        let wv = self.w(o, i, ky, kx);
                        for_each_shifted_row(
                            h,
                            w,
                            self.kernel,
                            ky,
                            kx,
                            |dst_row, src_row, x0, x1, sx0| {
                                let d = &mut plane[dst_row * w + x0..dst_row * w + x1];
                                let s = &src[src_row * w + sx0..src_row * w + sx0 + (x1 - x0)];
                                for (dv, &sv) in d.iter_mut().zip(s) {
                                    *dv = *dv + wv * sv;
                                }
                            },
                        );
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to `input`.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grad: &mut ConvGrad<T>,
    ) -> Tensor<T> {
        let (h, w) = (input.height, input.width);
        let k = self.kernel;
        let mut grad_in = Tensor::zeros(self.in_channels, h, w);
        for o in 0..self.out_channels {
            let go = grad_out.plane(o);
            grad.bias[o] = grad.bias[o] + go.iter().copied().sum::<T>();
            for i in 0..self.in_channels {
                let src = input.plane(i);
                for ky in 0..k {
                    for kx in 0..k {
                        let idx = ((o * self.in_channels + i) * k + ky) * k + kx;
                        let wv = self.weight[idx];
                        let mut acc = T::zero();
                        let gi = grad_in.plane_mut(i);
                        for_each_shifted_row(h, w, k, ky, kx, |dst_row, src_row, x0, x1, sx0| {
                            let g = &go[dst_row * w + x0..dst_row * w + x1];
                            let s = &src[src_row * w + sx0..src_row * w + sx0 + (x1 - x0)];
                            let d = &mut gi[src_row * w + sx0..src_row * w + sx0 + (x1 - x0)];
                            for ((&gv, &sv), dv) in g.iter().zip(s).zip(d.iter_mut()) {
                                acc = acc + gv * sv;
                                *dv = *dv + wv * gv;
                            }
                        });
                        grad.weight[idx] = grad.weight[idx] + acc;
                    }
                }
            }
        }
        grad_in
    }
}

/// For kernel tap `(ky, kx)`, visits every output row together with the
/// input row it reads and the valid column span: output columns
/// `x0..x1` read input columns starting at `sx0`.
#[inline]
fn for_each_shifted_row(
    h: usize,
    w: usize,
    kernel: usize,
    ky: usize,
    kx: usize,
    mut f: impl FnMut(usize, usize, usize, usize, usize),
) {
    let pad = (kernel / 2) as isize;
    let dy = ky as isize - pad;
    let dx = kx as isize - pad;
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize - dy.max(0)).max(0) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx.max(0)).max(0) as usize;
    if x1 <= x0 {
        return;
    }
    let sx0 = (x0 as isize + dx) as usize;
    for y in y0..y1 {
        f(y, (y as isize + dy) as usize, x0, x1, sx0);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvGrad<T> {
    pub fn zeros_like(conv: &Conv<T>) -> Self {
        Self {
            weight: vec![T::zero(); conv.weight.len()],
            bias: vec![T::zero(); conv.bias.len()],
        }
    }
}

pub fn relu<T: Scalar>(mut t: Tensor<T>) -> Tensor<T> {
    for v in &mut t.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    t
}

/// Gradient through a ReLU given its output.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, mut grad: Tensor<T>) -> Tensor<T> {
    for (g, &o) in grad.data.iter_mut().zip(&output.data) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
    grad
}

/// 2×2 max pooling with stride 2. Also returns, per output element, the flat
/// input index that won (first maximum in row-major window order).
pub fn max_pool2<T: Scalar>(input: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let (c, h, w) = input.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(c, oh, ow);
    let mut argmax = vec![0usize; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best_idx = (ch * h + 2 * y) * w + 2 * x;
                let mut best = input.data[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (ch * h + 2 * y + dy) * w + 2 * x + dx;
                    if input.data[idx] > best {
                        best = input.data[idx];
                        best_idx = idx;
                    }
                }
                let o = (ch * oh + y) * ow + x;
                out.data[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    (out, argmax)
}

pub fn max_pool2_backward<T: Scalar>(
    input_shape: (usize, usize, usize),
    argmax: &[usize],
    grad: &Tensor<T>,
) -> Tensor<T> {
    let (c, h, w) = input_shape;
    let mut out = Tensor::zeros(c, h, w);
    for (&idx, &g) in argmax.iter().zip(&grad.data) {
        out.data[idx] = out.data[idx] + g;
    }
    out
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = input.shape();
    let mut out = Tensor::zeros(c, 2 * h, 2 * w);
    for ch in 0..c {
        for y in 0..2 * h {
            for x in 0..2 * w {
                out.data[(ch * 2 * h + y) * 2 * w + x] = input.data[(ch * h + y / 2) * w + x / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Scalar>(grad: &Tensor<T>) -> Tensor<T> {
    let (c, h2, w2) = grad.shape();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                let o = (ch * h + y / 2) * w + x / 2;
                out.data[o] = out.data[o] + grad.data[(ch * h2 + y) * w2 + x];
            }
        }
    }
    out
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert_eq!(
        (a.height, a.width),
        (b.height, b.width),
        "concat spatial dims"
    );
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor::from_vec(a.channels + b.channels, a.height, a.width, data)
}

/// Inverse of [`concat`] for gradients: splits after `first` channels.
pub fn split<T: Scalar>(t: &Tensor<T>, first: usize) -> (Tensor<T>, Tensor<T>) {
    let n = first * t.plane_len();
    (
        Tensor::from_vec(first, t.height, t.width, t.data[..n].to_vec()),
        Tensor::from_vec(t.channels - first, t.height, t.width, t.data[n..].to_vec()),
    )
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
