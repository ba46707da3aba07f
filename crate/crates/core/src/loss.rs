//! Dice-contour regularization loss.
//!
//! ```text
//! L_total = L_dice + lambda * L_reg
//! L_dice  = 1 - (2 Σ p_i g_i + eps) / (Σ p_i + Σ g_i + eps)
//! L_reg   = (1 - (P(p) + delta) / (2 A(p) + delta))^2
//! ```
//!
//! `A(p) = Σ p_i` is the soft area. `P(p)` is a smoothed isotropic total
//! variation: the gradient magnitude `sqrt(dx² + dy² + eta²) - eta`, summed
//! over the zero-padded image and averaged over the four one-sided
//! difference stencils (forward/backward in x × forward/backward in y). The
//! averaging makes `P` exactly symmetric under flips and transposition. For a
//! hard mask `P` tracks the boundary length, so an ideal 1-px line has
//! `P ≈ 2A` and is (almost) unpenalized while compact blobs approach
//! `L_reg = 1`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{check_same_dims, Heatmap, Mask};

/// Smoothing inside the TV magnitude.
pub const TV_ETA: f64 = 1e-8;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossParams {
    pub lambda: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            epsilon: 1e-6,
            delta: 1e-6,
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub dice: f64,
    pub reg: f64,
    pub area: f64,
    pub perimeter: f64,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ContourTerms {
    pub reg: f64,
    pub area: f64,
    pub perimeter: f64,
}

pub fn dice_loss(p: &Heatmap, g: &Mask, epsilon: f64) -> Result<f64> {
    check_same_dims((p.width(), p.height()), (g.width(), g.height()))?;
    Ok(dice_raw(p.values(), g.data(), epsilon).0)
}

pub fn contour_reg(p: &Heatmap, delta: f64) -> ContourTerms {
    contour_raw(p.values(), p.width(), p.height(), delta)
}

pub fn total_loss(p: &Heatmap, g: &Mask, params: &LossParams) -> Result<LossBreakdown> {
    check_same_dims((p.width(), p.height()), (g.width(), g.height()))?;
    Ok(evaluate(
        p.values(),
        g.data(),
        p.width(),
        p.height(),
        params,
        None,
    ))
}

/// `∂L_total / ∂p_i` for every pixel.
pub fn loss_gradient(p: &Heatmap, g: &Mask, params: &LossParams) -> Result<Vec<f64>> {
    check_same_dims((p.width(), p.height()), (g.width(), g.height()))?;
    let mut grad = vec![0.0; p.values().len()];
    evaluate(
        p.values(),
        g.data(),
        p.width(),
        p.height(),
        params,
        Some(&mut grad),
    );
    Ok(grad)
}

/// Loss breakdown and, when `grad` is given, its gradient with respect to
/// `p` (overwritten). `g` holds 0/1 bytes. Dimensions must already match.
pub fn evaluate(
    p: &[f64],
    g: &[u8],
    width: usize,
    height: usize,
    params: &LossParams,
    grad: Option<&mut [f64]>,
) -> LossBreakdown {
    let (dice, sums) = dice_raw(p, g, params.epsilon);
    let terms = contour_raw(p, width, height, params.delta);
    let total = dice + params.lambda * terms.reg;

    if let Some(grad) = grad {
        let (inter, denom) = sums;
        let num = 2.0 * inter + params.epsilon;
        for (gi, &gt) in grad.iter_mut().zip(g) {
            let gt = f64::from(gt);
            *gi = -(2.0 * gt * denom - num) / (denom * denom);
        }
        if params.lambda != 0.0 {
            let a = 2.0 * terms.area + params.delta;
            let q = (terms.perimeter + params.delta) / a;
            // dL/dP and dL/dA
            let d_perimeter = -2.0 * (1.0 - q) / a;
            let d_area = 2.0 * (1.0 - q) * 2.0 * (terms.perimeter + params.delta) / (a * a);
            let mut tv_grad = vec![0.0; p.len()];
            tv_accumulate(p, width, height, Some(&mut tv_grad));
            for (gi, tv) in grad.iter_mut().zip(&tv_grad) {
                *gi += params.lambda * (d_perimeter * tv + d_area);
            }
        }
    }

    LossBreakdown {
        total,
        dice,
        reg: terms.reg,
        area: terms.area,
        perimeter: terms.perimeter,
    }
}

/// Returns the loss and `(Σ p g, Σ p + Σ g + eps)`.
fn dice_raw(p: &[f64], g: &[u8], epsilon: f64) -> (f64, (f64, f64)) {
    let mut inter = 0.0;
    let mut sum_p = 0.0;
    let mut sum_g = 0.0;
    for (&pi, &gi) in p.iter().zip(g) {
        let gi = f64::from(gi);
        inter += pi * gi;
        sum_p += pi;
        sum_g += gi;
    }
    let denom = sum_p + sum_g + epsilon;
    (1.0 - (2.0 * inter + epsilon) / denom, (inter, denom))
}

fn contour_raw(p: &[f64], width: usize, height: usize, delta: f64) -> ContourTerms {
    let area: f64 = p.iter().sum();
    let perimeter = tv_accumulate(p, width, height, None);
    let ratio = (perimeter + delta) / (2.0 * area + delta);
    ContourTerms {
        reg: (1.0 - ratio) * (1.0 - ratio),
        area,
        perimeter,
    }
}

/// The soft perimeter `P(p)`; also accumulates `∂P/∂p` into `grad`.
fn tv_accumulate(p: &[f64], width: usize, height: usize, mut grad: Option<&mut [f64]>) -> f64 {
    let (w, h) = (width as isize, height as isize);
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            p[(y * w + x) as usize]
        }
    };
    let mut total = 0.0;
    // (dx, dy) offsets: forward differences use the +1 neighbour, backward
    // the -1 neighbour.
    for sx in [1isize, -1] {
        for sy in [1isize, -1] {
            for y in -1..=h {
                for x in -1..=w {
                    let c = at(x, y);
                    // oriented so that both stencils measure "next minus previous"
                    let a = (at(x + sx, y) - c) * sx as f64;
                    let b = (at(x, y + sy) - c) * sy as f64;
                    if a == 0.0 && b == 0.0 {
                        continue;
                    }
                    let m = (a * a + b * b + TV_ETA * TV_ETA).sqrt();
                    total += m - TV_ETA;
                    if let Some(grad) = grad.as_deref_mut() {
                        let (ga, gb) = (a / m * 0.25, b / m * 0.25);
                        let mut add = |xx: isize, yy: isize, v: f64| {
                            if xx >= 0 && yy >= 0 && xx < w && yy < h {
                                grad[(yy * w + xx) as usize] += v;
                            }
                        };
                        add(x + sx, y, ga * sx as f64);
                        add(x, y + sy, gb * sy as f64);
                        add(x, y, -(ga * sx as f64) - gb * sy as f64);
                    }
                }
            }
        }
    }
    total * 0.25
}
