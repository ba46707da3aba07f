//! Overlap metrics on binary masks.

use crate::error::Result;
use crate::grid::{check_same_dims, Heatmap, Mask};

fn counts(pred: &Mask, gt: &Mask) -> Result<(usize, usize, usize)> {
    check_same_dims((pred.width(), pred.height()), (gt.width(), gt.height()))?;
    let mut inter = 0;
    let mut p = 0;
    let mut g = 0;
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        inter += usize::from(a & b);
        p += usize::from(a);
        g += usize::from(b);
    }
    Ok((inter, p, g))
}

/// `|pred ∩ gt| / |pred ∪ gt|`; 1 when both masks are empty.
pub fn iou(pred: &Mask, gt: &Mask) -> Result<f64> {
    let (inter, p, g) = counts(pred, gt)?;
    let union = p + g - inter;
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// `2 |pred ∩ gt| / (|pred| + |gt|)`; 1 when both masks are empty.
pub fn dice(pred: &Mask, gt: &Mask) -> Result<f64> {
    let (inter, p, g) = counts(pred, gt)?;
    Ok(if p + g == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (p + g) as f64
    })
}

/// Foreground where `p >= threshold`.
pub fn binarize(heatmap: &Heatmap, threshold: f64) -> Mask {
    Mask::from_fn(heatmap.width(), heatmap.height(), |x, y| {
        heatmap.get(x, y) >= threshold
    })
}
