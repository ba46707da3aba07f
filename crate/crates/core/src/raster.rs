//! Thin-line rasterization shared by ground-truth masks and Hough output.
//!
//! Lines are drawn along their dominant axis: a mostly-horizontal line gets,
//! in every column it spans, the pixels whose centre lies strictly within
//! `thickness / 2 + 0.5` of the line (measured vertically), and symmetrically
//! for mostly-vertical lines. A 1-px line therefore covers at most two pixels
//! per cross-section regardless of orientation. Pixel centres sit on integer
//! coordinates.

use crate::grid::Mask;

/// Draws the segment `a`–`b` into `mask`, clipped to the image.
pub fn draw_segment(mask: &mut Mask, a: [f64; 2], b: [f64; 2], thickness: f64) {
    draw_polyline(mask, &[a, b], thickness);
}

/// Draws a connected polyline. All pieces share the dominant axis of the
/// chord from the first to the last point, so where two pieces meet they
/// agree on the band centre and the cross-section stays as thin as for a
/// straight line. A piece steeper than 45° against that axis is still drawn
/// without gaps, but its cross-sections widen to cover its run per column.
pub fn draw_polyline(mask: &mut Mask, points: &[[f64; 2]], thickness: f64) {
    let half = thickness / 2.0 + 0.5;
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        return;
    };
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return;
    }
    let (dx, dy) = (last[0] - first[0], last[1] - first[1]);
    let axis = if dx.abs() >= dy.abs() {
        Axis::X
    } else {
        Axis::Y
    };
    if points.len() == 1 {
        let [x, y] = *first;
        fill_band(mask, Axis::X, x.round(), y, half);
        return;
    }
    let (major, minor): (Vec<f64>, Vec<f64>) = points
        .iter()
        .map(|p| match axis {
            Axis::X => (p[0], p[1]),
            Axis::Y => (p[1], p[0]),
        })
        .unzip();
    let rising = major.windows(2).all(|w| w[1] > w[0]);
    let falling = major.windows(2).all(|w| w[1] < w[0]);
    let gentle = major
        .windows(2)
        .zip(minor.windows(2))
        .all(|(m, n)| (n[1] - n[0]).abs() <= (m[1] - m[0]).abs());
    if (rising || falling) && gentle {
        // one centre per column, interpolated along the whole polyline
        let (major, minor): (Vec<f64>, Vec<f64>) = if rising {
            (major, minor)
        } else {
            (
                major.into_iter().rev().collect(),
                minor.into_iter().rev().collect(),
            )
        };
        let (lo, hi) = (major[0], major[major.len() - 1]);
        let extent = match axis {
            Axis::X => mask.width(),
            Axis::Y => mask.height(),
        };
        for m in major_range(lo, hi, extent) {
            let at = m.clamp(lo, hi);
            let i = major
                .partition_point(|&v| v <= at)
                .clamp(1, major.len() - 1);
            let s = (at - major[i - 1]) / (major[i] - major[i - 1]);
            let c = minor[i - 1] + s * (minor[i] - minor[i - 1]);
            fill_range(mask, axis, m, c, c, half);
        }
    } else {
        for piece in points.windows(2) {
            draw_piece(mask, piece[0], piece[1], half, axis);
        }
    }
}

fn draw_piece(mask: &mut Mask, a: [f64; 2], b: [f64; 2], half: f64, axis: Axis) {
    let (major_of, minor_of, extent) = match axis {
        Axis::X => (a[0], a[1], mask.width()),
        Axis::Y => (a[1], a[0], mask.height()),
    };
    let (major_to, minor_to) = match axis {
        Axis::X => (b[0], b[1]),
        Axis::Y => (b[1], b[0]),
    };
    let (d_major, d_minor) = (major_to - major_of, minor_to - minor_of);
    let (lo, hi) = (major_of.min(major_to), major_of.max(major_to));
    let minor_at = |m: f64| {
        if d_major == 0.0 {
            minor_of
        } else {
            minor_of + (m.clamp(lo, hi) - major_of) / d_major * d_minor
        }
    };
    let steep = d_minor.abs() > d_major.abs();
    for major in major_range(lo, hi, extent) {
        if steep {
            // cover the piece's whole run inside this column
            let (c0, c1) = if d_major == 0.0 {
                (minor_of, minor_to)
            } else {
                (minor_at(major - 0.5), minor_at(major + 0.5))
            };
            fill_range(mask, axis, major, c0.min(c1), c0.max(c1), half);
        } else {
            let c = minor_at(major);
            fill_range(mask, axis, major, c, c, half);
        }
    }
}

/// Draws the infinite line `x cos(theta) + y sin(theta) = rho`.
pub fn draw_polar_line(mask: &mut Mask, rho: f64, theta: f64, thickness: f64) {
    let half = thickness / 2.0 + 0.5;
    let (s, c) = theta.sin_cos();
    if s.abs() >= c.abs() {
        for x in 0..mask.width() {
            let xf = x as f64;
            fill_band(mask, Axis::X, xf, (rho - xf * c) / s, half);
        }
    } else {
        for y in 0..mask.height() {
            let yf = y as f64;
            fill_band(mask, Axis::Y, yf, (rho - yf * s) / c, half);
        }
    }
}

#[derive(Copy, Clone)]
enum Axis {
    /// Iterating columns; the band extends along y.
    X,
    /// Iterating rows; the band extends along x.
    Y,
}

fn major_range(lo: f64, hi: f64, extent: usize) -> impl Iterator<Item = f64> {
    let start = lo.round().max(0.0);
    let end = hi.round().min(extent as f64 - 1.0);
    let n = if end >= start {
        (end - start) as usize + 1
    } else {
        0
    };
    (0..n).map(move |i| start + i as f64)
}

fn fill_band(mask: &mut Mask, axis: Axis, major: f64, centre: f64, half: f64) {
    fill_range(mask, axis, major, centre, centre, half);
}

/// Sets the pixels of one column (or row) whose centre lies strictly within
/// `half` of `[from, to]`.
fn fill_range(mask: &mut Mask, axis: Axis, major: f64, from: f64, to: f64, half: f64) {
    let (major_extent, minor_extent) = match axis {
        Axis::X => (mask.width(), mask.height()),
        Axis::Y => (mask.height(), mask.width()),
    };
    if !(from.is_finite() && to.is_finite()) || major < 0.0 || major >= major_extent as f64 {
        return;
    }
    // the slack keeps rounding noise in the centre from widening the band
    let lo = (from - half + 1e-9).floor() + 1.0;
    let hi = (to + half - 1e-9).ceil() - 1.0;
    let lo = lo.max(0.0);
    let hi = hi.min(minor_extent as f64 - 1.0);
    if hi < lo {
        return;
    }
    let m = major as usize;
    for minor in lo as usize..=hi as usize {
        match axis {
            Axis::X => mask.set(m, minor, true),
            Axis::Y => mask.set(minor, m, true),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_in_column(mask: &Mask, x: usize) -> Vec<usize> {
        (0..mask.height()).filter(|&y| mask.get(x, y)).collect()
    }

    #[test]
    fn horizontal_segment_on_integer_row_is_one_pixel() {
        let mut m = Mask::zeros(16, 16);
        draw_segment(&mut m, [2.0, 5.0], [12.0, 5.0], 1.0);
        assert_eq!(m.count(), 11);
        assert_eq!(rows_in_column(&m, 4), vec![5]);
        assert!(!m.get(1, 5) && !m.get(13, 5));
    }

    #[test]
    fn half_integer_row_is_two_pixels() {
        let mut m = Mask::zeros(16, 16);
        draw_segment(&mut m, [0.0, 5.5], [15.0, 5.5], 1.0);
        assert_eq!(rows_in_column(&m, 7), vec![5, 6]);
    }

    #[test]
    fn diagonal_cross_sections_stay_thin() {
        let mut m = Mask::zeros(32, 32);
        draw_segment(&mut m, [0.0, 0.3], [31.0, 25.1], 1.0);
        for x in 0..32 {
            assert!(rows_in_column(&m, x).len() <= 2);
        }
        let mut m = Mask::zeros(32, 32);
        draw_segment(&mut m, [3.2, 0.0], [9.7, 31.0], 1.0);
        for y in 0..32 {
            assert!((0..32).filter(|&x| m.get(x, y)).count() <= 2);
        }
    }

    #[test]
    fn clipped_to_image() {
        let mut m = Mask::zeros(8, 8);
        draw_segment(&mut m, [-10.0, 3.0], [20.0, 3.0], 1.0);
        assert_eq!(m.count(), 8);
        let mut m = Mask::zeros(8, 8);
        draw_segment(&mut m, [-10.0, 30.0], [20.0, 30.0], 1.0);
        assert!(m.is_empty());
    }

    #[test]
    fn polyline_pieces_agree_at_joints() {
        // collinear pieces draw exactly the straight segment
        let mut whole = Mask::zeros(32, 32);
        let mut parts = Mask::zeros(32, 32);
        draw_segment(&mut whole, [0.0, 0.3], [31.0, 25.1], 1.0);
        let mid = [0.0 + 31.0 * 0.37, 0.3 + 24.8 * 0.37];
        draw_polyline(&mut parts, &[[0.0, 0.3], mid, [31.0, 25.1]], 1.0);
        assert_eq!(whole, parts);

        // a gentle bend keeps two pixels per column
        let pts: Vec<[f64; 2]> = (0..=8)
            .map(|i| {
                let u = f64::from(i) / 8.0;
                [2.0 + 27.0 * u, 3.0 + 20.0 * u + 6.0 * u * (1.0 - u)]
            })
            .collect();
        let mut m = Mask::zeros(32, 32);
        draw_polyline(&mut m, &pts, 1.0);
        for x in 2..=29 {
            let n = rows_in_column(&m, x).len();
            assert!((1..=2).contains(&n), "column {x}: {n}");
        }
    }

    #[test]
    fn steep_piece_leaves_no_gaps() {
        let mut m = Mask::zeros(16, 16);
        draw_polyline(
            &mut m,
            &[[0.0, 2.0], [6.0, 3.0], [7.0, 12.0], [15.0, 13.0]],
            1.0,
        );
        for y in 3..=12 {
            assert!(m.get(6, y) || m.get(7, y), "row {y}");
        }
    }

    #[test]
    fn polar_lines() {
        let mut m = Mask::zeros(10, 10);
        draw_polar_line(&mut m, 4.0, std::f64::consts::FRAC_PI_2, 1.0);
        assert_eq!(m, Mask::from_fn(10, 10, |_, y| y == 4));
        let mut m = Mask::zeros(10, 10);
        draw_polar_line(&mut m, 7.0, 0.0, 1.0);
        assert_eq!(m, Mask::from_fn(10, 10, |x, _| x == 7));
    }
}
