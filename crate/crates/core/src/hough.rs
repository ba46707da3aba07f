//! Hough-transform line baseline over a binarized time surface.
//!
//! Foreground pixels vote for every `(rho, theta)` with
//! `rho = x cos(theta) + y sin(theta)`, `theta ∈ [0, pi)`. Cells that are
//! local maxima of their 3×3 accumulator neighbourhood (with `theta`
//! wrapping onto `-rho`) and reach the vote threshold become lines, which
//! are rasterized into the output mask.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::dice;
use crate::grid::Mask;
use crate::preprocess::TimeSurface;
use crate::raster;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughParams {
    pub rho_step: f64,
    pub theta_step: f64,
    pub accumulator_threshold: u32,
    pub binarize_threshold: f64,
    pub line_raster_thickness: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            rho_step: 1.0,
            theta_step: PI / 180.0,
            accumulator_threshold: 40,
            binarize_threshold: 0.1,
            line_raster_thickness: 1.0,
        }
    }
}

impl HoughParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.rho_step)
            || !positive(self.theta_step)
            || !positive(self.line_raster_thickness)
        {
            return Err(Error::InvalidParams(format!(
                "non-positive Hough step or thickness: {self:?}"
            )));
        }
        if self.accumulator_threshold == 0 {
            return Err(Error::InvalidParams(
                "accumulator threshold must be positive".into(),
            ));
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::InvalidParams(format!(
                "binarize threshold {} outside (0, 1)",
                self.binarize_threshold
            )));
        }
        let bins = PI / self.theta_step;
        if (bins - bins.round()).abs() > 1e-6 || bins.round() < 1.0 {
            return Err(Error::InvalidParams(format!(
                "theta step {} does not divide pi",
                self.theta_step
            )));
        }
        Ok(())
    }
}

/// A detected infinite line.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct HoughLine {
    pub rho: f64,
    pub theta: f64,
    pub votes: u32,
}

/// Vote counts over `theta_bins × rho_bins`; rho bin `r` is centred on
/// `(r - rho_offset) * rho_step`.
#[derive(Clone, Debug)]
pub struct Accumulator {
    votes: Vec<u32>,
    theta_bins: usize,
    rho_bins: usize,
    rho_offset: usize,
    rho_step: f64,
    theta_step: f64,
}

impl Accumulator {
    pub fn build(foreground: &Mask, rho_step: f64, theta_step: f64) -> Self {
        let (w, h) = (foreground.width(), foreground.height());
        let diag = (((w.max(1) - 1).pow(2) + (h.max(1) - 1).pow(2)) as f64).sqrt();
        let rho_offset = (diag / rho_step).ceil() as usize + 1;
        let rho_bins = 2 * rho_offset + 1;
        let theta_bins = (PI / theta_step).round() as usize;
        let trig: Vec<(f64, f64)> = (0..theta_bins)
            .map(|j| {
                let (s, c) = (j as f64 * theta_step).sin_cos();
                (c / rho_step, s / rho_step)
            })
            .collect();
        let mut votes = vec![0u32; theta_bins * rho_bins];
        for y in 0..h {
            for x in 0..w {
                if !foreground.get(x, y) {
                    continue;
                }
                let (xf, yf) = (x as f64, y as f64);
                for (j, &(c, s)) in trig.iter().enumerate() {
                    let r = (xf * c + yf * s).round() as isize + rho_offset as isize;
                    votes[j * rho_bins + r as usize] += 1;
                }
            }
        }
        Self {
            votes,
            theta_bins,
            rho_bins,
            rho_offset,
            rho_step,
            theta_step,
        }
    }

    pub fn votes(&self, theta_bin: usize, rho_bin: usize) -> u32 {
        self.votes[theta_bin * self.rho_bins + rho_bin]
    }

    pub fn theta_bins(&self) -> usize {
        self.theta_bins
    }

    pub fn rho_bins(&self) -> usize {
        self.rho_bins
    }

    /// Accumulator neighbour of `(j, r)` at offset `(dj, dr)`. Stepping past
    /// either end of the theta axis wraps to the opposite end with rho negated.
    fn neighbour(&self, j: usize, r: usize, dj: isize, dr: isize) -> Option<(usize, usize)> {
        let n = self.theta_bins as isize;
        let mut jj = j as isize + dj;
        let mut rr = r as isize + dr;
        if jj < 0 || jj >= n {
            jj = jj.rem_euclid(n);
            rr = 2 * self.rho_offset as isize - rr;
        }
        (rr >= 0 && rr < self.rho_bins as isize).then_some((jj as usize, rr as usize))
    }

    /// 3×3 local maxima with at least `threshold` votes, strongest first.
    /// Equal neighbours are resolved in favour of the lower flat index.
    pub fn peaks(&self, threshold: u32) -> Vec<HoughLine> {
        let mut lines = Vec::new();
        for j in 0..self.theta_bins {
            for r in 0..self.rho_bins {
                let v = self.votes(j, r);
                if v < threshold {
                    continue;
                }
                let here = j * self.rho_bins + r;
                let is_max = (-1..=1).all(|dj| {
                    (-1..=1).all(|dr| {
                        if dj == 0 && dr == 0 {
                            return true;
                        }
                        match self.neighbour(j, r, dj, dr) {
                            None => true,
                            Some((nj, nr)) => {
                                let nv = self.votes(nj, nr);
                                v > nv || (v == nv && here < nj * self.rho_bins + nr)
                            }
                        }
                    })
                });
                if is_max {
                    lines.push(HoughLine {
                        rho: (r as f64 - self.rho_offset as f64) * self.rho_step,
                        theta: j as f64 * self.theta_step,
                        votes: v,
                    });
                }
            }
        }
        lines.sort_by_key(|l| std::cmp::Reverse(l.votes));
        lines
    }
}

pub fn binarize_surface(surface: &TimeSurface, threshold: f64) -> Mask {
    Mask::from_fn(surface.width(), surface.height(), |x, y| {
        surface.get(x, y) >= threshold
    })
}

/// Lines found in `surface`.
pub fn hough_lines(surface: &TimeSurface, params: &HoughParams) -> Result<Vec<HoughLine>> {
    params.validate()?;
    let fg = binarize_surface(surface, params.binarize_threshold);
    Ok(Accumulator::build(&fg, params.rho_step, params.theta_step)
        .peaks(params.accumulator_threshold))
}

pub fn rasterize_lines(lines: &[HoughLine], width: usize, height: usize, thickness: f64) -> Mask {
    let mut mask = Mask::zeros(width, height);
    for l in lines {
        raster::draw_polar_line(&mut mask, l.rho, l.theta, thickness);
    }
    mask
}

/// Detects lines and draws them into a mask of the surface's size.
pub fn hough_detect(surface: &TimeSurface, params: &HoughParams) -> Result<Mask> {
    let lines = hough_lines(surface, params)?;
    Ok(rasterize_lines(
        &lines,
        surface.width(),
        surface.height(),
        params.line_raster_thickness,
    ))
}

/// The search grid used when tuning the baseline.
pub fn default_grid() -> Vec<HoughParams> {
    let mut grid = Vec::new();
    for binarize in [0.1, 0.3, 0.5, 0.7, 0.85, 0.95] {
        for threshold in [15, 25, 40, 60, 90] {
            for thickness in [1.0, 2.0] {
                grid.push(HoughParams {
                    accumulator_threshold: threshold,
                    binarize_threshold: binarize,
                    line_raster_thickness: thickness,
                    ..HoughParams::default()
                });
            }
        }
    }
    grid
}

/// Grid point with the best mean Dice on `dev`; ties go to the earliest
/// grid entry. `dev` pairs a merged time surface with its ground truth.
pub fn tune_hough(dev: &[(TimeSurface, Mask)], grid: &[HoughParams]) -> Result<HoughParams> {
    if dev.is_empty() {
        return Err(Error::EmptyInput("tuning set".into()));
    }
    if grid.is_empty() {
        return Err(Error::EmptyInput("parameter grid".into()));
    }
    for p in grid {
        p.validate()?;
    }
    let scores = grid_scores(dev, grid)?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(grid[best])
}

/// Mean Dice of every grid point on `dev`. Accumulators are shared between
/// grid points that differ only in vote threshold or raster thickness.
pub fn grid_scores(dev: &[(TimeSurface, Mask)], grid: &[HoughParams]) -> Result<Vec<f64>> {
    let mut totals = vec![0.0; grid.len()];
    for (surface, gt) in dev {
        let mut cache: Vec<((u64, u64, u64), Accumulator)> = Vec::new();
        for (i, p) in grid.iter().enumerate() {
            let key = (
                p.binarize_threshold.to_bits(),
                p.rho_step.to_bits(),
                p.theta_step.to_bits(),
            );
            let acc = match cache.iter().position(|(k, _)| *k == key) {
                Some(pos) => &cache[pos].1,
                None => {
                    let fg = binarize_surface(surface, p.binarize_threshold);
                    cache.push((key, Accumulator::build(&fg, p.rho_step, p.theta_step)));
                    &cache.last().unwrap().1
                }
            };
            let lines = acc.peaks(p.accumulator_threshold);
            let mask = rasterize_lines(
                &lines,
                surface.width(),
                surface.height(),
                p.line_raster_thickness,
            );
            totals[i] += dice(&mask, gt)?;
        }
    }
    Ok(totals.into_iter().map(|t| t / dev.len() as f64).collect())
}
