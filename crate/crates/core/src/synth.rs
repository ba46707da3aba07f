//! Synthetic event scenes: a thin line sweeping across the sensor, thicker
//! clutter edges moving with it, and uniform background noise, together with
//! the ground-truth line mask at the reference time.
//!
//! Every moving band of width `w` fires one positive event per pixel when its
//! leading edge crosses the pixel centre and one negative event when the
//! trailing edge does, `w / v_n` later (`v_n` is the speed normal to the
//! band). A thin line therefore leaves two adjacent, nearly simultaneous
//! bands of opposite polarity; a thick clutter edge leaves the same two bands
//! farther apart.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{self, Event, EventRecording, Format, Polarity};
use crate::grid::Mask;
use crate::pnm;
use crate::raster;

pub type Point = [f64; 2];

/// A polyline obstacle edge in the background.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClutterEdge {
    pub points: Vec<Point>,
    pub thickness_px: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u16,
    pub height: u16,
    /// Thin-line segments at t = 0, in pixel coordinates.
    pub line_segments: Vec<[Point; 2]>,
    pub line_thickness_px: f64,
    /// Apparent motion of the whole scene, pixels per second.
    pub velocity: [f64; 2],
    pub duration_us: u64,
    pub clutter_edges: Vec<ClutterEdge>,
    /// Background noise, events per pixel per second.
    pub noise_rate: f64,
    /// Half-width of the uniform timestamp jitter, microseconds.
    pub contrast_threshold_jitter_us: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// A scene with nothing in it.
    pub fn blank(width: u16, height: u16, duration_us: u64, seed: u64) -> Self {
        Self {
            width,
            height,
            line_segments: Vec::new(),
            line_thickness_px: 1.0,
            velocity: [0.0, 0.0],
            duration_us,
            clutter_edges: Vec::new(),
            noise_rate: 0.0,
            contrast_threshold_jitter_us: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::DegenerateSpec(msg));
        if self.width == 0 || self.height == 0 {
            return bad("empty sensor".into());
        }
        if !(self.line_thickness_px > 0.0 && self.line_thickness_px.is_finite()) {
            return bad(format!("line thickness {}", self.line_thickness_px));
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate.is_finite()) {
            return bad(format!("noise rate {}", self.noise_rate));
        }
        if !(self.contrast_threshold_jitter_us >= 0.0
            && self.contrast_threshold_jitter_us.is_finite())
        {
            return bad(format!("jitter {}", self.contrast_threshold_jitter_us));
        }
        if self.duration_us == 0 {
            return bad("zero duration".into());
        }
        if !self.velocity.iter().all(|v| v.is_finite()) {
            return bad("non-finite velocity".into());
        }
        for [a, b] in &self.line_segments {
            if a == b {
                return bad(format!("zero-length line segment at {a:?}"));
            }
        }
        if !self.line_segments.is_empty() && self.velocity == [0.0, 0.0] {
            return bad("a static line emits no events".into());
        }
        for edge in &self.clutter_edges {
            if edge.points.len() < 2 {
                return bad("clutter polyline needs two points".into());
            }
            if edge.points.windows(2).any(|w| w[0] == w[1]) {
                return bad("zero-length clutter piece".into());
            }
            if !(edge.thickness_px > 0.0 && edge.thickness_px.is_finite()) {
                return bad(format!("clutter thickness {}", edge.thickness_px));
            }
        }
        Ok(())
    }

    /// The reference time of the ground truth: the end of the window.
    pub fn t_ref_us(&self) -> u64 {
        self.duration_us
    }

    fn displacement(&self, t_us: f64) -> [f64; 2] {
        let s = t_us * 1e-6;
        [self.velocity[0] * s, self.velocity[1] * s]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub recording: EventRecording,
    pub gt_mask: Mask,
    pub t_ref_us: u64,
}

/// Where a generated event came from.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Line,
    Clutter,
    Noise,
}

pub fn generate_sample(spec: &SceneSpec) -> Result<LabeledSample> {
    generate_with_origins(spec).map(|(sample, _)| sample)
}

/// Like [`generate_sample`], also returning the origin of every event in
/// recording order.
pub fn generate_with_origins(spec: &SceneSpec) -> Result<(LabeledSample, Vec<Origin>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tagged: Vec<(Event, Origin)> = Vec::new();

    for [a, b] in &spec.line_segments {
        emit_band(
            spec,
            *a,
            *b,
            spec.line_thickness_px,
            Origin::Line,
            &mut rng,
            &mut tagged,
        );
    }
    for edge in &spec.clutter_edges {
        for piece in edge.points.windows(2) {
            emit_band(
                spec,
                piece[0],
                piece[1],
                edge.thickness_px,
                Origin::Clutter,
                &mut rng,
                &mut tagged,
            );
        }
    }
    emit_noise(spec, &mut rng, &mut tagged)?;

    tagged.sort_by_key(|(e, _)| e.t);
    let (events, origins): (Vec<Event>, Vec<Origin>) = tagged.into_iter().unzip();
    let recording = EventRecording::new(spec.width, spec.height, events)?;

    let t_ref_us = spec.t_ref_us();
    let shift = spec.displacement(t_ref_us as f64);
    let mut gt_mask = Mask::zeros(spec.width.into(), spec.height.into());
    // consecutive segments that share an endpoint are drawn as one polyline
    let mut polyline: Vec<Point> = Vec::new();
    for [a, b] in &spec.line_segments {
        let a = [a[0] + shift[0], a[1] + shift[1]];
        let b = [b[0] + shift[0], b[1] + shift[1]];
        if polyline.last() != Some(&a) {
            raster::draw_polyline(&mut gt_mask, &polyline, spec.line_thickness_px);
            polyline = vec![a];
        }
        polyline.push(b);
    }
    raster::draw_polyline(&mut gt_mask, &polyline, spec.line_thickness_px);

    Ok((
        LabeledSample {
            recording,
            gt_mask,
            t_ref_us,
        },
        origins,
    ))
}

/// Leading/trailing edge crossings of one straight band moving with the
/// scene velocity.
fn emit_band(
    spec: &SceneSpec,
    a: Point,
    b: Point,
    thickness: f64,
    origin: Origin,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<(Event, Origin)>,
) {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len = d[0].hypot(d[1]);
    let tangent = [d[0] / len, d[1] / len];
    let normal = [-tangent[1], tangent[0]];
    let v = spec.velocity;
    let v_normal = normal[0] * v[0] + normal[1] * v[1];
    // Motion along the band itself crosses no pixel centres.
    if v_normal.abs() < 1e-9 {
        return;
    }
    let dir = v_normal.signum();
    let speed = v_normal.abs() * 1e-6; // px per µs
    let duration = spec.duration_us as f64;
    let half = thickness / 2.0;

    let end = spec.displacement(duration);
    let margin = half + 1.0;
    let xs = [a[0], b[0], a[0] + end[0], b[0] + end[0]];
    let ys = [a[1], b[1], a[1] + end[1], b[1] + end[1]];
    let x_lo = (fold_min(&xs) - margin).floor().max(0.0) as i64;
    let x_hi = (fold_max(&xs) + margin).ceil().min(spec.width as f64 - 1.0) as i64;
    let y_lo = (fold_min(&ys) - margin).floor().max(0.0) as i64;
    let y_hi = (fold_max(&ys) + margin)
        .ceil()
        .min(spec.height as f64 - 1.0) as i64;

    let jitter = spec.contrast_threshold_jitter_us;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let rel = [x as f64 - a[0], y as f64 - a[1]];
            let ahead = dir * (normal[0] * rel[0] + normal[1] * rel[1]);
            let crossings = [
                ((ahead - half) / speed, Polarity::Positive),
                ((ahead + half) / speed, Polarity::Negative),
            ];
            for (t_cross, polarity) in crossings {
                if !(0.0..duration).contains(&t_cross) {
                    continue;
                }
                // position along the band at the crossing time
                let shift = spec.displacement(t_cross);
                let along = tangent[0] * (rel[0] - shift[0]) + tangent[1] * (rel[1] - shift[1]);
                if !(-0.5..=len + 0.5).contains(&along) {
                    continue;
                }
                let t = if jitter > 0.0 {
                    t_cross + rng.random_range(-jitter..=jitter)
                } else {
                    t_cross
                };
                let t = t.max(0.0).round();
                if t >= duration {
                    continue;
                }
                out.push((Event::new(t as u64, x as u16, y as u16, polarity), origin));
            }
        }
    }
}

fn emit_noise(
    spec: &SceneSpec,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<(Event, Origin)>,
) -> Result<()> {
    let mean =
        spec.noise_rate * spec.width as f64 * spec.height as f64 * spec.duration_us as f64 * 1e-6;
    if mean <= 0.0 {
        return Ok(());
    }
    let poisson = Poisson::new(mean).map_err(|e| Error::DegenerateSpec(format!("noise: {e}")))?;
    let n = poisson.sample(rng) as u64;
    for _ in 0..n {
        let x = rng.random_range(0..spec.width);
        let y = rng.random_range(0..spec.height);
        let t = rng.random_range(0..spec.duration_us);
        let polarity = if rng.random_bool(0.5) {
            Polarity::Positive
        } else {
            Polarity::Negative
        };
        out.push((Event::new(t, x, y, polarity), Origin::Noise));
    }
    Ok(())
}

fn fold_min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn fold_max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Ranges for drawing random scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneDistribution {
    pub width: u16,
    pub height: u16,
    pub duration_us: u64,
    pub line_thickness_px: f64,
    /// Normal speed of the scene, px/s.
    pub speed: [f64; 2],
    pub max_clutter_edges: usize,
    pub clutter_thickness_px: [f64; 2],
    pub noise_rate: [f64; 2],
    pub jitter_us: f64,
    /// Largest mid-span sag of the wire, as a fraction of the sensor side.
    pub max_sag: f64,
    /// Chance that a clutter edge is one long straight edge (a pole or
    /// roofline) rather than a short polyline.
    pub straight_clutter: f64,
}

impl Default for SceneDistribution {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            duration_us: 33_000,
            line_thickness_px: 1.0,
            speed: [250.0, 600.0],
            max_clutter_edges: 3,
            clutter_thickness_px: [3.0, 8.0],
            noise_rate: [0.0, 4.0],
            jitter_us: 100.0,
            max_sag: 0.1,
            straight_clutter: 0.5,
        }
    }
}

/// Straight pieces used to draw a sagging wire.
const WIRE_PIECES: usize = 8;

impl SceneDistribution {
    /// Checks that every range is ordered and finite and that the sensor is
    /// at least 4 px on each side.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(format!("scene distribution: {msg}")));
        let range = |name: &str, r: [f64; 2], min: f64| {
            if r[0].is_finite() && r[1].is_finite() && min <= r[0] && r[0] <= r[1] {
                Ok(())
            } else {
                bad(format!(
                    "{name} must be an ordered range >= {min}, got {r:?}"
                ))
            }
        };
        if self.width < 4 || self.height < 4 {
            return bad(format!("sensor {}x{} below 4x4", self.width, self.height));
        }
        if self.duration_us == 0 {
            return bad("duration_us must be positive".into());
        }
        range("speed", self.speed, 0.0)?;
        range("clutter_thickness_px", self.clutter_thickness_px, 0.0)?;
        range("noise_rate", self.noise_rate, 0.0)?;
        range(
            "line_thickness_px",
            [self.line_thickness_px; 2],
            f64::MIN_POSITIVE,
        )?;
        range("jitter_us", [self.jitter_us; 2], 0.0)?;
        range("max_sag", [self.max_sag; 2], 0.0)?;
        if !(0.0..=1.0).contains(&self.straight_clutter) {
            return bad(format!(
                "straight_clutter {} outside [0, 1]",
                self.straight_clutter
            ));
        }
        Ok(())
    }

    /// Draws one scene: a single thin wire, possibly sagging, that ends the
    /// window inside the central part of the sensor; between one and
    /// `max_clutter_edges` thick edges; and a noise level from `noise_rate`.
    ///
    /// Panics on a distribution that fails [`validate`](Self::validate).
    pub fn sample(&self, seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ce0_e5a1_1ab1);
        let (w, h) = (self.width as f64, self.height as f64);
        let span = w.min(h);

        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let tangent = [angle.cos(), angle.sin()];
        let normal = [-tangent[1], tangent[0]];
        let speed = rng.random_range(self.speed[0]..=self.speed[1]);
        // mostly normal motion, skewed up to 30 degrees
        let skew = rng.random_range(-0.5..0.5f64);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let dir = [
            sign * (normal[0] * skew.cos() + tangent[0] * skew.sin()),
            sign * (normal[1] * skew.cos() + tangent[1] * skew.sin()),
        ];
        let velocity = [dir[0] * speed, dir[1] * speed];
        let seconds = self.duration_us as f64 * 1e-6;

        let centre_end = [
            rng.random_range(0.25 * w..0.75 * w),
            rng.random_range(0.25 * h..0.75 * h),
        ];
        let centre = [
            centre_end[0] - velocity[0] * seconds,
            centre_end[1] - velocity[1] * seconds,
        ];
        let half_len = rng.random_range(0.35 * span..0.8 * span);
        // keep every piece within 45 degrees of the chord's dominant axis so
        // the drawn wire stays one band thick
        let off_axis = angle.sin().abs().min(angle.cos().abs()).asin();
        let sag_limit = 0.5 * half_len * (std::f64::consts::FRAC_PI_4 - off_axis).tan();
        let sag =
            (rng.random_range(-self.max_sag..=self.max_sag) * span).clamp(-sag_limit, sag_limit);
        let wire: Vec<Point> = (0..=WIRE_PIECES)
            .map(|i| {
                let u = i as f64 / WIRE_PIECES as f64;
                let along = (2.0 * u - 1.0) * half_len;
                let off = 4.0 * sag * u * (1.0 - u);
                [
                    centre[0] + tangent[0] * along + normal[0] * off,
                    centre[1] + tangent[1] * along + normal[1] * off,
                ]
            })
            .collect();
        let line_segments = wire.windows(2).map(|p| [p[0], p[1]]).collect();

        let n_clutter = rng.random_range(1..=self.max_clutter_edges.max(1));
        let clutter_edges = (0..n_clutter)
            .map(|_| {
                let points = if rng.random_bool(self.straight_clutter.clamp(0.0, 1.0)) {
                    let heading = rng.random_range(0.0..std::f64::consts::PI);
                    let mid = [rng.random_range(0.0..w), rng.random_range(0.0..h)];
                    let half = rng.random_range(0.3 * span..0.7 * span);
                    let d = [heading.cos() * half, heading.sin() * half];
                    vec![
                        [mid[0] - d[0], mid[1] - d[1]],
                        [mid[0] + d[0], mid[1] + d[1]],
                    ]
                } else {
                    let n_points = rng.random_range(2..=4);
                    let mut p = [rng.random_range(0.0..w), rng.random_range(0.0..h)];
                    let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
                    let mut points = vec![p];
                    for _ in 1..n_points {
                        let step = rng.random_range(0.25 * span..0.6 * span);
                        p = [p[0] + heading.cos() * step, p[1] + heading.sin() * step];
                        points.push(p);
                        heading += rng.random_range(-1.2..1.2);
                    }
                    points
                };
                let t = self.clutter_thickness_px;
                ClutterEdge {
                    points,
                    thickness_px: rng.random_range(t[0]..=t[1]),
                }
            })
            .collect();

        let noise_rate = if self.noise_rate[1] > self.noise_rate[0] {
            rng.random_range(self.noise_rate[0]..self.noise_rate[1])
        } else {
            self.noise_rate[0]
        };

        SceneSpec {
            width: self.width,
            height: self.height,
            line_segments,
            line_thickness_px: self.line_thickness_px,
            velocity,
            duration_us: self.duration_us,
            clutter_edges,
            noise_rate,
            contrast_threshold_jitter_us: self.jitter_us,
            seed: rng.random(),
        }
    }

    /// `count` scenes with seeds `base_seed, base_seed + 1, …`.
    pub fn sample_many(&self, base_seed: u64, count: usize) -> Vec<SceneSpec> {
        (0..count as u64)
            .map(|i| self.sample(base_seed.wrapping_add(i)))
            .collect()
    }
}

/// One line of the dataset manifest (JSON lines). Paths are relative to the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub recording: String,
    pub mask: String,
    pub t_ref_us: u64,
    pub spec: SceneSpec,
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Writes `sample_NNNN.skys` / `sample_NNNN.pgm` per spec plus
/// `manifest.jsonl`, and returns the manifest entries.
pub fn generate_dataset(specs: &[SceneSpec], out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(out_dir)?;
    let mut entries = Vec::with_capacity(specs.len());
    let mut manifest = String::new();
    for (i, spec) in specs.iter().enumerate() {
        let sample = generate_sample(spec)?;
        let entry = ManifestEntry {
            recording: format!("sample_{i:04}.skys"),
            mask: format!("sample_{i:04}.pgm"),
            t_ref_us: sample.t_ref_us,
            spec: spec.clone(),
        };
        event::write_recording(
            &sample.recording,
            &out_dir.join(&entry.recording),
            Format::Binary,
        )?;
        pnm::write_pgm(&sample.gt_mask, &out_dir.join(&entry.mask))?;
        manifest.push_str(&serde_json::to_string(&entry)?);
        manifest.push('\n');
        entries.push(entry);
    }
    fs::write(out_dir.join(MANIFEST_NAME), manifest)?;
    Ok(entries)
}

/// Parses a manifest file.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Loads every sample listed in a manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<LabeledSample>> {
    let dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    read_manifest(manifest_path)?
        .iter()
        .map(|entry| {
            let recording =
                event::read_recording(&dir.join(&entry.recording), Format::Binary, None)?;
            let gt_mask = pnm::read_pgm(&dir.join(&entry.mask))?;
            if (gt_mask.width(), gt_mask.height())
                != (recording.width().into(), recording.height().into())
            {
                return Err(Error::ShapeMismatch(format!(
                    "mask {} does not match recording geometry",
                    entry.mask
                )));
            }
            Ok(LabeledSample {
                recording,
                gt_mask,
                t_ref_us: entry.t_ref_us,
            })
        })
        .collect()
}
