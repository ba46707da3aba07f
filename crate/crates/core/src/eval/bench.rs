use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::harness::{EvalConfig, Method};
use super::metrics::binarize;
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::hough::{binarize_surface, rasterize_lines, Accumulator};
use crate::lunet::surfaces_to_tensor;
use crate::preprocess::{build_time_surface, stc_filter};
use crate::synth::{generate_sample, SceneDistribution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub repeats: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub stats: LatencyStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
    pub cpu_model: Option<String>,
}

impl MachineInfo {
    pub fn detect() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        });
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cpu_model,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub method: String,
    pub width: u16,
    pub height: u16,
    pub warmup: usize,
    /// Segmentation only, from prepared surfaces to a binary mask.
    pub inference: LatencyStats,
    /// Per-stage split: `stc`, `surface`, `inference`, `binarize`.
    pub stages: Vec<StageTiming>,
    pub machine: MachineInfo,
}

/// Summary of wall times in milliseconds. Percentiles use the nearest rank.
pub fn latency_stats(samples_ms: &[f64]) -> LatencyStats {
    if samples_ms.is_empty() {
        return LatencyStats {
            repeats: 0,
            mean_ms: 0.0,
            p50_ms: 0.0,
            p95_ms: 0.0,
            min_ms: 0.0,
            max_ms: 0.0,
        };
    }
    let mut sorted = samples_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank =
        |q: f64| sorted[((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
    LatencyStats {
        repeats: sorted.len(),
        mean_ms: sorted.iter().sum::<f64>() / sorted.len() as f64,
        p50_ms: rank(0.5),
        p95_ms: rank(0.95),
        min_ms: sorted[0],
        max_ms: sorted[sorted.len() - 1],
    }
}

/// Times `f` `repeats` times after `warmup` untimed calls.
pub fn bench_fn(warmup: usize, repeats: usize, mut f: impl FnMut()) -> LatencyStats {
    for _ in 0..warmup {
        f();
    }
    let times: Vec<f64> = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    latency_stats(&times)
}

/// Latency of `method` on a synthetic `width × height` frame.
pub fn bench_latency(
    method: &Method,
    width: u16,
    height: u16,
    repeats: usize,
    warmup: usize,
    config: &EvalConfig,
) -> Result<BenchReport> {
    if repeats < 10 || warmup < 3 {
        return Err(Error::InvalidParams(format!(
            "need at least 10 repeats and 3 warm-up runs, got {repeats} and {warmup}"
        )));
    }
    let spec = SceneDistribution {
        width,
        height,
        ..SceneDistribution::default()
    }
    .sample(0);
    let sample = generate_sample(&spec)?;
    let pre = &config.preprocess;
    let window = sample.recording.slice_by_time(
        sample.t_ref_us.saturating_sub(pre.window_us),
        sample.t_ref_us.saturating_add(1),
    )?;
    let mode = method.polarity_mode();

    let stc = match &pre.stc {
        Some(p) => {
            p.validate()?;
            bench_fn(warmup, repeats, || {
                black_box(stc_filter(&window, p).expect("validated"));
            })
        }
        None => latency_stats(&[]),
    };
    let filtered = match &pre.stc {
        Some(p) => stc_filter(&window, p)?,
        None => window,
    };
    let surfaces = build_time_surface(&filtered, sample.t_ref_us, pre.tau_us, mode)?;
    let surface = bench_fn(warmup, repeats, || {
        black_box(
            build_time_surface(&filtered, sample.t_ref_us, pre.tau_us, mode).expect("valid tau"),
        );
    });

    let (w, h) = (width as usize, height as usize);
    let (inference, binarize_stage) = match method {
        Method::Lunet(model) => {
            let input = surfaces_to_tensor::<f32>(&surfaces)?;
            let heat = model.predict(&input)?;
            let inf = bench_fn(warmup, repeats, || {
                black_box(model.predict(&input).expect("shape checked"));
            });
            let bin = bench_fn(warmup, repeats, || {
                black_box(binarize(&heat, config.threshold));
            });
            (inf, bin)
        }
        Method::Hough(params) => {
            params.validate()?;
            let fg = binarize_surface(&surfaces[0], params.binarize_threshold);
            let bin = bench_fn(warmup, repeats, || {
                black_box(binarize_surface(&surfaces[0], params.binarize_threshold));
            });
            let inf = bench_fn(warmup, repeats, || {
                let acc = Accumulator::build(&fg, params.rho_step, params.theta_step);
                let lines = acc.peaks(params.accumulator_threshold);
                black_box(rasterize_lines(&lines, w, h, params.line_raster_thickness));
            });
            (inf, bin)
        }
        Method::Oracle | Method::Empty => {
            let inf = bench_fn(warmup, repeats, || {
                black_box(Mask::zeros(w, h));
            });
            (inf, latency_stats(&[]))
        }
    };

    let stage = |name: &str, stats: &LatencyStats| StageTiming {
        stage: name.into(),
        stats: stats.clone(),
    };
    Ok(BenchReport {
        method: method.tag().into(),
        width,
        height,
        warmup,
        stages: vec![
            stage("stc", &stc),
            stage("surface", &surface),
            stage("inference", &inference),
            stage("binarize", &binarize_stage),
        ],
        inference,
        machine: MachineInfo::detect(),
    })
}
