//! Fixtures and reference implementations shared by the integration suites.
#![allow(dead_code)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyshield::eval::{binarize, dice};
use skyshield::event::{Event, EventRecording, Polarity};
use skyshield::grid::{Heatmap, Mask};
use skyshield::loss::{total_loss, LossParams};
use skyshield::lunet::{
    sample_gradients, surfaces_to_tensor, LUnet, LUnetModel, Tensor, TrainSample,
};
use skyshield::preprocess::{prepare_frame, stc_filter, PolarityMode, PreprocessConfig, StcParams};
use skyshield::synth::{
    generate_sample, generate_with_origins, Origin, SceneDistribution, SceneSpec,
};

pub fn random_recording(seed: u64, w: u16, h: u16, n: usize, t_max: u64) -> EventRecording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            let p = if rng.random_bool(0.5) {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            Event::new(
                rng.random_range(0..t_max),
                rng.random_range(0..w),
                rng.random_range(0..h),
                p,
            )
        })
        .collect();
    events.sort_by_key(|e| e.t);
    EventRecording::new(w, h, events).unwrap()
}

/// Scans every event for every pixel.
pub fn surface_oracle(
    rec: &EventRecording,
    t_ref: u64,
    tau: f64,
    only: Option<Polarity>,
) -> Vec<f64> {
    let (w, h) = (rec.width() as usize, rec.height() as usize);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let latest = rec
                .events()
                .iter()
                .filter(|e| e.x as usize == x && e.y as usize == y && e.t <= t_ref)
                .filter(|e| only.is_none_or(|p| p == e.polarity))
                .map(|e| e.t)
                .max();
            if let Some(t) = latest {
                out[y * w + x] = (-((t_ref - t) as f64) / tau).exp();
            }
        }
    }
    out
}

/// Line and noise retention under default STC for a line of `length` px
/// moving at `speed` px/s, with noise at the same total event rate. Also
/// returns the noise rate in events per pixel per second.
pub fn stc_retention(length: f64, speed: f64) -> (f64, f64, f64) {
    let mut spec = SceneSpec {
        line_segments: vec![[[0.0, 10.0], [length, 14.0]]],
        velocity: [0.0, speed],
        contrast_threshold_jitter_us: 100.0,
        ..SceneSpec::blank(128, 128, 33_000, 5)
    };
    let line_events = generate_with_origins(&spec).unwrap().1.len() as f64;
    spec.noise_rate = line_events / (128.0 * 128.0 * 0.033);
    let (sample, origins) = generate_with_origins(&spec).unwrap();
    let kept = stc_filter(&sample.recording, &StcParams::default()).unwrap();

    let mut kept_iter = kept.events().iter().peekable();
    let mut counts = [[0usize; 2]; 2];
    for (e, o) in sample.recording.events().iter().zip(&origins) {
        let survived = kept_iter.peek() == Some(&e);
        if survived {
            kept_iter.next();
        }
        let row = match o {
            Origin::Line => 0,
            Origin::Noise => 1,
            Origin::Clutter => unreachable!(),
        };
        counts[row][0] += 1;
        counts[row][1] += usize::from(survived);
    }
    assert!(kept_iter.next().is_none());
    let frac = |c: [usize; 2]| c[1] as f64 / c[0] as f64;
    let noise_rate = counts[1][0] as f64 / (128.0 * 128.0 * 0.033);
    (frac(counts[0]), frac(counts[1]), noise_rate)
}

pub fn horizontal_line(y: f64, speed: f64, jitter: f64) -> SceneSpec {
    SceneSpec {
        line_segments: vec![[[0.0, y], [63.0, y]]],
        velocity: [0.0, speed],
        contrast_threshold_jitter_us: jitter,
        ..SceneSpec::blank(64, 64, 20_000, 11)
    }
}

/// Fraction of positive events with an opposite-polarity event within
/// Chebyshev distance 2 and `max_dt`, by exhaustive pairing.
pub fn paired_fraction(spec: &SceneSpec) -> f64 {
    let s = generate_sample(spec).unwrap();
    let events = s.recording.events();
    let max_dt = 2.0 * spec.line_thickness_px / spec.velocity[1].abs() * 1e6;
    let pos: Vec<_> = events
        .iter()
        .filter(|e| e.polarity == Polarity::Positive)
        .collect();
    assert!(!pos.is_empty());
    let paired = pos
        .iter()
        .filter(|p| {
            events.iter().any(|n| {
                n.polarity == Polarity::Negative
                    && (i32::from(n.x) - i32::from(p.x)).abs() <= 2
                    && (i32::from(n.y) - i32::from(p.y)).abs() <= 2
                    && (n.t as f64 - p.t as f64).abs() <= max_dt
            })
        })
        .count();
    paired as f64 / pos.len() as f64
}

pub fn rect(w: usize, h: usize, x0: usize, y0: usize, rw: usize, rh: usize) -> Mask {
    Mask::from_fn(w, h, |x, y| {
        x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh
    })
}

pub fn scalar_dice(p: &[f64], g: &[u8], eps: f64) -> f64 {
    let mut inter = 0.0;
    let mut sp = 0.0;
    let mut sg = 0.0;
    for i in 0..p.len() {
        inter += p[i] * f64::from(g[i]);
        sp += p[i];
        sg += f64::from(g[i]);
    }
    1.0 - (2.0 * inter + eps) / (sp + sg + eps)
}

pub fn random_case(rng: &mut ChaCha8Rng, w: usize, h: usize) -> (Heatmap, Mask) {
    let p = Heatmap::new(
        w,
        h,
        (0..w * h).map(|_| rng.random_range(0.05..0.95)).collect(),
    )
    .unwrap();
    let g = Mask::from_fn(w, h, |_, _| rng.random_bool(0.3));
    (p, g)
}

pub fn central_difference(p: &Heatmap, g: &Mask, params: &LossParams, h: f64) -> Vec<f64> {
    (0..p.values().len())
        .map(|i| {
            let mut plus = p.values().to_vec();
            let mut minus = plus.clone();
            plus[i] += h;
            minus[i] -= h;
            let f = |v: Vec<f64>| {
                total_loss(&Heatmap::new(p.width(), p.height(), v).unwrap(), g, params)
                    .unwrap()
                    .total
            };
            (f(plus) - f(minus)) / (2.0 * h)
        })
        .collect()
}

pub fn random_input(seed: u64, c: usize, h: usize, w: usize) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec(
        c,
        h,
        w,
        (0..c * h * w).map(|_| rng.random_range(0.0..1.0)).collect(),
    )
}

/// Per-tensor relative error between analytic and central-difference
/// gradients of the training loss, in float64.
pub fn gradient_errors(
    model: &LUnet<f64>,
    input: &Tensor<f64>,
    target: &Mask,
    params: &LossParams,
) -> Vec<f64> {
    let (_, grads) = sample_gradients(model, input, target, params).unwrap();
    let loss_of = |m: &LUnet<f64>| {
        total_loss(&m.predict(input).unwrap(), target, params)
            .unwrap()
            .total
    };
    let h = 1e-6;
    let mut probe = model.clone();
    let mut errors = Vec::new();
    for (ti, analytic) in grads.tensors().iter().enumerate() {
        let mut num = vec![0.0; analytic.len()];
        for (i, n) in num.iter_mut().enumerate() {
            let orig = probe.tensors()[ti][i];
            probe.tensors_mut()[ti][i] = orig + h;
            let up = loss_of(&probe);
            probe.tensors_mut()[ti][i] = orig - h;
            let down = loss_of(&probe);
            probe.tensors_mut()[ti][i] = orig;
            *n = (up - down) / (2.0 * h);
        }
        let diff = analytic
            .iter()
            .zip(&num)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(num.iter().map(|b| b * b).sum::<f64>().sqrt());
        errors.push(if scale < 1e-12 { diff } else { diff / scale });
    }
    errors
}

pub fn frame_sample(seed: u64, size: u16) -> TrainSample {
    let spec = SceneDistribution {
        width: size,
        height: size,
        ..SceneDistribution::default()
    }
    .sample(seed);
    let s = generate_sample(&spec).unwrap();
    let surfaces = prepare_frame(
        &s.recording,
        s.t_ref_us,
        &PreprocessConfig::default(),
        PolarityMode::Separate,
    )
    .unwrap();
    TrainSample {
        input: surfaces_to_tensor(&surfaces).unwrap(),
        target: s.gt_mask,
    }
}

pub fn sample_dice(model: &LUnetModel, s: &TrainSample) -> f64 {
    dice(&binarize(&model.predict(&s.input).unwrap(), 0.5), &s.target).unwrap()
}

pub fn recording() -> impl Strategy<Value = EventRecording> {
    (1u16..64, 1u16..64).prop_flat_map(|(w, h)| {
        prop::collection::vec((0u64..1_000_000, 0..w, 0..h, any::<bool>()), 0..200).prop_map(
            move |raw| {
                let mut events: Vec<Event> = raw
                    .into_iter()
                    .map(|(t, x, y, p)| {
                        Event::new(
                            t,
                            x,
                            y,
                            if p {
                                Polarity::Positive
                            } else {
                                Polarity::Negative
                            },
                        )
                    })
                    .collect();
                events.sort_by_key(|e| e.t);
                EventRecording::new(w, h, events).unwrap()
            },
        )
    })
}
