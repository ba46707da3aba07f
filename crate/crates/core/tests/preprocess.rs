mod common;
use common::{random_recording, stc_retention, surface_oracle};

use proptest::prelude::*;
use skyshield::event::{Event, EventRecording, Polarity};
use skyshield::preprocess::{
    build_time_surface, prepare_frame, stc_filter, Causality, PolarityMode, PreprocessConfig,
    StcParams,
};

#[test]
fn surfaces_match_exhaustive_scan() {
    for seed in 0..4 {
        let rec = random_recording(seed, 64, 64, 10_000, 100_000);
        let t_ref = 60_000 + seed * 10_000;
        let tau = 5_000.0 + seed as f64 * 7_000.0;
        let merged = build_time_surface(&rec, t_ref, tau, PolarityMode::Merged).unwrap();
        let sep = build_time_surface(&rec, t_ref, tau, PolarityMode::Separate).unwrap();
        let check = |got: &[f64], want: Vec<f64>| {
            let worst = got
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-12, "{worst}");
        };
        check(merged[0].values(), surface_oracle(&rec, t_ref, tau, None));
        check(
            sep[0].values(),
            surface_oracle(&rec, t_ref, tau, Some(Polarity::Positive)),
        );
        check(
            sep[1].values(),
            surface_oracle(&rec, t_ref, tau, Some(Polarity::Negative)),
        );
    }
}

#[test]
fn stc_examples() {
    let lone = EventRecording::new(8, 8, vec![Event::new(100, 4, 4, Polarity::Positive)]).unwrap();
    assert!(stc_filter(&lone, &StcParams::default()).unwrap().is_empty());
    assert!(
        stc_filter(&EventRecording::empty(8, 8), &StcParams::default())
            .unwrap()
            .is_empty()
    );

    let pair = EventRecording::new(
        8,
        8,
        vec![
            Event::new(100, 4, 4, Polarity::Positive),
            Event::new(900, 4, 4, Polarity::Positive),
        ],
    )
    .unwrap();
    let causal = stc_filter(&pair, &StcParams::default()).unwrap();
    assert_eq!(causal.events(), &pair.events()[1..]);
    let bi = StcParams {
        causality: Causality::Bidirectional,
        ..StcParams::default()
    };
    assert_eq!(stc_filter(&pair, &bi).unwrap(), pair);
}

#[test]
fn stc_separates_line_from_noise() {
    let (line_keep, noise_keep, _) = stc_retention(64.0, 400.0);
    assert!(line_keep >= 0.9, "line retention {line_keep}");
    assert!(noise_keep <= 0.2, "noise retention {noise_keep}");
}

#[test]
fn noise_retention_follows_coincidence_rate() {
    // A noise event survives when one of the 9 pixels around it fired in the
    // preceding window: probability 1 - exp(-9 rate window).
    for (length, speed) in [(40.0, 400.0), (64.0, 600.0), (127.0, 250.0), (127.0, 600.0)] {
        let (line_keep, noise_keep, rate) = stc_retention(length, speed);
        let expected = 1.0 - (-9.0 * rate * 0.005f64).exp();
        assert!(
            (noise_keep - expected).abs() < 0.03,
            "{length} {speed}: {noise_keep} vs {expected}"
        );
        assert!(line_keep >= 0.9);
    }
}

#[test]
fn frame_uses_only_its_window() {
    let rec = EventRecording::new(
        4,
        4,
        vec![
            Event::new(0, 0, 0, Polarity::Positive),
            Event::new(50_000, 1, 1, Polarity::Positive),
            Event::new(90_000, 2, 2, Polarity::Negative),
        ],
    )
    .unwrap();
    let cfg = PreprocessConfig {
        stc: None,
        ..PreprocessConfig::default()
    };
    let s = prepare_frame(&rec, 60_000, &cfg, PolarityMode::Merged).unwrap();
    assert_eq!(s[0].get(0, 0), 0.0);
    assert!(s[0].get(1, 1) > 0.0);
    assert_eq!(s[0].get(2, 2), 0.0);
}

proptest! {
    #[test]
    fn stc_output_is_a_subsequence(seed in any::<u64>(), n in 0usize..400, radius in 1u16..3, window in 1u64..20_000, support in 1u32..4, bi in any::<bool>()) {
        let rec = random_recording(seed, 16, 16, n, 50_000);
        let params = StcParams {
            radius_px: radius,
            window_us: window,
            min_support: support,
            causality: if bi { Causality::Bidirectional } else { Causality::Causal },
        };
        let out = stc_filter(&rec, &params).unwrap();
        let mut it = rec.events().iter();
        for e in out.events() {
            prop_assert!(it.any(|x| x == e));
        }
        // bidirectional support is a superset of causal support
        if !bi {
            let wide = stc_filter(&rec, &StcParams { causality: Causality::Bidirectional, ..params }).unwrap();
            prop_assert!(wide.len() >= out.len());
        }
    }
}
