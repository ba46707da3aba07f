mod common;
use common::{horizontal_line, paired_fraction};

use std::collections::BTreeMap;

use skyshield::synth::{
    generate_dataset, generate_sample, load_dataset, read_manifest, ClutterEdge, SceneDistribution,
    SceneSpec, MANIFEST_NAME,
};

#[test]
fn thin_line_has_dual_polarity_signature() {
    for (speed, jitter) in [
        (400.0, 0.0),
        (400.0, 100.0),
        (250.0, 100.0),
        (-600.0, 100.0),
    ] {
        let spec = horizontal_line(32.0, speed, jitter);
        let f = paired_fraction(&spec);
        assert!(f >= 0.95, "speed {speed} jitter {jitter}: {f}");
    }
}

#[test]
fn noise_count_is_poisson() {
    for (rate, seed) in [(1.0, 1), (5.0, 2), (20.0, 3)] {
        let spec = SceneSpec {
            noise_rate: rate,
            ..SceneSpec::blank(64, 48, 50_000, seed)
        };
        let mean = rate * 64.0 * 48.0 * 0.05;
        let n = generate_sample(&spec).unwrap().recording.len() as f64;
        assert!(
            (n - mean).abs() <= 5.0 * mean.sqrt(),
            "rate {rate}: {n} vs {mean}"
        );
    }
}

#[test]
fn ground_truth_is_thin() {
    let dist = SceneDistribution::default();
    for spec in dist.sample_many(100, 40) {
        let s = generate_sample(&spec).unwrap();
        let area = s.gt_mask.count() as f64;
        assert!(area > 0.0);
        let perimeter = s.gt_mask.boundary_length() as f64;
        assert!(
            area / perimeter <= 1.0,
            "seed {}: {area} / {perimeter}",
            spec.seed
        );
        let m = &s.gt_mask;
        for y in 0..m.height() {
            for x in 0..m.width() {
                if m.get(x, y) {
                    let (h, v) = runs_through(m, x, y);
                    assert!(h.min(v) <= 2, "seed {}: ({x},{y}) runs {h}x{v}", spec.seed);
                }
            }
        }
    }
}

/// Lengths of the horizontal and vertical runs of set pixels through (x, y).
fn runs_through(m: &skyshield::grid::Mask, x: usize, y: usize) -> (usize, usize) {
    let run = |step: &dyn Fn(isize) -> Option<(usize, usize)>| {
        let mut n = 1;
        for dir in [-1isize, 1] {
            let mut k = dir;
            while let Some((xx, yy)) = step(k) {
                if !m.get(xx, yy) {
                    break;
                }
                n += 1;
                k += dir;
            }
        }
        n
    };
    let horiz = run(&|k| {
        let xx = x as isize + k;
        (xx >= 0 && (xx as usize) < m.width()).then_some((xx as usize, y))
    });
    let vert = run(&|k| {
        let yy = y as isize + k;
        (yy >= 0 && (yy as usize) < m.height()).then_some((x, yy as usize))
    });
    (horiz, vert)
}

#[test]
fn blank_scene_is_silent() {
    let s = generate_sample(&SceneSpec::blank(32, 32, 10_000, 0)).unwrap();
    assert!(s.recording.is_empty());
    assert!(s.gt_mask.is_empty());
}

#[test]
fn clutter_and_noise_leave_mask_unchanged() {
    let clean = horizontal_line(20.0, 300.0, 50.0);
    let busy = SceneSpec {
        clutter_edges: vec![ClutterEdge {
            points: vec![[5.0, 5.0], [30.0, 50.0], [60.0, 40.0]],
            thickness_px: 5.0,
        }],
        noise_rate: 3.0,
        ..clean.clone()
    };
    let a = generate_sample(&clean).unwrap();
    let b = generate_sample(&busy).unwrap();
    assert_eq!(a.gt_mask, b.gt_mask);
    assert!(b.recording.len() > a.recording.len());
}

#[test]
fn dataset_bookkeeping_and_determinism() {
    let specs = SceneDistribution {
        width: 48,
        height: 40,
        ..SceneDistribution::default()
    }
    .sample_many(5, 3);
    let hashes = |dir: &std::path::Path| -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().into_string().unwrap(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&specs, a.path()).unwrap();
    generate_dataset(&specs, b.path()).unwrap();
    assert_eq!(manifest.len(), 3);
    let files = hashes(a.path());
    assert_eq!(files.len(), 7);
    assert_eq!(files, hashes(b.path()));

    let path = a.path().join(MANIFEST_NAME);
    assert_eq!(read_manifest(&path).unwrap(), manifest);
    let loaded = load_dataset(&path).unwrap();
    for (spec, sample) in specs.iter().zip(&loaded) {
        assert_eq!(&generate_sample(spec).unwrap(), sample);
    }

    let empty = tempfile::tempdir().unwrap();
    assert!(generate_dataset(&[], empty.path()).unwrap().is_empty());
    assert_eq!(hashes(empty.path()).len(), 1);
}

#[test]
fn distribution_validation() {
    let ok = SceneDistribution::default();
    assert!(ok.validate().is_ok());
    let cases = [
        SceneDistribution {
            width: 0,
            ..ok.clone()
        },
        SceneDistribution {
            height: 3,
            ..ok.clone()
        },
        SceneDistribution {
            duration_us: 0,
            ..ok.clone()
        },
        SceneDistribution {
            speed: [600.0, 250.0],
            ..ok.clone()
        },
        SceneDistribution {
            noise_rate: [-1.0, 1.0],
            ..ok.clone()
        },
        SceneDistribution {
            clutter_thickness_px: [3.0, f64::NAN],
            ..ok.clone()
        },
        SceneDistribution {
            line_thickness_px: 0.0,
            ..ok.clone()
        },
        SceneDistribution {
            max_sag: -0.1,
            ..ok.clone()
        },
        SceneDistribution {
            straight_clutter: 1.5,
            ..ok.clone()
        },
    ];
    for d in cases {
        assert!(
            matches!(d.validate(), Err(skyshield::Error::InvalidParams(_))),
            "{d:?}"
        );
    }
}

proptest::proptest! {
    #![proptest_config(proptest::test_runner::Config {
        failure_persistence: None,
        ..proptest::test_runner::Config::with_cases(64)
    })]

    #[test]
    fn valid_distributions_sample_valid_specs(
        w in 4u16..96,
        h in 4u16..96,
        lo in 0.0f64..500.0,
        extra in 0.0f64..500.0,
        sag in 0.0f64..0.3,
        seed in proptest::prelude::any::<u64>(),
    ) {
        let d = SceneDistribution {
            width: w,
            height: h,
            speed: [lo, lo + extra],
            max_sag: sag,
            noise_rate: [1.0, 1.0],
            ..SceneDistribution::default()
        };
        proptest::prop_assert!(d.validate().is_ok());
        let spec = d.sample(seed);
        proptest::prop_assert_eq!((spec.width, spec.height), (w, h));
        proptest::prop_assert_eq!(spec.noise_rate, 1.0);
    }
}
