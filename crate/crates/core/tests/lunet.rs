mod common;
use common::{frame_sample, gradient_errors, random_input};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyshield::grid::Mask;
use skyshield::loss::LossParams;
use skyshield::lunet::ops::Conv;
use skyshield::lunet::{train, Gradients, LUnet, LUnetConfig, LUnetModel, Tensor, TrainOptions};
use skyshield::Error;

/// Array-of-arrays image used by the naive oracle: `[channel][y][x]`.
type Img = Vec<Vec<Vec<f64>>>;

fn to_img(t: &Tensor<f64>) -> Img {
    (0..t.channels)
        .map(|c| {
            (0..t.height)
                .map(|y| (0..t.width).map(|x| t.get(c, y, x)).collect())
                .collect()
        })
        .collect()
}

fn naive_conv(input: &Img, conv: &Conv<f64>) -> Img {
    let (h, w) = (input[0].len(), input[0][0].len());
    let k = conv.kernel as isize;
    let r = k / 2;
    (0..conv.out_channels)
        .map(|o| {
            (0..h)
                .map(|y| {
                    (0..w)
                        .map(|x| {
                            let mut acc = conv.bias[o];
                            for (i, plane) in input.iter().enumerate() {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let (yy, xx) = (y as isize + ky - r, x as isize + kx - r);
                                        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize
                                        {
                                            continue;
                                        }
                                        let wi =
                                            ((o * conv.in_channels + i) as isize * k + ky) * k + kx;
                                        acc += conv.weight[wi as usize]
                                            * plane[yy as usize][xx as usize];
                                    }
                                }
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn map(img: Img, f: impl Fn(f64) -> f64) -> Img {
    img.into_iter()
        .map(|p| {
            p.into_iter()
                .map(|r| r.into_iter().map(&f).collect())
                .collect()
        })
        .collect()
}

fn pool(img: &Img) -> Img {
    img.iter()
        .map(|p| {
            (0..p.len() / 2)
                .map(|y| {
                    (0..p[0].len() / 2)
                        .map(|x| {
                            p[2 * y][2 * x]
                                .max(p[2 * y][2 * x + 1])
                                .max(p[2 * y + 1][2 * x])
                                .max(p[2 * y + 1][2 * x + 1])
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn upsample(img: &Img) -> Img {
    img.iter()
        .map(|p| {
            (0..p.len() * 2)
                .map(|y| (0..p[0].len() * 2).map(|x| p[y / 2][x / 2]).collect())
                .collect()
        })
        .collect()
}

/// Straight-line U-net forward. The input is zero-padded on the bottom and
/// right to the model's size multiple and the output cropped back.
fn naive_forward(model: &LUnet<f64>, input: &Tensor<f64>) -> Img {
    let (_, h, w) = input.shape();
    let m = model.config().size_multiple();
    let padded = input.pad_to(h.div_ceil(m) * m, w.div_ceil(m) * m);
    naive_padded(model, &padded)
        .into_iter()
        .map(|p| p[..h].iter().map(|row| row[..w].to_vec()).collect())
        .collect()
}

fn naive_padded(model: &LUnet<f64>, input: &Tensor<f64>) -> Img {
    let depth = model.config().depth;
    let layers = model.layers();
    let relu = |v: f64| v.max(0.0);
    let mut li = 0;
    let mut conv_relu = |x: &Img| {
        let y = map(naive_conv(x, &layers[li]), relu);
        li += 1;
        y
    };
    let mut x = to_img(input);
    let mut skips = Vec::new();
    for l in 0..depth {
        if l > 0 {
            x = pool(&x);
        }
        let y = conv_relu(&x);
        x = conv_relu(&y);
        skips.push(x.clone());
    }
    skips.pop();
    while let Some(skip) = skips.pop() {
        let mut cat = upsample(&x);
        cat.extend(skip);
        let y = conv_relu(&cat);
        x = conv_relu(&y);
    }
    map(naive_conv(&x, &layers[layers.len() - 1]), |z| {
        1.0 / (1.0 + (-z).exp())
    })
}

#[test]
fn parameter_count_of_default_architecture() {
    // 2->8, 8->8, 8->16, 16->16, (16+8)->8, 8->8 at 3x3, then the 8->1 1x1 head
    const DEFAULT_PARAMS: usize = 152 + 584 + 1168 + 2320 + 1736 + 584 + 9;
    let cfg = LUnetConfig::default();
    assert_eq!(DEFAULT_PARAMS, 6553);
    assert_eq!(cfg.param_count(), DEFAULT_PARAMS);
    let model = LUnetModel::init(cfg).unwrap();
    assert_eq!(model.param_count(), DEFAULT_PARAMS);
    assert_eq!(
        model.tensors().iter().map(|t| t.len()).sum::<usize>(),
        DEFAULT_PARAMS
    );
}

#[test]
fn init_is_deterministic_and_validated() {
    let a = LUnetModel::init(LUnetConfig::default()).unwrap();
    let b = LUnetModel::init(LUnetConfig::default()).unwrap();
    assert_eq!(a, b);
    let c = LUnetModel::init(LUnetConfig {
        seed: 1,
        ..LUnetConfig::default()
    })
    .unwrap();
    assert_ne!(a, c);
    assert!(matches!(
        LUnetModel::init(LUnetConfig {
            depth: 0,
            ..LUnetConfig::default()
        }),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn forward_matches_naive_oracle() {
    for (seed, depth, h, w) in [(0, 2, 16, 16), (1, 2, 24, 10), (2, 3, 16, 8), (3, 1, 5, 7)] {
        let model = LUnet::<f64>::init(LUnetConfig {
            depth,
            seed,
            ..LUnetConfig::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let mut model = model;
        for t in model.tensors_mut() {
            for v in t.iter_mut() {
                // non-zero biases too
                *v += rng.random_range(-0.05..0.05);
            }
        }
        let input = random_input(seed, 2, h, w);
        let got = model.forward(&input).unwrap();
        let want = naive_forward(&model, &input);
        assert_eq!(got.shape(), (1, h, w));
        for y in 0..h {
            for x in 0..w {
                let (a, b) = (got.get(0, y, x), want[0][y][x]);
                assert!(
                    (a - b).abs() <= 1e-5 * b.abs(),
                    "depth {depth} ({x},{y}): {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn output_shape_and_zero_weights() {
    let model = LUnetModel::init(LUnetConfig::default()).unwrap();
    let input = random_input(5, 2, 64, 64).cast::<f32>();
    assert_eq!(model.forward(&input).unwrap().shape(), (1, 64, 64));
    let odd = random_input(6, 2, 13, 7).cast::<f32>();
    assert_eq!(model.forward(&odd).unwrap().shape(), (1, 13, 7));
    assert!(model.forward(&random_input(7, 1, 8, 8).cast()).is_err());

    let mut zero = model.clone();
    for t in zero.tensors_mut() {
        t.fill(0.0);
    }
    let out = zero.forward(&input).unwrap();
    assert!(out.data.iter().all(|&v| v == 0.5));
    assert_eq!(
        model.forward(&input).unwrap(),
        model.forward(&input).unwrap()
    );
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let model = LUnet::<f64>::init(LUnetConfig::default()).unwrap();
    let input = random_input(8, 2, 16, 16);
    let cache = model.forward_cached(&input).unwrap();
    let mut grads = Gradients::zeros_like(&model);
    let gin = model
        .backward(&cache, &Tensor::zeros(1, 16, 16), &mut grads)
        .unwrap();
    assert!(grads.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    assert!(gin.data.iter().all(|&v| v == 0.0));
}

#[test]
fn network_gradients_match_finite_differences() {
    let model = LUnet::<f64>::init(LUnetConfig::default()).unwrap();
    let input = random_input(9, 2, 16, 16);
    let target = Mask::from_fn(16, 16, |x, y| x == y || x + 1 == y);
    let errors = gradient_errors(&model, &input, &target, &LossParams::default());
    assert_eq!(errors.len(), 14);
    for (i, e) in errors.iter().enumerate() {
        assert!(*e < 1e-4, "tensor {i}: {e}");
    }
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let mut model = LUnetModel::init(LUnetConfig::default()).unwrap();
    let before = model.clone();
    let data = vec![frame_sample(1, 32), frame_sample(2, 32)];
    let opts = TrainOptions {
        epochs: 3,
        lr: 0.0,
        ..TrainOptions::default()
    };
    let log = train(&mut model, &data, &opts).unwrap();
    assert_eq!(log.len(), 3);
    assert_eq!(model, before);
}

#[test]
fn lambda_zero_trains_on_dice_only() {
    let mut model = LUnetModel::init(LUnetConfig::default()).unwrap();
    let data = vec![frame_sample(3, 32)];
    let mut opts = TrainOptions {
        epochs: 4,
        ..TrainOptions::default()
    };
    opts.loss.lambda = 0.0;
    for entry in train(&mut model, &data, &opts).unwrap() {
        assert_eq!(entry.total, entry.dice);
    }
}

#[test]
fn training_errors() {
    let mut model = LUnetModel::init(LUnetConfig::default()).unwrap();
    assert!(matches!(
        train(&mut model, &[], &TrainOptions::default()),
        Err(Error::EmptyDataset)
    ));
    let data = vec![frame_sample(4, 16)];
    let bad = TrainOptions {
        batch_size: 0,
        ..TrainOptions::default()
    };
    assert!(train(&mut model, &data, &bad).is_err());
    let diverge = TrainOptions {
        epochs: 50,
        lr: 1e30,
        momentum: 0.0,
        ..TrainOptions::default()
    };
    assert!(matches!(
        train(&mut model, &data, &diverge),
        Err(Error::DivergedLoss { .. })
    ));
}

#[test]
fn training_is_deterministic() {
    let data = vec![
        frame_sample(5, 32),
        frame_sample(6, 32),
        frame_sample(7, 32),
    ];
    let opts = TrainOptions {
        epochs: 2,
        batch_size: 2,
        crop: Some(16),
        ..TrainOptions::default()
    };
    let mut a = LUnetModel::init(LUnetConfig::default()).unwrap();
    let mut b = a.clone();
    assert_eq!(
        train(&mut a, &data, &opts).unwrap(),
        train(&mut b, &data, &opts).unwrap()
    );
    assert_eq!(a, b);
}
