use super::layers::{Conv2d, PRelu, Upsample2x};
use super::tensor::Tensor4;
use super::*;
use rand::Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor4 {
    let mut r = rng(seed);
    let mut t = Tensor4::zeros(n, c, h, w);
    t.data.iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
    t
}

#[test]
fn model_preserves_spatial_shape() {
    let spec = ModelSpec::default();
    let mut model = Model::new(&spec, 7).unwrap();
    let input = random_tensor(2, spec.in_channels, 64, 64, 1);
    let out = model.forward(&input, false, &mut rng(0));
    assert_eq!((out.n, out.c, out.h, out.w), (2, 1, 64, 64));
}

#[test]
fn conv_matches_manual_3x3() {
    // 1x1 spatial with pad 1: only the center tap sees the input.
    let mut conv = Conv2d::new(1, 1, 3, 1, 1, &mut rng(3));
    conv.weight
        .copy_from_slice(&[0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    conv.bias[0] = 0.5;
    let mut input = Tensor4::zeros(1, 1, 1, 1);
    input.data[0] = 3.0;
    let out = conv.forward(&input, false);
    assert_eq!(out.data, vec![6.5]);
}

#[test]
fn conv_stride_two_halves_spatial_dims() {
    let mut conv = Conv2d::new(1, 4, 3, 2, 1, &mut rng(5));
    let out = conv.forward(&random_tensor(1, 1, 16, 16, 2), false);
    assert_eq!((out.c, out.h, out.w), (4, 8, 8));
}

#[test]
fn prelu_with_zero_slope_is_relu() {
    let mut p = PRelu::new(1, 0.0);
    let mut input = Tensor4::zeros(1, 1, 1, 4);
    input.data.copy_from_slice(&[-2.0, -0.5, 0.0, 3.0]);
    let out = p.forward(&input, false);
    assert_eq!(out.data, vec![0.0, 0.0, 0.0, 3.0]);
}

#[test]
fn dropout_eval_mode_is_identity() {
    let mut d = super::layers::Dropout::new(0.5);
    let input = random_tensor(1, 2, 4, 4, 9);
    let out = d.forward(&input, false, &mut rng(0));
    assert_eq!(out.data, input.data);
}

#[test]
fn dropout_training_preserves_mean_scale() {
    let mut d = super::layers::Dropout::new(0.1);
    let mut input = Tensor4::zeros(1, 1, 100, 100);
    input.data.iter_mut().for_each(|v| *v = 1.0);
    let out = d.forward(&input, true, &mut rng(11));
    let mean: f64 = out.data.iter().sum::<f64>() / out.data.len() as f64;
    assert!((mean - 1.0).abs() < 0.05, "inverted-dropout mean {mean}");
    let kept = out.data.iter().filter(|v| **v > 0.0).count() as f64;
    let frac = kept / out.data.len() as f64;
    assert!((frac - 0.9).abs() < 0.02, "keep fraction {frac}");
}

#[test]
fn upsample_repeats_pixels() {
    let mut u = Upsample2x::default();
    let mut input = Tensor4::zeros(1, 1, 2, 2);
    input.data.copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
    let out = u.forward(&input);
    assert_eq!(
        out.data,
        vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
    );
}

#[test]
fn backward_without_forward_is_state_error() {
    let mut conv = Conv2d::new(1, 1, 3, 1, 1, &mut rng(1));
    let g = Tensor4::zeros(1, 1, 4, 4);
    assert!(matches!(conv.backward(&g), Err(Error::State(_))));
    let mut model = Model::new(&ModelSpec::default(), 1).unwrap();
    assert!(model.backward(&Tensor4::zeros(1, 1, 64, 64)).is_err());
}

#[test]
fn mse_loss_oracle() {
    let mut a = Tensor4::zeros(1, 1, 1, 2);
    let mut b = Tensor4::zeros(1, 1, 1, 2);
    a.data.copy_from_slice(&[1.0, 3.0]);
    b.data.copy_from_slice(&[0.0, 1.0]);
    assert_eq!(mse_loss(&a, &b).unwrap(), (1.0 + 4.0) / 2.0);
    let g = mse_grad(&a, &b).unwrap();
    assert_eq!(g.data, vec![1.0, 2.0]);
    assert!(mse_loss(&a, &Tensor4::zeros(1, 1, 2, 2)).is_err());
}

#[test]
fn loss_is_quadratic_in_residual() {
    let mut model = Model::new(
        &ModelSpec {
            in_channels: 1,
            channels: vec![2],
            dropout: 0.0,
            prelu_init: 0.25,
        },
        3,
    )
    .unwrap();
    let input = random_tensor(1, 1, 8, 8, 4);
    let pred = model.forward(&input, false, &mut rng(0));
    let mut target2 = pred.clone();
    let mut target1 = pred.clone();
    let delta = random_tensor(1, 1, 8, 8, 5);
    for i in 0..pred.data.len() {
        target1.data[i] += delta.data[i];
        target2.data[i] += 2.0 * delta.data[i];
    }
    let l1 = mse_loss(&pred, &target1).unwrap();
    let l2 = mse_loss(&pred, &target2).unwrap();
    assert!((l2 - 4.0 * l1).abs() < 1e-12);
}

/// Central finite-difference check of every parameter gradient in a model
/// that contains each layer type, with dropout masks frozen.
#[allow(clippy::needless_range_loop)]
fn gradient_check(dropout: f64, seed: u64) -> f64 {
    let spec = ModelSpec {
        in_channels: 1,
        channels: vec![2, 3],
        dropout,
        prelu_init: 0.25,
    };
    let mut model = Model::new(&spec, seed).unwrap();
    let input = random_tensor(2, 1, 8, 8, seed + 1);
    let target = random_tensor(2, 1, 8, 8, seed + 2);

    model.set_dropout_frozen(true);
    // Seed the frozen masks with one forward pass, then take analytic grads.
    let mut r = rng(seed + 3);
    model.zero_grads();
    let pred = model.forward(&input, true, &mut r);
    let grad = mse_grad(&pred, &target).unwrap();
    model.backward(&grad).unwrap();

    let analytic: Vec<(String, Vec<f64>)> = {
        let mut out = Vec::new();
        model.visit_params(&mut |name, _, g| out.push((name, g.clone())));
        out
    };

    let mut max_rel = 0.0f64;
    let n_arrays = analytic.len();
    for array_idx in 0..n_arrays {
        let n_params = analytic[array_idx].1.len();
        for pi in 0..n_params {
            let mut eval_at = |offset: f64| -> (f64, Vec<bool>) {
                let mut k = 0;
                model.visit_params(&mut |_, p, _| {
                    if k == array_idx {
                        p[pi] += offset;
                    }
                    k += 1;
                });
                let out = model.forward(&input, true, &mut rng(0));
                let loss = mse_loss(&out, &target).unwrap();
                let signs = model.activation_signs();
                let mut k = 0;
                model.visit_params(&mut |_, p, _| {
                    if k == array_idx {
                        p[pi] -= offset;
                    }
                    k += 1;
                });
                (loss, signs)
            };
            // Central differences are only valid where the loss is smooth.
            // A parameter step that flips a P-ReLU input sign straddles the
            // activation kink, so shrink the step until the sign pattern at
            // the two endpoints agrees.
            let mut step = 1e-4;
            let numeric = loop {
                let (lp, sp) = eval_at(step);
                let (lm, sm) = eval_at(-step);
                if sp == sm || step <= 1e-7 {
                    break (lp - lm) / (2.0 * step);
                }
                step /= 10.0;
            };
            let exact = analytic[array_idx].1[pi];
            let denom = exact.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max((numeric - exact).abs() / denom);
        }
    }
    max_rel
}

#[test]
fn finite_difference_gradients_no_dropout() {
    let err = gradient_check(0.0, 42);
    assert!(err < 1e-4, "max relative gradient error {err}");
}

#[test]
fn finite_difference_gradients_with_frozen_dropout() {
    let err = gradient_check(0.1, 99);
    assert!(err < 1e-4, "max relative gradient error {err}");
}

#[test]
fn input_gradient_matches_finite_difference() {
    let spec = ModelSpec {
        in_channels: 1,
        channels: vec![2],
        dropout: 0.0,
        prelu_init: 0.25,
    };
    let mut model = Model::new(&spec, 8).unwrap();
    let input = random_tensor(1, 1, 8, 8, 20);
    let target = random_tensor(1, 1, 8, 8, 21);
    model.zero_grads();
    let pred = model.forward(&input, false, &mut rng(0));
    let grad = mse_grad(&pred, &target).unwrap();
    let grad_in = model.backward(&grad).unwrap();

    let step = 1e-4;
    let mut max_rel = 0.0f64;
    for i in (0..input.data.len()).step_by(7) {
        let mut plus = input.clone();
        plus.data[i] += step;
        let mut minus = input.clone();
        minus.data[i] -= step;
        let lp = mse_loss(&model.forward(&plus, false, &mut rng(0)), &target).unwrap();
        let lm = mse_loss(&model.forward(&minus, false, &mut rng(0)), &target).unwrap();
        let numeric = (lp - lm) / (2.0 * step);
        let exact = grad_in.data[i];
        let denom = exact.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max((numeric - exact).abs() / denom);
    }
    assert!(
        max_rel < 1e-4,
        "max relative input-gradient error {max_rel}"
    );
}

#[test]
fn lr_schedule_drops_after_epoch_twenty() {
    let cfg = TrainingConfig::default();
    assert_eq!(lr_for_epoch(&cfg, 0), 1e-3);
    assert_eq!(lr_for_epoch(&cfg, 19), 1e-3);
    assert_eq!(lr_for_epoch(&cfg, 20), 1e-4);
    assert_eq!(lr_for_epoch(&cfg, 49), 1e-4);
}

#[test]
fn adam_leaves_params_unchanged_on_zero_gradients() {
    let mut model = Model::new(
        &ModelSpec {
            in_channels: 1,
            channels: vec![2],
            dropout: 0.0,
            prelu_init: 0.25,
        },
        5,
    )
    .unwrap();
    let before = model.export_weights();
    let mut adam = AdamState::new(&mut model);
    model.zero_grads();
    adam_step(&mut model, &mut adam, &TrainingConfig::default(), 1e-3).unwrap();
    assert_eq!(model.export_weights(), before);
}

#[test]
fn adam_rejects_non_finite_gradients() {
    let mut model = Model::new(
        &ModelSpec {
            in_channels: 1,
            channels: vec![2],
            dropout: 0.0,
            prelu_init: 0.25,
        },
        5,
    )
    .unwrap();
    let mut adam = AdamState::new(&mut model);
    model.visit_params(&mut |_, _, g| g[0] = f64::NAN);
    let err = adam_step(&mut model, &mut adam, &TrainingConfig::default(), 1e-3);
    assert!(matches!(err, Err(Error::Training(_))));
}

#[test]
fn adam_minimizes_a_quadratic() {
    // Drive w toward 0 on loss w^2 using the real update rule.
    let mut model = Model::new(
        &ModelSpec {
            in_channels: 1,
            channels: vec![1],
            dropout: 0.0,
            prelu_init: 0.25,
        },
        5,
    )
    .unwrap();
    model.visit_params(&mut |name, p, _| {
        if name.ends_with("weight") {
            p.iter_mut().for_each(|v| *v = 1.0);
        }
    });
    let mut adam = AdamState::new(&mut model);
    let cfg = TrainingConfig::default();
    for _ in 0..500 {
        model.visit_params(&mut |_, p, g| {
            for i in 0..p.len() {
                g[i] = 2.0 * p[i];
            }
        });
        adam_step(&mut model, &mut adam, &cfg, 1e-2).unwrap();
    }
    let mut max_abs = 0.0f64;
    model.visit_params(&mut |_, p, _| {
        for v in p.iter() {
            max_abs = max_abs.max(v.abs());
        }
    });
    assert!(max_abs < 1e-2, "largest parameter after descent {max_abs}");
}

fn toy_dataset(n: usize, side: usize, seed: u64) -> Vec<SamplePair> {
    // Smooth correlated pairs: target is a blurred, scaled copy of the input.
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let mut input = Tensor4::zeros(1, 1, side, side);
            let cx = r.gen_range(0.2..0.8) * side as f64;
            let cy = r.gen_range(0.2..0.8) * side as f64;
            let amp = r.gen_range(0.5..1.0);
            for y in 0..side {
                for x in 0..side {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    input.set(0, 0, y, x, amp * (-d2 / 18.0).exp());
                }
            }
            let mut target = input.clone();
            target.data.iter_mut().for_each(|v| *v = 0.8 * *v + 0.1);
            SamplePair { input, target }
        })
        .collect()
}

#[test]
fn training_memorizes_two_samples() {
    let spec = ModelSpec {
        in_channels: 1,
        channels: vec![4, 8],
        dropout: 0.0,
        prelu_init: 0.25,
    };
    let data = toy_dataset(2, 16, 31);
    let mut model = Model::new(&spec, 1).unwrap();
    let mut adam = AdamState::new(&mut model);
    let cfg = TrainingConfig::default();
    let refs: Vec<&SamplePair> = data.iter().collect();
    let (input, target) = super::stack(&refs);
    let mut loss = f64::INFINITY;
    for step in 0..2000 {
        model.zero_grads();
        let pred = model.forward(&input, true, &mut rng(0));
        loss = mse_loss(&pred, &target).unwrap();
        if loss < 1e-5 {
            break;
        }
        let grad = mse_grad(&pred, &target).unwrap();
        model.backward(&grad).unwrap();
        let lr = if step < 1000 { 1e-3 } else { 2e-4 };
        adam_step(&mut model, &mut adam, &cfg, lr).unwrap();
    }
    assert!(loss < 1e-4, "memorization loss {loss}");
}

#[test]
fn train_is_deterministic_and_checkpoints_best_epoch() {
    let spec = ModelSpec {
        in_channels: 1,
        channels: vec![2, 4],
        dropout: 0.1,
        prelu_init: 0.25,
    };
    let cfg = TrainingConfig {
        epochs: 4,
        batch_size: 4,
        channels: spec.channels.clone(),
        ..TrainingConfig::default()
    };
    let train_data = toy_dataset(8, 16, 100);
    let val_data = toy_dataset(3, 16, 200);

    let a = train(&spec, &cfg, &train_data, &val_data, 12).unwrap();
    let b = train(&spec, &cfg, &train_data, &val_data, 12).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(
        a.model.clone().export_weights(),
        b.model.clone().export_weights()
    );

    let best = a
        .history
        .iter()
        .map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(a.best_val_loss, best);
    assert_eq!(a.history[a.best_epoch].val_loss, best);
    assert_eq!(a.history.len(), cfg.epochs);

    let c = train(&spec, &cfg, &train_data, &val_data, 13).unwrap();
    assert_ne!(
        a.model.clone().export_weights(),
        c.model.clone().export_weights()
    );
}

#[test]
fn checkpoint_round_trips_through_json() {
    let spec = ModelSpec {
        in_channels: 1,
        channels: vec![2],
        dropout: 0.0,
        prelu_init: 0.25,
    };
    let cfg = TrainingConfig {
        epochs: 2,
        batch_size: 4,
        channels: spec.channels.clone(),
        ..TrainingConfig::default()
    };
    let data = toy_dataset(4, 16, 7);
    let outcome = train(&spec, &cfg, &data, &data, 3).unwrap();
    let ckpt = Checkpoint::from_outcome(&outcome);
    let json = serde_json::to_string(&ckpt).unwrap();
    let back: Checkpoint = serde_json::from_str(&json).unwrap();
    assert_eq!(ckpt, back);
    let mut restored = back.restore().unwrap();
    let input = random_tensor(1, 1, 16, 16, 50);
    let mut original = outcome.model.clone();
    let p1 = original.forward(&input, false, &mut rng(0));
    let p2 = restored.forward(&input, false, &mut rng(0));
    assert_eq!(p1.data, p2.data);
}

#[test]
fn import_weights_rejects_mismatched_checkpoint() {
    let spec = ModelSpec {
        in_channels: 1,
        channels: vec![2],
        dropout: 0.0,
        prelu_init: 0.25,
    };
    let mut a = Model::new(&spec, 1).unwrap();
    let mut big = Model::new(
        &ModelSpec {
            in_channels: 1,
            channels: vec![4],
            ..spec.clone()
        },
        1,
    )
    .unwrap();
    assert!(a.import_weights(&big.export_weights()).is_err());
}

#[test]
fn baseline_mean_is_elementwise_average() {
    let data = toy_dataset(5, 8, 77);
    let mean = baseline_mean(&data).unwrap();
    let i = 3 * 8 + 2;
    let expect: f64 = data.iter().map(|s| s.target.data[i]).sum::<f64>() / 5.0;
    assert!((mean.data[i] - expect).abs() < 1e-12);
    let r = baseline_rmse(&mean, &data).unwrap();
    assert!(r > 0.0);
    // A constant far from the targets must be worse than the mean.
    let mut off = mean.clone();
    off.data.iter_mut().for_each(|v| *v += 1.0);
    assert!(baseline_rmse(&off, &data).unwrap() > r);
}

#[test]
fn evaluate_matches_direct_loss() {
    let spec = ModelSpec {
        in_channels: 1,
        channels: vec![2],
        dropout: 0.5,
        prelu_init: 0.25,
    };
    let mut model = Model::new(&spec, 4).unwrap();
    let data = toy_dataset(3, 16, 17);
    // Dropout must be inactive in evaluation, so batch size cannot matter.
    let l1 = evaluate(&mut model, &data, 1).unwrap();
    let l3 = evaluate(&mut model, &data, 3).unwrap();
    assert!((l1 - l3).abs() < 1e-12);
}
