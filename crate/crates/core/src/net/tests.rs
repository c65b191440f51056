use super::*;
use crate::net::io::ModelKind;
use rand::RngCore;
use std::path::PathBuf;

/// Straight-line forward pass written against the output-major view only.
fn naive_forward(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let layers = net.num_layers();
    for l in 0..layers {
        let n_out = net.arch()[l + 1];
        let mut z = vec![0.0; n_out];
        for (j, zj) in z.iter_mut().enumerate() {
            let mut s = net.bias(l, j);
            for (i, &ai) in a.iter().enumerate() {
                s += net.weight(l, j, i) * ai;
            }
            *zj = if l + 1 < layers && s < 0.0 { 0.0 } else { s };
        }
        a = z;
    }
    a
}

fn a(j: usize) -> ActionIndex {
    ActionIndex::new(j).unwrap()
}

#[test]
fn init_is_seeded_and_bounded() {
    let n1 = init_network(7);
    assert_eq!(n1, init_network(7));
    assert_ne!(n1, init_network(8));
    let bound = (6.0f64 / 72.0).sqrt();
    assert!((bound - 0.2887).abs() < 1e-4);
    for j in 0..64 {
        assert_eq!(n1.bias(0, j), 0.0);
        for i in 0..8 {
            assert!(n1.weight(0, j, i).abs() <= bound);
        }
    }
    for l in 0..3 {
        for j in 0..n1.arch()[l + 1] {
            assert_eq!(n1.bias(l, j), 0.0);
        }
    }
    assert_eq!(n1.num_params(), 8 * 64 + 64 + 64 * 64 + 64 + 64 * 8 + 8);
}

#[test]
fn zero_network_outputs_zero() {
    let net = Network::zeros(&DEFAULT_ARCH).unwrap();
    assert_eq!(net.forward(&[0.3; 8]).unwrap(), vec![0.0; 8]);
}

#[test]
fn hand_scaffold_forward() {
    let mut net = Network::zeros(&[1, 1, 1]).unwrap();
    net.set_weight(0, 0, 0, 2.0);
    net.set_bias(0, 0, 1.0);
    net.set_weight(1, 0, 0, 1.0);
    assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    // negative pre-activation is rectified
    assert_eq!(net.forward(&[-3.0]).unwrap(), vec![0.0]);
}

#[test]
fn forward_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..100 {
        let mut net = init_network(k);
        // non-zero biases so every path is exercised
        for p in net.params_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = net.forward(&x).unwrap();
        let want = naive_forward(&net, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }
}

#[test]
fn batch_forward_matches_single() {
    let net = init_network(3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs: Vec<f64> = (0..5 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut scratch = BatchScratch::default();
    let out = net.forward_batch(&inputs, 5, &mut scratch).to_vec();
    for b in 0..5 {
        let single = net.forward(&inputs[b * 8..(b + 1) * 8]).unwrap();
        for (g, w) in out[b * 8..(b + 1) * 8].iter().zip(&single) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }
}

#[test]
fn forward_rejects_bad_shape() {
    let net = init_network(0);
    assert!(matches!(net.forward(&[0.0; 7]), Err(Error::Shape(_))));
    assert!(net.forward(&[f64::NAN; 8]).is_err());
}

#[test]
fn argmax_ties_go_low() {
    assert_eq!(argmax(&[0.0, 3.0, 1.0, 3.0]), 1);
    assert_eq!(argmax(&[1.0, 0.0, 2.0, 0.0, 0.0, 2.0]), 2);
}

#[test]
fn loss_zero_when_targets_match() {
    let net = init_network(1);
    let x = vec![vec![0.2, -0.1, 0.5, 0.0, 0.9, -0.7, 0.3, 0.3]];
    let q = net.forward(&x[0]).unwrap();
    let (loss, g) = loss_and_gradients(&net, &x, &[a(3)], &[q[3]], LossKind::Mse).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.values.iter().all(|&v| v == 0.0));
}

#[test]
fn single_sample_loss_value() {
    // one-layer net: q = b, so prediction 1 and target 0 give loss 1
    let mut net = Network::zeros(&[8, 8]).unwrap();
    net.set_bias(0, 2, 1.0);
    let (loss, g) =
        loss_and_gradients(&net, &[vec![0.0; 8]], &[a(2)], &[0.0], LossKind::Mse).unwrap();
    assert_eq!(loss, 1.0);
    assert_eq!(g.values[8 * 8 + 2], 2.0);
}

#[test]
fn non_selected_outputs_get_no_gradient() {
    let net = init_network(4);
    let x = vec![vec![0.5; 8], vec![-0.25; 8]];
    let (_, g) = loss_and_gradients(&net, &x, &[a(1), a(1)], &[3.0, -2.0], LossKind::Mse).unwrap();
    // output layer starts after the two hidden layers
    let out_w = 8 * 64 + 64 + 64 * 64 + 64;
    for i in 0..64 {
        for j in 0..8 {
            if j != 1 {
                assert_eq!(g.values[out_w + i * 8 + j], 0.0);
            }
        }
    }
    for j in 0..8 {
        if j != 1 {
            assert_eq!(g.values[out_w + 64 * 8 + j], 0.0);
        }
    }
}

#[test]
fn empty_batch_rejected() {
    let net = init_network(0);
    assert!(matches!(
        loss_and_gradients(&net, &[], &[], &[], LossKind::Mse),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn huber_matches_mse_inside_unit_band() {
    let net = init_network(9);
    let x = vec![vec![0.1; 8]];
    let q = net.forward(&x[0]).unwrap()[0];
    let (mse, gm) = loss_and_gradients(&net, &x, &[a(0)], &[q + 0.5], LossKind::Mse).unwrap();
    let (hub, gh) = loss_and_gradients(&net, &x, &[a(0)], &[q + 0.5], LossKind::Huber).unwrap();
    assert!((mse - 2.0 * hub).abs() < 1e-12);
    for (m, h) in gm.values.iter().zip(&gh.values) {
        assert!((m - 2.0 * h).abs() < 1e-12);
    }
}

#[test]
fn adam_zero_gradient_keeps_params() {
    let mut net = init_network(2);
    let before = net.clone();
    let mut st = AdamState::new(&net);
    let zero = Gradients::zeros_like(&net);
    adam_step(&mut net, &mut st, &zero, 3e-4).unwrap();
    assert_eq!(net, before);
    assert_eq!(st.step, 1);
}

#[test]
fn adam_first_and_second_step_by_hand() {
    let mut net = Network::zeros(&[1, 1]).unwrap();
    net.set_weight(0, 0, 0, 0.5);
    let mut st = AdamState::new(&net);
    let lr = 3e-4;
    let g = 0.2;
    let grads = Gradients {
        values: vec![g, -4.0],
    };
    adam_step(&mut net, &mut st, &grads, lr).unwrap();
    // step 1: m̂ = g, v̂ = g², Δ = -lr g / (|g| + ε)
    let d1w = lr * g / (g + 1e-8);
    let d1b = lr * -4.0 / (4.0 + 1e-8);
    assert!((net.weight(0, 0, 0) - (0.5 - d1w)).abs() < 1e-15);
    assert!((net.bias(0, 0) + d1b).abs() < 1e-15);
    assert!((d1w - lr).abs() < 1e-10);
    assert!((st.m[0] - 0.1 * g).abs() < 1e-15);
    assert!((st.v[0] - 0.001 * g * g).abs() < 1e-15);

    adam_step(&mut net, &mut st, &grads, lr).unwrap();
    // step 2: m = 0.19 g, v = 0.001999 g²; bias-corrected ratio is again g / |g|
    assert!((st.m[0] - 0.19 * g).abs() < 1e-15);
    assert!((st.v[0] - 0.001999 * g * g).abs() < 1e-15);
    let m_hat = 0.19 * g / (1.0 - 0.81);
    let v_hat = 0.001999 * g * g / (1.0 - 0.998001);
    let d2w = lr * m_hat / (v_hat.sqrt() + 1e-8);
    assert!((net.weight(0, 0, 0) - (0.5 - d1w - d2w)).abs() < 1e-14);
    assert_eq!(st.step, 2);
}

#[test]
fn adam_shape_mismatch() {
    let mut net = init_network(0);
    let mut st = AdamState::new(&net);
    let bad = Gradients { values: vec![0.0; 3] };
    let res = adam_step(&mut net, &mut st, &bad, 1e-3);
    assert!(matches!(res, Err(Error::Shape(_))));
}

#[test]
fn training_decreases_loss_on_frozen_batch() {
    let mut net = init_network(21);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x: Vec<Vec<f64>> = (0..32)
        .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let acts: Vec<ActionIndex> = (0..32).map(|k| a(k % 8)).collect();
    let ys: Vec<f64> = (0..32).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut st = AdamState::new(&net);
    let mut prev = f64::INFINITY;
    for _ in 0..50 {
        let (loss, g) = loss_and_gradients(&net, &x, &acts, &ys, LossKind::Mse).unwrap();
        assert!(loss < prev, "{loss} !< {prev}");
        prev = loss;
        adam_step(&mut net, &mut st, &g, 1e-4).unwrap();
    }
}

#[test]
fn gradient_check_fresh_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..5 {
        let err = gradient_check(&init_network(seed), &mut rng);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn gradient_check_flags_corruption() {
    let net = init_network(1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut batch = GradCheckBatch::random(&net, &mut rng);
    batch.nudge_off_kinks(&net, &mut rng);
    let mut grads = Gradients::zeros_like(&net);
    let mut ws = LossWorkspace::default();
    loss_and_gradients_into(
        &net,
        &batch.inputs,
        &batch.actions,
        &batch.targets,
        LossKind::Mse,
        &mut ws,
        &mut grads,
    )
    .unwrap();
    // pick parameters with a real gradient and scale them
    let params: Vec<usize> = (0..net.num_params())
        .filter(|&p| grads.values[p].abs() > 1e-3)
        .take(100)
        .collect();
    assert!(!params.is_empty());
    assert!(check_gradients(&net, &batch, &grads, &params) < 1e-4);
    for &p in &params {
        grads.values[p] *= 1.5;
    }
    assert!(check_gradients(&net, &batch, &grads, &params) > 0.1);
}

#[test]
fn gradient_check_zero_inputs_is_finite() {
    let net = init_network(6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut batch = GradCheckBatch::random(&net, &mut rng);
    batch.inputs.iter_mut().for_each(|x| *x = 0.0);
    batch.nudge_off_kinks(&net, &mut rng);
    let mut grads = Gradients::zeros_like(&net);
    let mut ws = LossWorkspace::default();
    loss_and_gradients_into(
        &net,
        &batch.inputs,
        &batch.actions,
        &batch.targets,
        LossKind::Mse,
        &mut ws,
        &mut grads,
    )
    .unwrap();
    let params: Vec<usize> = (0..net.num_params()).step_by(37).collect();
    let err = check_gradients(&net, &batch, &grads, &params);
    assert!(err.is_finite());
}

fn meta() -> WeightMeta {
    WeightMeta {
        model_kind: ModelKind::Keep,
        seed: 3,
        episodes: 10,
    }
}

fn tmp(name: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join(name);
    (dir, p)
}

#[test]
fn weights_roundtrip_bit_exact() {
    let mut net = init_network(17);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for p in net.params_mut() {
        // awkward values: tiny, negative zero, long mantissas
        *p = match rng.next_u32() % 5 {
            0 => -0.0,
            1 => rng.random_range(-1e-300..1e-300),
            _ => rng.random_range(-10.0..10.0),
        };
    }
    let (_d, path) = tmp("w.json");
    save_weights(&net, 5.0, meta(), &path).unwrap();
    let back = load_weights(&path, &DEFAULT_ARCH).unwrap();
    assert_eq!(back.meta, meta());
    assert_eq!(back.d_max, 5.0);
    for (x, y) in net.params().iter().zip(back.network.params()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn weights_arch_mismatch_is_version_error() {
    let net = Network::new(&[8, 32, 8], 0).unwrap();
    let (_d, path) = tmp("small.json");
    save_weights(&net, 5.0, meta(), &path).unwrap();
    assert!(matches!(load_weights(&path, &DEFAULT_ARCH), Err(Error::Version(_))));
}

#[test]
fn weights_truncated_is_parse_error() {
    let net = init_network(0);
    let text = WeightFile {
        network: net,
        d_max: 5.0,
        meta: meta(),
    }
    .to_json();
    let (_d, path) = tmp("cut.json");
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    match load_weights(&path, &DEFAULT_ARCH) {
        Err(Error::Parse { context, .. }) => assert!(context.contains("line")),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn weights_bad_row_reports_field() {
    let text = r#"{"version":1,"arch":[2,1],"activation":"relu",
        "layers":[{"w":[[1.0]],"b":[0.0]}],"input_norm":{"d_max":1.0},
        "meta":{"model_kind":"reach","seed":0,"episodes":0}}"#;
    match WeightFile::from_json(text, &[2, 1]) {
        Err(Error::Parse { context, .. }) => assert_eq!(context, "layers[0].w[0]"),
        other => panic!("{other:?}"),
    }
    let v2 = text.replace("\"version\":1", "\"version\":2");
    assert!(matches!(WeightFile::from_json(&v2, &[2, 1]), Err(Error::Version(_))));
}

#[test]
fn float_format_has_17_digits() {
    assert_eq!(io::format_f64(0.1), "1.0000000000000001e-1");
    assert_eq!(io::format_f64(-2.5), "-2.5000000000000000e0");
}

#[test]
fn gradient_check_suite_is_reproducible() {
    let a = gradient_check_nets(7, 3);
    assert_eq!(a, gradient_check_nets(7, 3));
    assert_eq!(a.len(), 3);
    assert!(a.iter().all(|&e| e < 1e-4), "{a:?}");
}
