use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xqc_core::diffcore::{Layer, Mat, Mode, NodeCache, ParamRole, ParamVector, NORM_EPS};
use xqc_core::netlib::{
    actor_forward, build, critic_forward, project_weights, projected_norms, ArchitectureConfig, Checkpoint, CriticLoss,
    NormKind, Precision, ProjectionGranularity, LOG_STD_MAX, LOG_STD_MIN,
};
use xqc_core::XqcError;

fn small(cell: &str) -> ArchitectureConfig {
    ArchitectureConfig {
        hidden_dim: 16,
        num_blocks: 2,
        actor_hidden_dim: 16,
        actor_blocks: 2,
        ..Default::default()
    }
    .with_cell(cell)
    .unwrap()
}

fn batch(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
}

#[test]
fn dense_mse_critic_has_41_parameters() {
    let cfg = ArchitectureConfig {
        norm: NormKind::None,
        weight_projection: false,
        critic_loss: CriticLoss::Mse,
        hidden_dim: 8,
        num_blocks: 1,
        ..Default::default()
    };
    let nets = build(&cfg, 2, 1, 0).unwrap();
    assert_eq!(nets.critic_params[0].len(), 41);
    assert_eq!(nets.critic_params[1].len(), 41);
    assert_eq!(nets.critics[0].out_dim(), 1);
}

#[test]
fn default_categorical_critic_emits_101_logits() {
    let cfg = ArchitectureConfig::default();
    let mut nets = build(&cfg, 3, 1, 1).unwrap();
    let theta = nets.critic_params[0].clone();
    let out = critic_forward(&mut nets.critics[0], &theta, &batch(4, 4, 2), Mode::Train).unwrap();
    assert_eq!((out.rows, out.cols), (4, 101));
    assert!(out.all_finite());
}

#[test]
fn build_is_deterministic_and_critics_are_independent() {
    let cfg = small("bn,wn,ce");
    let a = build(&cfg, 3, 2, 9).unwrap();
    let b = build(&cfg, 3, 2, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.critic_params[0].values, a.critic_params[1].values);
    let c = build(&cfg, 3, 2, 10).unwrap();
    assert_ne!(a.critic_params[0].values, c.critic_params[0].values);
}

#[test]
fn block_order_per_variant() {
    let names = |cell: &str| -> Vec<String> {
        let nets = build(&small(cell), 2, 1, 0).unwrap();
        nets.critics[0]
            .chain
            .layers
            .iter()
            .map(|l| match l {
                Layer::Linear { .. } => "linear".to_string(),
                Layer::BatchNorm { .. } => "bn".to_string(),
                Layer::LayerNorm { .. } => "ln".to_string(),
                Layer::Relu => "relu".to_string(),
                Layer::Tanh => "tanh".to_string(),
            })
            .collect()
    };
    assert_eq!(
        names("bn"),
        ["bn", "linear", "bn", "relu", "linear", "bn", "relu", "linear"]
    );
    assert_eq!(names("ln"), ["linear", "ln", "relu", "linear", "ln", "relu", "linear"]);
    assert_eq!(names("dense"), ["linear", "relu", "linear", "relu", "linear"]);
}

#[test]
fn batch_norm_train_mode_standardizes_each_feature() {
    let nets = build(&small("bn,wn,ce"), 3, 1, 4).unwrap();
    let mut x = batch(32, 4, 5);
    x.data.iter_mut().for_each(|v| *v *= 10.0);
    let tape = nets.critics[0].tape(&nets.critic_params[0], &x, Mode::Train).unwrap();
    let mut checked = 0;
    for (i, node) in tape.nodes.iter().enumerate() {
        if let NodeCache::Norm { xhat, batch_var, .. } = node {
            for j in 0..xhat.cols {
                let col: Vec<f64> = (0..xhat.rows).map(|r| xhat.at(r, j)).collect();
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                assert!(mean.abs() < 1e-6, "mean {mean}");
                // ε under the square root gives exactly σ²/(σ² + ε)
                let bv = batch_var[j];
                assert!((var - bv / (bv + NORM_EPS)).abs() < 1e-10);
                if i == 0 {
                    assert!((var - 1.0).abs() < 1e-5, "var {var}");
                }
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 3);
}

#[test]
fn batch_norm_train_rejects_single_row() {
    let mut nets = build(&small("bn,wn,ce"), 3, 1, 4).unwrap();
    let theta = nets.critic_params[0].clone();
    let err = critic_forward(&mut nets.critics[0], &theta, &batch(1, 4, 5), Mode::Train).unwrap_err();
    assert!(matches!(err, XqcError::Precondition(_)), "{err:?}");
    // eval mode on one row is fine
    critic_forward(&mut nets.critics[0], &theta, &batch(1, 4, 5), Mode::Eval).unwrap();
}

fn scaled_layer(theta: &ParamVector, id: &str, lambda: f64) -> ParamVector {
    let mut out = theta.clone();
    for role in [ParamRole::Weight, ParamRole::Bias] {
        let e = theta.layout.find(id, role).unwrap().clone();
        out.slice_mut(&e).iter_mut().for_each(|v| *v *= lambda);
    }
    out
}

fn max_abs_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn normalized_hidden_layers_are_scale_invariant() {
    for cell in ["bn,wn,ce", "ln,wn,ce", "bn,nown,mse", "ln,nown,mse"] {
        let nets = build(&small(cell), 3, 1, 11).unwrap();
        let theta = nets.critic_params[0].clone();
        // nonzero bias so scaling it matters
        let mut theta = theta;
        let eb = theta.layout.find("h0", ParamRole::Bias).unwrap().clone();
        theta
            .slice_mut(&eb)
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = 0.1 * i as f64 - 0.5);
        let x = batch(16, 4, 12);
        let base = nets.critics[0].tape(&theta, &x, Mode::Train).unwrap().output;
        for id in ["h0", "h1"] {
            for lambda in [0.5, 2.0, 10.0] {
                let out = nets.critics[0]
                    .tape(&scaled_layer(&theta, id, lambda), &x, Mode::Train)
                    .unwrap()
                    .output;
                let d = max_abs_diff(&base, &out);
                assert!(d <= 1e-5, "{cell} {id} λ={lambda}: {d}");
            }
        }
    }
}

#[test]
fn dense_variant_is_not_scale_invariant() {
    let nets = build(&small("dense,nown,mse"), 3, 1, 11).unwrap();
    let theta = nets.critic_params[0].clone();
    let x = batch(16, 4, 12);
    let base = nets.critics[0].tape(&theta, &x, Mode::Train).unwrap().output;
    let out = nets.critics[0]
        .tape(&scaled_layer(&theta, "h0", 2.0), &x, Mode::Train)
        .unwrap()
        .output;
    assert!(max_abs_diff(&base, &out) > 1e-5);
}

#[test]
fn stateless_variants_ignore_mode() {
    for cell in ["dense,nown,ce", "ln,wn,mse"] {
        let nets = build(&small(cell), 3, 1, 3).unwrap();
        let x = batch(8, 4, 3);
        let t = nets.critics[0].tape(&nets.critic_params[0], &x, Mode::Train).unwrap();
        let e = nets.critics[0].tape(&nets.critic_params[0], &x, Mode::Eval).unwrap();
        let bits = |m: &Mat<f64>| m.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&t.output), bits(&e.output), "{cell}");
    }
}

#[test]
fn eval_mode_batch_norm_is_affine() {
    let nets = build(&small("bn,nown,mse"), 3, 1, 3).unwrap();
    let chain = &nets.critics[0].chain;
    // Isolate the input BN layer: eval output is γ(x − μ)/√(σ² + ε) + β.
    let x = batch(6, 4, 8);
    let x2 = batch(6, 4, 9);
    let mid: Vec<f64> = x.data.iter().zip(&x2.data).map(|(a, b)| 0.5 * (a + b)).collect();
    let f = |m: &Mat<f64>| {
        let mut single = chain.clone();
        single.layers.truncate(1);
        single.out_dim = 4;
        single
            .forward(&nets.critic_params[0].values, m, Mode::Eval)
            .unwrap()
            .output
    };
    let (y1, y2, ym) = (f(&x), f(&x2), f(&Mat::from_vec(6, 4, mid)));
    for i in 0..ym.data.len() {
        assert!((ym.data[i] - 0.5 * (y1.data[i] + y2.data[i])).abs() < 1e-12);
    }
}

#[test]
fn running_statistics_converge_geometrically() {
    let mut nets = build(&small("bn,nown,mse"), 3, 1, 3).unwrap();
    let theta = nets.critic_params[0].clone();
    let x = batch(16, 4, 21);
    let tape = nets.critics[0].tape(&theta, &x, Mode::Train).unwrap();
    let (bm, bv) = match &tape.nodes[0] {
        NodeCache::Norm {
            batch_mean, batch_var, ..
        } => (batch_mean.clone(), batch_var.clone()),
        _ => panic!("first node should be input batch norm"),
    };
    let m = nets.critics[0].chain.momentum;
    let gap0: Vec<f64> = bm.iter().map(|v| (0.0 - v).abs()).collect();
    let gapv0: Vec<f64> = bv.iter().map(|v| (1.0 - v).abs()).collect();
    for k in 1..=200 {
        critic_forward(&mut nets.critics[0], &theta, &x, Mode::Train).unwrap();
        let st = &nets.critics[0].chain.stats[0];
        let rate = (1.0 - m).powi(k);
        for j in 0..4 {
            let expect = gap0[j] * rate;
            assert!(((st.mean[j] - bm[j]).abs() - expect).abs() <= 1e-12 + 1e-9 * gap0[j]);
            let expectv = gapv0[j] * rate;
            assert!(((st.var[j] - bv[j]).abs() - expectv).abs() <= 1e-12 + 1e-9 * gapv0[j]);
            assert!(st.var[j] >= 0.0);
        }
    }
}

#[test]
fn actor_log_std_is_clamped_and_zero_head_gives_zero_mean() {
    let mut nets = build(&small("bn,wn,ce"), 3, 2, 5).unwrap();
    let mut theta = nets.actor_params.clone();
    let hw = theta.layout.find("head", ParamRole::Weight).unwrap().clone();
    let hb = theta.layout.find("head", ParamRole::Bias).unwrap().clone();
    theta.slice_mut(&hw).iter_mut().for_each(|v| *v = 0.0);
    let s = batch(8, 3, 6);
    let (mean, log_std) = actor_forward(&mut nets.actor, &theta, &s, Mode::Eval).unwrap();
    assert!(mean.data.iter().all(|&v| v == 0.0));
    assert!(log_std.data.iter().all(|&v| v == 0.0));

    // push log-std bias far outside the clamp window in both directions
    let b = theta.slice_mut(&hb);
    b[2] = 50.0;
    b[3] = -50.0;
    let (_, log_std) = actor_forward(&mut nets.actor, &theta, &s, Mode::Eval).unwrap();
    for r in 0..8 {
        assert_eq!(log_std.at(r, 0), LOG_STD_MAX);
        assert_eq!(log_std.at(r, 1), LOG_STD_MIN);
    }
}

#[test]
fn actor_eval_is_deterministic() {
    let mut nets = build(&small("ln,wn,ce"), 3, 2, 5).unwrap();
    let theta = nets.actor_params.clone();
    let s = batch(8, 3, 6);
    let a = actor_forward(&mut nets.actor, &theta, &s, Mode::Eval).unwrap();
    let b = actor_forward(&mut nets.actor, &theta, &s, Mode::Eval).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn projection_normalizes_hidden_weights_only() {
    let nets = build(&small("bn,nown,ce"), 3, 1, 7).unwrap();
    let mut theta = nets.critic_params[0].clone();
    let e = theta.layout.find("h0", ParamRole::Weight).unwrap().clone();
    let n0 = xqc_core::diffcore::l2(theta.slice(&e));
    theta.slice_mut(&e).iter_mut().for_each(|v| *v *= 5.0 / n0);
    let p = project_weights(&theta, ProjectionGranularity::Matrix).unwrap();
    for (name, n) in projected_norms(&p) {
        assert!((n - 1.0).abs() <= 1e-12, "{name}: {n}");
    }
    for entry in theta.layout.entries() {
        if !entry.projected {
            assert_eq!(theta.slice(entry), p.slice(entry), "{}", entry.layer_id);
        }
    }
    let pp = project_weights(&p, ProjectionGranularity::Matrix).unwrap();
    let bits = |v: &ParamVector| v.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&p), bits(&pp));
}

#[test]
fn row_projection_normalizes_each_row() {
    let nets = build(&small("ln,nown,ce"), 3, 1, 7).unwrap();
    let p = project_weights(&nets.critic_params[0], ProjectionGranularity::Row).unwrap();
    for e in p.layout.projected() {
        for row in p.slice(e).chunks(e.cols) {
            assert!((xqc_core::diffcore::l2(row) - 1.0).abs() <= 1e-12);
        }
    }
    let pp = project_weights(&p, ProjectionGranularity::Row).unwrap();
    assert_eq!(p, pp);
}

#[test]
fn zero_weight_matrix_is_degenerate() {
    let nets = build(&small("bn,nown,ce"), 3, 1, 7).unwrap();
    let mut theta = nets.critic_params[0].clone();
    let e = theta.layout.find("h1", ParamRole::Weight).unwrap().clone();
    theta.slice_mut(&e).iter_mut().for_each(|v| *v = 0.0);
    match project_weights(&theta, ProjectionGranularity::Matrix) {
        Err(XqcError::DegenerateWeight { layer }) => assert_eq!(layer, "h1"),
        other => panic!("expected degenerate weight, got {other:?}"),
    }
}

#[test]
fn categorical_logits_stay_finite_for_large_inputs() {
    let mut nets = build(&small("dense,nown,ce"), 3, 1, 7).unwrap();
    let theta = nets.critic_params[0].clone();
    let x = Mat::from_vec(2, 4, vec![1e6, -1e6, 3e5, 1.0, -2e6, 5e5, 0.0, 7.0]);
    let out = critic_forward(&mut nets.critics[0], &theta, &x, Mode::Eval).unwrap();
    assert!(out.all_finite());
}

#[test]
fn checkpoint_round_trips_networks() {
    let nets = build(&small("bn,wn,ce"), 3, 1, 7).unwrap();
    let mut ck = Checkpoint::new(xqc_core::netlib::config_hash("arch=bn+wn+ce"), Precision::F64);
    ck.push_params("critic0", &nets.critic_params[0]);
    ck.push_params("actor", &nets.actor_params);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.xqc");
    ck.write(&path).unwrap();
    let back = Checkpoint::read(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes(), std::fs::read(&path).unwrap());
    let c0 = back.params("critic0", &nets.critic_params[0].layout).unwrap();
    assert_eq!(c0, nets.critic_params[0]);
    let a = back.params("actor", &nets.actor_params.layout).unwrap();
    assert_eq!(a, nets.actor_params);
    assert!(back.params("critic1", &nets.critic_params[0].layout).is_err());
}
