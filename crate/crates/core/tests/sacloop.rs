use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use xqc_core::diffcore::policy::squashed_sample;
use xqc_core::diffcore::{l2, LossTarget, Mat};
use xqc_core::envs::Task;
use xqc_core::netlib::{build, ArchitectureConfig, Checkpoint};
use xqc_core::sacloop::{
    discount_heuristic, scheduled_lr, train, Agent, Batch, ReplayBuffer, RewardNormalizer, Trainer, TrainerConfig,
    Transition,
};
use xqc_core::XqcError;

fn tiny(cell: &str) -> ArchitectureConfig {
    ArchitectureConfig {
        hidden_dim: 16,
        num_blocks: 1,
        actor_hidden_dim: 16,
        actor_blocks: 1,
        atoms: 21,
        ..Default::default()
    }
    .with_cell(cell)
    .unwrap()
}

fn quick_cfg() -> TrainerConfig {
    TrainerConfig {
        batch: 16,
        warmup_steps: 50,
        probe_batch: 32,
        eval_every: 0,
        diag_every: 100,
        final_eval_episodes: 1,
        buffer_capacity: 10_000,
        ..Default::default()
    }
}

fn random_batch(n: usize, obs: usize, act: usize, rng: &mut ChaCha8Rng) -> Batch {
    let ts: Vec<Transition> = (0..n)
        .map(|_| Transition {
            s: (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect(),
            a: (0..act).map(|_| rng.random_range(-1.0..1.0)).collect(),
            r: rng.random_range(-2.0..2.0),
            s2: (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect(),
            done: rng.random_bool(0.1),
        })
        .collect();
    let refs: Vec<&Transition> = ts.iter().collect();
    Batch::from_transitions(&refs)
}

fn agent(cell: &str, cfg: TrainerConfig, gamma: f64) -> Agent {
    let nets = build(&tiny(cell), 3, 1, 11).unwrap();
    Agent::new(nets, cfg, gamma).unwrap()
}

fn assert_projected(p: &xqc_core::diffcore::ParamVector, tol: f64) {
    for e in p.layout.projected() {
        let n = l2(p.slice(e));
        assert!((n - 1.0).abs() <= tol, "{} has norm {n}", e.layer_id);
    }
}

#[test]
fn discount_heuristic_cases() {
    assert_eq!(discount_heuristic(1000, 2).unwrap(), 0.99);
    assert_eq!(discount_heuristic(20, 1).unwrap(), 0.95);
    assert_eq!(discount_heuristic(10_000, 1).unwrap(), 0.995);
    assert!(discount_heuristic(0, 1).is_err());
    assert!(discount_heuristic(10, 0).is_err());
}

#[test]
fn lr_schedule_decays_to_a_tenth() {
    assert_eq!(scheduled_lr(1.0, 0, 100, true), 1.0);
    assert!((scheduled_lr(1.0, 100, 100, true) - 0.1).abs() < 1e-15);
    assert!((scheduled_lr(1.0, 50, 100, true) - 0.55).abs() < 1e-15);
    assert_eq!(scheduled_lr(1.0, 50, 100, false), 1.0);
}

#[test]
fn zero_rewards_stay_zero() {
    let mut n = RewardNormalizer::new(0.99);
    for _ in 0..1000 {
        assert_eq!(n.normalize(0.0), 0.0);
    }
    assert!(n.std() >= RewardNormalizer::EPS);
}

#[test]
fn first_reward_is_finite() {
    let mut n = RewardNormalizer::new(0.99);
    let x = n.normalize(3.0);
    assert!(x.is_finite());
    assert_eq!(x, 3.0 / RewardNormalizer::EPS);
}

#[test]
fn return_std_matches_ar1_variance() {
    let gamma: f64 = 0.99;
    let mut n = RewardNormalizer::new(gamma);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100_000 {
        n.observe(rng.sample(StandardNormal));
    }
    let expect = 1.0 / (1.0 - gamma * gamma).sqrt();
    let rel = (n.std() - expect).abs() / expect;
    assert!(rel < 0.1, "std {} vs {expect}", n.std());
}

#[test]
fn episode_boundary_resets_accumulator() {
    let mut a = RewardNormalizer::new(0.5);
    a.observe(1.0);
    a.end_episode();
    a.observe(1.0);
    // both returns equal 1, so the variance is zero and the floor applies
    assert_eq!(a.std(), RewardNormalizer::EPS);
}

#[test]
fn replay_sampling_is_uniform() {
    let k = 100;
    let mut buf = ReplayBuffer::new(k);
    for i in 0..k {
        buf.push(Transition {
            s: vec![i as f64],
            a: vec![0.0],
            r: 0.0,
            s2: vec![0.0],
            done: false,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws = 1_000_000;
    let mut counts = vec![0u64; k];
    for i in buf.sample_indices(draws, &mut rng) {
        counts[i] += 1;
    }
    let e = draws as f64 / k as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // 99 degrees of freedom, p = 0.01 critical value
    assert!(chi2 < 134.64, "chi2 = {chi2}");
}

#[test]
fn replay_overwrites_oldest_first() {
    let mut buf = ReplayBuffer::new(3);
    for i in 0..5 {
        buf.push(Transition {
            s: vec![i as f64],
            a: vec![0.0],
            r: i as f64,
            s2: vec![0.0],
            done: false,
        });
    }
    assert_eq!(buf.len(), 3);
    let mut rs: Vec<f64> = (0..3).map(|i| buf.get(i).r).collect();
    rs.sort_by(f64::total_cmp);
    assert_eq!(rs, vec![2.0, 3.0, 4.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = buf.sample(50, &mut rng).unwrap();
    assert!(b.r.iter().all(|&r| r >= 2.0));
}

#[test]
fn transition_validation() {
    let t = Transition {
        s: vec![0.0],
        a: vec![1.5],
        r: 0.0,
        s2: vec![0.0],
        done: false,
    };
    assert!(t.validate().is_err());
    let t = Transition {
        a: vec![0.5],
        r: f64::NAN,
        ..t
    };
    assert!(t.validate().is_err());
}

#[test]
fn target_entropy_default() {
    assert_eq!(TrainerConfig::default().target_entropy_for(6), -3.0);
    assert_eq!(TrainerConfig::default().target_entropy_for(1), -0.5);
}

#[test]
fn temperature_moves_against_entropy_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = Mat::from_vec(32, 3, (0..96).map(|_| rng.random_range(-1.0..1.0)).collect());
    for (target, should_grow) in [(50.0, true), (-50.0, false)] {
        let cfg = TrainerConfig {
            target_entropy: Some(target),
            ..quick_cfg()
        };
        let mut ag = agent("bn+wn+ce", cfg, 0.9);
        let a0 = ag.alpha();
        let d = ag.actor_and_temperature_update(&s, 3e-4, &mut rng).unwrap();
        assert_eq!(d.alpha, a0);
        assert_eq!(d.alpha_grad < 0.0, should_grow);
        assert_eq!(ag.alpha() > a0, should_grow, "target {target}");
    }
}

/// Density of `a = tanh(u)`, `u ~ N(μ, σ²)` by change of variables, with the
/// Jacobian taken by central differences.
fn numeric_log_density(a: f64, mu: f64, sigma: f64) -> f64 {
    let u = a.atanh();
    let h = 1e-6;
    let jac = ((u + h).tanh() - (u - h).tanh()) / (2.0 * h);
    let z = (u - mu) / sigma;
    let gauss = (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    (gauss / jac).ln()
}

#[test]
fn squashed_log_prob_matches_change_of_variables() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let mu: f64 = rng.random_range(-2.0..2.0);
        let ls: f64 = rng.random_range(-2.0..1.0);
        let eps: f64 = rng.sample(StandardNormal);
        let s = squashed_sample(&[mu], &[ls], &[eps]);
        if s.action[0].abs() > 0.999 {
            continue;
        }
        let oracle = numeric_log_density(s.action[0], mu, ls.exp());
        assert!((s.log_prob - oracle).abs() <= 1e-6, "{} vs {oracle}", s.log_prob);
    }
}

#[test]
fn squashed_density_integrates_to_one() {
    let (mu, ls) = (0.3, -0.4f64);
    // midpoint rule in u-space over ±12σ
    let sigma = ls.exp();
    let n = 200_000;
    let (lo, hi) = (mu - 12.0 * sigma, mu + 12.0 * sigma);
    let du = (hi - lo) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let u: f64 = lo + (i as f64 + 0.5) * du;
        let eps = (u - mu) / sigma;
        let s = squashed_sample(&[mu], &[ls], &[eps]);
        let da = 1.0 - u.tanh().powi(2);
        total += s.log_prob.exp() * da * du;
    }
    assert!((total - 1.0).abs() < 1e-6, "mass {total}");
}

#[test]
fn gamma_zero_target_is_projected_reward() {
    let ag = agent("bn+wn+ce", quick_cfg(), 0.0);
    let sup = ag.support.clone().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 40;
    let m = sup.len();
    let next0 = Mat::from_vec(n, m, (0..n * m).map(|_| rng.random_range(-3.0..3.0)).collect());
    let next1 = Mat::from_vec(n, m, (0..n * m).map(|_| rng.random_range(-3.0..3.0)).collect());
    let r: Vec<f64> = (0..n).map(|_| rng.random_range(-7.0..7.0)).collect();
    let done: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    let lp: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    let t = match ag.build_targets([&next0, &next1], &r, &done, &lp, 0.7).unwrap() {
        LossTarget::Categorical(t) => t,
        _ => unreachable!(),
    };
    let logits = Mat::from_vec(n, m, (0..n * m).map(|_| rng.random_range(-2.0..2.0)).collect());
    let (_, grad) = xqc_core::diffcore::loss::cross_entropy(&logits, &t, n).unwrap();
    let dz = sup.delta_z();
    for row in 0..n {
        // split of the clamped reward between its two neighbours
        let v = r[row].clamp(sup.v_min, sup.v_max);
        let mut split = vec![0.0; m];
        for (i, z) in sup.atoms().iter().enumerate() {
            split[i] = (1.0 - (v - z).abs() / dz).max(0.0);
        }
        for i in 0..m {
            assert!((t.at(row, i) - split[i]).abs() <= 1e-12);
        }
        let mx = logits.row(row).iter().cloned().fold(f64::MIN, f64::max);
        let ex: Vec<f64> = logits.row(row).iter().map(|x| (x - mx).exp()).collect();
        let zs: f64 = ex.iter().sum();
        for i in 0..m {
            let g = (ex[i] / zs - split[i]) / n as f64;
            assert!((grad.at(row, i) - g).abs() <= 1e-12);
        }
    }
}

#[test]
fn zero_lr_leaves_dense_mse_unchanged() {
    let mut ag = agent("dense+nown+mse", quick_cfg(), 0.99);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let before = ag.nets.critic_params.clone();
    for _ in 0..5 {
        let b = random_batch(16, 3, 1, &mut rng);
        let r = b.r.clone();
        ag.critic_update(&b, &r, 0.0, &mut rng).unwrap();
    }
    for i in 0..2 {
        assert_eq!(ag.nets.critic_params[i].values, before[i].values);
    }
}

#[test]
fn critic_update_keeps_unit_norms() {
    for cell in ["bn+wn+ce", "ln+wn+mse", "dense+wn+ce"] {
        let mut ag = agent(cell, quick_cfg(), 0.99);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let b = random_batch(16, 3, 1, &mut rng);
            let r = b.r.clone();
            ag.critic_update(&b, &r, 1e-2, &mut rng).unwrap();
            for p in &ag.nets.critic_params {
                assert_projected(p, 1e-10);
            }
            ag.actor_and_temperature_update(&b.s, 1e-2, &mut rng).unwrap();
            assert_projected(&ag.nets.actor_params, 1e-10);
        }
    }
}

#[test]
fn single_row_batch_is_rejected() {
    let mut ag = agent("bn+wn+ce", quick_cfg(), 0.99);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = random_batch(1, 3, 1, &mut rng);
    let r = b.r.clone();
    assert!(matches!(
        ag.critic_update(&b, &r, 1e-3, &mut rng),
        Err(XqcError::Precondition(_))
    ));
}

#[test]
fn targets_start_equal_and_contract() {
    let mut ag = agent("bn+wn+ce", quick_cfg(), 0.99);
    for i in 0..2 {
        assert_eq!(ag.target_params[i].values, ag.nets.critic_params[i].values);
    }
    // perturb the online critic and freeze it; the gap shrinks by (1 − τ)
    for v in ag.nets.critic_params[0].values.iter_mut() {
        *v += 0.1;
    }
    let gap = |ag: &Agent| {
        let d: Vec<f64> = ag.target_params[0]
            .values
            .iter()
            .zip(&ag.nets.critic_params[0].values)
            .map(|(a, b)| a - b)
            .collect();
        l2(&d)
    };
    let g0 = gap(&ag);
    ag.polyak();
    let g1 = gap(&ag);
    assert!((g1 / g0 - (1.0 - ag.cfg.target_momentum)).abs() < 1e-12);
}

#[test]
fn trainer_keeps_unit_norms_for_1000_steps() {
    let mut tr = Trainer::new(Task::Pendulum, &tiny("bn+wn+ce"), &quick_cfg(), 1000, 0).unwrap();
    for i in 0..2 {
        assert_eq!(tr.agent.target_params[i].values, tr.agent.nets.critic_params[i].values);
    }
    for _ in 0..1000 {
        tr.advance().unwrap();
        for p in &tr.agent.nets.critic_params {
            assert_projected(p, 1e-10);
        }
    }
    assert!(tr.last_critic.is_some() && tr.last_actor.is_some());
}

#[test]
fn zero_steps_gives_initial_checkpoint_only() {
    let run = train(Task::Pendulum, &tiny("bn+wn+ce"), &quick_cfg(), 0, 1, &[]).unwrap();
    assert_eq!(run.checkpoints.len(), 1);
    assert_eq!(run.checkpoints[0].0, 0);
    assert!(run.returns.is_empty());
    assert!(run.snapshots.is_empty());
    assert!(run.final_return.is_finite());
}

#[test]
fn same_seed_same_run() {
    let cfg = quick_cfg();
    let arch = tiny("bn+wn+ce");
    let a = train(Task::Pendulum, &arch, &cfg, 600, 7, &[300]).unwrap();
    let b = train(Task::Pendulum, &arch, &cfg, 600, 7, &[300]).unwrap();
    assert_eq!(a.returns.len(), 3);
    assert_eq!(a.returns, b.returns);
    assert_eq!(a.final_return.to_bits(), b.final_return.to_bits());
    let bytes = |r: &xqc_core::sacloop::RunArtifacts| -> Vec<Vec<u8>> {
        r.checkpoints.iter().map(|(_, c)| c.to_bytes()).collect()
    };
    assert_eq!(bytes(&a), bytes(&b));
    assert_eq!(a.checkpoints.iter().map(|c| c.0).collect::<Vec<_>>(), vec![0, 300, 600]);
    let c = train(Task::Pendulum, &arch, &cfg, 600, 8, &[]).unwrap();
    assert_ne!(a.returns, c.returns);
}

#[test]
fn probe_beyond_horizon_is_a_config_error() {
    let r = train(Task::Pendulum, &tiny("bn+wn+ce"), &quick_cfg(), 10, 0, &[11]);
    assert!(matches!(r, Err(XqcError::Config(_))));
}

#[test]
fn elr_window_requires_projection_and_ce() {
    for cell in ["bn+nown+ce", "bn+wn+mse"] {
        let mut tr = Trainer::new(Task::Pendulum, &tiny(cell), &quick_cfg(), 100, 0).unwrap();
        assert!(matches!(tr.elr_window(10), Err(XqcError::Refused(_))));
    }
}

#[test]
fn elr_window_report() {
    let mut tr = Trainer::new(Task::Pendulum, &tiny("bn+wn+ce"), &quick_cfg(), 400, 0).unwrap();
    for _ in 0..100 {
        tr.advance().unwrap();
    }
    let rep = tr.elr_window(100).unwrap();
    assert_eq!(rep.steps, 100 * tr.cfg().utd);
    assert!(rep.max_effective_update.is_finite() && rep.max_effective_update > 0.0);
    assert!(rep.max_norm_deviation <= 1e-10);
    assert!(rep.lipschitz_estimate.is_finite());

    let cfg = TrainerConfig {
        critic_lr: 0.0,
        ..quick_cfg()
    };
    let mut tr = Trainer::new(Task::Pendulum, &tiny("bn+wn+ce"), &cfg, 400, 0).unwrap();
    for _ in 0..60 {
        tr.advance().unwrap();
    }
    let rep = tr.elr_window(20).unwrap();
    assert_eq!(rep.max_effective_update, 0.0);
}

#[test]
fn write_dir_emits_run_files() {
    let run = train(Task::Pendulum, &tiny("bn+wn+ce"), &quick_cfg(), 400, 0, &[200]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run.write_dir(dir.path()).unwrap();
    for f in [
        "config.txt",
        "returns.csv",
        "diag.csv",
        "score.csv",
        "ckpt_0.xqc",
        "ckpt_200.xqc",
        "ckpt_400.xqc",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let ret = std::fs::read_to_string(dir.path().join("returns.csv")).unwrap();
    assert_eq!(ret.lines().count(), 1 + run.returns.len());
    let ck = Checkpoint::read(&dir.path().join("ckpt_400.xqc")).unwrap();
    let p = ck.params("critic0", &run.snapshots[0].theta.layout).unwrap();
    assert_eq!(p.layout, run.snapshots[0].theta.layout);
}
