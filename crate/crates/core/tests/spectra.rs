use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use xqc_core::diffcore::{Affine, HvpOracle, LossTarget, Mat, Mode, NetLoss, ParamVector, Quadratic};
use xqc_core::netlib::{build, project_in_place, ArchitectureConfig, ProjectionGranularity};
use xqc_core::spectra::{
    aggregate_iqm, aggregate_iqm_stratified, conditioning_csv, conditioning_summary, dense_conditioning,
    dense_eigenvalues, iqm, lanczos_spectrum, plasticity_probe, spectrum_csv, tridiagonal_eigen, weighted_kurtosis,
    SpectrumEstimate, FLOOR_RATIO,
};
use xqc_core::XqcError;

fn estimate(values: &[f64], weights: &[f64]) -> SpectrumEstimate {
    SpectrumEstimate {
        ritz_values: values.to_vec(),
        ritz_weights: weights.to_vec(),
        num_probes: 1,
        lanczos_steps: values.len(),
        seed: 0,
    }
}

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = rng.sample(StandardNormal);
            *a.at_mut(i, j) = v;
            *a.at_mut(j, i) = v;
        }
    }
    a
}

/// Eval-mode CE loss of a one-block critic on random data.
fn critic_oracle(hidden: usize, cell: &str, seed: u64) -> HvpOracle<NetLoss> {
    let arch = ArchitectureConfig {
        hidden_dim: hidden,
        num_blocks: 1,
        actor_hidden_dim: 8,
        actor_blocks: 1,
        atoms: 11,
        ..Default::default()
    }
    .with_cell(cell)
    .unwrap();
    let nets = build(&arch, 3, 1, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let n = 64;
    let x = Mat::from_vec(n, 4, (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect());
    let target = if arch.atoms > 0 && cell.contains("ce") {
        let mut t = Mat::zeros(n, arch.atoms);
        for r in 0..n {
            let w: Vec<f64> = (0..arch.atoms).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = w.iter().sum();
            for (j, v) in w.iter().enumerate() {
                *t.at_mut(r, j) = v / s;
            }
        }
        LossTarget::Categorical(t)
    } else {
        LossTarget::Scalar((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let mut theta = nets.critic_params[0].clone();
    // move away from the near-zero head init so the Hessian has structure
    for e in theta.layout.entries().to_vec() {
        if e.layer_id == "head" {
            for v in theta.slice_mut(&e) {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    let loss = NetLoss::new(nets.critics[0].chain.clone(), x, target, Mode::Eval).unwrap();
    HvpOracle::new(loss, theta).unwrap()
}

#[test]
fn diagonal_quadratic_is_recovered_exactly() {
    let d: Vec<f64> = (1..=10).map(|i| i as f64).collect();
    let oracle = HvpOracle::new(Quadratic::diagonal(&d), ParamVector::flat(vec![0.1; 10])).unwrap();
    let est = lanczos_spectrum(&oracle, 10, 1, 3).unwrap();
    assert_eq!(est.len(), 10);
    for (r, e) in est.ritz_values.iter().zip(&d) {
        assert!((r - e).abs() <= 1e-8, "{r} vs {e}");
    }
}

#[test]
fn zero_hessian_gives_single_zero_ritz_value() {
    let oracle = HvpOracle::new(Affine::new(1.0, vec![0.5; 20]), ParamVector::flat(vec![0.0; 20])).unwrap();
    let est = lanczos_spectrum(&oracle, 8, 3, 0).unwrap();
    // each probe breaks down after one step
    assert_eq!(est.ritz_values, vec![0.0; 3]);
    assert!((est.ritz_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(matches!(
        conditioning_summary(&est, FLOOR_RATIO),
        Err(XqcError::DegenerateSpectrum(_))
    ));
}

#[test]
fn bad_lanczos_arguments_are_rejected() {
    let oracle = HvpOracle::new(Quadratic::diagonal(&[1.0, 2.0, 3.0]), ParamVector::flat(vec![0.0; 3])).unwrap();
    assert!(lanczos_spectrum(&oracle, 1, 1, 0).is_err());
    assert!(lanczos_spectrum(&oracle, 4, 1, 0).is_err());
    assert!(lanczos_spectrum(&oracle, 3, 0, 0).is_err());
    assert!(lanczos_spectrum(&oracle, 3, 1, 0).is_ok());
}

#[test]
fn tridiagonal_solver_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for n in [1usize, 2, 3, 7, 40] {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..n.saturating_sub(1)).map(|_| rng.random_range(0.01..2.0)).collect();
        let (vals, first) = tridiagonal_eigen(&a, &b).unwrap();
        let mut t = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            t[(i, i)] = a[i];
            if i + 1 < n {
                t[(i, i + 1)] = b[i];
                t[(i + 1, i)] = b[i];
            }
        }
        let eig = t.symmetric_eigen();
        let mut oracle: Vec<(f64, f64)> = (0..n)
            .map(|j| (eig.eigenvalues[j], eig.eigenvectors[(0, j)].powi(2)))
            .collect();
        oracle.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut ours: Vec<(f64, f64)> = vals.iter().zip(&first).map(|(v, z)| (*v, z * z)).collect();
        ours.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (o, e) in ours.iter().zip(&oracle) {
            assert!((o.0 - e.0).abs() < 1e-10, "n={n}: {} vs {}", o.0, e.0);
            assert!((o.1 - e.1).abs() < 1e-10, "n={n}: weight {} vs {}", o.1, e.1);
        }
        assert!((ours.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn full_dimension_lanczos_is_exact_on_a_small_net() {
    let oracle = critic_oracle(4, "ln+wn+ce", 5);
    let dim = oracle.dim();
    assert!(dim < 200, "dim {dim}");
    let dense = dense_eigenvalues(&oracle).unwrap();
    let scale = dense.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let est = lanczos_spectrum(&oracle, dim, 1, 1).unwrap();
    // every Ritz value is an eigenvalue, and the extremes are found
    for r in &est.ritz_values {
        let nearest = dense.iter().map(|e| (e - r).abs()).fold(f64::INFINITY, f64::min);
        assert!(nearest <= 1e-6 * scale, "ritz {r} off by {nearest}");
    }
    assert!((est.ritz_values[0] - dense[0]).abs() <= 1e-6 * scale);
    assert!((est.ritz_values[est.len() - 1] - dense[dim - 1]).abs() <= 1e-6 * scale);
}

#[test]
fn lambda_max_matches_dense_oracle_on_a_critic() {
    for (cell, seed) in [("bn+wn+ce", 1), ("ln+wn+ce", 2), ("bn+wn+mse", 3)] {
        let oracle = critic_oracle(24, cell, seed);
        assert!(oracle.dim() <= 2000);
        let dense = dense_eigenvalues(&oracle).unwrap();
        let lmax = dense.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let est = lanczos_spectrum(&oracle, 64, 8, 9).unwrap();
        let rel = (est.max_abs() - lmax).abs() / lmax;
        assert!(rel <= 1e-2, "{cell}: {} vs {lmax}", est.max_abs());
    }
}

#[test]
fn estimate_is_deterministic_and_well_formed() {
    let oracle = critic_oracle(8, "bn+wn+ce", 4);
    let a = lanczos_spectrum(&oracle, 16, 4, 21).unwrap();
    let b = lanczos_spectrum(&oracle, 16, 4, 21).unwrap();
    assert_eq!(a, b);
    assert!(a.ritz_values.windows(2).all(|w| w[0] <= w[1]));
    assert!(a.ritz_weights.iter().all(|&w| w >= 0.0));
    assert!((a.ritz_weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    let c = lanczos_spectrum(&oracle, 16, 4, 22).unwrap();
    assert_ne!(a.ritz_values, c.ritz_values);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn weights_sum_to_one_for_random_quadratics(seed in 0u64..1000, n in 3usize..30, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_symmetric(n, &mut rng);
        let oracle = HvpOracle::new(Quadratic::new(a).unwrap(), ParamVector::flat(vec![0.0; n])).unwrap();
        let m = (n / 2).max(2);
        let est = lanczos_spectrum(&oracle, m, k, seed).unwrap();
        prop_assert!(est.ritz_weights.iter().all(|&w| w >= 0.0));
        prop_assert!((est.ritz_weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(est.ritz_values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn constant_input_gives_a_degenerate_interval(c in -1e6f64..1e6, n in 3usize..40, seed in 0u64..100) {
        let v = vec![c; n];
        prop_assert_eq!(aggregate_iqm(&v, 200, seed).unwrap(), (c, c, c));
    }

    #[test]
    fn kappa_is_scale_invariant(seed in 0u64..1000, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 12;
        let a = random_symmetric(n, &mut rng);
        let mut ca = a.clone();
        for v in ca.data.iter_mut() {
            *v *= c;
        }
        let o1 = HvpOracle::new(Quadratic::new(a).unwrap(), ParamVector::flat(vec![0.0; n])).unwrap();
        let o2 = HvpOracle::new(Quadratic::new(ca).unwrap(), ParamVector::flat(vec![0.0; n])).unwrap();
        let s1 = conditioning_summary(&lanczos_spectrum(&o1, 8, 2, seed).unwrap(), FLOOR_RATIO).unwrap();
        let s2 = conditioning_summary(&lanczos_spectrum(&o2, 8, 2, seed).unwrap(), FLOOR_RATIO).unwrap();
        prop_assert!((s2.lambda_max / s1.lambda_max - c).abs() <= 1e-9 * c);
        prop_assert!((s2.kappa - s1.kappa).abs() <= 1e-6 * s1.kappa);
    }
}

#[test]
fn more_probes_reduce_lambda_max_variance() {
    let d: Vec<f64> = (0..300).map(|i| 1.0 + (i as f64 / 299.0).powi(3) * 99.0).collect();
    let oracle = HvpOracle::new(Quadratic::diagonal(&d), ParamVector::flat(vec![0.0; 300])).unwrap();
    let var = |k: usize| {
        let xs: Vec<f64> = (0..40)
            .map(|s| lanczos_spectrum(&oracle, 4, k, s).unwrap().max_abs())
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let (v1, v8) = (var(1), var(8));
    assert!(v8 < v1, "var k=1 {v1}, k=8 {v8}");
}

#[test]
fn conditioning_examples() {
    let s = conditioning_summary(&estimate(&[1.0, 10.0], &[0.5, 0.5]), FLOOR_RATIO).unwrap();
    assert_eq!(s.kappa, 10.0);
    assert_eq!(s.lambda_max, 10.0);
    assert_eq!(s.lambda_min_abs, 1.0);
    assert_eq!(s.kurtosis, 1.0);
    assert_eq!(s.floor_ratio, FLOOR_RATIO);

    let s = conditioning_summary(&estimate(&[-2.0, 1.0], &[0.5, 0.5]), FLOOR_RATIO).unwrap();
    assert_eq!(s.kappa, 2.0);
    assert_eq!(s.lambda_max, 2.0);

    // values under the floor are ignored
    let s = conditioning_summary(&estimate(&[1e-12, 0.5, 4.0], &[0.2, 0.3, 0.5]), FLOOR_RATIO).unwrap();
    assert_eq!(s.kappa, 8.0);
    assert!(s.kappa >= 1.0 && s.lambda_max >= s.lambda_min_abs);

    assert!(conditioning_summary(&estimate(&[], &[]), FLOOR_RATIO).is_err());
}

#[test]
fn discretized_normal_has_kurtosis_three() {
    let xs: Vec<f64> = (0..=2000).map(|i| -8.0 + 16.0 * i as f64 / 2000.0).collect();
    let ws: Vec<f64> = xs.iter().map(|x| (-0.5 * x * x).exp()).collect();
    let k = weighted_kurtosis(&xs, &ws);
    assert!((k - 3.0).abs() < 0.1, "kurtosis {k}");
    assert!(weighted_kurtosis(&[2.0, 2.0], &[0.5, 0.5]).is_nan());
}

#[test]
fn dense_conditioning_uses_the_floor_rule() {
    let s = dense_conditioning(&[-3.0, 0.0, 1e-20, 0.5, 6.0], FLOOR_RATIO).unwrap();
    assert_eq!(s.lambda_max, 6.0);
    assert_eq!(s.lambda_min_abs, 0.5);
    assert_eq!(s.kappa, 12.0);
}

#[test]
fn plasticity_with_projection() {
    let arch = ArchitectureConfig {
        hidden_dim: 32,
        num_blocks: 3,
        ..Default::default()
    };
    let nets = build(&arch, 3, 1, 0).unwrap();
    let mut theta = nets.critic_params[0].clone();
    for v in theta.values.iter_mut() {
        *v *= 3.0;
    }
    project_in_place(&mut theta, ProjectionGranularity::Matrix).unwrap();
    let layers = theta.layout.projected().count();
    let rec = plasticity_probe(10, &theta, Some(&theta), 3e-4);
    assert!((rec.projected_norm - (layers as f64).sqrt()).abs() <= 1e-9);
    assert_eq!(rec.layer_norms.len(), layers);
    assert!(rec.param_norm >= rec.projected_norm);
    assert_eq!(rec.grad_norm, theta.norm());
    assert_eq!(rec.elr, 3e-4 / rec.projected_norm);
    // constant denominator: the ELR is η/√layers
    assert!((rec.elr - 3e-4 / (layers as f64).sqrt()).abs() <= 1e-15);
    let rec = plasticity_probe(10, &theta, None, 0.0);
    assert_eq!(rec.elr, 0.0);
    assert_eq!(rec.grad_norm, 0.0);
}

#[test]
fn iqm_examples() {
    let v: Vec<f64> = (0..12).map(|i| i as f64).collect();
    assert_eq!(iqm(&v), 5.5);
    let (m, lo, hi) = aggregate_iqm(&v, 500, 1).unwrap();
    assert_eq!(m, 5.5);
    assert!(lo <= m && m <= hi && lo < hi);

    assert_eq!(aggregate_iqm(&[2.5; 7], 1000, 3).unwrap(), (2.5, 2.5, 2.5));
    assert!(aggregate_iqm(&[1.0, 2.0], 10, 0).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let xs: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
    let (m, lo, hi) = aggregate_iqm(&xs, 2000, 4).unwrap();
    assert!(m.abs() < 0.1);
    assert!(lo <= m && m <= hi);
    assert_eq!(aggregate_iqm(&xs, 2000, 4).unwrap(), (m, lo, hi));
}

#[test]
fn stratified_bootstrap_resamples_within_strata() {
    // a stratum of constants stays constant in every resample
    let a = [1.0; 8];
    let b = [1.0; 8];
    assert_eq!(aggregate_iqm_stratified(&[&a, &b], 200, 0).unwrap(), (1.0, 1.0, 1.0));
    let c = [0.0, 10.0, 20.0, 30.0];
    let (m, lo, hi) = aggregate_iqm_stratified(&[&a, &c], 300, 0).unwrap();
    assert!(lo <= m && m <= hi);
}

#[test]
fn csv_layouts() {
    let est = estimate(&[0.5, 2.0], &[0.25, 0.75]);
    let s = spectrum_csv(&est);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "ritz_value,ritz_weight");
    assert_eq!(lines[1], "5.0000000000000000e-1,2.5000000000000000e-1");
    let c = conditioning_summary(&est, FLOOR_RATIO).unwrap();
    let t = conditioning_csv(&[(100, c)]);
    assert!(t.starts_with("step,kappa,lambda_max,lambda_min_abs,kurtosis\n100,4.0000000000000000e0,"));
}
