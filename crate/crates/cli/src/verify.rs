//! Quick certificate suite behind `xqc verify`: analytic bounds, oracle
//! comparisons, and hand-computable cases. Every check is deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xqc_core::diffcore::{
    dot, value_and_grad, ChainBuilder, HvpOracle, LossTarget, Mat, Mode, NetLoss, Objective, ParamRole, ParamVector,
    Quadratic,
};
use xqc_core::distcrit::{mse_bellman_loss, project_target, softmax, CategoricalSupport};
use xqc_core::sacloop::discount_heuristic;
use xqc_core::spectra::{aggregate_iqm, lanczos_spectrum};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn random_distribution(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>().powi(3)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn ce_gradient_bound() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let scale = 10f64.powf(rng.random_range(-1.0..2.0));
        let logits: Vec<f64> = (0..101).map(|_| rng.random_range(-scale..scale)).collect();
        let t = random_distribution(&mut rng, 101);
        let p = softmax(&logits).expect("finite logits");
        let g: f64 = p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(g);
    }
    check(
        "ce_gradient_bound",
        worst <= std::f64::consts::SQRT_2 + 1e-9,
        format!("max ||softmax - t|| = {worst:.6} over 10^4 pairs"),
    )
}

fn mse_gradient_growth() -> Check {
    let ok = [1.0, 10.0, 100.0]
        .iter()
        .all(|&c| mse_bellman_loss(0.0, c).1.abs() == c);
    check(
        "mse_gradient_growth",
        ok,
        "|grad| = |error| for errors 1, 10, 100".into(),
    )
}

fn c51_projection() -> Check {
    let s = CategoricalSupport::new(11, -5.0, 5.0).expect("valid support");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut err, mut mass) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let r = rng.random_range(-3.0..3.0);
        let g = rng.random_range(0.0..1.0);
        let p = random_distribution(&mut rng, 11);
        let vals: Vec<f64> = s.atoms().iter().map(|z| r + g * z).collect();
        let out = project_target(&vals, &p, &s).expect("matching lengths");
        let mut brute = [0.0; 11];
        for (v, w) in vals.iter().zip(&p) {
            let c = v.clamp(-5.0, 5.0);
            for (i, z) in s.atoms().iter().enumerate() {
                brute[i] += w * (1.0 - (c - z).abs() / s.delta_z()).max(0.0);
            }
        }
        for (a, b) in out.probs.iter().zip(&brute) {
            err = err.max((a - b).abs());
        }
        mass = mass.max((out.probs.iter().sum::<f64>() - 1.0).abs());
    }
    check(
        "c51_projection",
        err <= 1e-12 && mass <= 1e-12,
        format!("max elementwise error {err:.1e}, mass error {mass:.1e}"),
    )
}

fn discount_cases() -> Check {
    let got = [
        discount_heuristic(1000, 2).ok(),
        discount_heuristic(20, 1).ok(),
        discount_heuristic(10_000, 1).ok(),
    ];
    check(
        "discount_heuristic",
        got == [Some(0.99), Some(0.95), Some(0.995)],
        format!("{got:?}"),
    )
}

fn iqm_cases() -> Check {
    let v: Vec<f64> = (0..12).map(f64::from).collect();
    let a = aggregate_iqm(&v, 100, 0).ok().map(|t| t.0);
    let c = aggregate_iqm(&[3.0; 5], 100, 0).ok();
    check(
        "iqm",
        a == Some(5.5) && c == Some((3.0, 3.0, 3.0)),
        format!("iqm(0..12) = {a:?}, constant = {c:?}"),
    )
}

fn lanczos_diagonal() -> Check {
    let d: Vec<f64> = (1..=10).map(f64::from).collect();
    let oracle = HvpOracle::new(Quadratic::diagonal(&d), ParamVector::flat(vec![0.0; 10])).expect("layout");
    let err = match lanczos_spectrum(&oracle, 10, 1, 0) {
        Ok(est) => est
            .ritz_values
            .iter()
            .zip(&d)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max),
        Err(_) => f64::INFINITY,
    };
    check("lanczos_diagonal", err <= 1e-8, format!("max Ritz error {err:.1e}"))
}

fn small_critic(rng: &mut ChaCha8Rng) -> (NetLoss, ParamVector) {
    let mut b = ChainBuilder::new(4, 0.1);
    b.linear("h0", 8, true)
        .batch_norm("h0_bn")
        .relu()
        .linear("head", 11, false);
    let inputs = Mat::from_vec(12, 4, (0..48).map(|_| rng.random_range(-1.0..1.0)).collect());
    let mut t = Mat::zeros(6, 11);
    for r in 0..6 {
        t.row_mut(r).copy_from_slice(&random_distribution(rng, 11));
    }
    let obj = NetLoss::new(b.build(), inputs, LossTarget::Categorical(t), Mode::Train).expect("shapes");
    let mut theta = ParamVector::zeros(obj.layout().clone());
    for e in obj.layout().entries().to_vec() {
        let base = if e.role == ParamRole::Scale { 1.0 } else { 0.0 };
        for v in theta.slice_mut(&e) {
            *v = base + rng.random_range(-0.8..0.8);
        }
    }
    (obj, theta)
}

fn gradient_and_hvp() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (obj, theta) = small_critic(&mut rng);
    let (_, g) = value_and_grad(&obj, &theta).expect("finite loss");
    let h = 1e-5;
    let mut fd = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        let mut tp = theta.clone();
        tp.values[i] += h;
        let mut tm = theta.clone();
        tm.values[i] -= h;
        fd[i] =
            (value_and_grad(&obj, &tp).expect("finite").0 - value_and_grad(&obj, &tm).expect("finite").0) / (2.0 * h);
    }
    let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let gerr = g
        .values
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / scale;

    let oracle = HvpOracle::new(obj, theta).expect("layout");
    let u: Vec<f64> = (0..oracle.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..oracle.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (hu, hv) = (oracle.apply(&u).expect("finite"), oracle.apply(&v).expect("finite"));
    let (a, b) = (dot(&u, &hv), dot(&v, &hu));
    let sym = (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    vec![
        check("gradient_fd", gerr <= 1e-6, format!("relative error {gerr:.1e}")),
        check("hvp_symmetry", sym <= 1e-8, format!("|u'Hv - v'Hu| relative {sym:.1e}")),
    ]
}

pub fn run_checks() -> Vec<Check> {
    let mut out = vec![
        ce_gradient_bound(),
        mse_gradient_growth(),
        c51_projection(),
        discount_cases(),
        iqm_cases(),
        lanczos_diagonal(),
    ];
    out.extend(gradient_and_hvp());
    out
}
