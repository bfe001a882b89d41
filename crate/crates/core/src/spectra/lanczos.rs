use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffcore::{dot, l2, HvpOracle, Objective};
use crate::error::{Result, XqcError};
use crate::sacloop::derive_seed;

/// Off-diagonal magnitude below which a Lanczos run stops early.
pub const BREAKDOWN: f64 = 1e-12;

const STREAM_LANCZOS: u64 = 11;

/// Pooled Ritz values of `k` Lanczos runs; each run's weights sum to one
/// and are divided by `k`, so the pooled weights sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumEstimate {
    pub ritz_values: Vec<f64>,
    pub ritz_weights: Vec<f64>,
    pub num_probes: usize,
    pub lanczos_steps: usize,
    pub seed: u64,
}

impl SpectrumEstimate {
    pub fn len(&self) -> usize {
        self.ritz_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ritz_values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.ritz_values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Ritz pairs of one tridiagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RitzRun {
    pub values: Vec<f64>,
    /// Squared first components of the eigenvectors.
    pub weights: Vec<f64>,
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `alpha` and
/// off-diagonal `beta` (`beta.len() == alpha.len() − 1`), together with the
/// first component of every normalized eigenvector. Implicit QL with
/// Wilkinson shifts.
pub fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = alpha.len();
    if n == 0 || beta.len() + 1 != n {
        return Err(XqcError::Precondition(format!(
            "tridiagonal sizes {} / {}",
            alpha.len(),
            beta.len()
        )));
    }
    let mut d = alpha.to_vec();
    let mut e = beta.to_vec();
    e.push(0.0);
    // only the first row of the accumulated rotations is needed
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(XqcError::NonFinite("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

/// One Lanczos run of at most `m` steps from `start`, with full
/// reorthogonalization (two Gram-Schmidt passes per step).
pub fn lanczos_run<O: Objective>(oracle: &HvpOracle<O>, start: &[f64], m: usize) -> Result<RitzRun> {
    let nrm = l2(start);
    if !(nrm > 0.0) {
        return Err(XqcError::Precondition("zero Lanczos start vector".into()));
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / nrm).collect()];
    let mut alpha = Vec::with_capacity(m);
    let mut beta: Vec<f64> = Vec::with_capacity(m);
    for j in 0..m {
        let mut w = oracle.apply(&basis[j])?;
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        for (x, v) in w.iter_mut().zip(&basis[j]) {
            *x -= a * v;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (x, v) in w.iter_mut().zip(&basis[j - 1]) {
                *x -= b * v;
            }
        }
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                for (x, y) in w.iter_mut().zip(v) {
                    *x -= c * y;
                }
            }
        }
        if j + 1 == m {
            break;
        }
        let b = l2(&w);
        if b < BREAKDOWN {
            break;
        }
        beta.push(b);
        basis.push(w.into_iter().map(|x| x / b).collect());
    }
    let (values, first) = tridiagonal_eigen(&alpha, &beta)?;
    let mut pairs: Vec<(f64, f64)> = values.into_iter().zip(first.into_iter().map(|f| f * f)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(RitzRun {
        values: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    })
}

/// Stochastic Lanczos quadrature: `k` independent runs of `m` steps from
/// Gaussian probes. Probes run concurrently; results are deterministic in
/// `seed`.
pub fn lanczos_spectrum<O: Objective>(
    oracle: &HvpOracle<O>,
    m: usize,
    k: usize,
    seed: u64,
) -> Result<SpectrumEstimate> {
    let dim = oracle.dim();
    if m < 2 || k < 1 || m > dim {
        return Err(XqcError::Precondition(format!(
            "lanczos needs 2 <= m <= dim and k >= 1 (m = {m}, k = {k}, dim = {dim})"
        )));
    }
    let runs = crate::par::map_indices(k, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_LANCZOS, i as u64));
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        lanczos_run(oracle, &v, m)
    });
    let mut pairs = Vec::new();
    for run in runs {
        let run = run?;
        pairs.extend(
            run.values
                .into_iter()
                .zip(run.weights.into_iter().map(|w| w / k as f64)),
        );
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SpectrumEstimate {
        ritz_values: pairs.iter().map(|p| p.0).collect(),
        ritz_weights: pairs.iter().map(|p| p.1).collect(),
        num_probes: k,
        lanczos_steps: m,
        seed,
    })
}
