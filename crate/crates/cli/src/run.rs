use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use xqc_core::diffcore::HvpOracle;
use xqc_core::netlib::ArchitectureConfig;
use xqc_core::par;
use xqc_core::sacloop::{derive_seed, fmt_num, train, DiagRecord};
use xqc_core::spectra::{
    aggregate_iqm_stratified, conditioning_summary, lanczos_spectrum, write_conditioning, write_spectrum,
    ConditioningSummary,
};

use crate::plan::ExperimentPlan;
use crate::svg::{self, Kind, Panel, Series};

const STREAM_SPECTRUM: u64 = 21;
const STREAM_BOOTSTRAP: u64 = 22;

/// What one (cell, seed) run leaves behind besides its files.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub cell: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub final_return: f64,
    pub normalized_return: f64,
    /// `(step, normalized eval return)`.
    pub eval_curve: Vec<(usize, f64)>,
    pub conditioning: Vec<(usize, ConditioningSummary)>,
    pub diag: Vec<DiagRecord>,
}

pub fn run_dir(root: &Path, cell: &ArchitectureConfig, seed: u64) -> PathBuf {
    root.join(cell.cell_label()).join(format!("seed{seed}"))
}

/// Train one cell for one seed, analyze the critic Hessian at every probe
/// step, and write the run directory.
pub fn run_one(
    plan: &ExperimentPlan,
    cell: &ArchitectureConfig,
    seed: u64,
    dir: &Path,
    spectra: bool,
) -> Result<RunSummary> {
    let probes = if spectra { plan.probes() } else { Vec::new() };
    let run = train(plan.task, cell, &plan.trainer, plan.total_steps, seed, &probes)?;
    std::fs::create_dir_all(dir)?;
    run.write_dir(dir)?;
    let mut conditioning = Vec::with_capacity(run.snapshots.len());
    for snap in &run.snapshots {
        let oracle = HvpOracle::new(snap.objective.clone(), snap.theta.clone())?;
        let m = plan.lanczos_steps.min(oracle.dim());
        let est = lanczos_spectrum(
            &oracle,
            m,
            plan.lanczos_probes,
            derive_seed(seed, STREAM_SPECTRUM, snap.step as u64),
        )?;
        write_spectrum(dir, snap.step, &est)?;
        conditioning.push((snap.step, conditioning_summary(&est, plan.floor_ratio)?));
    }
    if spectra {
        write_conditioning(dir, &conditioning)?;
    }
    let task = plan.task;
    Ok(RunSummary {
        cell: cell.cell_label(),
        seed,
        dir: dir.to_path_buf(),
        final_return: run.final_return,
        normalized_return: task.normalize(run.final_return),
        eval_curve: run.evals.iter().map(|&(s, r)| (s, task.normalize(r))).collect(),
        conditioning,
        diag: run.diag,
    })
}

/// IQM and 90 % interval over stratified samples; non-finite values are
/// dropped. Fewer than three values give their mean and range.
pub fn summarize(strata: &[Vec<f64>], bootstrap: usize, seed: u64) -> (f64, f64, f64) {
    let clean: Vec<Vec<f64>> = strata
        .iter()
        .map(|s| s.iter().copied().filter(|v| v.is_finite()).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect();
    let all: Vec<f64> = clean.iter().flatten().copied().collect();
    match all.len() {
        0 => (f64::NAN, f64::NAN, f64::NAN),
        1 | 2 => {
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, lo, hi)
        }
        _ => {
            let refs: Vec<&[f64]> = clean.iter().map(|s| s.as_slice()).collect();
            aggregate_iqm_stratified(&refs, bootstrap, seed).expect("three or more finite values")
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub cell: String,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub kappa: (f64, f64, f64),
    pub lambda_max: (f64, f64, f64),
    pub kurtosis: (f64, f64, f64),
    pub ret: (f64, f64, f64),
}

#[derive(Clone, Debug)]
pub struct MatrixReport {
    pub rows: Vec<SummaryRow>,
    pub runs: Vec<RunSummary>,
    /// `(cell, seed, error)`.
    pub failures: Vec<(String, u64, String)>,
    pub summary_path: PathBuf,
}

/// One stratum per probe step, holding that step's values across seeds.
fn by_step(runs: &[&RunSummary], f: impl Fn(&ConditioningSummary) -> f64) -> Vec<Vec<f64>> {
    let mut steps: Vec<usize> = runs.iter().flat_map(|r| r.conditioning.iter().map(|c| c.0)).collect();
    steps.sort_unstable();
    steps.dedup();
    steps
        .iter()
        .map(|&s| {
            runs.iter()
                .filter_map(|r| r.conditioning.iter().find(|c| c.0 == s).map(|c| f(&c.1)))
                .collect()
        })
        .collect()
}

fn triple(t: (f64, f64, f64)) -> String {
    format!("{},{},{}", fmt_num(t.0), fmt_num(t.1), fmt_num(t.2))
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(
        "cell,runs_ok,runs_failed,iqm_kappa,kappa_ci_low,kappa_ci_high,iqm_lambda_max,lambda_max_ci_low,lambda_max_ci_high,iqm_kurtosis,kurtosis_ci_low,kurtosis_ci_high,iqm_return,return_ci_low,return_ci_high\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.cell,
            r.runs_ok,
            r.runs_failed,
            triple(r.kappa),
            triple(r.lambda_max),
            triple(r.kurtosis),
            triple(r.ret)
        );
    }
    s
}

/// κ against normalized return, one point per cell.
pub fn kappa_scatter(rows: &[SummaryRow]) -> String {
    let mut p = Panel::new(
        "condition number vs return",
        "IQM normalized return",
        "IQM kappa",
        Kind::Scatter,
    )
    .log_y();
    for r in rows.iter().filter(|r| r.kappa.0.is_finite() && r.ret.0.is_finite()) {
        p = p.with(Series::new(r.cell.clone(), vec![(r.ret.0, r.kappa.0)]));
    }
    svg::render(&[p], 1)
}

/// Run every (cell, seed) pair, then aggregate per cell. Failed runs are
/// recorded and the rest of the matrix still completes.
pub fn run_matrix(plan: &ExperimentPlan) -> Result<MatrixReport> {
    plan.validate()?;
    let root = plan.out_dir.join(plan.task.name());
    std::fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
    std::fs::write(plan.out_dir.join("plan.txt"), plan.to_text())?;
    let jobs: Vec<(usize, u64)> = (0..plan.cells.len())
        .flat_map(|c| plan.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results = par::with_pool(|| {
        par::map_indices(jobs.len(), |j| {
            let (c, seed) = jobs[j];
            let cell = &plan.cells[c];
            log::info!("run {} seed {seed}", cell.cell_label());
            run_one(plan, cell, seed, &run_dir(&root, cell, seed), true).map_err(|e| format!("{e:#}"))
        })
    });
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for ((c, seed), r) in jobs.iter().zip(results) {
        match r {
            Ok(s) => runs.push(s),
            Err(e) => {
                log::warn!("{} seed {seed} failed: {e}", plan.cells[*c].cell_label());
                failures.push((plan.cells[*c].cell_label(), *seed, e));
            }
        }
    }
    let mut rows = Vec::with_capacity(plan.cells.len());
    for (ci, cell) in plan.cells.iter().enumerate() {
        let label = cell.cell_label();
        let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.cell == label).collect();
        let bs = derive_seed(ci as u64, STREAM_BOOTSTRAP, 0);
        rows.push(SummaryRow {
            runs_ok: mine.len(),
            runs_failed: failures.iter().filter(|f| f.0 == label).count(),
            kappa: summarize(&by_step(&mine, |c| c.kappa), plan.bootstrap, bs),
            lambda_max: summarize(&by_step(&mine, |c| c.lambda_max), plan.bootstrap, bs + 1),
            kurtosis: summarize(&by_step(&mine, |c| c.kurtosis), plan.bootstrap, bs + 2),
            ret: summarize(
                &[mine.iter().map(|r| r.normalized_return).collect()],
                plan.bootstrap,
                bs + 3,
            ),
            cell: label,
        });
    }
    let summary_path = plan.out_dir.join("matrix_summary.csv");
    std::fs::write(&summary_path, summary_csv(&rows))?;
    std::fs::write(plan.out_dir.join("kappa_vs_return.svg"), kappa_scatter(&rows))?;
    if !failures.is_empty() {
        let mut s = String::from("cell,seed,error\n");
        for (c, seed, e) in &failures {
            let _ = writeln!(s, "{c},{seed},\"{}\"", e.replace('"', "'"));
        }
        std::fs::write(plan.out_dir.join("failures.csv"), s)?;
    }
    Ok(MatrixReport {
        rows,
        runs,
        failures,
        summary_path,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalingAxis {
    Utd,
    Width,
    Depth,
}

impl std::str::FromStr for ScalingAxis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "utd" => ScalingAxis::Utd,
            "width" => ScalingAxis::Width,
            "depth" => ScalingAxis::Depth,
            _ => bail!("unknown scaling axis `{s}` (utd, width, depth)"),
        })
    }
}

impl ScalingAxis {
    pub fn name(self) -> &'static str {
        match self {
            ScalingAxis::Utd => "utd",
            ScalingAxis::Width => "width",
            ScalingAxis::Depth => "depth",
        }
    }
}

/// Area under a normalized return curve, scaled by the step span so that a
/// constant curve `c` has area `c`. A single point is its own area.
pub fn auc(curve: &[(usize, f64)]) -> f64 {
    match curve {
        [] => f64::NAN,
        [(_, v)] => *v,
        _ => {
            let span = (curve[curve.len() - 1].0 - curve[0].0) as f64;
            if span == 0.0 {
                return curve.iter().map(|c| c.1).sum::<f64>() / curve.len() as f64;
            }
            let area: f64 = curve
                .windows(2)
                .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0) as f64)
                .sum();
            area / span
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub value: usize,
    pub runs_ok: usize,
    pub auc: (f64, f64, f64),
}

/// Train the plan's first cell at every value of `axis` and report the IQM
/// AUC of normalized evaluation curves.
pub fn run_scaling(plan: &ExperimentPlan, axis: ScalingAxis, values: &[usize]) -> Result<Vec<ScalingRow>> {
    plan.validate()?;
    if values.is_empty() || values.windows(2).any(|w| w[0] > w[1]) {
        bail!("scaling values must be non-empty and sorted");
    }
    let root = plan.out_dir.join(format!("scaling_{}", axis.name()));
    std::fs::create_dir_all(&root)?;
    let jobs: Vec<(usize, u64)> = values
        .iter()
        .flat_map(|&v| plan.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results = par::with_pool(|| {
        par::map_indices(jobs.len(), |j| {
            let (v, seed) = jobs[j];
            let mut p = plan.clone();
            let mut cell = plan.cells[0].clone();
            match axis {
                ScalingAxis::Utd => p.trainer.utd = v,
                ScalingAxis::Width => cell.hidden_dim = v,
                ScalingAxis::Depth => cell.num_blocks = v,
            }
            let dir = root.join(v.to_string()).join(format!("seed{seed}"));
            run_one(&p, &cell, seed, &dir, false).map_err(|e| format!("{e:#}"))
        })
    });
    let mut rows = Vec::new();
    let mut s = String::from("value,runs_ok,iqm_auc,auc_ci_low,auc_ci_high\n");
    for (i, &v) in values.iter().enumerate() {
        let aucs: Vec<f64> = jobs
            .iter()
            .zip(&results)
            .filter(|(j, _)| j.0 == v)
            .filter_map(|(_, r)| r.as_ref().ok())
            .map(|r| {
                let mut curve = r.eval_curve.clone();
                if curve.last().map(|c| c.0) != Some(plan.total_steps) {
                    curve.push((plan.total_steps, r.normalized_return));
                }
                auc(&curve)
            })
            .collect();
        for ((val, seed), r) in jobs.iter().zip(&results) {
            if *val == v {
                if let Err(e) = r {
                    log::warn!("{}={v} seed {seed} failed: {e}", axis.name());
                }
            }
        }
        let row = ScalingRow {
            value: v,
            runs_ok: aucs.len(),
            auc: summarize(&[aucs], plan.bootstrap, derive_seed(i as u64, STREAM_BOOTSTRAP, 1)),
        };
        let _ = writeln!(s, "{},{},{}", v, row.runs_ok, triple(row.auc));
        rows.push(row);
    }
    std::fs::write(plan.out_dir.join(format!("scaling_{}.csv", axis.name())), s)?;
    let p = Panel::new(
        &format!("scaling over {}", axis.name()),
        axis.name(),
        "IQM AUC",
        Kind::Line,
    )
    .with(Series::new(
        "",
        rows.iter().map(|r| (r.value as f64, r.auc.0)).collect(),
    ));
    std::fs::write(
        plan.out_dir.join(format!("scaling_{}.svg", axis.name())),
        svg::render(&[p], 1),
    )?;
    Ok(rows)
}
