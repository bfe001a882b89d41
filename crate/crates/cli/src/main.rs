use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use xqc_cli::{render_reports, run_checks, run_matrix, run_one, run_scaling, ExperimentPlan, ScalingAxis};
use xqc_core::envs::Task;

#[derive(Parser)]
#[command(
    name = "xqc",
    version,
    about = "Train and diagnose distributional actor-critic agents"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one architecture for one seed and analyze its critic Hessian.
    Train {
        #[arg(long, default_value = "pendulum")]
        task: Task,
        /// Cell label, e.g. `bn,wn,ce` or `ln+wn+mse`.
        #[arg(long, default_value = "bn,wn,ce")]
        arch: String,
        #[arg(long, default_value_t = 30_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Comma-separated probe steps (default: the final step).
        #[arg(long)]
        probes: Option<String>,
        /// Plan file supplying sizes and hyperparameters.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Run every (cell, seed) pair of a plan and summarize per cell.
    Matrix {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Sweep UTD, width, or depth for the plan's first cell.
    Scaling {
        #[arg(long)]
        axis: ScalingAxis,
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Render SVG plots for every run directory below `dir`.
    Report { dir: PathBuf },
    /// Run the certificate suite.
    Verify,
}

fn load(plan: Option<&PathBuf>) -> Result<ExperimentPlan> {
    match plan {
        Some(p) => ExperimentPlan::read(p),
        None => Ok(ExperimentPlan::default()),
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Train {
            task,
            arch,
            steps,
            seed,
            out,
            probes,
            plan,
        } => {
            let mut p = load(plan.as_ref())?;
            p.task = task;
            p.total_steps = steps;
            p.seeds = vec![seed];
            p.cells = xqc_cli::expand_cells(&arch.replace(',', "+"), &p.cells[0])?;
            if let Some(pr) = probes {
                p.probe_schedule = pr
                    .split(',')
                    .map(|s| s.trim().parse().context("bad probe step"))
                    .collect::<Result<_>>()?;
            }
            p.out_dir = out;
            p.validate()?;
            let cell = &p.cells[0];
            let dir = xqc_cli::run::run_dir(&p.out_dir.join(task.name()), cell, seed);
            let r = xqc_core::par::with_pool(|| run_one(&p, cell, seed, &dir, true))?;
            println!(
                "{} {} seed {seed}: final return {:.3} (normalized {:.3}) -> {}",
                task,
                r.cell,
                r.final_return,
                r.normalized_return,
                dir.display()
            );
            for (step, c) in &r.conditioning {
                println!(
                    "  step {step}: kappa {:.4e} lambda_max {:.4e} kurtosis {:.3}",
                    c.kappa, c.lambda_max, c.kurtosis
                );
            }
            Ok(true)
        }
        Cmd::Matrix { plan } => {
            let p = ExperimentPlan::read(&plan)?;
            let rep = run_matrix(&p)?;
            for r in &rep.rows {
                println!(
                    "{:<14} runs {}/{}  kappa {:.3e}  lambda_max {:.3e}  return {:.3} [{:.3}, {:.3}]",
                    r.cell,
                    r.runs_ok,
                    r.runs_ok + r.runs_failed,
                    r.kappa.0,
                    r.lambda_max.0,
                    r.ret.0,
                    r.ret.1,
                    r.ret.2
                );
            }
            println!("summary: {}", rep.summary_path.display());
            Ok(rep.failures.is_empty())
        }
        Cmd::Scaling { axis, values, plan } => {
            let p = load(plan.as_ref())?;
            let rows = run_scaling(&p, axis, &values)?;
            for r in &rows {
                println!(
                    "{}={:<6} runs {}  AUC {:.3} [{:.3}, {:.3}]",
                    axis.name(),
                    r.value,
                    r.runs_ok,
                    r.auc.0,
                    r.auc.1,
                    r.auc.2
                );
            }
            Ok(rows.iter().all(|r| r.runs_ok == p.seeds.len()))
        }
        Cmd::Report { dir } => {
            let set = render_reports(&dir)?;
            for f in &set.written {
                println!("wrote {}", f.display());
            }
            for w in &set.warnings {
                eprintln!("warning: {w}");
            }
            Ok(true)
        }
        Cmd::Verify => {
            let checks = run_checks();
            for c in &checks {
                println!("{} {:<20} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
