use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use xqc_core::envs::Task;
use xqc_core::netlib::ArchitectureConfig;
use xqc_core::sacloop::TrainerConfig;
use xqc_core::spectra::{DEFAULT_PROBES, DEFAULT_STEPS, FLOOR_RATIO};

/// Network and trainer sizes that fit a laptop CPU.
pub fn desk_profile() -> (ArchitectureConfig, TrainerConfig) {
    let arch = ArchitectureConfig {
        hidden_dim: 64,
        num_blocks: 2,
        actor_hidden_dim: 64,
        actor_blocks: 2,
        ..Default::default()
    };
    let cfg = TrainerConfig {
        batch: 128,
        utd: 1,
        ..Default::default()
    };
    (arch, cfg)
}

/// One experiment: every cell is trained once per seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub task: Task,
    pub cells: Vec<ArchitectureConfig>,
    pub seeds: Vec<u64>,
    pub total_steps: usize,
    /// Steps at which the critic Hessian is analyzed; empty means the last step.
    pub probe_schedule: Vec<usize>,
    pub out_dir: PathBuf,
    pub trainer: TrainerConfig,
    pub lanczos_steps: usize,
    pub lanczos_probes: usize,
    pub floor_ratio: f64,
    pub bootstrap: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        let (arch, trainer) = desk_profile();
        Self {
            task: Task::Pendulum,
            cells: vec![arch],
            seeds: (0..5).collect(),
            total_steps: 30_000,
            probe_schedule: Vec::new(),
            out_dir: PathBuf::from("runs"),
            trainer,
            lanczos_steps: DEFAULT_STEPS,
            lanczos_probes: DEFAULT_PROBES,
            floor_ratio: FLOOR_RATIO,
            bootstrap: 2000,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let v = v.trim();
    if let Some((a, b)) = v.split_once("..") {
        // half-open integer range
        let a: i64 = a.trim().parse().with_context(|| format!("bad range in `{key}`"))?;
        let b: i64 = b.trim().parse().with_context(|| format!("bad range in `{key}`"))?;
        return (a..b)
            .map(|x| {
                x.to_string()
                    .parse()
                    .map_err(|_| anyhow::anyhow!("bad `{key}` entry {x}"))
            })
            .collect();
    }
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| anyhow::anyhow!("bad `{key}` entry `{t}`")))
        .collect()
}

impl ExperimentPlan {
    /// Parse `key = value` lines; `#` starts a comment. Architecture and
    /// trainer keys set the base configuration shared by every cell.
    pub fn parse(text: &str) -> Result<Self> {
        let mut plan = ExperimentPlan::default();
        let mut base = plan.cells[0].clone();
        let mut cells_spec: Option<String> = None;
        let mut probes_spec: Option<String> = None;
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", n + 1))?;
            pairs.push((n + 1, k.trim().to_string(), v.trim().to_string()));
        }
        // a profile resets sizes, so it goes first
        if let Some((_, _, v)) = pairs.iter().find(|p| p.1 == "profile") {
            match v.as_str() {
                "desk" => {}
                "paper" => {
                    base = ArchitectureConfig::default();
                    plan.trainer = TrainerConfig::default();
                }
                other => bail!("unknown profile `{other}`"),
            }
        }
        for (n, k, v) in pairs {
            let ctx = || format!("line {n}: `{k}`");
            match k.as_str() {
                "profile" => {}
                "task" => plan.task = v.parse().with_context(ctx)?,
                "cells" => cells_spec = Some(v),
                "seeds" => plan.seeds = parse_list(&k, &v)?,
                "steps" | "total_steps" => plan.total_steps = v.parse().with_context(ctx)?,
                "probes" => probes_spec = Some(v),
                "out" => plan.out_dir = PathBuf::from(v),
                "lanczos_steps" => plan.lanczos_steps = v.parse().with_context(ctx)?,
                "lanczos_probes" => plan.lanczos_probes = v.parse().with_context(ctx)?,
                "floor_ratio" => plan.floor_ratio = v.parse().with_context(ctx)?,
                "bootstrap" => plan.bootstrap = v.parse().with_context(ctx)?,
                _ => {
                    if k != "arch" && base.set(&k, &v).with_context(ctx)? {
                        continue;
                    }
                    if plan.trainer.set(&k, &v).with_context(ctx)? {
                        continue;
                    }
                    bail!("line {n}: unknown key `{k}`");
                }
            }
        }
        plan.cells = expand_cells(cells_spec.as_deref().unwrap_or("bn+wn+ce"), &base)?;
        if let Some(p) = probes_spec {
            plan.probe_schedule = match p.strip_prefix("every") {
                Some(every) => {
                    let every: usize = every.trim().parse().context("bad `probes = every N`")?;
                    if every == 0 {
                        bail!("`probes = every 0`");
                    }
                    (1..=plan.total_steps / every).map(|i| i * every).collect()
                }
                None => parse_list("probes", &p)?,
            };
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() || self.seeds.is_empty() {
            bail!("plan needs at least one cell and one seed");
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            bail!("seeds must be distinct");
        }
        if let Some(p) = self.probe_schedule.iter().find(|&&p| p > self.total_steps) {
            bail!("probe step {p} exceeds total steps {}", self.total_steps);
        }
        if self.lanczos_steps < 2 || self.lanczos_probes < 1 {
            bail!("lanczos_steps >= 2 and lanczos_probes >= 1 required");
        }
        for c in &self.cells {
            c.validate()?;
        }
        self.trainer.validate()?;
        Ok(())
    }

    /// Steps at which spectra are taken.
    pub fn probes(&self) -> Vec<usize> {
        if self.probe_schedule.is_empty() {
            vec![self.total_steps]
        } else {
            let mut p = self.probe_schedule.clone();
            p.sort_unstable();
            p.dedup();
            p
        }
    }

    /// Canonical text form; parsing it gives back the same plan.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "task = {}", self.task);
        let labels: Vec<String> = self.cells.iter().map(|c| c.cell_label()).collect();
        let _ = writeln!(s, "cells = {}", labels.join(" "));
        let seeds: Vec<String> = self.seeds.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "seeds = {}", seeds.join(","));
        let _ = writeln!(s, "steps = {}", self.total_steps);
        let probes: Vec<String> = self.probe_schedule.iter().map(|x| x.to_string()).collect();
        if !probes.is_empty() {
            let _ = writeln!(s, "probes = {}", probes.join(","));
        }
        let _ = writeln!(s, "out = {}", self.out_dir.display());
        let _ = writeln!(s, "lanczos_steps = {}", self.lanczos_steps);
        let _ = writeln!(s, "lanczos_probes = {}", self.lanczos_probes);
        let _ = writeln!(s, "floor_ratio = {:?}", self.floor_ratio);
        let _ = writeln!(s, "bootstrap = {}", self.bootstrap);
        for (k, v) in self.cells[0].to_kv().into_iter().chain(self.trainer.to_kv()) {
            if k != "arch" {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }
}

/// `matrix` for all twelve cells, `ablation` for the full method and its
/// three single-component ablations, otherwise whitespace- or
/// `;`-separated cell labels such as `bn+wn+ce`.
pub fn expand_cells(spec: &str, base: &ArchitectureConfig) -> Result<Vec<ArchitectureConfig>> {
    let spec = spec.trim();
    let labels: Vec<&str> = match spec {
        "matrix" => return Ok(base.matrix()),
        "ablation" => vec!["bn+wn+ce", "ln+wn+ce", "bn+wn+mse", "bn+nown+ce"],
        _ => spec
            .split(|c: char| c == ';' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect(),
    };
    let mut out = Vec::with_capacity(labels.len());
    for l in labels {
        out.push(base.clone().with_cell(l)?);
    }
    Ok(out)
}
