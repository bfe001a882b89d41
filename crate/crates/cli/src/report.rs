use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::svg::{self, Kind, Panel, Series};

/// Files written by [`render_reports`] and the plots it had to skip.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportSet {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Header and rows of a comma-separated file.
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = match lines.next() {
            Some(h) => h.split(',').map(|s| s.trim().to_string()).collect(),
            None => bail!("{} is empty", path.display()),
        };
        let rows = lines
            .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
            .collect();
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("missing column `{name}`"))?;
        self.rows
            .iter()
            .map(|r| {
                r.get(i)
                    .and_then(|v| v.parse::<f64>().ok())
                    .with_context(|| format!("bad value in column `{name}`"))
            })
            .collect()
    }

    pub fn text_column(&self, name: &str) -> Result<Vec<String>> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("missing column `{name}`"))?;
        Ok(self
            .rows
            .iter()
            .map(|r| r.get(i).cloned().unwrap_or_default())
            .collect())
    }
}

fn xy(csv: &Csv, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    Ok(csv.column(x)?.into_iter().zip(csv.column(y)?).collect())
}

fn returns_plot(dir: &Path) -> Result<String> {
    let tr = Csv::read(&dir.join("returns.csv"))?;
    let mut p = Panel::new("episode return", "step", "return", Kind::Line)
        .with(Series::new("train", xy(&tr, "step", "episode_return")?));
    if let Ok(ev) = Csv::read(&dir.join("eval.csv")) {
        p = p.with(Series::new("eval", xy(&ev, "step", "eval_return")?));
    }
    Ok(svg::render(&[p], 1))
}

fn plasticity_plot(dir: &Path) -> Result<String> {
    let d = Csv::read(&dir.join("diag.csv"))?;
    let panels = [
        Panel::new("parameter norm", "step", "||theta||", Kind::Line)
            .with(Series::new("", xy(&d, "step", "param_norm")?)),
        Panel::new("gradient norm", "step", "||grad||", Kind::Line).with(Series::new("", xy(&d, "step", "grad_norm")?)),
        Panel::new("effective learning rate", "step", "lr / ||theta||", Kind::Line)
            .with(Series::new("", xy(&d, "step", "elr")?)),
    ];
    Ok(svg::render(&panels, 3))
}

fn spectrum_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(step) = name
            .strip_prefix("spectrum_")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            out.push((step, p));
        }
    }
    out.sort();
    Ok(out)
}

/// One strip of `|λ|` ticks per checkpoint, positive and negative Ritz
/// values in separate colors, opacity by quadrature weight.
fn spectra_plot(files: &[(usize, PathBuf)]) -> Result<String> {
    let mut pos = Series::new("lambda > 0", Vec::new());
    let mut neg = Series::new("lambda < 0", Vec::new());
    let (mut wp, mut wn) = (Vec::new(), Vec::new());
    for (step, path) in files {
        let c = Csv::read(path)?;
        let vals = c.column("ritz_value")?;
        let ws = c.column("ritz_weight")?;
        let wmax = ws.iter().copied().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
        for (v, w) in vals.into_iter().zip(ws) {
            if v == 0.0 {
                continue;
            }
            let (s, wv) = if v > 0.0 {
                (&mut pos, &mut wp)
            } else {
                (&mut neg, &mut wn)
            };
            s.points.push((*step as f64, v.abs()));
            wv.push(w / wmax);
        }
    }
    pos.weights = Some(wp);
    neg.weights = Some(wn);
    let p = Panel::new("Hessian spectrum per checkpoint", "step", "|ritz value|", Kind::Strip)
        .log_y()
        .with(pos)
        .with(neg);
    Ok(svg::render(&[p], 1))
}

fn matrix_plot(path: &Path) -> Result<String> {
    let c = Csv::read(path)?;
    let cells = c.text_column("cell")?;
    let k = c.column("iqm_kappa")?;
    let r = c.column("iqm_return")?;
    let mut p = Panel::new(
        "condition number vs return",
        "IQM normalized return",
        "IQM kappa",
        Kind::Scatter,
    )
    .log_y();
    for ((cell, k), r) in cells.into_iter().zip(k).zip(r) {
        if k.is_finite() && r.is_finite() {
            p = p.with(Series::new(cell, vec![(r, k)]));
        }
    }
    Ok(svg::render(&[p], 1))
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn emit(set: &mut ReportSet, path: PathBuf, body: Result<String>, what: &str) {
    match body.and_then(|b| std::fs::write(&path, b).map_err(Into::into)) {
        Ok(()) => set.written.push(path),
        Err(e) => {
            let w = format!(
                "skipping {what} in {}: {e:#}",
                path.parent().unwrap_or(Path::new("")).display()
            );
            log::warn!("{w}");
            set.warnings.push(w);
        }
    }
}

fn visit(dir: &Path, set: &mut ReportSet) -> Result<()> {
    let is_run = dir.join("returns.csv").exists() || dir.join("diag.csv").exists();
    if is_run {
        emit(set, dir.join("returns.svg"), returns_plot(dir), "return plot");
        emit(set, dir.join("plasticity.svg"), plasticity_plot(dir), "plasticity plot");
        let spectra = spectrum_files(dir)?;
        if spectra.is_empty() {
            let w = format!("no spectrum files in {}", dir.display());
            log::warn!("{w}");
            set.warnings.push(w);
        } else {
            emit(set, dir.join("spectra.svg"), spectra_plot(&spectra), "spectrum plot");
        }
    }
    let summary = dir.join("matrix_summary.csv");
    if summary.exists() {
        emit(
            set,
            dir.join("kappa_vs_return.svg"),
            matrix_plot(&summary),
            "matrix scatter",
        );
    }
    for sub in subdirs(dir)? {
        visit(&sub, set)?;
    }
    Ok(())
}

/// Render every plot that the run artifacts under `dir` allow. Output
/// bytes depend only on the CSV contents.
pub fn render_reports(dir: &Path) -> Result<ReportSet> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut set = ReportSet::default();
    visit(dir, &mut set)?;
    if set.written.is_empty() && set.warnings.is_empty() {
        let w = format!("no run artifacts under {}", dir.display());
        log::warn!("{w}");
        set.warnings.push(w);
    }
    Ok(set)
}
