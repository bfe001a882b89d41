//! Experiment orchestration on top of `xqc-core`: plan files, the
//! architecture matrix and scaling sweeps, report rendering, and the
//! certificate suite.

pub mod plan;
pub mod report;
pub mod run;
pub mod svg;
pub mod verify;

pub use plan::{desk_profile, expand_cells, ExperimentPlan};
pub use report::{render_reports, Csv, ReportSet};
pub use run::{auc, run_matrix, run_one, run_scaling, MatrixReport, RunSummary, ScalingAxis, ScalingRow, SummaryRow};
pub use verify::{run_checks, Check};
