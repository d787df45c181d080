//! Symmetry-aware accuracy metrics, rank statistics, ablation tables, and
//! SO(3) distribution exports.

mod ablation;
mod correlation;
mod metrics;
mod so3_export;

pub use ablation::{ablation_grid, best_of_k_errors, ranking_comparison, AblationTable, RankingComparison};
pub use correlation::{
    energy_distance_permutation_test, energy_error_correlation, kendall_tau_b, spearman_rho,
    CorrelationStats,
};
pub use metrics::{accuracy_at, eval_report, pose_errors, EvalReport, MetricThreshold, PoseResult};
pub use so3_export::{euler_zyx_degrees, export_so3_scatter};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty result set")]
    EmptyResults,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("degenerate variance: all {0} values are equal")]
    DegenerateVariance(&'static str),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Estimator(#[from] crate::estimator::EstimatorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Format tag carried at the top of every CSV this module writes.
pub const CSV_FORMAT_VERSION: u32 = 1;

pub fn write_csv_header(w: &mut impl std::io::Write, columns: &str) -> std::io::Result<()> {
    writeln!(w, "# format_version={CSV_FORMAT_VERSION}")?;
    writeln!(w, "{columns}")
}
