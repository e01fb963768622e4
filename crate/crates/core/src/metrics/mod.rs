//! Real-versus-synthetic scoring: per-feature Wasserstein distance and
//! Jensen-Shannon divergence, correlation-matrix fidelity, distance to
//! closest record, and machine-learning efficacy.

mod correlation;
mod dcr;
mod jsd;
mod mlef;
mod report;
mod wasserstein;

pub use correlation::{correlation_matrix, correlation_ratio, diff_corr, pearson, theils_u, Association, CorrelationMatrix, Method};
pub use dcr::{closest_record_distances, dcr};
pub use jsd::{category_counts, jsd, Counts};
pub use mlef::{mlef, MlefOutcome};
pub use report::{evaluate, shuffle_columns, EvalConfig, FeatureScores, Histogram, MetricsReport, MlefScores, HISTOGRAM_BINS, TOP_CATEGORIES};
pub use wasserstein::wasserstein_1d;
