//! Training-consistency checks, evaluation metrics and diagnostic exports.

pub mod confidence;
pub mod consistency;
pub mod features;
pub mod metrics;
pub mod report;

pub use confidence::{batch_confidence, write_confidence_csv, ConfidenceRow, Predictor};
pub use consistency::{
    consistency_report, default_tail, empirical_epsilon, first_stable_epoch, first_stable_from_deltas,
    successive_deltas, ConsistencyCriterion, ConsistencyReport,
};
pub use features::{channel_correlation, feature_correlation, heatmap_byte, render_heatmap, CorrelationMatrix};
pub use metrics::{compute_metrics, confusion, ConfusionMatrix, Metrics, UndefinedFlags};
pub use report::{export_curves, read_json, write_json, ConsistencyDetail, ConsistencySummary, EvalReport};
