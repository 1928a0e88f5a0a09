//! Prediction-to-GT assignment and the range-banded evaluation protocol.

pub mod eval;
pub mod hungarian;
pub mod report;

pub use eval::{
    average_precision, default_bands, greedy_match, match_boxes, range_band_metrics, recall_at,
    tp_errors, Band, BandMetrics, EvalFrame, MatchResult, MetricsReport, RecallAt, RunMeta,
    ScoredBox, TpErrors, DEFAULT_THRESHOLDS, FAR_BAND, NEAR_BAND,
};
pub use hungarian::{hungarian, Assignment};
pub use report::emit_report;
