//! Synthetic token sets, pruning quality metrics and empirical checks of
//! the method's guarantees.

mod metrics;
mod synth;
mod theory;
mod trials;

pub use metrics::{attention_cdf, end_concentration, recall, redundancy_metric, spatial_coverage};
pub use synth::{generate_synthetic, positional_profile, two_level_attention, GroundTruth, SyntheticSpec};
pub use theory::{
    best_match, check_coverage_lemma, check_semantic_preservation, realized_premises, CoverageReport, LipschitzLayer,
    SemanticParams, SemanticReport, TokenCoverage, BOUND_SLACK, DEFAULT_C_ETA,
};
pub use trials::{
    measure, run_lab, run_method, run_trial, Budget, LabConfig, LabReport, Method, MethodMetrics, TrialRecord, WinRates,
};
