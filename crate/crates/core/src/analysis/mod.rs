//! Observability diagnostics and scenario metrics.

pub mod metrics;
pub mod observability;

pub use metrics::{compute_metrics, ScenarioMetrics};
pub use observability::{
    analyze, augmented_jacobian, coordinate_labels, nullspace_trace, observability_matrix, snapshot,
    temperature_output, transition, ObservabilitySnapshot, RANK_THRESHOLD,
};
