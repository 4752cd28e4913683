//! Self-excitation: generators decide which zones to excite, selectors decide
//! whether and how to excite them now.

pub mod generator;
pub mod montecarlo;
pub mod selector;

pub use generator::{
    candidates_from_scores, generate_eigen, generate_variational, node_weights, variational_candidates,
    ExcitationCandidate, GeneratorMethod,
};
pub use montecarlo::{generate_montecarlo, MonteCarloConfig, MonteCarloEstimate, MonteCarloScenario};
pub use selector::{
    choose_target, select_heuristic, select_optimal, separation, Experiment, OptimalSelection, SelectorConfig,
    SelectorKind, SelectorState, Target,
};
