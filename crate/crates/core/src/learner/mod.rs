//! Value-based learners: tabular Q-learning with a rule-induced regularizer,
//! and a linear Q-function baseline.

pub mod distribution;
pub mod linear;
pub mod tabular;

use thiserror::Error;

pub use distribution::ActionDistribution;
pub use linear::{linearq_update, Featurize, LinearQ, MazeFeaturizer};
pub use tabular::{
    act_epsilon_greedy, epsilon_lm_gate, extract_policy, interpretability, regularized_argmax,
    regularized_q_update, regularized_scores, QTable, RegularizerSchedule,
};

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("malformed action distribution: {0}")]
    MalformedDistribution(String),
    #[error("batch size mismatch: expected {expected}, got {got}")]
    BatchSize { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
