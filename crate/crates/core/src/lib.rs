//! Policy learning with a language bottleneck.
//!
//! An agent alternates between reinforcement learning and asking a language
//! model to summarize its best and worst episodes as short rules. The rules
//! induce an action prior that regularizes further learning.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contrast;
pub mod envs;
pub mod episode;
pub mod learner;
pub mod rng;
pub mod lm;
pub mod harness;
