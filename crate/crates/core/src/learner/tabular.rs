use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ActionDistribution, LearnerError};
use crate::episode::Transition;
use crate::rng::SimRng;

/// Dense state-action value table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, init: f64) -> Self {
        assert!(n_actions > 0, "a Q-table needs at least one action");
        Self {
            n_states,
            n_actions,
            values: vec![init; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.n_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let start = state * self.n_actions;
        &self.values[start..start + self.n_actions]
    }

    /// Greedy action, first on ties.
    pub fn argmax(&self, state: usize) -> usize {
        first_argmax(self.row(state))
    }

    pub fn max(&self, state: usize) -> f64 {
        self.row(state)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// State id to action values, suitable for JSON.
    pub fn snapshot(&self) -> BTreeMap<usize, Vec<f64>> {
        (0..self.n_states).map(|s| (s, self.row(s).to_vec())).collect()
    }

    pub fn from_snapshot(
        snapshot: &BTreeMap<usize, Vec<f64>>,
        n_states: usize,
        n_actions: usize,
    ) -> Result<Self, LearnerError> {
        let mut q = Self::new(n_states, n_actions);
        for (&s, row) in snapshot {
            if s >= n_states || row.len() != n_actions {
                return Err(LearnerError::InvalidParameter(format!(
                    "snapshot row {s} does not fit a {n_states}x{n_actions} table"
                )));
            }
            for (a, v) in row.iter().enumerate() {
                q.set(s, a, *v);
            }
        }
        Ok(q)
    }
}

#[derive(Serialize, Deserialize)]
struct QTableJson {
    n_states: usize,
    n_actions: usize,
    values: BTreeMap<usize, Vec<f64>>,
}

impl Serialize for QTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        QTableJson {
            n_states: self.n_states,
            n_actions: self.n_actions,
            values: self.snapshot(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = QTableJson::deserialize(d)?;
        QTable::from_snapshot(&j.values, j.n_states, j.n_actions).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `argmax_a Q(s,a) + λ log π(a)`, first on ties.
///
/// Actions with zero probability are excluded when λ > 0. With λ = 0 or no
/// distribution this is the plain greedy action.
pub fn regularized_argmax(
    q_row: &[f64],
    pi: Option<&ActionDistribution>,
    lambda: f64,
) -> Result<usize, LearnerError> {
    let scores = regularized_scores(q_row, pi, lambda)?;
    Ok(first_argmax(&scores))
}

/// Per-action scores `Q + λ log π`, with `-inf` for excluded actions.
pub fn regularized_scores(
    q_row: &[f64],
    pi: Option<&ActionDistribution>,
    lambda: f64,
) -> Result<Vec<f64>, LearnerError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(LearnerError::InvalidParameter(format!("lambda = {lambda}")));
    }
    let pi = match pi {
        Some(pi) if lambda > 0.0 => pi,
        _ => return Ok(q_row.to_vec()),
    };
    if pi.len() != q_row.len() {
        return Err(LearnerError::MalformedDistribution(format!(
            "distribution over {} actions for a row of {}",
            pi.len(),
            q_row.len()
        )));
    }
    if pi.probs().iter().all(|p| *p == 0.0) {
        return Err(LearnerError::MalformedDistribution("all-zero".into()));
    }
    Ok(q_row
        .iter()
        .zip(pi.probs())
        .map(|(q, p)| {
            if *p == 0.0 {
                f64::NEG_INFINITY
            } else {
                q + lambda * p.ln()
            }
        })
        .collect())
}

/// One regularized Q-learning step on `t`.
///
/// The bootstrap action is chosen by `Q(s',·) + λ log π(·|s')` but valued by
/// `Q(s',a*)` alone. Terminal transitions bootstrap zero.
pub fn regularized_q_update(
    q: &mut QTable,
    t: &Transition,
    pi_next: Option<&ActionDistribution>,
    lambda: f64,
    gamma: f64,
    alpha: f64,
) -> Result<(), LearnerError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LearnerError::InvalidParameter(format!("alpha = {alpha}")));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(LearnerError::InvalidParameter(format!("gamma = {gamma}")));
    }
    let bootstrap = if t.done {
        // Still validate the distribution so malformed input never passes silently.
        regularized_scores(q.row(t.next_state), pi_next, lambda)?;
        0.0
    } else {
        let a_star = regularized_argmax(q.row(t.next_state), pi_next, lambda)?;
        q.get(t.next_state, a_star)
    };
    let target = t.reward + gamma * bootstrap;
    let old = q.get(t.state, t.action);
    q.set(t.state, t.action, (1.0 - alpha) * old + alpha * target);
    Ok(())
}

/// How strongly the rule prior pulls on the value update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSchedule {
    pub lambda: f64,
    /// When set, each timestep draws λ = 1 with this probability, else 0.
    #[serde(default)]
    pub epsilon_lm: Option<f64>,
}

impl RegularizerSchedule {
    pub fn constant(lambda: f64) -> Self {
        Self {
            lambda,
            epsilon_lm: None,
        }
    }

    pub fn gated(epsilon_lm: f64) -> Self {
        Self {
            lambda: 1.0,
            epsilon_lm: Some(epsilon_lm),
        }
    }
}

/// Effective λ for one timestep.
pub fn epsilon_lm_gate(schedule: &RegularizerSchedule, rng: &mut SimRng) -> f64 {
    match schedule.epsilon_lm {
        Some(e) => {
            if rng.bernoulli(e) {
                1.0
            } else {
                0.0
            }
        }
        None => schedule.lambda,
    }
}

/// Greedy action per state.
pub fn extract_policy(q: &QTable) -> Vec<usize> {
    (0..q.n_states()).map(|s| q.argmax(s)).collect()
}

/// Fraction of messages whose greedy listener action is the same index.
pub fn interpretability(listener_policy: &[usize]) -> f64 {
    if listener_policy.is_empty() {
        return 0.0;
    }
    let hits = listener_policy
        .iter()
        .enumerate()
        .filter(|(m, a)| m == *a)
        .count();
    hits as f64 / listener_policy.len() as f64
}

/// ε-greedy over arbitrary scores. One coin is always drawn so that the
/// stream advances identically whatever the scores are.
pub fn act_epsilon_greedy(scores: &[f64], epsilon: f64, rng: &mut SimRng) -> usize {
    if rng.bernoulli(epsilon) {
        rng.below(scores.len())
    } else {
        first_argmax(scores)
    }
}
