use serde::{Deserialize, Serialize};

use super::LearnerError;

const SUM_TOLERANCE: f64 = 1e-9;

/// Normalized probabilities over a finite action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActionDistribution {
    probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, LearnerError> {
        if probs.is_empty() {
            return Err(LearnerError::MalformedDistribution("empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(LearnerError::MalformedDistribution(format!(
                "entries outside [0,1]: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(LearnerError::MalformedDistribution(format!("sums to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0);
        Self {
            probs: vec![1.0 / k as f64; k],
        }
    }

    /// Normalize non-negative weights. All-zero weights are malformed.
    pub fn from_weights(weights: &[f64]) -> Result<Self, LearnerError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LearnerError::MalformedDistribution(format!(
                "bad weights {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(LearnerError::MalformedDistribution("all-zero weights".into()));
        }
        Ok(Self {
            probs: renormalize(weights.iter().map(|w| w / total).collect()),
        })
    }

    /// Softmax over logits (log-probabilities are valid logits).
    pub fn softmax(logits: &[f64]) -> Result<Self, LearnerError> {
        if logits.is_empty() || logits.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(LearnerError::MalformedDistribution(format!(
                "bad logits {logits:?}"
            )));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(LearnerError::MalformedDistribution("all logits -inf".into()));
        }
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        Self::from_weights(&exps)
    }

    /// Arithmetic mean of distributions over the same action set.
    pub fn mean(dists: &[ActionDistribution]) -> Result<Self, LearnerError> {
        let Some(first) = dists.first() else {
            return Err(LearnerError::MalformedDistribution("empty ensemble".into()));
        };
        let k = first.len();
        if dists.iter().any(|d| d.len() != k) {
            return Err(LearnerError::MalformedDistribution(
                "ensemble members disagree on action count".into(),
            ));
        }
        // Sorting each column before summing makes the result independent of
        // member order down to the last bit.
        let acc: Vec<f64> = (0..k)
            .map(|a| {
                let mut col: Vec<f64> = dists.iter().map(|d| d.probs[a]).collect();
                col.sort_by(f64::total_cmp);
                col.iter().sum::<f64>() / dists.len() as f64
            })
            .collect();
        Self::from_weights(&acc)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, action: usize) -> f64 {
        self.probs[action]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Most probable action, first on ties.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Point mass on `action`.
    pub fn deterministic(k: usize, action: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[action] = 1.0;
        Self { probs }
    }
}

/// Push the rounding residue onto the largest entry so the sum is 1 to
/// within one ulp.
fn renormalize(mut probs: Vec<f64>) -> Vec<f64> {
    let sum: f64 = probs.iter().sum();
    let residue = 1.0 - sum;
    if residue != 0.0 {
        let mut best = 0;
        for i in 0..probs.len() {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        probs[best] = (probs[best] + residue).clamp(0.0, 1.0);
    }
    probs
}

impl TryFrom<Vec<f64>> for ActionDistribution {
    type Error = LearnerError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ActionDistribution> for Vec<f64> {
    fn from(d: ActionDistribution) -> Self {
        d.probs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_input() {
        assert!(ActionDistribution::new(vec![]).is_err());
        assert!(ActionDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ActionDistribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ActionDistribution::from_weights(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn mean_of_equal_members_is_identity() {
        let d = ActionDistribution::new(vec![0.1, 0.2, 0.7]).unwrap();
        let m = ActionDistribution::mean(&[d.clone(), d.clone()]).unwrap();
        for (a, b) in m.probs().iter().zip(d.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_rejects_mixed_sizes() {
        let a = ActionDistribution::uniform(2);
        let b = ActionDistribution::uniform(3);
        assert!(ActionDistribution::mean(&[a, b]).is_err());
    }

    #[test]
    fn softmax_handles_neg_infinity() {
        let d = ActionDistribution::softmax(&[0.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(d.probs(), &[1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn softmax_output_is_normalized(logits in prop::collection::vec(-50.0f64..50.0, 1..12)) {
            let d = ActionDistribution::softmax(&logits).unwrap();
            let s: f64 = d.probs().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn mean_is_order_invariant(
            a in prop::collection::vec(0.01f64..1.0, 4),
            b in prop::collection::vec(0.01f64..1.0, 4),
            c in prop::collection::vec(0.01f64..1.0, 4),
        ) {
            let da = ActionDistribution::from_weights(&a).unwrap();
            let db = ActionDistribution::from_weights(&b).unwrap();
            let dc = ActionDistribution::from_weights(&c).unwrap();
            let m1 = ActionDistribution::mean(&[da.clone(), db.clone(), dc.clone()]).unwrap();
            let m2 = ActionDistribution::mean(&[dc, da, db]).unwrap();
            prop_assert_eq!(m1, m2);
        }
    }
}
