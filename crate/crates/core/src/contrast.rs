//! Contrastive episode selection and its ablations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{ContrastSet, Episode};
use crate::rng::SimRng;

/// Smallest reward spread that counts as "sufficiently different".
pub const DEFAULT_MIN_GAP: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ContrastError {
    #[error("insufficient data: need {needed} episodes, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("episodes are not yet contrastive: every total reward equals {0}")]
    NotYetContrastive(f64),
    #[error("contrast size must be at least 1")]
    ZeroContrast,
}

/// How the adversarial ablation corrupts a contrast set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialMode {
    /// Relabel high as low and low as high.
    #[default]
    Swap,
    /// Redraw membership uniformly from the pooled episodes.
    Randomize,
}

/// Pick the `n` best and `n` worst episodes.
///
/// Ties are broken by collection order: among equal totals the episode that
/// appears earlier in `episodes` is preferred for both sides. Episodes are
/// ranked as given, without deduplication.
pub fn select_contrast(episodes: &[Episode], n: usize) -> Result<ContrastSet, ContrastError> {
    if n == 0 {
        return Err(ContrastError::ZeroContrast);
    }
    if episodes.len() < 2 * n {
        return Err(ContrastError::InsufficientData {
            needed: 2 * n,
            got: episodes.len(),
        });
    }
    let first = episodes[0].total_reward;
    if episodes.iter().all(|e| e.total_reward == first) {
        return Err(ContrastError::NotYetContrastive(first));
    }

    let mut by_high: Vec<usize> = (0..episodes.len()).collect();
    by_high.sort_by(|&a, &b| {
        episodes[b]
            .total_reward
            .total_cmp(&episodes[a].total_reward)
            .then(a.cmp(&b))
    });
    let high_idx: Vec<usize> = by_high[..n].to_vec();

    let mut rest: Vec<usize> = (0..episodes.len())
        .filter(|i| !high_idx.contains(i))
        .collect();
    rest.sort_by(|&a, &b| {
        episodes[a]
            .total_reward
            .total_cmp(&episodes[b].total_reward)
            .then(a.cmp(&b))
    });

    Ok(ContrastSet {
        high: high_idx.iter().map(|&i| episodes[i].clone()).collect(),
        low: rest[..n].iter().map(|&i| episodes[i].clone()).collect(),
        n,
    })
}

/// Whether the reward spread across `episodes` reaches `min_gap`.
pub fn gen_rule_ready(episodes: &[Episode], min_gap: f64) -> Result<bool, ContrastError> {
    if episodes.is_empty() {
        return Err(ContrastError::InsufficientData { needed: 1, got: 0 });
    }
    let (lo, hi) = episodes
        .iter()
        .map(|e| e.total_reward)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r), hi.max(r))
        });
    Ok(hi - lo >= min_gap)
}

/// Corrupt the labels of a contrast set. The ordering invariant does not hold
/// on the result.
pub fn corrupt_adversarial(c: &ContrastSet, mode: AdversarialMode, seed: u64) -> ContrastSet {
    match mode {
        AdversarialMode::Swap => ContrastSet {
            high: c.low.clone(),
            low: c.high.clone(),
            n: c.n,
        },
        AdversarialMode::Randomize => {
            let mut pool: Vec<Episode> = c.high.iter().chain(c.low.iter()).cloned().collect();
            let mut rng = SimRng::seed_from_u64(seed);
            rng.shuffle(&mut pool);
            let low = pool.split_off(c.high.len());
            ContrastSet {
                high: pool,
                low,
                n: c.n,
            }
        }
    }
}

/// Non-contrastive ablation: keep only the high side.
pub fn drop_low(c: &ContrastSet) -> ContrastSet {
    ContrastSet {
        high: c.high.clone(),
        low: Vec::new(),
        n: c.n,
    }
}
