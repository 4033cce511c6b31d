//! Episode, rule and contrast-set data model.

use serde::{Deserialize, Serialize};

/// One environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub done: bool,
}

/// An ordered list of transitions with its total reward.
///
/// `observations[i]` is the text rendering of what the agent observed before
/// taking `transitions[i].action`; prompt builders read it instead of the raw
/// state id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub observations: Vec<String>,
    pub total_reward: f64,
    pub env_tag: String,
    pub seed: u64,
}

impl Episode {
    pub fn new(env_tag: impl Into<String>, seed: u64) -> Self {
        Self {
            transitions: Vec::new(),
            observations: Vec::new(),
            total_reward: 0.0,
            env_tag: env_tag.into(),
            seed,
        }
    }

    pub fn push(&mut self, observation: impl Into<String>, t: Transition) {
        self.total_reward += t.reward;
        self.observations.push(observation.into());
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Sum of per-transition rewards, recomputed.
    pub fn reward_sum(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

/// Top-n and bottom-n episodes used as evidence for rule generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastSet {
    pub high: Vec<Episode>,
    pub low: Vec<Episode>,
    pub n: usize,
}

impl ContrastSet {
    /// True when every high episode scores at least as much as every low one.
    pub fn is_ordered(&self) -> bool {
        let min_high = self
            .high
            .iter()
            .map(|e| e.total_reward)
            .fold(f64::INFINITY, f64::min);
        let max_low = self
            .low
            .iter()
            .map(|e| e.total_reward)
            .fold(f64::NEG_INFINITY, f64::max);
        min_high >= max_low
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    #[default]
    Original,
    NoFormat,
    LowContext,
    Rephrase,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 4] = [
        PromptVariant::Original,
        PromptVariant::NoFormat,
        PromptVariant::LowContext,
        PromptVariant::Rephrase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Original => "original",
            PromptVariant::NoFormat => "no_format",
            PromptVariant::LowContext => "low_context",
            PromptVariant::Rephrase => "rephrase",
        }
    }
}

/// A generated natural-language strategy and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub text: String,
    pub iteration: u32,
    pub backend_id: String,
    pub prompt_variant: PromptVariant,
    pub temperature: f64,
    /// Set when the response never contained the expected rule prefix.
    #[serde(default)]
    pub malformed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RuleEnsemble {
    pub rules: Vec<Rule>,
}

impl RuleEnsemble {
    pub fn new(rules: Vec<Rule>) -> Self {
        Self { rules }
    }

    pub fn size(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|r| r.text.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_reward_tracks_pushes() {
        let mut e = Episode::new("t", 0);
        for r in [1.0, -1.0, 1.0] {
            e.push(
                "x",
                Transition {
                    state: 0,
                    action: 0,
                    reward: r,
                    next_state: 0,
                    done: false,
                },
            );
        }
        assert_eq!(e.total_reward, 1.0);
        assert_eq!(e.total_reward, e.reward_sum());
        assert_eq!(e.len(), 3);
    }

    #[test]
    fn variant_serializes_snake_case() {
        let s = serde_json::to_string(&PromptVariant::LowContext).unwrap();
        assert_eq!(s, "\"low_context\"");
    }
}
