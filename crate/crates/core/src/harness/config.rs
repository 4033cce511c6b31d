//! Experiment configuration (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrast::{AdversarialMode, DEFAULT_MIN_GAP};
use crate::envs::{Permutation, SaySelectConfig, Semantics};
use crate::episode::PromptVariant;
use crate::learner::RegularizerSchedule;
use crate::lm::{BackendConfig, BackendKind, OracleMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Sayselect,
    Maze,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Sayselect => "sayselect",
            EnvKind::Maze => "maze",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bottleneck,
    Tabularq,
    Linearq,
    Adversarial,
    Noncontrastive,
    InstructrlFixed,
    OracleScripted,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bottleneck => "bottleneck",
            Method::Tabularq => "tabularq",
            Method::Linearq => "linearq",
            Method::Adversarial => "adversarial",
            Method::Noncontrastive => "noncontrastive",
            Method::InstructrlFixed => "instructrl_fixed",
            Method::OracleScripted => "oracle_scripted",
        }
    }

    /// Whether rules are generated from collected episodes.
    pub fn generates_rules(self) -> bool {
        matches!(
            self,
            Method::Bottleneck | Method::Adversarial | Method::Noncontrastive | Method::OracleScripted
        )
    }

    /// Whether a rule prior is used at all.
    pub fn uses_rules(self) -> bool {
        self.generates_rules() || self == Method::InstructrlFixed
    }
}

/// When rule generation fires: at `first`, then every `period` episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub first: usize,
    pub period: usize,
}

impl Schedule {
    pub fn fires_at(&self, episodes_done: usize) -> bool {
        episodes_done >= self.first
            && self.period > 0
            && (episodes_done - self.first).is_multiple_of(self.period)
    }
}

/// Linearly decaying exploration rate, indexed by episode within a phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exploration {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: usize,
}

impl Exploration {
    pub fn epsilon(&self, episode: usize) -> f64 {
        if self.decay_episodes == 0 || episode >= self.decay_episodes {
            return self.end;
        }
        let f = episode as f64 / self.decay_episodes as f64;
        self.start + (self.end - self.start) * f
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Learning {
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    /// Per-step Bernoulli gate on λ ∈ {0,1}; overrides `lambda` when set.
    pub epsilon_lm: Option<f64>,
    pub exploration: Option<Exploration>,
    /// Act on `Q + λ log π_L` rather than `Q` alone.
    pub regularize_acting: Option<bool>,
    pub linear_lr: Option<f64>,
    pub linear_batch: Option<usize>,
    /// Initial value of every tabular Q entry.
    pub q_init: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaySelectSettings {
    /// Speaker ignores learning and names perm(ball) for the target ball.
    pub fixed_speaker: Option<Permutation>,
    #[serde(default)]
    pub rewards: SaySelectConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub maze_seed: u64,
    #[serde(default)]
    pub semantics: Semantics,
    pub episodes: usize,
    /// Keep the Q-table (or linear weights) from the previous phase.
    #[serde(default)]
    pub carry_policy: bool,
    /// Keep the current rules from the previous phase.
    #[serde(default = "yes")]
    pub carry_rule: bool,
    /// Replace the scripted oracle's mode from this phase on.
    #[serde(default)]
    pub oracle_mode: Option<OracleMode>,
    /// Exploration schedule for this phase; the run-level one when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploration: Option<Exploration>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeSettings {
    #[serde(default = "default_maze_size")]
    pub size: usize,
    #[serde(default = "default_color_prob")]
    pub color_prob: f64,
    /// Steps per episode before truncation; `4·size²` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_cap: Option<u32>,
    pub phases: Vec<Phase>,
}

impl MazeSettings {
    pub fn cap(&self) -> u32 {
        self.step_cap
            .unwrap_or_else(|| crate::envs::maze::step_cap(self.size))
    }
}

fn default_maze_size() -> usize {
    7
}
fn default_color_prob() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub env: EnvKind,
    pub method: Method,
    pub seeds: Vec<u64>,
    /// Total episodes (SaySelect); maze runs use their phase budgets.
    #[serde(default)]
    pub episode_budget: usize,
    pub eval_every: Option<usize>,
    pub schedule: Option<Schedule>,
    pub contrast_n: Option<usize>,
    pub ensemble_size: Option<usize>,
    #[serde(default = "default_variant")]
    pub prompt_variant: PromptVariant,
    #[serde(default)]
    pub adversarial_mode: Option<AdversarialMode>,
    #[serde(default = "default_min_gap")]
    pub min_gap: f64,
    /// Rule text for `instructrl_fixed`.
    pub fixed_rule: Option<String>,
    #[serde(default = "yes")]
    pub record_episodes: bool,
    #[serde(default)]
    pub learning: Learning,
    #[serde(default)]
    pub sayselect: SaySelectSettings,
    pub maze: Option<MazeSettings>,
    pub backend: BackendConfig,
}

fn default_variant() -> PromptVariant {
    PromptVariant::Original
}
fn default_min_gap() -> f64 {
    DEFAULT_MIN_GAP
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty".into());
        }
        if self.method == Method::InstructrlFixed
            && self.fixed_rule.as_deref().is_none_or(|r| r.trim().is_empty())
        {
            return bad("instructrl_fixed requires fixed_rule".into());
        }
        if self.method == Method::Linearq && self.env != EnvKind::Maze {
            return bad("linearq is only defined for the maze".into());
        }
        match self.env {
            EnvKind::Sayselect => {
                if self.episode_budget == 0 {
                    return bad("episode_budget must be positive".into());
                }
            }
            EnvKind::Maze => {
                let Some(m) = &self.maze else {
                    return bad("maze env requires a [maze] table".into());
                };
                if m.phases.is_empty() {
                    return bad("maze needs at least one phase".into());
                }
                if m.size < 2 {
                    return bad("maze size must be at least 2".into());
                }
                if m.step_cap == Some(0) {
                    return bad("step_cap must be positive".into());
                }
                if !(0.0..=1.0).contains(&m.color_prob) {
                    return bad("color_prob must be in [0,1]".into());
                }
                let overrides = m.phases.iter().any(|p| p.oracle_mode.is_some());
                if overrides && self.backend.kind != BackendKind::Scripted {
                    return bad("phase oracle_mode overrides need a scripted backend".into());
                }
                if m.phases.iter().any(|p| p.episodes == 0) {
                    return bad("every phase needs a positive episode budget".into());
                }
            }
        }
        let a = self.alpha();
        if !(a > 0.0 && a <= 1.0) {
            return bad(format!("alpha {a} not in (0,1]"));
        }
        let g = self.gamma();
        if !(0.0..=1.0).contains(&g) {
            return bad(format!("gamma {g} not in [0,1]"));
        }
        let r = self.regularizer();
        if !(r.lambda >= 0.0) {
            return bad("lambda must be non-negative".into());
        }
        if !self.q_init().is_finite() {
            return bad("q_init must be finite".into());
        }
        if let Some(e) = r.epsilon_lm {
            if !(0.0..=1.0).contains(&e) {
                return bad("epsilon_lm must be in [0,1]".into());
            }
        }
        let phase_schedules = self
            .maze
            .iter()
            .flat_map(|m| m.phases.iter().filter_map(|p| p.exploration));
        for x in std::iter::once(self.exploration()).chain(phase_schedules) {
            if !(0.0..=1.0).contains(&x.start) || !(0.0..=1.0).contains(&x.end) {
                return bad("exploration rates must be in [0,1]".into());
            }
        }
        if self.contrast_n() == 0 || self.ensemble_size() == 0 || self.eval_every() == 0 {
            return bad("contrast_n, ensemble_size and eval_every must be positive".into());
        }
        if self.min_gap < 0.0 {
            return bad("min_gap must be non-negative".into());
        }
        self.backend
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    fn is_maze(&self) -> bool {
        self.env == EnvKind::Maze
    }

    pub fn alpha(&self) -> f64 {
        self.learning.alpha.unwrap_or(0.1)
    }

    pub fn gamma(&self) -> f64 {
        self.learning
            .gamma
            .unwrap_or(if self.is_maze() { 0.99 } else { 0.95 })
    }

    pub fn regularizer(&self) -> RegularizerSchedule {
        match (self.learning.epsilon_lm, self.learning.lambda) {
            (Some(e), _) => RegularizerSchedule::gated(e),
            (None, Some(l)) => RegularizerSchedule::constant(l),
            (None, None) if self.is_maze() => RegularizerSchedule::gated(0.4),
            (None, None) => RegularizerSchedule::constant(0.25),
        }
    }

    pub fn exploration(&self) -> Exploration {
        self.learning.exploration.unwrap_or(if self.is_maze() {
            Exploration {
                start: 1.0,
                end: 0.05,
                decay_episodes: 100,
            }
        } else {
            Exploration {
                start: 1.0,
                end: 0.05,
                decay_episodes: 1000,
            }
        })
    }

    pub fn regularize_acting(&self) -> bool {
        self.learning.regularize_acting.unwrap_or(true)
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule.unwrap_or(if self.is_maze() {
            Schedule { first: 5, period: 5 }
        } else {
            Schedule {
                first: 200,
                period: 500,
            }
        })
    }

    pub fn contrast_n(&self) -> usize {
        self.contrast_n.unwrap_or(if self.is_maze() { 2 } else { 5 })
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble_size.unwrap_or(if self.is_maze() { 4 } else { 3 })
    }

    pub fn eval_every(&self) -> usize {
        self.eval_every.unwrap_or(if self.is_maze() { 1 } else { 100 })
    }

    pub fn adversarial_mode(&self) -> AdversarialMode {
        self.adversarial_mode.unwrap_or(if self.is_maze() {
            AdversarialMode::Randomize
        } else {
            AdversarialMode::Swap
        })
    }

    pub fn linear_lr(&self) -> f64 {
        self.learning.linear_lr.unwrap_or(0.001)
    }

    pub fn linear_batch(&self) -> usize {
        self.learning.linear_batch.unwrap_or(10)
    }

    pub fn q_init(&self) -> f64 {
        self.learning.q_init.unwrap_or(0.0)
    }

    /// Episodes across all phases (maze) or the SaySelect budget.
    pub fn total_episodes(&self) -> usize {
        match (&self.maze, self.env) {
            (Some(m), EnvKind::Maze) => m.phases.iter().map(|p| p.episodes).sum(),
            _ => self.episode_budget,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAYSELECT: &str = r#"
env = "sayselect"
method = "bottleneck"
seeds = [0, 1]
episode_budget = 600

[backend]
kind = "scripted"

[backend.scripted]
mode = "ideal_sayselect"
"#;

    #[test]
    fn defaults_follow_env() {
        let c = ExperimentConfig::from_toml_str(SAYSELECT).unwrap();
        assert_eq!(c.regularizer(), RegularizerSchedule::constant(0.25));
        assert_eq!(c.ensemble_size(), 3);
        assert_eq!(c.schedule(), Schedule { first: 200, period: 500 });
        assert_eq!(c.contrast_n(), 5);
        assert_eq!(c.gamma(), 0.95);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml_str(SAYSELECT).unwrap();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_missing_fields() {
        let no_rule = SAYSELECT.replace("bottleneck", "instructrl_fixed");
        assert!(ExperimentConfig::from_toml_str(&no_rule).is_err());
        let no_seeds = SAYSELECT.replace("[0, 1]", "[]");
        assert!(ExperimentConfig::from_toml_str(&no_seeds).is_err());
        let linear = SAYSELECT.replace("bottleneck", "linearq");
        assert!(ExperimentConfig::from_toml_str(&linear).is_err());
        let unknown = format!("bogus = 1\n{SAYSELECT}");
        assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
    }

    #[test]
    fn schedule_arithmetic() {
        let s = Schedule { first: 200, period: 500 };
        let fired = (1..=6000).filter(|e| s.fires_at(*e)).count();
        assert_eq!(fired, (6000 - 200) / 500 + 1);
        assert!(s.fires_at(200) && s.fires_at(700) && !s.fires_at(500));
    }

    #[test]
    fn exploration_decays_linearly() {
        let x = Exploration { start: 1.0, end: 0.0, decay_episodes: 10 };
        assert_eq!(x.epsilon(0), 1.0);
        assert!((x.epsilon(5) - 0.5).abs() < 1e-12);
        assert_eq!(x.epsilon(50), 0.0);
    }
}
