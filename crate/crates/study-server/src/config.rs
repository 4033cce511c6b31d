use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use pllb_core::envs::maze::{generate_maze, MazeSpec, Semantics};
use pllb_core::envs::EnvError;
use pllb_core::harness::{Method, RecordError, RunRecord};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("study config: {0}")]
    Config(String),
    #[error(transparent)]
    Maze(#[from] EnvError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub trial_maze_seed: u64,
    /// Maze drawn under the visual aid; must differ from the trial maze.
    pub aid_maze_seed: u64,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default)]
    pub semantics: Semantics,
    #[serde(default = "default_color_prob")]
    pub color_prob: f64,
    /// Finished bottleneck run whose final rules are shown as aids.
    pub rule_record: PathBuf,
    /// Append-only JSONL trial store.
    pub store: PathBuf,
    /// Built study UI, served at `/`.
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    /// Seeds the draw of which rule each bottleneck participant sees.
    #[serde(default)]
    pub seed: u64,
}

fn default_size() -> usize {
    7
}
fn default_color_prob() -> f64 {
    0.5
}

impl StudyConfig {
    pub fn mazes(&self) -> Result<(MazeSpec, MazeSpec), StudyError> {
        let trial = generate_maze(self.trial_maze_seed, self.size, self.semantics, self.color_prob)?;
        let aid = generate_maze(self.aid_maze_seed, self.size, self.semantics, self.color_prob)?;
        if self.trial_maze_seed == self.aid_maze_seed || trial.cells == aid.cells {
            return Err(StudyError::Config(
                "the aid maze must differ from the trial maze".into(),
            ));
        }
        Ok((trial, aid))
    }

    /// Well-formed rules from the source record's last rule event in a phase
    /// whose colors mean what they mean in the study.
    pub fn rule_pool(&self) -> Result<Vec<String>, StudyError> {
        let rec = RunRecord::read_path(&self.rule_record)?;
        let src = self.rule_record.display();
        if rec.method() != Method::Bottleneck {
            return Err(StudyError::Config(format!(
                "{src} is a {} run, not a bottleneck run",
                rec.method().as_str()
            )));
        }
        let Some(maze) = rec.config().maze.as_ref() else {
            return Err(StudyError::Config(format!("{src} is not a maze run")));
        };
        let event = rec
            .rule_events()
            .filter(|e| maze.phases.get(e.phase).is_some_and(|p| p.semantics == self.semantics))
            .last();
        let rules: Vec<String> = event
            .map(|e| {
                e.rules
                    .iter()
                    .filter(|r| !r.malformed)
                    .map(|r| r.text.clone())
                    .collect()
            })
            .unwrap_or_default();
        if rules.is_empty() {
            return Err(StudyError::Config(format!(
                "{src} has no rules learned under {:?} colors",
                self.semantics
            )));
        }
        Ok(rules)
    }
}
