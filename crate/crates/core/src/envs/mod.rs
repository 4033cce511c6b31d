//! SaySelect signaling game and colored maze environments.

pub mod maze;
pub mod sayselect;

use thiserror::Error;

pub use maze::{
    generate_maze, maze_episode_reward, maze_oracle, maze_step, Color, Direction, MazeCell,
    MazeOracle, MazeSpec, Semantics,
};
pub use sayselect::{
    sayselect_speaker_policy, sayselect_step, ListenerAction, Permutation, SaySelectConfig,
    SaySelectState, SpeakerKind,
};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("episode already finished")]
    Finished,
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}
