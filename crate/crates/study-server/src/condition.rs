use serde::{Deserialize, Serialize};

use pllb_core::envs::maze::{maze_oracle, Direction, MazeJson, MazeSpec};
use pllb_core::envs::EnvError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyCondition {
    Control,
    Visual,
    Bottleneck,
}

impl StudyCondition {
    pub const ALL: [StudyCondition; 3] = [
        StudyCondition::Control,
        StudyCondition::Visual,
        StudyCondition::Bottleneck,
    ];

    /// Condition for the `n`-th participant.
    pub fn round_robin(n: u64) -> Self {
        Self::ALL[(n % 3) as usize]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StudyCondition::Control => "control",
            StudyCondition::Visual => "visual",
            StudyCondition::Bottleneck => "bottleneck",
        }
    }
}

/// What a participant sees beside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Aid {
    None,
    /// A solved maze other than the trial maze: its layout and the optimal
    /// move in every cell (`null` at the goal).
    Visual {
        maze: MazeJson,
        arrows: Vec<Vec<Option<Direction>>>,
    },
    Rule { text: String },
}

/// Optimal-move arrows for every cell, row by row.
pub fn visual_arrows(m: &MazeSpec) -> Result<Vec<Vec<Option<Direction>>>, EnvError> {
    let o = maze_oracle(m)?;
    Ok((0..m.size)
        .map(|r| (0..m.size).map(|c| o.action_at(m, (r, c))).collect())
        .collect())
}
