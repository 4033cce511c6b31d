use serde::{Deserialize, Serialize};

use pllb_core::envs::maze::{maze_oracle, maze_step, Color, Direction, MazeSpec};

use crate::condition::{Aid, StudyCondition};

/// Reply to `GET /trial`. Carries no walls and no colors beyond the start
/// cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialAssignment {
    pub session: String,
    pub participant: String,
    pub condition: StudyCondition,
    pub maze_seed: u64,
    pub size: usize,
    pub start: [usize; 2],
    pub goal: [usize; 2],
    pub start_color: Color,
    pub aid: Aid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRequest {
    pub session: String,
    /// `north`/`n`, any case.
    pub direction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveResponse {
    /// False when a wall blocked the move.
    pub moved: bool,
    /// Color of the cell occupied after the move.
    pub color: Color,
    pub done: bool,
    /// Moves sent so far, bumps included.
    pub steps: u32,
    pub position: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedMove {
    pub direction: Direction,
    /// Milliseconds since the trial was assigned.
    pub t_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub participant: String,
    pub session: String,
    pub condition: StudyCondition,
    pub maze_seed: u64,
    pub moves: Vec<TimedMove>,
    pub steps: u32,
    /// Self-reported usefulness of the aid, 1 to 7.
    pub usefulness: u8,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub accepted: bool,
    pub participant: String,
}

/// Check that `log` is a consistent walk through `maze`.
pub fn replay(maze: &MazeSpec, log: &TrialLog) -> Result<(), String> {
    if !(1..=7).contains(&log.usefulness) {
        return Err(format!("usefulness {} is not in 1..=7", log.usefulness));
    }
    if log.steps as usize != log.moves.len() {
        return Err(format!(
            "steps {} but {} moves logged",
            log.steps,
            log.moves.len()
        ));
    }
    if log.moves.windows(2).any(|w| w[1].t_ms < w[0].t_ms) {
        return Err("move timestamps go backwards".into());
    }
    let mut pos = maze.start;
    for (i, m) in log.moves.iter().enumerate() {
        if pos == maze.goal {
            return Err(format!("move {} comes after the goal was reached", i + 1));
        }
        pos = maze_step(maze, pos, m.direction).0;
    }
    let reached = pos == maze.goal;
    if reached != log.completed {
        return Err(format!(
            "log says completed={} but the moves end at {:?}",
            log.completed, pos
        ));
    }
    if reached {
        let shortest = maze_oracle(maze).map_err(|e| e.to_string())?.distance(maze, maze.start);
        if log.steps < shortest {
            return Err(format!("{} steps is below the shortest path of {shortest}", log.steps));
        }
    }
    Ok(())
}
