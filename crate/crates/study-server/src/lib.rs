//! Server for the human maze study.
//!
//! Participants solve a 7×7 maze one move at a time. The server owns the maze
//! and answers each move with the collision result and the color of the cell
//! now occupied, so a client only ever learns what it has visited. Each
//! participant is assigned round-robin to one of three conditions: no aid, an
//! arrow map of a different maze with the same color meaning, or a rule taken
//! from a finished bottleneck run.
//!
//! Endpoints:
//!
//! | method | path           | body                    | reply                  |
//! |--------|----------------|-------------------------|------------------------|
//! | GET    | `/trial`       |                         | [`TrialAssignment`]    |
//! | POST   | `/move`        | [`MoveRequest`]         | [`MoveResponse`]       |
//! | POST   | `/submit`      | [`TrialLog`]            | [`SubmitAck`]          |
//! | GET    | `/summary`     |                         | [`StudySummary`]       |
//! | GET    | `/summary.csv` |                         | CSV of the same rows   |
//!
//! Errors come back as `{"error": "..."}` with a 4xx status: 404 for unknown
//! sessions, 409 for moves after the goal and duplicate submissions, 422 for
//! logs that fail replay validation.

pub mod condition;
pub mod config;
pub mod server;
pub mod store;
pub mod summary;
pub mod trial;

pub use condition::{visual_arrows, Aid, StudyCondition};
pub use config::{StudyConfig, StudyError};
pub use server::{router, serve, StudyState};
pub use store::TrialStore;
pub use summary::{study_summary, ConditionSummary, StudySummary};
pub use trial::{
    replay, MoveRequest, MoveResponse, SubmitAck, TimedMove, TrialAssignment, TrialLog,
};
