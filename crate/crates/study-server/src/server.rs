use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tower_http::services::ServeDir;

use pllb_core::envs::maze::{maze_step, Direction, MazeJson, MazeSpec, Pos};
use pllb_core::rng::SimRng;

use crate::condition::{visual_arrows, Aid, StudyCondition};
use crate::config::{StudyConfig, StudyError};
use crate::store::TrialStore;
use crate::summary::{study_summary, StudySummary};
use crate::trial::{
    replay, MoveRequest, MoveResponse, SubmitAck, TimedMove, TrialAssignment, TrialLog,
};

/// Longest walk accepted for one trial.
const MAX_MOVES: usize = 10_000;

#[derive(Debug)]
struct Session {
    participant: String,
    condition: StudyCondition,
    started: Instant,
    pos: Pos,
    moves: Vec<TimedMove>,
}

impl Session {
    fn done(&self, m: &MazeSpec) -> bool {
        self.pos == m.goal
    }
}

struct Inner {
    static_dir: Option<std::path::PathBuf>,
    trial: MazeSpec,
    visual: Aid,
    rules: Vec<String>,
    assigned: AtomicU64,
    rng: Mutex<SimRng>,
    sessions: Mutex<HashMap<String, Session>>,
    store: tokio::sync::Mutex<TrialStore>,
}

/// Shared server state; cheap to clone.
#[derive(Clone)]
pub struct StudyState(Arc<Inner>);

impl StudyState {
    /// Build the mazes, load the rule pool and open the trial store.
    pub fn new(cfg: &StudyConfig) -> Result<Self, StudyError> {
        let (trial, aid) = cfg.mazes()?;
        let visual = Aid::Visual {
            arrows: visual_arrows(&aid)?,
            maze: MazeJson::from(aid),
        };
        let rules = cfg.rule_pool()?;
        let store = TrialStore::open(&cfg.store)?;
        Ok(Self(Arc::new(Inner {
            static_dir: cfg.static_dir.clone(),
            trial,
            visual,
            rules,
            assigned: AtomicU64::new(0),
            rng: Mutex::new(SimRng::stream(cfg.seed, "study")),
            sessions: Mutex::new(HashMap::new()),
            store: tokio::sync::Mutex::new(store),
        })))
    }

    pub fn trial_maze(&self) -> &MazeSpec {
        &self.0.trial
    }

    pub fn rules(&self) -> &[String] {
        &self.0.rules
    }

    pub async fn summary(&self) -> StudySummary {
        study_summary(self.0.store.lock().await.logs())
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn reject(status: StatusCode, msg: impl Into<String>) -> ApiError {
    ApiError(status, msg.into())
}

fn token() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

async fn trial(State(st): State<StudyState>) -> Json<TrialAssignment> {
    let s = &st.0;
    let n = s.assigned.fetch_add(1, Ordering::SeqCst);
    let condition = StudyCondition::round_robin(n);
    let aid = match condition {
        StudyCondition::Control => Aid::None,
        StudyCondition::Visual => s.visual.clone(),
        StudyCondition::Bottleneck => {
            let i = s.rng.lock().expect("rng lock").below(s.rules.len());
            Aid::Rule {
                text: s.rules[i].clone(),
            }
        }
    };
    let session = token();
    let participant = token();
    let m = &s.trial;
    s.sessions.lock().expect("session lock").insert(
        session.clone(),
        Session {
            participant: participant.clone(),
            condition,
            started: Instant::now(),
            pos: m.start,
            moves: Vec::new(),
        },
    );
    log::info!("assigned {participant} to {}", condition.as_str());
    Json(TrialAssignment {
        session,
        participant,
        condition,
        maze_seed: m.seed,
        size: m.size,
        start: [m.start.0, m.start.1],
        goal: [m.goal.0, m.goal.1],
        start_color: m.color(m.start),
        aid,
    })
}

async fn do_move(
    State(st): State<StudyState>,
    Json(req): Json<MoveRequest>,
) -> Result<Json<MoveResponse>, ApiError> {
    let dir = Direction::parse(&req.direction).ok_or_else(|| {
        reject(StatusCode::BAD_REQUEST, format!("unknown direction {:?}", req.direction))
    })?;
    let m = &st.0.trial;
    let mut sessions = st.0.sessions.lock().expect("session lock");
    let s = sessions
        .get_mut(&req.session)
        .ok_or_else(|| reject(StatusCode::NOT_FOUND, "unknown session"))?;
    if s.done(m) {
        return Err(reject(StatusCode::CONFLICT, "the goal has already been reached"));
    }
    if s.moves.len() >= MAX_MOVES {
        return Err(reject(StatusCode::CONFLICT, "move limit reached"));
    }
    let (next, color, done) = maze_step(m, s.pos, dir);
    let moved = next != s.pos;
    s.pos = next;
    s.moves.push(TimedMove {
        direction: dir,
        t_ms: s.started.elapsed().as_millis() as u64,
    });
    Ok(Json(MoveResponse {
        moved,
        color,
        done,
        steps: s.moves.len() as u32,
        position: [next.0, next.1],
    }))
}

async fn submit(
    State(st): State<StudyState>,
    Json(log): Json<TrialLog>,
) -> Result<Json<SubmitAck>, ApiError> {
    let m = &st.0.trial;
    let unprocessable = |msg: String| reject(StatusCode::UNPROCESSABLE_ENTITY, msg);
    let mut store = st.0.store.lock().await;
    if store.contains(&log.participant, log.maze_seed) {
        return Err(reject(StatusCode::CONFLICT, "this trial was already submitted"));
    }
    let stored = {
        let sessions = st.0.sessions.lock().expect("session lock");
        let s = sessions
            .get(&log.session)
            .ok_or_else(|| reject(StatusCode::NOT_FOUND, "unknown session"))?;
        if s.participant != log.participant {
            return Err(unprocessable("participant does not own this session".into()));
        }
        if s.condition != log.condition || log.maze_seed != m.seed {
            return Err(unprocessable("condition or maze does not match the assignment".into()));
        }
        let sent: Vec<Direction> = s.moves.iter().map(|t| t.direction).collect();
        let claimed: Vec<Direction> = log.moves.iter().map(|t| t.direction).collect();
        if sent != claimed {
            return Err(unprocessable("moves differ from those made on the server".into()));
        }
        replay(m, &log).map_err(unprocessable)?;
        // Keep the server's own timings.
        TrialLog {
            moves: s.moves.clone(),
            ..log
        }
    };
    let participant = stored.participant.clone();
    let fresh = store.append(stored).map_err(|e| {
        log::error!("writing {}: {e}", store.path().display());
        reject(StatusCode::INTERNAL_SERVER_ERROR, "could not persist the trial")
    })?;
    if !fresh {
        return Err(reject(StatusCode::CONFLICT, "this trial was already submitted"));
    }
    Ok(Json(SubmitAck {
        accepted: true,
        participant,
    }))
}

async fn summary(State(st): State<StudyState>) -> Json<StudySummary> {
    Json(st.summary().await)
}

async fn summary_csv(State(st): State<StudyState>) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "text/csv")], st.summary().await.to_csv())
}

pub fn router(state: StudyState) -> Router {
    let static_dir = state.0.static_dir.clone();
    let api = Router::new()
        .route("/trial", get(trial))
        .route("/move", post(do_move))
        .route("/submit", post(submit))
        .route("/summary", get(summary))
        .route("/summary.csv", get(summary_csv))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serve until the listener fails.
pub async fn serve(state: StudyState, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
