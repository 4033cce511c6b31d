use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use reqwest::StatusCode;
use serde_json::{json, Value};

use pllb_core::envs::maze::{generate_maze, Direction, MazeSpec, Semantics};
use pllb_core::harness::{run_pllb_loop, ExperimentConfig};
use pllb_study::{
    replay, serve, study_summary, StudyCondition, StudyConfig, StudyState, TimedMove, TrialLog,
    TrialStore,
};

const TRIAL_SEED: u64 = 71;
const AID_SEED: u64 = 72;

fn bottleneck_record(dir: &Path, method: &str) -> PathBuf {
    let cfg = ExperimentConfig::from_toml_str(&format!(
        r#"
env = "maze"
method = "{method}"
seeds = [0]
eval_every = 10
record_episodes = false
schedule = {{ first = 5, period = 5 }}

[maze]
size = 5
step_cap = 400

[[maze.phases]]
maze_seed = 3
episodes = 20

[backend]
kind = "scripted"

[backend.scripted]
mode = "ideal_maze_standard"
"#
    ))
    .unwrap();
    let path = dir.join(format!("{method}.jsonl"));
    run_pllb_loop(&cfg, 0).write_path(&path).unwrap();
    path
}

fn study_config(dir: &Path) -> StudyConfig {
    StudyConfig {
        trial_maze_seed: TRIAL_SEED,
        aid_maze_seed: AID_SEED,
        size: 7,
        semantics: Semantics::Standard,
        color_prob: 0.5,
        rule_record: bottleneck_record(dir, "bottleneck"),
        store: dir.join("trials.jsonl"),
        static_dir: None,
        seed: 9,
    }
}

async fn start(cfg: &StudyConfig) -> String {
    let state = StudyState::new(cfg).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(state, listener));
    format!("http://{addr}")
}

/// Every JSON body the client received, for the fog-of-war audit.
#[derive(Default)]
struct Client {
    http: reqwest::Client,
    base: String,
    seen: Vec<Value>,
}

impl Client {
    async fn get(&mut self, path: &str) -> Value {
        let v: Value = self
            .http
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        self.seen.push(v.clone());
        v
    }

    async fn post(&mut self, path: &str, body: &Value) -> (StatusCode, Value) {
        let r = self
            .http
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .await
            .unwrap();
        let status = r.status();
        let v: Value = r.json().await.unwrap();
        self.seen.push(v.clone());
        (status, v)
    }
}

fn pos(v: &Value) -> (usize, usize) {
    (v[0].as_u64().unwrap() as usize, v[1].as_u64().unwrap() as usize)
}

fn step(p: (usize, usize), d: Direction) -> (usize, usize) {
    let (dr, dc) = d.delta();
    ((p.0 as isize + dr) as usize, (p.1 as isize + dc) as usize)
}

/// Depth-first exploration that knows only the start, the goal and the
/// server's move replies. Returns the moves sent.
async fn solve(c: &mut Client, session: &str, start: (usize, usize), size: usize) -> Vec<Direction> {
    let mut sent = Vec::new();
    let mut visited = HashSet::from([start]);
    let mut tried: HashMap<(usize, usize), usize> = HashMap::new();
    let mut path: Vec<Direction> = Vec::new();
    let mut here = start;
    loop {
        let k = tried.entry(here).or_insert(0);
        let next = Direction::ALL[*k..].iter().position(|&d| {
            let (dr, dc) = d.delta();
            let (r, c) = (here.0 as isize + dr, here.1 as isize + dc);
            r >= 0 && c >= 0 && (r as usize) < size && (c as usize) < size
                && !visited.contains(&(r as usize, c as usize))
        });
        let (dir, forward) = match next {
            Some(i) => {
                *k += i + 1;
                (Direction::ALL[*k - 1], true)
            }
            None => (path.pop().expect("exhausted the maze").opposite(), false),
        };
        let (status, r) = c
            .post("/move", &json!({"session": session, "direction": dir.title()}))
            .await;
        assert_eq!(status, StatusCode::OK, "{r}");
        sent.push(dir);
        assert_eq!(r["steps"].as_u64().unwrap() as usize, sent.len());
        let moved = r["moved"].as_bool().unwrap();
        if moved {
            assert_eq!(pos(&r["position"]), step(here, dir));
            here = step(here, dir);
            if forward {
                visited.insert(here);
                path.push(dir);
            }
        } else {
            assert!(forward, "backtracking retraces an open passage");
            assert_eq!(pos(&r["position"]), here);
        }
        if r["done"].as_bool().unwrap() {
            return sent;
        }
    }
}

fn log_json(a: &Value, moves: &[Direction], usefulness: u8) -> Value {
    let timed: Vec<TimedMove> = moves
        .iter()
        .enumerate()
        .map(|(i, &d)| TimedMove { direction: d, t_ms: 100 * i as u64 })
        .collect();
    json!({
        "participant": a["participant"],
        "session": a["session"],
        "condition": a["condition"],
        "maze_seed": a["maze_seed"],
        "moves": timed,
        "steps": moves.len(),
        "usefulness": usefulness,
        "completed": true,
    })
}

fn keys(v: &Value) -> Vec<&str> {
    let mut k: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
    k.sort();
    k
}

fn wall_grid(m: &MazeSpec) -> Value {
    json!((0..m.size)
        .map(|r| (0..m.size).map(|c| m.cell((r, c)).walls).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn headless_client_completes_the_study_loop() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study_config(dir.path());
    let mut c = Client {
        base: start(&cfg).await,
        ..Client::default()
    };
    let trial_maze = generate_maze(TRIAL_SEED, 7, Semantics::Standard, 0.5).unwrap();
    let record_text = std::fs::read_to_string(&cfg.rule_record).unwrap();

    let mut assignments = Vec::new();
    for _ in 0..3 {
        assignments.push(c.get("/trial").await);
    }
    let conds: Vec<&str> = assignments.iter().map(|a| a["condition"].as_str().unwrap()).collect();
    assert_eq!(conds, vec!["control", "visual", "bottleneck"]);
    for a in &assignments {
        assert_eq!(
            keys(a),
            vec!["aid", "condition", "goal", "maze_seed", "participant", "session", "size", "start", "start_color"]
        );
        assert_eq!(a["maze_seed"], TRIAL_SEED);
        assert_eq!(pos(&a["goal"]), trial_maze.goal);
    }
    assert_eq!(assignments[0]["aid"], json!({"kind": "none"}));
    let visual = &assignments[1]["aid"];
    let arrows = visual["arrows"].as_array().unwrap();
    assert_eq!(arrows.iter().map(|r| r.as_array().unwrap().len()).sum::<usize>(), 49);
    assert_eq!(visual["maze"]["seed"], AID_SEED);
    assert_ne!(visual["maze"]["walls"], wall_grid(&trial_maze));
    let rule = assignments[2]["aid"]["text"].as_str().unwrap();
    assert!(record_text.contains(&serde_json::to_string(rule).unwrap()));

    // Solve all three; the bottleneck participant finds the trial useful.
    let mut walks = Vec::new();
    for a in &assignments {
        let s = a["session"].as_str().unwrap();
        walks.push(solve(&mut c, s, pos(&a["start"]), 7).await);
    }

    // Moves after the goal, unknown sessions and bad directions.
    let s0 = assignments[0]["session"].as_str().unwrap();
    let (st, _) = c.post("/move", &json!({"session": s0, "direction": "north"})).await;
    assert_eq!(st, StatusCode::CONFLICT);
    let (st, _) = c.post("/move", &json!({"session": "nope", "direction": "north"})).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = c.post("/move", &json!({"session": s0, "direction": "up"})).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);

    // Tampered logs for the visual participant.
    let good = log_json(&assignments[1], &walks[1], 4);
    let mut dropped = good.clone();
    dropped["moves"].as_array_mut().unwrap().remove(0);
    dropped["steps"] = json!(walks[1].len() - 1);
    let mut short = good.clone();
    short["steps"] = json!(3);
    let mut swapped = good.clone();
    swapped["condition"] = json!("bottleneck");
    let mut other = good.clone();
    other["participant"] = assignments[0]["participant"].clone();
    for bad in [dropped, short, swapped, other] {
        let (st, body) = c.post("/submit", &bad).await;
        assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert!(body["error"].as_str().is_some_and(|e| !e.is_empty()));
    }

    let ratings = [2u8, 4, 7];
    for (a, (w, r)) in assignments.iter().zip(walks.iter().zip(ratings)) {
        let (st, body) = c.post("/submit", &log_json(a, w, r)).await;
        assert_eq!(st, StatusCode::OK, "{body}");
        assert_eq!(body["accepted"], true);
    }
    let (st, _) = c.post("/submit", &good).await;
    assert_eq!(st, StatusCode::CONFLICT);

    let summary = c.get("/summary").await;
    let rows = summary["conditions"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for (row, (w, r)) in rows.iter().zip(walks.iter().zip(ratings)) {
        assert_eq!(row["n"], 1);
        assert_eq!(row["steps_mean"].as_f64().unwrap(), w.len() as f64);
        assert_eq!(row["steps_sd"].as_f64().unwrap(), 0.0);
        assert_eq!(row["usefulness_mean"].as_f64().unwrap(), r as f64);
    }
    let csv = reqwest::get(format!("{}/summary.csv", c.base)).await.unwrap().text().await.unwrap();
    assert!(csv.starts_with("condition,n,steps_mean,steps_sd,usefulness_mean,usefulness_sd\n"));
    assert_eq!(csv.lines().count(), 4);

    // Fog of war: the trial maze's walls never appear, and every color
    // revealed is the color of a cell the client stood on.
    let walls = serde_json::to_string(&wall_grid(&trial_maze)).unwrap();
    for v in &c.seen {
        assert!(!serde_json::to_string(v).unwrap().contains(&walls));
        if v.get("moved").is_some() {
            assert_eq!(keys(v), vec!["color", "done", "moved", "position", "steps"]);
            let p = pos(&v["position"]);
            assert_eq!(v["color"], json!(trial_maze.color(p)));
        }
    }

    // The store is re-readable and holds the server's own timings.
    let store = TrialStore::open(&cfg.store).unwrap();
    assert_eq!(store.logs().len(), 3);
    for (log, w) in store.logs().iter().zip(&walks) {
        assert_eq!(log.moves.iter().map(|m| m.direction).collect::<Vec<_>>(), *w);
        assert!(replay(&trial_maze, log).is_ok());
    }
}

#[tokio::test]
async fn store_survives_restart_and_keeps_rejecting_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study_config(dir.path());
    let mut c = Client {
        base: start(&cfg).await,
        ..Client::default()
    };
    let a = c.get("/trial").await;
    let w = solve(&mut c, a["session"].as_str().unwrap(), pos(&a["start"]), 7).await;
    let (st, _) = c.post("/submit", &log_json(&a, &w, 5)).await;
    assert_eq!(st, StatusCode::OK);

    let state = StudyState::new(&cfg).unwrap();
    let s = state.summary().await;
    assert_eq!(s.get(StudyCondition::Control).unwrap().n, 1);
    assert!(s.get(StudyCondition::Visual).is_none());
}

#[test]
fn startup_rejects_bad_sources() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = study_config(dir.path());
    assert_eq!(
        StudyState::new(&cfg).unwrap().rules().len(),
        4,
        "one rule per ensemble member"
    );

    let mut same = cfg.clone();
    same.aid_maze_seed = same.trial_maze_seed;
    assert!(StudyState::new(&same).is_err());

    let mut missing = cfg.clone();
    missing.rule_record = dir.path().join("absent.jsonl");
    assert!(StudyState::new(&missing).is_err());

    cfg.rule_record = bottleneck_record(dir.path(), "tabularq");
    assert!(StudyState::new(&cfg).is_err());
}

fn synthetic(condition: StudyCondition, steps: u32, usefulness: u8, completed: bool) -> TrialLog {
    TrialLog {
        participant: format!("p{steps}{usefulness}"),
        session: "s".into(),
        condition,
        maze_seed: 1,
        moves: Vec::new(),
        steps,
        usefulness,
        completed,
    }
}

#[test]
fn summary_means_match_hand_arithmetic() {
    let logs = vec![
        synthetic(StudyCondition::Control, 20, 3, true),
        synthetic(StudyCondition::Control, 30, 5, true),
        synthetic(StudyCondition::Bottleneck, 14, 6, true),
        synthetic(StudyCondition::Visual, 99, 1, false),
    ];
    let s = study_summary(&logs);
    let control = s.get(StudyCondition::Control).unwrap();
    assert_eq!((control.n, control.steps_mean, control.usefulness_mean), (2, 25.0, 4.0));
    assert!((control.steps_sd - 50f64.sqrt()).abs() < 1e-12);
    let b = s.get(StudyCondition::Bottleneck).unwrap();
    assert_eq!((b.steps_mean, b.steps_sd), (14.0, 0.0));
    assert!(s.get(StudyCondition::Visual).is_none(), "incomplete trials are not counted");
    assert_eq!(s.to_csv().lines().count(), 3);
}

#[test]
fn replay_catches_inconsistent_logs() {
    let m = generate_maze(TRIAL_SEED, 7, Semantics::Standard, 0.5).unwrap();
    let oracle = pllb_core::envs::maze::maze_oracle(&m).unwrap();
    let mut p = m.start;
    let mut moves = Vec::new();
    while let Some(d) = oracle.action_at(&m, p) {
        moves.push(TimedMove { direction: d, t_ms: moves.len() as u64 });
        p = step(p, d);
    }
    let mut log = synthetic(StudyCondition::Control, moves.len() as u32, 4, true);
    log.moves = moves;
    assert_eq!(replay(&m, &log), Ok(()));

    let mut t = log.clone();
    t.usefulness = 8;
    assert!(replay(&m, &t).is_err());
    let mut t = log.clone();
    t.moves.push(TimedMove { direction: Direction::North, t_ms: 999 });
    t.steps += 1;
    assert!(replay(&m, &t).unwrap_err().contains("after the goal"));
    let mut t = log.clone();
    t.moves.truncate(3);
    t.steps = 3;
    assert!(replay(&m, &t).is_err(), "fewer steps than the shortest path");
    let mut t = log.clone();
    t.moves[1].t_ms = 100;
    t.moves[2].t_ms = 50;
    assert!(replay(&m, &t).is_err());
    let mut t = log;
    t.completed = false;
    assert!(replay(&m, &t).is_err());
}

#[test]
fn rules_come_from_phases_with_matching_colors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml_str(
        r#"
env = "maze"
method = "bottleneck"
seeds = [0]
eval_every = 10
record_episodes = false
schedule = { first = 5, period = 5 }

[maze]
size = 5
step_cap = 400

[[maze.phases]]
maze_seed = 3
episodes = 10

[[maze.phases]]
maze_seed = 4
semantics = "adapted"
episodes = 10
oracle_mode = { mode = "ideal_maze_adapted" }

[backend]
kind = "scripted"

[backend.scripted]
mode = "ideal_maze_standard"
"#,
    )
    .unwrap();
    let path = dir.path().join("two_phase.jsonl");
    run_pllb_loop(&cfg, 0).write_path(&path).unwrap();

    let mut study = study_config(dir.path());
    study.rule_record = path;
    let standard = StudyState::new(&study).unwrap().rules().to_vec();
    assert!(standard.iter().all(|r| r.contains("SOUTH when I observe RED")), "{standard:?}");

    study.semantics = Semantics::Adapted;
    study.store = dir.path().join("adapted.jsonl");
    let adapted = StudyState::new(&study).unwrap().rules().to_vec();
    assert!(adapted.iter().all(|r| r.contains("WEST when I observe RED")), "{adapted:?}");
}
