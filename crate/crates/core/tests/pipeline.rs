use std::collections::VecDeque;
use std::path::Path;

use pllb_core::contrast::{corrupt_adversarial, drop_low, select_contrast, AdversarialMode};
use pllb_core::envs::maze::{generate_maze, maze_oracle, Direction, MazeJson, MazeSpec, Semantics};
use pllb_core::episode::{Episode, PromptVariant, Transition};
use pllb_core::harness::{
    emit_plots, load_records, record_file_name, render_svg, run_pllb_loop, run_suite, summarize,
    Entry, ExperimentConfig, Method, MetricSample, PlotMetric, RunRecord,
};
use pllb_core::learner::{
    act_epsilon_greedy, epsilon_lm_gate, linearq_update, regularized_argmax, ActionDistribution,
    Featurize, LinearQ, RegularizerSchedule,
};
use pllb_core::lm::prompts::{render_gen_prompt, SampleFormat, LOW_HEADER};
use pllb_core::rng::SimRng;

fn sayselect(method: &str, budget: usize, extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!(
        r#"
env = "sayselect"
method = "{method}"
seeds = [0]
episode_budget = {budget}
eval_every = 100
{extra}

[learning]
alpha = 0.05
exploration = {{ start = 1.0, end = 0.05, decay_episodes = 300 }}

[backend]
kind = "scripted"

[backend.scripted]
mode = "ideal_sayselect"
"#
    ))
    .unwrap()
}

#[test]
fn rule_prior_can_overturn_a_small_q_gap() {
    // 0.5 + ln 0.1 ≈ -1.80 against 0.4 + ln 0.9 ≈ 0.29
    let pi = ActionDistribution::new(vec![0.1, 0.9]).unwrap();
    assert_eq!(regularized_argmax(&[0.5, 0.4], Some(&pi), 1.0).unwrap(), 1);
    assert_eq!(regularized_argmax(&[0.5, 0.4], Some(&pi), 0.0).unwrap(), 0);
}

#[test]
fn gate_frequency_matches_epsilon_lm() {
    let sched = RegularizerSchedule::gated(0.4);
    let mut rng = SimRng::stream(11, "gate");
    let n = 10_000;
    let ones = (0..n).filter(|_| epsilon_lm_gate(&sched, &mut rng) == 1.0).count();
    assert!((ones as f64 / n as f64 - 0.4).abs() <= 0.02, "{ones}");

    let constant = RegularizerSchedule::constant(0.25);
    assert!((0..100).all(|_| epsilon_lm_gate(&constant, &mut rng) == 0.25));
}

#[test]
fn full_exploration_is_uniform() {
    let mut rng = SimRng::stream(5, "agent");
    let scores = [10.0, 0.0, -3.0, 1.0];
    let n = 40_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[act_epsilon_greedy(&scores, 1.0, &mut rng)] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 0.25).abs() <= 0.02, "{counts:?}");
    }
    assert!((0..100).all(|_| act_epsilon_greedy(&scores, 0.0, &mut rng) == 0));
}

struct Table(Vec<Vec<f64>>);

impl Featurize for Table {
    fn dim(&self) -> usize {
        self.0[0].len()
    }
    fn features(&self, state: usize) -> Vec<f64> {
        self.0[state].clone()
    }
}

#[test]
fn linearq_single_step_matches_hand_computation() {
    let f = Table(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
    let mut m = LinearQ::new(2, 2, 0.1, 2);
    m.weights = vec![0.5, -0.5, 1.0, 2.0];
    let batch = [
        // y = 1 + 0.9·max(0, 3) = 3.7, Q(s0,a1) = 1, error 2.7
        Transition { state: 0, action: 1, reward: 1.0, next_state: 2, done: false },
        // y = 0.5, Q(s1,a0) = -0.5, error 1
        Transition { state: 1, action: 0, reward: 0.5, next_state: 2, done: true },
    ];
    linearq_update(&mut m, &batch, &f, 0.9).unwrap();
    let want = [0.5, -0.45, 1.135, 2.0];
    for (w, e) in m.weights.iter().zip(want) {
        assert!((w - e).abs() < 1e-12, "{:?}", m.weights);
    }

    let mut zero = LinearQ::new(2, 2, 0.1, 2);
    let quiet = [
        Transition { state: 0, action: 0, reward: 0.0, next_state: 1, done: false },
        Transition { state: 2, action: 1, reward: 0.0, next_state: 2, done: true },
    ];
    linearq_update(&mut zero, &quiet, &f, 0.9).unwrap();
    assert!(zero.weights.iter().all(|w| *w == 0.0));
    assert!(linearq_update(&mut zero, &quiet[..1], &f, 0.9).is_err());
}

fn episode(reward: f64, tag: u64) -> Episode {
    let mut e = Episode::new("sayselect", tag);
    e.push(
        "1",
        Transition { state: 0, action: 0, reward, next_state: 1, done: true },
    );
    e
}

fn totals(v: &[Episode]) -> Vec<f64> {
    v.iter().map(|e| e.total_reward).collect()
}

#[test]
fn contrast_selection_and_ablations() {
    let eps: Vec<Episode> = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]
        .iter()
        .enumerate()
        .map(|(i, r)| episode(*r, i as u64))
        .collect();
    let c = select_contrast(&eps, 2).unwrap();
    assert_eq!(totals(&c.high), vec![9.0, 6.0]);
    assert_eq!(totals(&c.low), vec![1.0, 1.0]);
    assert_eq!(c.low.iter().map(|e| e.seed).collect::<Vec<_>>(), vec![1, 3]);
    assert!(c.is_ordered());

    let swapped = corrupt_adversarial(&c, AdversarialMode::Swap, 0);
    assert_eq!(swapped.high, c.low);
    assert_eq!(swapped.low, c.high);

    for seed in 0..20 {
        let r = corrupt_adversarial(&c, AdversarialMode::Randomize, seed);
        assert_eq!((r.high.len(), r.low.len()), (2, 2));
        let mut before: Vec<f64> = totals(&c.high).into_iter().chain(totals(&c.low)).collect();
        let mut after: Vec<f64> = totals(&r.high).into_iter().chain(totals(&r.low)).collect();
        before.sort_by(f64::total_cmp);
        after.sort_by(f64::total_cmp);
        assert_eq!(before, after);
    }

    let high_only = drop_low(&c);
    for variant in PromptVariant::ALL {
        let full = render_gen_prompt(SampleFormat::SaySelect, &c, variant);
        let trimmed = render_gen_prompt(SampleFormat::SaySelect, &high_only, variant);
        assert!(full.contains(LOW_HEADER));
        assert!(!trimmed.contains(LOW_HEADER));
        assert!(full.starts_with(&trimmed[..trimmed.find("HIGH REWARD EXAMPLES:").unwrap()]));
    }
}

fn bfs(m: &MazeSpec) -> Vec<Option<u32>> {
    let mut dist = vec![None; m.num_cells()];
    dist[m.index(m.goal)] = Some(0);
    let mut q = VecDeque::from([m.goal]);
    while let Some(p) = q.pop_front() {
        let d = dist[m.index(p)].unwrap();
        for dir in Direction::ALL {
            if let Some(n) = m.neighbor(p, dir) {
                if dist[m.index(n)].is_none() {
                    dist[m.index(n)] = Some(d + 1);
                    q.push_back(n);
                }
            }
        }
    }
    dist
}

#[test]
fn generated_mazes_are_perfect() {
    for seed in 0..200 {
        let m = generate_maze(seed, 5, Semantics::Standard, 0.5).unwrap();
        assert!(m.walls_consistent());
        // Exhaustive DFS from the start: every cell reached, and a spanning
        // tree on 25 cells has exactly 24 passages.
        let mut seen = [false; 25];
        let mut stack = vec![m.start];
        while let Some(p) = stack.pop() {
            if std::mem::replace(&mut seen[m.index(p)], true) {
                continue;
            }
            for d in Direction::ALL {
                if let Some(n) = m.neighbor(p, d) {
                    stack.push(n);
                }
            }
        }
        assert!(seen.iter().all(|s| *s), "seed {seed}");
        assert_eq!(m.passage_count(), 24);

        let oracle = maze_oracle(&m).unwrap();
        let want = bfs(&m);
        for i in 0..25 {
            assert_eq!(Some(oracle.distance(&m, m.pos(i))), want[i]);
        }
    }
}

#[test]
fn maze_json_round_trips() {
    let m = generate_maze(42, 7, Semantics::Adapted, 0.5).unwrap();
    let text = serde_json::to_string(&MazeJson::from(m.clone())).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["walls"].as_array().unwrap().len(), 7);
    assert_eq!(v["colors"][0].as_str().unwrap().len(), 7);
    assert!(v["colors"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r.as_str().unwrap().chars().all(|c| "wrb".contains(c))));
    let back: MazeJson = serde_json::from_str(&text).unwrap();
    assert_eq!(MazeSpec::try_from(back).unwrap(), m);

    let mut broken: MazeJson = serde_json::from_str(&text).unwrap();
    broken.colors[3] = "wwwwwwx".into();
    assert!(MazeSpec::try_from(broken).is_err());
}

#[test]
fn run_record_round_trips_through_jsonl() {
    let cfg = sayselect("bottleneck", 800, "record_episodes = true");
    let rec = run_pllb_loop(&cfg, 4);
    assert!(rec.is_complete());
    assert!(rec.episodes().count() == 800);
    let text = rec.to_jsonl();
    let back = RunRecord::from_jsonl_str(&text).unwrap();
    assert_eq!(back, rec);
    assert_eq!(back.to_jsonl(), text);
}

#[test]
fn rule_events_follow_the_schedule() {
    // first at 200, then every 500: 200, 700, ..., 5700
    let rec = run_pllb_loop(&sayselect("bottleneck", 6000, "record_episodes = false"), 1);
    let at: Vec<usize> = rec.rule_events().map(|e| e.episode).collect();
    assert_eq!(at, (0..12).map(|k| 200 + 500 * k).collect::<Vec<_>>());
    assert!(rec.rule_events().all(|e| e.rules.len() == 3));
}

#[test]
fn zero_lambda_bottleneck_matches_tabularq() {
    let extra = "record_episodes = false";
    let mut b = sayselect("bottleneck", 1500, extra);
    b.learning.lambda = Some(0.0);
    let t = sayselect("tabularq", 1500, extra);
    for seed in [0, 7] {
        let mb: Vec<MetricSample> = run_pllb_loop(&b, seed).metrics().cloned().collect();
        let mt: Vec<MetricSample> = run_pllb_loop(&t, seed).metrics().cloned().collect();
        assert_eq!(mb, mt);
    }
}

fn synthetic(method: &str, seed: u64, rewards: &[(usize, f64)]) -> RunRecord {
    let mut r = RunRecord::new(sayselect(method, 1000, ""), seed);
    for &(episode, reward) in rewards {
        r.push(Entry::Metric(MetricSample {
            episode,
            phase: 0,
            phase_episode: episode,
            reward,
            interpretability: Some(reward / 2.0),
            steps: None,
            optimal_steps: None,
        }));
    }
    r
}

#[test]
fn summary_statistics_match_hand_arithmetic() {
    let recs = vec![
        synthetic("bottleneck", 0, &[(500, 0.2), (1000, 1.0)]),
        synthetic("bottleneck", 1, &[(500, 0.4), (1000, 1.0)]),
        synthetic("tabularq", 0, &[(500, 0.7)]),
    ];
    let rows = summarize(&recs).unwrap();
    let row = rows
        .iter()
        .find(|r| r.method == Method::Bottleneck && r.episode == 500)
        .unwrap();
    assert_eq!(row.n, 2);
    assert!((row.reward_mean - 0.3).abs() < 1e-12);
    assert!((row.reward_sd - 0.02f64.sqrt()).abs() < 1e-12);
    assert!((row.interpretability_sd.unwrap() - 0.005f64.sqrt()).abs() < 1e-12);
    let single = rows.iter().find(|r| r.method == Method::Tabularq).unwrap();
    assert_eq!((single.n, single.reward_sd), (1, 0.0));

    let mut shuffled = recs.clone();
    shuffled.reverse();
    assert_eq!(summarize(&shuffled).unwrap(), rows);

    let mut maze = synthetic("tabularq", 0, &[]);
    maze.header.config = ExperimentConfig::from_toml_str(
        r#"
env = "maze"
method = "tabularq"
seeds = [0]
[maze]
[[maze.phases]]
maze_seed = 1
episodes = 10
[backend]
kind = "scripted"
[backend.scripted]
mode = "ideal_maze_standard"
"#,
    )
    .unwrap();
    assert!(summarize(&[recs[0].clone(), maze]).is_err());
}

#[test]
fn plots_are_deterministic_with_one_curve_per_method() {
    let recs = vec![
        synthetic("bottleneck", 0, &[(0, 0.1), (500, 0.2), (1000, 0.9)]),
        synthetic("bottleneck", 1, &[(0, 0.1), (500, 0.4), (1000, 0.8)]),
        synthetic("tabularq", 0, &[(0, 0.0), (500, 0.3), (1000, 0.5)]),
        synthetic("adversarial", 0, &[(0, 0.0), (500, 0.1), (1000, 0.2)]),
    ];
    let a = render_svg(&recs, PlotMetric::Reward).unwrap();
    let b = render_svg(&recs, PlotMetric::Reward).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.matches(r#"class="curve""#).count(), 3);
    assert!(a.contains(">1000<"), "x axis reaches the budget");

    let dir = tempfile::tempdir().unwrap();
    let files = emit_plots(&recs, dir.path()).unwrap();
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
    assert_eq!(names, vec!["reward.svg", "interpretability.svg"]);
    assert_eq!(std::fs::read_to_string(&files[0]).unwrap(), a);
}

#[test]
fn suite_writes_one_named_file_per_seed() {
    let mut cfg = sayselect("tabularq", 300, "record_episodes = false");
    cfg.name = "smoke test".into();
    cfg.seeds = vec![0, 1, 2, 3, 4];
    let dir = tempfile::tempdir().unwrap();
    let recs = run_suite(&[cfg.clone()], Some(dir.path()), 3).unwrap();
    assert_eq!(recs.len(), 5);
    assert_eq!(recs.iter().map(|r| r.seed()).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    assert_eq!(record_file_name(&cfg, 2), "smoke_test_sayselect_seed2.jsonl");
    for s in 0..5 {
        assert!(dir.path().join(format!("smoke_test_sayselect_seed{s}.jsonl")).exists());
    }
    assert_eq!(load_records(dir.path()).unwrap(), recs);
    // identical seed, identical stream
    assert_eq!(run_pllb_loop(&cfg, 3).to_jsonl(), recs[3].to_jsonl());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::from_path(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}
