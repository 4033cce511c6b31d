//! The PLLB loop: collect episodes, turn contrastive evidence into rules,
//! and learn under the rule-induced prior.

use std::collections::HashMap;

use thiserror::Error;

use super::config::{EnvKind, ExperimentConfig, Method};
use super::record::{Entry, MetricSample, RuleEvent, RunRecord};
use crate::contrast::{corrupt_adversarial, drop_low, gen_rule_ready, select_contrast, ContrastError};
use crate::envs::maze::maze_step;
use crate::envs::sayselect::{
    NUM_LISTENER_ACTIONS, NUM_MESSAGES, NUM_PAIRS, NUM_SPEAKER_STATES,
};
use crate::envs::{
    generate_maze, maze_episode_reward, maze_oracle, Color, Direction, EnvError, ListenerAction,
    MazeSpec, SaySelectState,
};
use crate::episode::{Episode, Rule, RuleEnsemble, Transition};
use crate::learner::{
    act_epsilon_greedy, epsilon_lm_gate, extract_policy, interpretability, linearq_update,
    regularized_q_update, regularized_scores, ActionDistribution, Featurize, LearnerError,
    LinearQ, MazeFeaturizer, QTable,
};
use crate::lm::prompts::{format_previous_actions, update_labels};
use crate::lm::rules::InduceOptions;
use crate::lm::{
    build_backend, generate_rules, induce_action_distribution, render_gen_prompt,
    render_maze_update, render_sayselect_update, Backend, LmError, RuleRequest, SampleFormat,
    ScriptedOracle,
};
use crate::rng::SimRng;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Run one seed, building the backend from the config.
pub fn run_pllb_loop(config: &ExperimentConfig, seed: u64) -> RunRecord {
    let mut record = RunRecord::new(config.clone(), seed);
    let result = config
        .validate()
        .map_err(|e| RunError::Config(e.to_string()))
        .and_then(|_| build_backend(&config.backend).map_err(RunError::from))
        .and_then(|b| run_into(config, seed, b.as_ref(), &mut record));
    finish(&mut record, result);
    record
}

/// Run one seed against a caller-supplied backend.
pub fn run_with_backend(config: &ExperimentConfig, seed: u64, backend: &dyn Backend) -> RunRecord {
    let mut record = RunRecord::new(config.clone(), seed);
    let result = config
        .validate()
        .map_err(|e| RunError::Config(e.to_string()))
        .and_then(|_| run_into(config, seed, backend, &mut record));
    finish(&mut record, result);
    record
}

fn finish(record: &mut RunRecord, result: Result<(), RunError>) {
    let status = match result {
        Ok(()) => Entry::Status {
            complete: true,
            error: None,
        },
        Err(e) => {
            log::error!("run aborted: {e}");
            Entry::Status {
                complete: false,
                error: Some(e.to_string()),
            }
        }
    };
    record.push(status);
}

fn run_into(
    cfg: &ExperimentConfig,
    seed: u64,
    backend: &dyn Backend,
    rec: &mut RunRecord,
) -> Result<(), RunError> {
    match cfg.env {
        EnvKind::Sayselect => SaySelectRun::new(cfg, seed).run(backend, rec),
        EnvKind::Maze => MazeRun::new(cfg, seed).run(backend, rec),
    }
}

/// The current rule ensemble and the action distributions it induces,
/// memoized per rule epoch.
struct Prior {
    ensemble: Option<RuleEnsemble>,
    iteration: u32,
    cache: HashMap<String, ActionDistribution>,
    labels: Vec<String>,
    opts: InduceOptions,
}

impl Prior {
    fn new(cfg: &ExperimentConfig, format: SampleFormat) -> Self {
        Self {
            ensemble: None,
            iteration: 0,
            cache: HashMap::new(),
            labels: update_labels(format),
            opts: InduceOptions {
                samples: cfg.backend.samples_per_estimate,
                temperature: cfg.backend.temperature,
                max_tokens: cfg.backend.max_tokens,
                answer_marker: match format {
                    SampleFormat::SaySelect => None,
                    SampleFormat::Maze => Some("NEXT ACTION:"),
                },
            },
        }
    }

    fn set(&mut self, ensemble: RuleEnsemble) {
        self.ensemble = Some(ensemble);
        self.cache.clear();
    }

    fn clear(&mut self) {
        self.ensemble = None;
        self.cache.clear();
    }

    fn active(&self) -> bool {
        self.ensemble.is_some()
    }

    fn dist(
        &mut self,
        backend: &dyn Backend,
        key: String,
        render: &dyn Fn(&str) -> String,
    ) -> Result<Option<ActionDistribution>, RunError> {
        let Some(ens) = &self.ensemble else {
            return Ok(None);
        };
        if let Some(d) = self.cache.get(&key) {
            return Ok(Some(d.clone()));
        }
        let d = induce_action_distribution(backend, ens, render, &self.labels, &self.opts)?;
        self.cache.insert(key, d.clone());
        Ok(Some(d))
    }
}

/// Rule events are requested by the schedule and held until the collected
/// episodes are contrastive enough.
struct RuleDriver {
    pending: bool,
    window: usize,
    rng: SimRng,
}

impl RuleDriver {
    fn new(cfg: &ExperimentConfig, seed: u64) -> Self {
        let s = cfg.schedule();
        Self {
            pending: false,
            window: s.period.max(2 * cfg.contrast_n()),
            rng: SimRng::stream(seed, "lm"),
        }
    }

    /// Called after each episode. Returns a generated rule event when one
    /// was due and the evidence allowed it.
    #[allow(clippy::too_many_arguments)]
    fn after_episode(
        &mut self,
        cfg: &ExperimentConfig,
        backend: &dyn Backend,
        format: SampleFormat,
        pool: &[Episode],
        phase_episodes: usize,
        iteration: u32,
    ) -> Result<Option<(String, crate::lm::GeneratedRules)>, RunError> {
        if !cfg.method.generates_rules() {
            return Ok(None);
        }
        if cfg.schedule().fires_at(phase_episodes) {
            self.pending = true;
        }
        if !self.pending {
            return Ok(None);
        }
        let start = pool.len().saturating_sub(self.window);
        let window = &pool[start..];
        let n = cfg.contrast_n();
        if window.len() < 2 * n || !gen_rule_ready(window, cfg.min_gap).unwrap_or(false) {
            return Ok(None);
        }
        let contrast = match select_contrast(window, n) {
            Ok(c) => c,
            Err(ContrastError::NotYetContrastive(_)) | Err(ContrastError::InsufficientData { .. }) => {
                return Ok(None)
            }
            Err(e) => return Err(RunError::Config(e.to_string())),
        };
        let contrast = match cfg.method {
            Method::Adversarial => {
                corrupt_adversarial(&contrast, cfg.adversarial_mode(), self.rng.next_u64())
            }
            Method::Noncontrastive => drop_low(&contrast),
            _ => contrast,
        };
        let prompt = render_gen_prompt(format, &contrast, cfg.prompt_variant);
        let req = RuleRequest {
            iteration,
            variant: cfg.prompt_variant,
            temperature: cfg.backend.temperature,
            max_retries: cfg.backend.max_retries,
            max_tokens: cfg.backend.max_tokens,
            prefix: format.gen_template().rule_prefix(),
        };
        let generated = generate_rules(backend, &prompt, cfg.ensemble_size(), &req)?;
        self.pending = false;
        Ok(Some((prompt, generated)))
    }
}

fn fixed_ensemble(cfg: &ExperimentConfig) -> RuleEnsemble {
    RuleEnsemble::new(vec![Rule {
        text: cfg.fixed_rule.clone().unwrap_or_default(),
        iteration: 0,
        backend_id: "fixed".into(),
        prompt_variant: cfg.prompt_variant,
        temperature: 0.0,
        malformed: false,
    }])
}

fn drain_calls(backend: &dyn Backend, rec: &mut RunRecord) {
    for call in backend.drain_calls() {
        rec.push(Entry::LmCall { call });
    }
}

/// Strength used for greedy evaluation: the constant λ, or full strength
/// when the per-step gate is in use.
fn eval_lambda(cfg: &ExperimentConfig) -> f64 {
    let r = cfg.regularizer();
    if r.epsilon_lm.is_some() {
        1.0
    } else {
        r.lambda
    }
}

/// Scores an agent acts on in one state.
fn acting_scores(
    q_row: &[f64],
    pi: Option<&ActionDistribution>,
    lambda: f64,
    regularize: bool,
) -> Result<Vec<f64>, RunError> {
    if regularize {
        Ok(regularized_scores(q_row, pi, lambda)?)
    } else {
        Ok(q_row.to_vec())
    }
}

/// Pick an action for a method that follows π_L directly.
fn sample_from_prior(pi: Option<&ActionDistribution>, n: usize, rng: &mut SimRng) -> usize {
    match pi {
        Some(p) => rng.weighted(p.probs()),
        None => rng.below(n),
    }
}

// ---------------------------------------------------------------- SaySelect

/// Listener reward at evaluation: correct blue picks over
/// `max(picks, 2)`, so an optimal episode scores 1 and quitting scores 0.
pub fn sayselect_episode_score(correct: u32, picks: u32) -> f64 {
    f64::from(correct) / f64::from(picks.max(2))
}

struct SaySelectRun<'c> {
    cfg: &'c ExperimentConfig,
    seed: u64,
    listener: QTable,
    speaker: QTable,
    prior: Prior,
    env_rng: SimRng,
    agent_rng: SimRng,
    gate_rng: SimRng,
}

impl<'c> SaySelectRun<'c> {
    fn new(cfg: &'c ExperimentConfig, seed: u64) -> Self {
        Self {
            cfg,
            seed,
            listener: QTable::filled(NUM_MESSAGES, NUM_LISTENER_ACTIONS, cfg.q_init()),
            speaker: QTable::filled(NUM_SPEAKER_STATES, NUM_MESSAGES, cfg.q_init()),
            prior: Prior::new(cfg, SampleFormat::SaySelect),
            env_rng: SimRng::stream(seed, "env"),
            agent_rng: SimRng::stream(seed, "agent"),
            gate_rng: SimRng::stream(seed, "gate"),
        }
    }

    fn speak(&mut self, state: &SaySelectState, epsilon: f64) -> u8 {
        if let Some(p) = &self.cfg.sayselect.fixed_speaker {
            return p.apply(state.first_uncollected_blue().unwrap_or(state.blues().0));
        }
        let row = self.speaker.row(state.speaker_state());
        act_epsilon_greedy(row, epsilon, &mut self.agent_rng) as u8 + 1
    }

    fn pi(&mut self, backend: &dyn Backend, msg: u8) -> Result<Option<ActionDistribution>, RunError> {
        self.prior
            .dist(backend, msg.to_string(), &|rule| render_sayselect_update(rule, msg))
    }

    /// λ and π_L at a listener decision point.
    fn decision(
        &mut self,
        backend: &dyn Backend,
        msg: u8,
    ) -> Result<(f64, Option<ActionDistribution>), RunError> {
        if !self.prior.active() {
            return Ok((0.0, None));
        }
        let lambda = if self.cfg.method == Method::OracleScripted {
            1.0
        } else {
            epsilon_lm_gate(&self.cfg.regularizer(), &mut self.gate_rng)
        };
        let pi = if lambda > 0.0 || self.cfg.method == Method::OracleScripted {
            self.pi(backend, msg)?
        } else {
            None
        };
        Ok((lambda, pi))
    }

    fn run(mut self, backend: &dyn Backend, rec: &mut RunRecord) -> Result<(), RunError> {
        let cfg = self.cfg;
        let rewards = cfg.sayselect.rewards.clone();
        let exploration = cfg.exploration();
        let (alpha, gamma) = (cfg.alpha(), cfg.gamma());
        let regularize = cfg.regularize_acting();
        let mut driver = RuleDriver::new(cfg, self.seed);
        let mut pool: Vec<Episode> = Vec::new();

        if cfg.method == Method::InstructrlFixed {
            let ens = fixed_ensemble(cfg);
            rec.push(Entry::RuleEvent(RuleEvent {
                episode: 0,
                phase: 0,
                iteration: 0,
                prompt: String::new(),
                raw: Vec::new(),
                rules: ens.rules.clone(),
                q_snapshot: Some(self.listener.snapshot()),
            }));
            self.prior.set(ens);
        }

        for e in 0..cfg.episode_budget {
            let eps = exploration.epsilon(e);
            let mut state = SaySelectState::random(&mut self.env_rng);
            let mut episode = Episode::new("sayselect", self.seed);
            let mut msg = self.speak(&state, eps);
            let (mut lambda, mut pi) = self.decision(backend, msg)?;
            loop {
                let action = if cfg.method == Method::OracleScripted {
                    sample_from_prior(pi.as_ref(), NUM_LISTENER_ACTIONS, &mut self.agent_rng)
                } else {
                    let row = self.listener.row(usize::from(msg) - 1);
                    let scores = acting_scores(row, pi.as_ref(), lambda, regularize)?;
                    act_epsilon_greedy(&scores, eps, &mut self.agent_rng)
                };
                let speaker_state = state.speaker_state();
                let (next, reward, done) = crate::envs::sayselect_step(
                    &state,
                    msg,
                    ListenerAction::from_id(action)?,
                    &rewards,
                )?;
                let (next_msg, next_lambda, next_pi) = if done {
                    (msg, 0.0, None)
                } else {
                    let m = self.speak(&next, eps);
                    let (l, p) = self.decision(backend, m)?;
                    (m, l, p)
                };
                let t = Transition {
                    state: usize::from(msg) - 1,
                    action,
                    reward,
                    next_state: usize::from(next_msg) - 1,
                    done,
                };
                if cfg.method != Method::OracleScripted {
                    regularized_q_update(&mut self.listener, &t, next_pi.as_ref(), next_lambda, gamma, alpha)?;
                }
                if cfg.sayselect.fixed_speaker.is_none() {
                    let st = Transition {
                        state: speaker_state,
                        action: usize::from(msg) - 1,
                        reward,
                        next_state: next.speaker_state(),
                        done,
                    };
                    regularized_q_update(&mut self.speaker, &st, None, 0.0, gamma, alpha)?;
                }
                episode.push(msg.to_string(), t);
                if done {
                    break;
                }
                state = next;
                msg = next_msg;
                lambda = next_lambda;
                pi = next_pi;
            }

            pool.push(episode.clone());
            if pool.len() > driver.window {
                pool.remove(0);
            }
            let done_eps = e + 1;
            if cfg.record_episodes {
                rec.push(Entry::Episode {
                    index: e,
                    phase: 0,
                    episode,
                });
            }

            let iteration = self.prior.iteration + 1;
            if let Some((prompt, gen)) =
                driver.after_episode(cfg, backend, SampleFormat::SaySelect, &pool, done_eps, iteration)?
            {
                self.prior.iteration = iteration;
                rec.push(Entry::RuleEvent(RuleEvent {
                    episode: done_eps,
                    phase: 0,
                    iteration,
                    prompt,
                    raw: gen.raw,
                    rules: gen.ensemble.rules.clone(),
                    q_snapshot: Some(self.listener.snapshot()),
                }));
                self.prior.set(gen.ensemble);
            }

            if done_eps % cfg.eval_every() == 0 || done_eps == cfg.episode_budget {
                let reward = self.evaluate(backend)?;
                let interp = interpretability(&extract_policy(&self.listener));
                rec.push(Entry::Metric(MetricSample {
                    episode: done_eps,
                    phase: 0,
                    phase_episode: done_eps,
                    reward,
                    interpretability: Some(interp),
                    steps: None,
                    optimal_steps: None,
                }));
            }
            drain_calls(backend, rec);
        }
        Ok(())
    }

    /// Mean greedy score over all ten blue pairs.
    fn evaluate(&mut self, backend: &dyn Backend) -> Result<f64, RunError> {
        let lambda = eval_lambda(self.cfg);
        let rewards = self.cfg.sayselect.rewards.clone();
        let mut total = 0.0;
        for pair in 0..NUM_PAIRS {
            let mut state = SaySelectState::new(crate::envs::sayselect::pair_from_index(pair))?;
            let (mut correct, mut picks) = (0u32, 0u32);
            loop {
                let msg = match &self.cfg.sayselect.fixed_speaker {
                    Some(p) => p.apply(state.first_uncollected_blue().unwrap_or(state.blues().0)),
                    None => self.speaker.argmax(state.speaker_state()) as u8 + 1,
                };
                let pi = if self.prior.active() { self.pi(backend, msg)? } else { None };
                let action = if self.cfg.method == Method::OracleScripted {
                    pi.as_ref().map_or(0, ActionDistribution::mode)
                } else {
                    let scores = regularized_scores(self.listener.row(usize::from(msg) - 1), pi.as_ref(), lambda)?;
                    crate::learner::tabular::first_argmax(&scores)
                };
                let before = state.collected.len();
                let (next, _, done) =
                    crate::envs::sayselect_step(&state, msg, ListenerAction::from_id(action)?, &rewards)?;
                if action != crate::envs::sayselect::QUIT_ACTION {
                    picks += 1;
                    if next.collected.len() > before {
                        correct += 1;
                    }
                }
                state = next;
                if done {
                    break;
                }
            }
            total += sayselect_episode_score(correct, picks);
        }
        Ok(total / NUM_PAIRS as f64)
    }
}

// --------------------------------------------------------------------- Maze

enum Learner {
    Tabular(QTable),
    Linear(LinearQ),
}

impl Learner {
    fn fresh(cfg: &ExperimentConfig, maze: &MazeSpec) -> Self {
        if cfg.method == Method::Linearq {
            Learner::Linear(LinearQ::new(
                maze.num_cells() + 3,
                4,
                cfg.linear_lr(),
                cfg.linear_batch(),
            ))
        } else {
            Learner::Tabular(QTable::filled(maze.num_cells(), 4, cfg.q_init()))
        }
    }

    fn values(&self, state: usize, f: &MazeFeaturizer) -> Vec<f64> {
        match self {
            Learner::Tabular(q) => q.row(state).to_vec(),
            Learner::Linear(l) => l.values(&f.features(state)),
        }
    }
}

/// Outcome of a greedy maze rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MazeEval {
    pub reward: f64,
    pub steps: u32,
    pub reached: bool,
}

struct MazeRun<'c> {
    cfg: &'c ExperimentConfig,
    seed: u64,
    prior: Prior,
    agent_rng: SimRng,
    gate_rng: SimRng,
}

fn maze_key(color: Color, previous: &[Direction]) -> String {
    format!("{}|{}", color.upper(), format_previous_actions(previous))
}

impl<'c> MazeRun<'c> {
    fn new(cfg: &'c ExperimentConfig, seed: u64) -> Self {
        Self {
            cfg,
            seed,
            prior: Prior::new(cfg, SampleFormat::Maze),
            agent_rng: SimRng::stream(seed, "agent"),
            gate_rng: SimRng::stream(seed, "gate"),
        }
    }

    fn pi(
        &mut self,
        backend: &dyn Backend,
        color: Color,
        previous: &[Direction],
    ) -> Result<Option<ActionDistribution>, RunError> {
        self.prior.dist(backend, maze_key(color, previous), &|rule| {
            render_maze_update(rule, previous, color)
        })
    }

    fn decision(
        &mut self,
        backend: &dyn Backend,
        color: Color,
        previous: &[Direction],
    ) -> Result<(f64, Option<ActionDistribution>), RunError> {
        if !self.prior.active() {
            return Ok((0.0, None));
        }
        if self.cfg.method == Method::OracleScripted {
            return Ok((1.0, self.pi(backend, color, previous)?));
        }
        let lambda = epsilon_lm_gate(&self.cfg.regularizer(), &mut self.gate_rng);
        if lambda > 0.0 {
            Ok((lambda, self.pi(backend, color, previous)?))
        } else {
            Ok((0.0, None))
        }
    }

    fn run(mut self, base: &dyn Backend, rec: &mut RunRecord) -> Result<(), RunError> {
        let cfg = self.cfg;
        let settings = cfg
            .maze
            .as_ref()
            .ok_or_else(|| RunError::Config("maze settings missing".into()))?;
        let (alpha, gamma) = (cfg.alpha(), cfg.gamma());
        let regularize = cfg.regularize_acting();
        let mut driver = RuleDriver::new(cfg, self.seed);
        let mut learner: Option<Learner> = None;
        let mut owned: Option<ScriptedOracle> = None;
        let mut global = 0usize;

        if cfg.method == Method::InstructrlFixed {
            let ens = fixed_ensemble(cfg);
            rec.push(Entry::RuleEvent(RuleEvent {
                episode: 0,
                phase: 0,
                iteration: 0,
                prompt: String::new(),
                raw: Vec::new(),
                rules: ens.rules.clone(),
                q_snapshot: None,
            }));
            self.prior.set(ens);
        }

        for (phase_idx, phase) in settings.phases.iter().enumerate() {
            if let Some(mode) = &phase.oracle_mode {
                let mut spec = cfg
                    .backend
                    .scripted
                    .clone()
                    .ok_or_else(|| RunError::Config("oracle override without a scripted spec".into()))?;
                spec.mode = mode.clone();
                owned = Some(ScriptedOracle::new(spec)?);
            }
            let backend: &dyn Backend = match &owned {
                Some(o) => o,
                None => base,
            };
            let maze = generate_maze(phase.maze_seed, settings.size, phase.semantics, settings.color_prob)?;
            let oracle = maze_oracle(&maze)?;
            let optimal = oracle.distance(&maze, maze.start);
            let feats = MazeFeaturizer::new(&maze);
            if phase_idx == 0 || !phase.carry_policy || learner.is_none() {
                learner = Some(Learner::fresh(cfg, &maze));
            }
            let learner = learner.as_mut().expect("initialized");
            if phase_idx > 0 && !phase.carry_rule && cfg.method != Method::InstructrlFixed {
                self.prior.clear();
            }
            // The backend may have changed; cached distributions are stale.
            self.prior.cache.clear();
            driver.pending = false;
            let mut pool: Vec<Episode> = Vec::new();
            let mut batch: Vec<Transition> = Vec::new();
            let cap = settings.cap();
            let exploration = phase.exploration.unwrap_or_else(|| cfg.exploration());

            for e in 0..phase.episodes {
                let eps = exploration.epsilon(e);
                let mut pos = maze.start;
                let mut previous: Vec<Direction> = Vec::new();
                let mut episode = Episode::new("maze", phase.maze_seed);
                let mut steps = 0u32;
                let (mut lambda, mut pi) = self.decision(backend, maze.color(pos), &previous)?;
                loop {
                    let s = maze.index(pos);
                    let action = if cfg.method == Method::OracleScripted {
                        sample_from_prior(pi.as_ref(), 4, &mut self.agent_rng)
                    } else {
                        let row = learner.values(s, &feats);
                        let scores = acting_scores(&row, pi.as_ref(), lambda, regularize)?;
                        act_epsilon_greedy(&scores, eps, &mut self.agent_rng)
                    };
                    let dir = Direction::from_id(action).expect("four actions");
                    let seen = maze.color(pos);
                    let (next, color, done) = maze_step(&maze, pos, dir);
                    steps += 1;
                    previous.push(dir);
                    let capped = !done && steps >= cap;
                    let reward = if done { maze_episode_reward(steps, true)? } else { 0.0 };
                    let (next_lambda, next_pi) = if done || capped {
                        (0.0, None)
                    } else {
                        self.decision(backend, color, &previous)?
                    };
                    let t = Transition {
                        state: s,
                        action,
                        reward,
                        next_state: maze.index(next),
                        done,
                    };
                    match learner {
                        Learner::Tabular(q) if cfg.method != Method::OracleScripted => {
                            regularized_q_update(q, &t, next_pi.as_ref(), next_lambda, gamma, alpha)?;
                        }
                        Learner::Linear(l) => {
                            batch.push(t.clone());
                            if batch.len() == l.batch_size {
                                linearq_update(l, &batch, &feats, gamma)?;
                                batch.clear();
                            }
                        }
                        Learner::Tabular(_) => {}
                    }
                    episode.push(seen.upper(), t);
                    if done || capped {
                        break;
                    }
                    pos = next;
                    lambda = next_lambda;
                    pi = next_pi;
                }

                pool.push(episode.clone());
                if pool.len() > driver.window {
                    pool.remove(0);
                }
                if cfg.record_episodes {
                    rec.push(Entry::Episode {
                        index: global,
                        phase: phase_idx,
                        episode,
                    });
                }
                global += 1;
                let phase_done = e + 1;

                let iteration = self.prior.iteration + 1;
                if let Some((prompt, gen)) =
                    driver.after_episode(cfg, backend, SampleFormat::Maze, &pool, phase_done, iteration)?
                {
                    self.prior.iteration = iteration;
                    rec.push(Entry::RuleEvent(RuleEvent {
                        episode: global,
                        phase: phase_idx,
                        iteration,
                        prompt,
                        raw: gen.raw,
                        rules: gen.ensemble.rules.clone(),
                        q_snapshot: match learner {
                            Learner::Tabular(q) => Some(q.snapshot()),
                            Learner::Linear(_) => None,
                        },
                    }));
                    self.prior.set(gen.ensemble);
                }

                if phase_done % cfg.eval_every() == 0 || phase_done == phase.episodes {
                    let ev = self.evaluate(backend, &maze, learner, &feats)?;
                    rec.push(Entry::Metric(MetricSample {
                        episode: global,
                        phase: phase_idx,
                        phase_episode: phase_done,
                        reward: ev.reward,
                        interpretability: None,
                        steps: Some(ev.steps),
                        optimal_steps: Some(optimal),
                    }));
                }
                drain_calls(backend, rec);
            }
        }
        Ok(())
    }

    fn evaluate(
        &mut self,
        backend: &dyn Backend,
        maze: &MazeSpec,
        learner: &Learner,
        feats: &MazeFeaturizer,
    ) -> Result<MazeEval, RunError> {
        let lambda = eval_lambda(self.cfg);
        let cap = self.cfg.maze.as_ref().map_or(4, |m| m.cap());
        let mut pos = maze.start;
        let mut previous = Vec::new();
        let mut steps = 0;
        while steps < cap {
            let pi = if self.prior.active() {
                self.pi(backend, maze.color(pos), &previous)?
            } else {
                None
            };
            let action = if self.cfg.method == Method::OracleScripted {
                pi.as_ref().map_or(0, ActionDistribution::mode)
            } else {
                let row = learner.values(maze.index(pos), feats);
                crate::learner::tabular::first_argmax(&regularized_scores(&row, pi.as_ref(), lambda)?)
            };
            let dir = Direction::from_id(action).expect("four actions");
            let (next, _, done) = maze_step(maze, pos, dir);
            steps += 1;
            previous.push(dir);
            if done {
                return Ok(MazeEval {
                    reward: maze_episode_reward(steps, true)?,
                    steps,
                    reached: true,
                });
            }
            pos = next;
        }
        Ok(MazeEval {
            reward: 0.0,
            steps,
            reached: false,
        })
    }
}
