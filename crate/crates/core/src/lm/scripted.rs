//! Deterministic stand-in for a language model.
//!
//! Rule-generation prompts are answered from their content: when the HIGH
//! block outscores the LOW block the oracle returns its configured ideal
//! rule; otherwise (corrupted labels, or no LOW block at all) it returns a
//! literal summary of what the HIGH episodes did. Update prompts are answered
//! by reading the rule embedded in the prompt, so a bad rule yields bad
//! actions and an unreadable rule yields "I am not sure.".

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::backend::{Backend, CompletionRequest};
use super::prompts::{HIGH_HEADER, LOW_HEADER};
use super::LmError;
use crate::envs::{Color, Direction, ListenerAction, Permutation, Semantics};
use crate::rng::SimRng;

pub const UNSURE: &str = "I am not sure.";
const PREAMBLE: &str = "Here is a rule based on the examples.";
const NOISE_RULE: &str = "I should always take the action that leads to the highest reward.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OracleMode {
    IdealSayselect,
    IdealMazeStandard,
    IdealMazeAdapted,
    IdealFixedSpeaker { perm: Permutation },
    Canned { rules: Vec<String> },
}

impl OracleMode {
    pub fn name(&self) -> &'static str {
        match self {
            OracleMode::IdealSayselect => "ideal_sayselect",
            OracleMode::IdealMazeStandard => "ideal_maze_standard",
            OracleMode::IdealMazeAdapted => "ideal_maze_adapted",
            OracleMode::IdealFixedSpeaker { .. } => "ideal_fixed_speaker",
            OracleMode::Canned { .. } => "canned",
        }
    }
}

fn default_confidence() -> f64 {
    0.92
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedOracleSpec {
    #[serde(flatten)]
    pub mode: OracleMode,
    #[serde(default)]
    pub noise_seed: u64,
    /// Probability that a generation answer is replaced by a vague rule.
    #[serde(default)]
    pub noise: f64,
    /// Probability mass placed on the label a rule selects.
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

impl Default for ScriptedOracleSpec {
    fn default() -> Self {
        Self::new(OracleMode::IdealSayselect)
    }
}

impl ScriptedOracleSpec {
    pub fn new(mode: OracleMode) -> Self {
        Self {
            mode,
            noise_seed: 0,
            noise: 0.0,
            confidence: default_confidence(),
        }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if let OracleMode::Canned { rules } = &self.mode {
            if rules.is_empty() {
                return Err(LmError::Config("canned oracle needs at least one rule".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(LmError::Config(format!("noise {} not in [0,1]", self.noise)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(LmError::Config(format!(
                "confidence {} not in (0,1)",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// The rule an ideal speaker of each mode would state.
pub fn ideal_rule(mode: &OracleMode) -> Option<String> {
    match mode {
        OracleMode::IdealSayselect => {
            Some("I should choose the same action as the observation.".to_string())
        }
        OracleMode::IdealFixedSpeaker { perm } => {
            let inv = perm.inverse();
            let lines: Vec<String> = (1..=5u8)
                .map(|m| format!("I should choose action {} when observation is {m}.", inv.apply(m)))
                .collect();
            Some(lines.join("\n"))
        }
        OracleMode::IdealMazeStandard => Some(maze_rule(Semantics::Standard)),
        OracleMode::IdealMazeAdapted => Some(maze_rule(Semantics::Adapted)),
        OracleMode::Canned { .. } => None,
    }
}

fn maze_rule(s: Semantics) -> String {
    let (b1, b2) = s.blue_pattern();
    format!(
        "I should take {} when I observe RED. I should take {} then {} when I observe BLUE.",
        s.red_action().upper(),
        b1.upper(),
        b2.upper()
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PromptKind {
    SaySelectGen,
    MazeGen,
    SaySelectUpdate,
    MazeUpdate,
    OtherGen,
}

fn classify(prompt: &str) -> PromptKind {
    if prompt.contains("\nCURRENT OBSERVATION:\n") {
        PromptKind::MazeUpdate
    } else if prompt.contains("\nAgent 1 selected ") && prompt.ends_with("So I should select") {
        PromptKind::SaySelectUpdate
    } else if prompt.contains(HIGH_HEADER) && prompt.contains("solve a maze") {
        PromptKind::MazeGen
    } else if prompt.contains(HIGH_HEADER) && prompt.contains("AGENT 2") {
        PromptKind::SaySelectGen
    } else {
        PromptKind::OtherGen
    }
}

pub struct ScriptedOracle {
    spec: ScriptedOracleSpec,
}

impl ScriptedOracle {
    pub fn new(spec: ScriptedOracleSpec) -> Result<Self, LmError> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &ScriptedOracleSpec {
        &self.spec
    }

    /// Answer `prompt`; `sample_index` only matters for canned lists and noise.
    pub fn respond(&self, prompt: &str, sample_index: u32) -> Result<String, LmError> {
        match classify(prompt) {
            PromptKind::SaySelectUpdate => {
                let (rule, msg) = parse_sayselect_update(prompt)?;
                Ok(match interpret_sayselect_rule(rule, msg) {
                    Some(a) => ListenerAction::from_id(a).expect("valid id").label(),
                    None => UNSURE.to_string(),
                })
            }
            PromptKind::MazeUpdate => {
                let (rule, color) = parse_maze_update(prompt)?;
                Ok(match interpret_maze_rule(rule, color) {
                    Some(d) => format!("NEXT ACTION: {}", d.title()),
                    None => UNSURE.to_string(),
                })
            }
            kind => self.respond_gen(kind, prompt, sample_index),
        }
    }

    fn respond_gen(&self, kind: PromptKind, prompt: &str, sample_index: u32) -> Result<String, LmError> {
        if let OracleMode::Canned { rules } = &self.spec.mode {
            return Ok(rules[sample_index as usize % rules.len()].clone());
        }
        let sayselect_mode = matches!(
            self.spec.mode,
            OracleMode::IdealSayselect | OracleMode::IdealFixedSpeaker { .. }
        );
        match (kind, sayselect_mode) {
            (PromptKind::SaySelectGen, true) | (PromptKind::MazeGen, false) => {}
            _ => {
                return Err(LmError::UnsupportedPrompt(format!(
                    "{} oracle cannot answer this prompt",
                    self.spec.mode.name()
                )))
            }
        }
        if self.spec.noise > 0.0 {
            let mut rng = SimRng::stream(self.spec.noise_seed ^ u64::from(sample_index), prompt);
            if rng.bernoulli(self.spec.noise) {
                return Ok(format!("{PREAMBLE}\n{NOISE_RULE}"));
            }
        }
        let blocks = parse_blocks(prompt);
        let rule = if blocks.coherent() {
            ideal_rule(&self.spec.mode).expect("ideal modes have a rule")
        } else if kind == PromptKind::SaySelectGen {
            summarize_sayselect(&blocks.high)
        } else {
            summarize_maze(&blocks.high)
        };
        Ok(format!("{PREAMBLE}\n{rule}"))
    }

    /// Index into `labels` of the label the embedded rule selects.
    fn chosen_label(&self, prompt: &str, labels: &[String]) -> Result<Option<usize>, LmError> {
        let label = match classify(prompt) {
            PromptKind::SaySelectUpdate => {
                let (rule, msg) = parse_sayselect_update(prompt)?;
                interpret_sayselect_rule(rule, msg)
                    .map(|a| ListenerAction::from_id(a).expect("valid id").label())
            }
            PromptKind::MazeUpdate => {
                let (rule, color) = parse_maze_update(prompt)?;
                interpret_maze_rule(rule, color).map(|d| d.title().to_string())
            }
            _ => {
                return Err(LmError::UnsupportedPrompt(
                    "label scores are only defined for update prompts".into(),
                ))
            }
        };
        Ok(label.and_then(|l| labels.iter().position(|x| x.eq_ignore_ascii_case(&l))))
    }
}

impl Backend for ScriptedOracle {
    fn id(&self) -> String {
        format!("scripted:{}", self.spec.mode.name())
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, LmError> {
        self.respond(req.prompt, req.sample_index)
    }

    fn label_logprobs(&self, prompt: &str, labels: &[String]) -> Result<Option<Vec<f64>>, LmError> {
        let k = labels.len();
        if k == 0 {
            return Err(LmError::Config("no labels".into()));
        }
        let lp = match self.chosen_label(prompt, labels)? {
            Some(i) if k > 1 => {
                let rest = ((1.0 - self.spec.confidence) / (k - 1) as f64).ln();
                let mut v = vec![rest; k];
                v[i] = self.spec.confidence.ln();
                v
            }
            _ => vec![(1.0 / k as f64).ln(); k],
        };
        Ok(Some(lp))
    }
}

fn parse_sayselect_update(prompt: &str) -> Result<(&str, u8), LmError> {
    let idx = prompt
        .rfind("\nAgent 1 selected ")
        .ok_or_else(|| LmError::UnsupportedPrompt("missing observation line".into()))?;
    let rule = &prompt[..idx];
    let tail = &prompt[idx + "\nAgent 1 selected ".len()..];
    let obs = tail.split('.').next().unwrap_or("").trim();
    let msg: u8 = obs
        .parse()
        .ok()
        .filter(|m| (1..=5).contains(m))
        .ok_or_else(|| LmError::UnsupportedPrompt(format!("observation {obs:?}")))?;
    Ok((rule, msg))
}

fn parse_maze_update(prompt: &str) -> Result<(&str, Color), LmError> {
    let rule_start = prompt
        .find("\nRULE:\n")
        .ok_or_else(|| LmError::UnsupportedPrompt("missing RULE".into()))?
        + "\nRULE:\n".len();
    let rule_end = prompt
        .find("\nPREVIOUS ACTIONS:\n")
        .ok_or_else(|| LmError::UnsupportedPrompt("missing PREVIOUS ACTIONS".into()))?;
    let obs_start = prompt
        .find("\nCURRENT OBSERVATION:\n")
        .expect("classified as maze update")
        + "\nCURRENT OBSERVATION:\n".len();
    let obs = prompt[obs_start..].lines().next().unwrap_or("").trim();
    let color = match obs {
        "WHITE" => Color::White,
        "RED" => Color::Red,
        "BLUE" => Color::Blue,
        other => return Err(LmError::UnsupportedPrompt(format!("observation {other:?}"))),
    };
    if rule_end < rule_start {
        return Err(LmError::UnsupportedPrompt("RULE block out of order".into()));
    }
    Ok((&prompt[rule_start..rule_end], color))
}

fn sentences(text: &str) -> impl Iterator<Item = &str> {
    text.split(['.', ';', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

fn words(sentence: &str) -> Vec<String> {
    sentence
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

/// Listener action id a SaySelect rule prescribes for `message`.
pub fn interpret_sayselect_rule(rule: &str, message: u8) -> Option<usize> {
    let lower = rule.to_ascii_lowercase();
    const IDENTITY: [&str; 4] = [
        "same action as",
        "same number as",
        "same ball as",
        "same as the observation",
    ];
    if IDENTITY.iter().any(|p| lower.contains(p)) {
        return Some(message as usize - 1);
    }
    for s in sentences(&lower) {
        let w = words(s);
        let act = w.iter().enumerate().find_map(|(i, t)| {
            if t != "action" {
                return None;
            }
            let next = w.get(i + 1)?;
            let id = match next.as_str() {
                "quit" => 5,
                d => match d.parse::<usize>() {
                    Ok(n) if (1..=5).contains(&n) => n - 1,
                    _ => return None,
                },
            };
            Some((i, id))
        });
        let obs = w.iter().position(|t| t == "observation" || t == "observations");
        let (Some((act_pos, act_id)), Some(obs_pos)) = (act, obs) else {
            continue;
        };
        let segment = if obs_pos > act_pos {
            &w[obs_pos..]
        } else {
            &w[obs_pos..act_pos]
        };
        if segment.iter().any(|t| t.parse::<u8>().ok() == Some(message)) {
            return Some(act_id);
        }
    }
    None
}

/// First direction a maze rule prescribes on a cell of `color`.
pub fn interpret_maze_rule(rule: &str, color: Color) -> Option<Direction> {
    let target = color.upper().to_ascii_lowercase();
    for s in sentences(rule) {
        let w = words(s);
        if !w.contains(&target) {
            continue;
        }
        // Full names only: single letters like the "s" in "agent's" are not moves.
        if let Some(d) = w.iter().filter(|t| t.len() > 1).find_map(|t| Direction::parse(t)) {
            return Some(d);
        }
    }
    None
}

struct Blocks {
    high: Vec<String>,
    low: Vec<String>,
}

impl Blocks {
    fn coherent(&self) -> bool {
        match (mean_reward(&self.high), mean_reward(&self.low)) {
            (Some(h), Some(l)) => h > l,
            _ => false,
        }
    }
}

fn parse_blocks(prompt: &str) -> Blocks {
    let mut high = Vec::new();
    let mut low = Vec::new();
    let mut target: Option<&mut Vec<String>> = None;
    for line in prompt.lines() {
        if line == HIGH_HEADER {
            target = Some(&mut high);
        } else if line == LOW_HEADER {
            target = Some(&mut low);
        } else if line.contains("REWARD: ") && (line.starts_with("OBSERVATION:") || line.starts_with('[')) {
            if let Some(t) = target.as_deref_mut() {
                t.push(line.to_string());
            }
        } else {
            target = None;
        }
    }
    Blocks { high, low }
}

fn mean_reward(lines: &[String]) -> Option<f64> {
    let rewards: Vec<f64> = lines
        .iter()
        .filter_map(|l| l.rsplit("REWARD: ").next()?.trim().parse().ok())
        .collect();
    if rewards.is_empty() {
        None
    } else {
        Some(rewards.iter().sum::<f64>() / rewards.len() as f64)
    }
}

fn bracket_after<'a>(line: &'a str, key: &str) -> Vec<&'a str> {
    let Some(start) = line.find(key) else {
        return Vec::new();
    };
    let rest = &line[start + key.len()..];
    let Some(open) = rest.find('[') else {
        return Vec::new();
    };
    let Some(close) = rest.find(']') else {
        return Vec::new();
    };
    rest[open + 1..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

fn join_or(items: &[String]) -> String {
    match items.len() {
        0 => String::new(),
        1 => items[0].clone(),
        n => format!("{} or {}", items[..n - 1].join(", "), items[n - 1]),
    }
}

/// What the listener did in the given episodes, one sentence per action.
fn summarize_sayselect(lines: &[String]) -> String {
    let labels = crate::envs::sayselect::listener_labels();
    let mut counts: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for line in lines {
        let obs = bracket_after(line, "OBSERVATION:");
        let acts = bracket_after(line, "ACTION:");
        for (o, a) in obs.iter().zip(&acts) {
            let (Ok(m), Some(ai)) = (o.parse::<u8>(), labels.iter().position(|l| l == a)) else {
                continue;
            };
            counts.entry(m).or_insert_with(|| vec![0; labels.len()])[ai] += 1;
        }
    }
    if counts.is_empty() {
        return "I should quit.".to_string();
    }
    let mut by_action: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (m, c) in &counts {
        let mut best = 0;
        for i in 1..c.len() {
            if c[i] > c[best] {
                best = i;
            }
        }
        by_action.entry(best).or_default().push(m.to_string());
    }
    by_action
        .iter()
        .map(|(a, ms)| format!("I should choose action {} when observation is {}.", labels[*a], join_or(ms)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Most frequent move on each colored cell in the given trajectories.
fn summarize_maze(lines: &[String]) -> String {
    let mut counts: BTreeMap<&'static str, [usize; 4]> = BTreeMap::new();
    for line in lines {
        let mut rest = line.as_str();
        while let Some(open) = rest.find('(') {
            let Some(close) = rest[open..].find(')') else {
                break;
            };
            let pair = &rest[open + 1..open + close];
            rest = &rest[open + close + 1..];
            let mut it = pair.split(',').map(str::trim);
            let (Some(c), Some(d)) = (it.next(), it.next()) else {
                continue;
            };
            let Some(dir) = Direction::parse(d) else {
                continue;
            };
            let key = match c {
                "RED" => "RED",
                "BLUE" => "BLUE",
                _ => continue,
            };
            counts.entry(key).or_insert([0; 4])[dir.id()] += 1;
        }
    }
    if counts.is_empty() {
        return "I should keep exploring the maze.".to_string();
    }
    // RED before BLUE to match the ideal rule's sentence order.
    ["RED", "BLUE"]
        .iter()
        .filter_map(|c| {
            let v = counts.get(c)?;
            let mut best = 0;
            for i in 1..4 {
                if v[i] > v[best] {
                    best = i;
                }
            }
            let d = Direction::from_id(best).expect("four directions");
            Some(format!("I should take the {} action when I observe {c}.", d.upper()))
        })
        .collect::<Vec<_>>()
        .join(" ")
}
