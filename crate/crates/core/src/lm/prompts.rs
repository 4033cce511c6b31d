//! Prompt templates for rule generation (`*_gen`) and rule-conditioned
//! action selection (`*_update`), plus the episode text formats that fill
//! their sample slots.

use serde::{Deserialize, Serialize};

use crate::envs::{Color, Direction, ListenerAction};
use crate::episode::{ContrastSet, Episode, PromptVariant};

/// Cap on the action history shown in the maze update prompt.
pub const MAX_PREVIOUS_ACTIONS: usize = 20;

pub const HIGH_HEADER: &str = "HIGH REWARD EXAMPLES:";
pub const LOW_HEADER: &str = "LOW REWARD EXAMPLES:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    SayselectGen,
    MazeGen,
    BuilderGen,
    BirdsGen,
    GraspGen,
    SayselectUpdate,
    MazeUpdate,
    BuilderUpdate,
    BirdsUpdate,
    GraspUpdate,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::SayselectGen,
        TemplateId::MazeGen,
        TemplateId::BuilderGen,
        TemplateId::BirdsGen,
        TemplateId::GraspGen,
        TemplateId::SayselectUpdate,
        TemplateId::MazeUpdate,
        TemplateId::BuilderUpdate,
        TemplateId::BirdsUpdate,
        TemplateId::GraspUpdate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::SayselectGen => "sayselect_gen",
            TemplateId::MazeGen => "maze_gen",
            TemplateId::BuilderGen => "builder_gen",
            TemplateId::BirdsGen => "birds_gen",
            TemplateId::GraspGen => "grasp_gen",
            TemplateId::SayselectUpdate => "sayselect_update",
            TemplateId::MazeUpdate => "maze_update",
            TemplateId::BuilderUpdate => "builder_update",
            TemplateId::BirdsUpdate => "birds_update",
            TemplateId::GraspUpdate => "grasp_update",
        }
    }

    pub fn is_gen(self) -> bool {
        matches!(
            self,
            TemplateId::SayselectGen
                | TemplateId::MazeGen
                | TemplateId::BuilderGen
                | TemplateId::BirdsGen
                | TemplateId::GraspGen
        )
    }

    /// Marker that a well-formed rule response starts with.
    pub fn rule_prefix(self) -> RulePrefix {
        match self {
            TemplateId::BuilderGen => RulePrefix::After("RULES:"),
            TemplateId::BirdsGen | TemplateId::GraspGen => RulePrefix::After("RULE:"),
            _ => RulePrefix::From("I should"),
        }
    }

    /// Body text. Only the SaySelect generation prompt has variants; every
    /// other template renders the same text for all of them.
    pub fn body(self, variant: PromptVariant) -> &'static str {
        match (self, variant) {
            (TemplateId::SayselectGen, PromptVariant::Original) => SAYSELECT_GEN,
            (TemplateId::SayselectGen, PromptVariant::NoFormat) => SAYSELECT_GEN_NO_FORMAT,
            (TemplateId::SayselectGen, PromptVariant::LowContext) => SAYSELECT_GEN_LOW_CONTEXT,
            (TemplateId::SayselectGen, PromptVariant::Rephrase) => SAYSELECT_GEN_REPHRASE,
            (TemplateId::MazeGen, _) => MAZE_GEN,
            (TemplateId::BuilderGen, _) => BUILDER_GEN,
            (TemplateId::BirdsGen, _) => BIRDS_GEN,
            (TemplateId::GraspGen, _) => GRASP_GEN,
            (TemplateId::SayselectUpdate, _) => SAYSELECT_UPDATE,
            (TemplateId::MazeUpdate, _) => MAZE_UPDATE,
            (TemplateId::BuilderUpdate, _) => BUILDER_UPDATE,
            (TemplateId::BirdsUpdate, _) => BIRDS_UPDATE,
            (TemplateId::GraspUpdate, _) => GRASP_UPDATE,
        }
    }
}

/// How the rule is cut out of a raw response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RulePrefix {
    /// Keep the marker and everything after it.
    From(&'static str),
    /// Keep only the text after the marker.
    After(&'static str),
}

const SAYSELECT_GEN: &str = "You will be given a list of (OBSERVATION, ACTION, REWARD) examples collected from two agents learning to solve a task. Possible ACTIONS an agent can take are: 1, 2, 3, 4, 5, and quit. Each OBSERVATION describes the ordered sequence of actions that AGENT 1 picks, and each ACTION describes the ACTION that AGENT 2 picks based on the given OBSERVATION.
The examples are separated into HIGH REWARD and LOW REWARD examples.
{samples}
Output a language rule that best summarizes the strategy AGENT 2 should follow to receive HIGH REWARD, not LOW REWARD, based on the examples. Start the instruction with the prefix 'I should'.";

const SAYSELECT_GEN_NO_FORMAT: &str = "You will be given a list of (OBSERVATION, ACTION, REWARD) examples collected from two agents learning to solve a task. Possible ACTIONS an agent can take are: 1, 2, 3, 4, 5, and quit. Each OBSERVATION describes the ordered sequence of actions that AGENT 1 picks, and each ACTION describes the ACTION that AGENT 2 picks based on the given OBSERVATION. The examples are separated into HIGH REWARD and LOW REWARD examples.
{samples}
Output a language rule that best summarizes the strategy AGENT 2 should follow to receive HIGH REWARD, not LOW REWARD, based on the examples.";

const SAYSELECT_GEN_LOW_CONTEXT: &str = "You will be given a list of (OBSERVATION, ACTION, REWARD) examples collected from two agents learning to solve a task.
{samples}
Output a language rule that best summarizes the strategy AGENT 2 should follow to receive HIGH REWARD, not LOW REWARD, based on the examples. Start the instruction with the prefix 'I should'.";

const SAYSELECT_GEN_REPHRASE: &str = "You've been given a list of (OBSERVATION, ACTION, REWARD) triples  from two agents learning to solve a task. Possible ACTIONS each agent might take are: 1, 2, 3, 4, 5, and quit. Each OBSERVATION refers to the ordered sequence of actions that AGENT 1 selects, and each ACTION refers to the ACTION that AGENT 2 selects based on the seen OBSERVATION. The examples are divided into HIGH REWARD and LOW REWARD examples.
{samples}
Describe the strategy AGENT 2 uses in HIGH REWARD examples that differs from LOW REWARD examples. Start it with  'I should'.";

const MAZE_GEN: &str = "You will be given a list of example (OBSERVATION, ACTION) trajectories collected from an AGENT learning to solve a maze.
Each trajectory receives a REWARD.
Possibles OBSERVATIONS an agent see are: WHITE, RED, BLUE
Possible ACTIONS an agent can take are: NORTH, SOUTH, EAST, WEST.
The examples are separated into HIGH REWARD and LOW REWARD examples
{samples}
Output a language rule that best summarizes the strategy the AGENT should follow when picking a sequence of ACTIONS to solve the maze and receive HIGH REWARD, not LOW REWARD, based on the examples.
Start the instruction with the prefix 'I should'.";

const BUILDER_GEN: &str = "There are two agents. The goal of Agent 1 is to provide instructions to Agent 2 that helps Agent 2 to successfully recreate the image. You will be given a list of (ORIGINAL, AGENT 1 INSTRUCTION, REWARD) values where ORIGINAL is the original description of an image, INSTRUCTION is the instruction provided by Agent 1 to Agent 2, and REWARD is the reward Agent 2 receives when trying to re-create the image (higher is better).
The examples are separated into HIGH REWARD and LOW REWARD examples.
{samples}
Based on the examples above, output a  list of 2 RULES for Agent 1 to follow when generating INSTRUCTION in order to receive HIGH REWARD, instead of LOW REWARD.
Write the rules after the prefix RULES:";

const BIRDS_GEN: &str = "The top row of three images have the following HIGH REWARD descriptions:
{high_samples}
The bottom row of three images have the following LOW REWARD descriptions:
{low_samples}
Provide a rule I should follow in order to provide image descriptions with HIGH REWARD, not LOW REWARD. Provide the rule after the prefix RULE:";

const GRASP_GEN: &str = "The top image shows a grasp keypoint with HIGH REWARD. The bottom image shows a grasp keypoint with LOW REWARD. Based on these images, provide a rule the robot should follow in order to select a grasp keypoint that results in HIGH REWARD, not LOW REWARD. Provide the rule after the prefix RULE:";

const SAYSELECT_UPDATE: &str = "{rule}
Agent 1 selected {observation}. So I should select";

const MAZE_UPDATE: &str = "You are an agent solving a maze following a provided RULE. You will be given a list of PREVIOUS ACTIONS and the CURRENT OBSERVATION. Follow the RULE to select your NEXT ACTION (East, West, South, North):

RULE:
{rule}
PREVIOUS ACTIONS:
{previous_actions}
CURRENT OBSERVATION:
{observation}
What is the NEXT ACTION you should take? Output one of (East, West, South, North) after the prefix NEXT ACTION:.";

const BUILDER_UPDATE: &str = "You will be given a DESCRIPTION of an image. Your goal is to use this description to provide a short INSTRUCTION to help someone else, who cannot see the image, accurately re-construct it. You will also be given a list of RULES you must follow when providing the instruction.

DESCRIPTION:
{observation}
RULES:
{rule}
Please provide a short instruction following the prefix INSTRUCTION:";

const BIRDS_UPDATE: &str = "Provide a one-sentence description of this image, using the following RULES:
{rule}";

const GRASP_UPDATE: &str =
    "Provide a keypoint in the image where the robot should grasp the object, following the RULE: {rule}.";

/// Values for the named slots of a template. Unused slots are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Slots<'a> {
    pub samples: &'a str,
    pub high_samples: &'a str,
    pub low_samples: &'a str,
    pub rule: &'a str,
    pub observation: &'a str,
    pub previous_actions: &'a str,
}

impl Slots<'static> {
    /// Bracketed slot names; the reference renders use these.
    pub fn placeholders() -> Self {
        Slots {
            samples: "[samples]",
            high_samples: "[high reward samples]",
            low_samples: "[low reward samples]",
            rule: "[rule]",
            observation: "[observation]",
            previous_actions: "[previous actions]",
        }
    }
}

/// `{template}__{variant}.txt`
pub fn golden_file_name(id: TemplateId, variant: PromptVariant) -> String {
    format!("{}__{}.txt", id.as_str(), variant.as_str())
}

/// Fill every `{slot}` in one left-to-right pass, so slot values are never
/// themselves scanned for slots.
pub fn render_template(id: TemplateId, variant: PromptVariant, slots: &Slots<'_>) -> String {
    let body = id.body(variant);
    let mut out = String::with_capacity(body.len() + 256);
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').expect("unterminated slot in template");
        let value = match &after[..close] {
            "samples" => slots.samples,
            "high_samples" => slots.high_samples,
            "low_samples" => slots.low_samples,
            "rule" => slots.rule,
            "observation" => slots.observation,
            "previous_actions" => slots.previous_actions,
            other => panic!("unknown slot {other}"),
        };
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    out
}

/// Episode text format for a task's sample blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFormat {
    SaySelect,
    Maze,
}

impl SampleFormat {
    pub fn gen_template(self) -> TemplateId {
        match self {
            SampleFormat::SaySelect => TemplateId::SayselectGen,
            SampleFormat::Maze => TemplateId::MazeGen,
        }
    }

    pub fn update_template(self) -> TemplateId {
        match self {
            SampleFormat::SaySelect => TemplateId::SayselectUpdate,
            SampleFormat::Maze => TemplateId::MazeUpdate,
        }
    }

    /// Action label as it appears in sample text.
    pub fn action_label(self, action: usize) -> String {
        match self {
            SampleFormat::SaySelect => ListenerAction::from_id(action)
                .map(|a| a.label())
                .unwrap_or_else(|_| format!("?{action}")),
            SampleFormat::Maze => Direction::from_id(action)
                .map(|d| d.upper().to_string())
                .unwrap_or_else(|| format!("?{action}")),
        }
    }

    /// One episode on one line.
    pub fn format_episode(self, ep: &Episode) -> String {
        let reward = format_reward(ep.total_reward);
        match self {
            SampleFormat::SaySelect => {
                let obs = ep.observations.join(", ");
                let acts: Vec<String> = ep
                    .transitions
                    .iter()
                    .map(|t| self.action_label(t.action))
                    .collect();
                format!(
                    "OBSERVATION: [{obs}], ACTION: [{}], REWARD: {reward}",
                    acts.join(", ")
                )
            }
            SampleFormat::Maze => {
                let pairs: Vec<String> = ep
                    .observations
                    .iter()
                    .zip(&ep.transitions)
                    .map(|(o, t)| format!("({o}, {})", self.action_label(t.action)))
                    .collect();
                format!("[{}], REWARD: {reward}", pairs.join(", "))
            }
        }
    }

    /// HIGH block, then LOW block when the low side is nonempty.
    pub fn format_samples(self, contrast: &ContrastSet) -> String {
        let mut out = String::from(HIGH_HEADER);
        for ep in &contrast.high {
            out.push('\n');
            out.push_str(&self.format_episode(ep));
        }
        if !contrast.low.is_empty() {
            out.push('\n');
            out.push_str(LOW_HEADER);
            for ep in &contrast.low {
                out.push('\n');
                out.push_str(&self.format_episode(ep));
            }
        }
        out
    }
}

/// Integers print bare; other rewards print with four decimals.
pub fn format_reward(r: f64) -> String {
    if r.fract() == 0.0 && r.abs() < 1e15 {
        format!("{}", r as i64)
    } else {
        format!("{r:.4}")
    }
}

pub fn render_gen_prompt(format: SampleFormat, contrast: &ContrastSet, variant: PromptVariant) -> String {
    let samples = format.format_samples(contrast);
    render_template(
        format.gen_template(),
        variant,
        &Slots {
            samples: &samples,
            ..Slots::default()
        },
    )
}

pub fn render_sayselect_update(rule: &str, message: u8) -> String {
    let obs = message.to_string();
    render_template(
        TemplateId::SayselectUpdate,
        PromptVariant::Original,
        &Slots {
            rule,
            observation: &obs,
            ..Slots::default()
        },
    )
}

/// `previous` is the full action history; only the last
/// [`MAX_PREVIOUS_ACTIONS`] are shown.
pub fn render_maze_update(rule: &str, previous: &[Direction], observation: Color) -> String {
    let prev = format_previous_actions(previous);
    render_template(
        TemplateId::MazeUpdate,
        PromptVariant::Original,
        &Slots {
            rule,
            observation: observation.upper(),
            previous_actions: &prev,
            ..Slots::default()
        },
    )
}

pub fn format_previous_actions(previous: &[Direction]) -> String {
    let start = previous.len().saturating_sub(MAX_PREVIOUS_ACTIONS);
    let shown = &previous[start..];
    if shown.is_empty() {
        "None".to_string()
    } else {
        shown.iter().map(|d| d.title()).collect::<Vec<_>>().join(", ")
    }
}

/// Labels offered to the model in each update prompt.
pub fn update_labels(format: SampleFormat) -> Vec<String> {
    match format {
        SampleFormat::SaySelect => crate::envs::sayselect::listener_labels(),
        SampleFormat::Maze => Direction::ALL.iter().map(|d| d.title().to_string()).collect(),
    }
}
