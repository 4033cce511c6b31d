//! Run records, persisted as line-delimited JSON.
//!
//! The first line is a header carrying the schema version, seed and config
//! snapshot. Every later line is one [`Entry`], in the order it happened.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{EnvKind, ExperimentConfig, Method};
use crate::episode::{Episode, Rule};
use crate::lm::CallRecord;

pub const SCHEMA: &str = "pllb.run_record";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub version: u32,
    pub seed: u64,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEvent {
    /// Episodes completed (across phases) when generation ran.
    pub episode: usize,
    pub phase: usize,
    pub iteration: u32,
    pub prompt: String,
    pub raw: Vec<String>,
    pub rules: Vec<Rule>,
    /// Learner Q-table at generation time, when the learner is tabular.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "state_keys")]
    pub q_snapshot: Option<BTreeMap<usize, Vec<f64>>>,
}

/// Integer-keyed maps inside tagged entries are buffered by serde, which
/// loses the string-to-integer key coercion; convert explicitly.
mod state_keys {
    use std::collections::BTreeMap;

    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        v: &Option<BTreeMap<usize, Vec<f64>>>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        match v {
            Some(m) => s.collect_map(m.iter().map(|(k, row)| (k.to_string(), row))),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Option<BTreeMap<usize, Vec<f64>>>, D::Error> {
        let Some(raw) = Option::<BTreeMap<String, Vec<f64>>>::deserialize(d)? else {
            return Ok(None);
        };
        raw.into_iter()
            .map(|(k, row)| k.parse().map(|k| (k, row)).map_err(D::Error::custom))
            .collect::<Result<_, _>>()
            .map(Some)
    }
}

/// Greedy evaluation at a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    /// Episodes completed (across phases).
    pub episode: usize,
    pub phase: usize,
    /// Episodes completed within the phase.
    pub phase_episode: usize,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpretability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_steps: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Entry {
    Episode {
        index: usize,
        phase: usize,
        episode: Episode,
    },
    RuleEvent(RuleEvent),
    Metric(MetricSample),
    LmCall { call: CallRecord },
    Status {
        complete: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub header: Header,
    pub entries: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename = "header")]
struct HeaderLine {
    #[serde(flatten)]
    header: Header,
}

impl RunRecord {
    pub fn new(config: ExperimentConfig, seed: u64) -> Self {
        Self {
            header: Header {
                schema: SCHEMA.to_string(),
                version: SCHEMA_VERSION,
                seed,
                config,
            },
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, e: Entry) {
        self.entries.push(e);
    }

    pub fn seed(&self) -> u64 {
        self.header.seed
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.header.config
    }

    pub fn env(&self) -> EnvKind {
        self.header.config.env
    }

    pub fn method(&self) -> Method {
        self.header.config.method
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Episode> {
        self.entries.iter().filter_map(|e| match e {
            Entry::Episode { episode, .. } => Some(episode),
            _ => None,
        })
    }

    pub fn rule_events(&self) -> impl Iterator<Item = &RuleEvent> {
        self.entries.iter().filter_map(|e| match e {
            Entry::RuleEvent(r) => Some(r),
            _ => None,
        })
    }

    pub fn metrics(&self) -> impl Iterator<Item = &MetricSample> {
        self.entries.iter().filter_map(|e| match e {
            Entry::Metric(m) => Some(m),
            _ => None,
        })
    }

    /// `(complete, error)` from the trailing status line, if present.
    pub fn status(&self) -> Option<(bool, Option<&str>)> {
        self.entries.iter().rev().find_map(|e| match e {
            Entry::Status { complete, error } => Some((*complete, error.as_deref())),
            _ => None,
        })
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.status(), Some((true, _)))
    }

    /// The last rule text generated in the run.
    pub fn final_rules(&self) -> Vec<&Rule> {
        self.rule_events()
            .last()
            .map(|e| e.rules.iter().collect())
            .unwrap_or_default()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), RecordError> {
        let head = HeaderLine {
            header: self.header.clone(),
        };
        serde_json::to_writer(&mut w, &head).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, RecordError> {
        let mut lines = r.lines().enumerate();
        let header = loop {
            let Some((i, line)) = lines.next() else {
                return Err(RecordError::Format {
                    line: 1,
                    msg: "missing header".into(),
                });
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let h: HeaderLine =
                serde_json::from_str(&line).map_err(|source| RecordError::Json { line: i + 1, source })?;
            if h.header.schema != SCHEMA || h.header.version > SCHEMA_VERSION {
                return Err(RecordError::Format {
                    line: i + 1,
                    msg: format!(
                        "unsupported schema {} v{}",
                        h.header.schema, h.header.version
                    ),
                });
            }
            break h.header;
        };
        let mut entries = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(&line).map_err(|source| RecordError::Json { line: i + 1, source })?,
            );
        }
        Ok(Self { header, entries })
    }

    pub fn from_jsonl_str(s: &str) -> Result<Self, RecordError> {
        Self::read_jsonl(s.as_bytes())
    }

    pub fn read_path(path: &std::path::Path) -> Result<Self, RecordError> {
        let f = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }

    pub fn write_path(&self, path: &std::path::Path) -> Result<(), RecordError> {
        let f = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(f))
    }
}
