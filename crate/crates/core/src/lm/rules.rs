use serde::{Deserialize, Serialize};

use super::backend::{Backend, CompletionRequest};
use super::prompts::RulePrefix;
use super::LmError;
use crate::episode::{PromptVariant, Rule, RuleEnsemble};
use crate::learner::ActionDistribution;

/// Provenance and limits for one rule-generation event.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleRequest {
    pub iteration: u32,
    pub variant: PromptVariant,
    pub temperature: f64,
    pub max_retries: u32,
    pub max_tokens: u32,
    pub prefix: RulePrefix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRules {
    pub ensemble: RuleEnsemble,
    /// Every raw response, retries included, in request order.
    pub raw: Vec<String>,
}

/// Cut the rule out of a raw response.
pub fn extract_rule(raw: &str, prefix: RulePrefix) -> Option<String> {
    let text = match prefix {
        RulePrefix::From(p) => &raw[raw.find(p)?..],
        RulePrefix::After(p) => &raw[raw.find(p)? + p.len()..],
    };
    let text = text.trim();
    if text.is_empty() || text == prefix_str(prefix) {
        None
    } else {
        Some(text.to_string())
    }
}

fn prefix_str(p: RulePrefix) -> &'static str {
    match p {
        RulePrefix::From(s) | RulePrefix::After(s) => s,
    }
}

/// Draw `k` rules. A response without the prefix is retried; once retries
/// run out the raw text is kept and flagged malformed.
pub fn generate_rules(
    backend: &dyn Backend,
    prompt: &str,
    k: usize,
    req: &RuleRequest,
) -> Result<GeneratedRules, LmError> {
    if k == 0 {
        return Err(LmError::Config("ensemble size must be at least 1".into()));
    }
    let per_rule = req.max_retries + 1;
    let mut rules = Vec::with_capacity(k);
    let mut raw = Vec::new();
    for i in 0..k {
        let mut last = String::new();
        let mut extracted = None;
        for attempt in 0..per_rule {
            let text = backend.complete(&CompletionRequest {
                prompt,
                temperature: req.temperature,
                max_tokens: req.max_tokens,
                sample_index: i as u32 * per_rule + attempt,
            })?;
            raw.push(text.clone());
            extracted = extract_rule(&text, req.prefix);
            last = text;
            if extracted.is_some() {
                break;
            }
        }
        let (text, malformed) = match extracted {
            Some(t) => (t, false),
            None => {
                log::warn!("keeping malformed rule after {per_rule} attempts");
                let t = last.trim();
                (
                    if t.is_empty() { "(empty response)".to_string() } else { t.to_string() },
                    true,
                )
            }
        };
        rules.push(Rule {
            text,
            iteration: req.iteration,
            backend_id: backend.id(),
            prompt_variant: req.variant,
            temperature: req.temperature,
            malformed,
        });
    }
    Ok(GeneratedRules {
        ensemble: RuleEnsemble::new(rules),
        raw,
    })
}

/// Find the earliest label mentioned in a completion, after `marker` when
/// present. Labels must stand as whole words.
pub fn parse_label(text: &str, labels: &[String], marker: Option<&str>) -> Option<usize> {
    let body = match marker.and_then(|m| text.find(m).map(|i| &text[i + m.len()..])) {
        Some(rest) => rest,
        None => text,
    };
    let lower = body.to_ascii_lowercase();
    let is_word = |c: Option<char>| c.is_none_or(|c| !c.is_ascii_alphanumeric());
    let mut best: Option<(usize, usize)> = None;
    for (i, l) in labels.iter().enumerate() {
        let l = l.to_ascii_lowercase();
        let mut from = 0;
        while let Some(p) = lower[from..].find(&l) {
            let start = from + p;
            let end = start + l.len();
            if is_word(lower[..start].chars().next_back()) && is_word(lower[end..].chars().next()) {
                if best.is_none_or(|(s, _)| start < s) {
                    best = Some((start, i));
                }
                break;
            }
            from = start + 1;
        }
    }
    best.map(|(_, i)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InduceOptions {
    pub samples: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Text after which the answer label is expected, e.g. `NEXT ACTION:`.
    pub answer_marker: Option<&'static str>,
}

/// π_L for one state: per-rule distributions from label log-probabilities
/// (or sampled label frequencies with add-one smoothing), averaged over the
/// ensemble.
pub fn induce_action_distribution(
    backend: &dyn Backend,
    ensemble: &RuleEnsemble,
    render: &dyn Fn(&str) -> String,
    labels: &[String],
    opts: &InduceOptions,
) -> Result<ActionDistribution, LmError> {
    if labels.is_empty() {
        return Err(LmError::Config("no action labels".into()));
    }
    if ensemble.is_empty() {
        return Err(LmError::Config("empty rule ensemble".into()));
    }
    let mut per_rule = Vec::with_capacity(ensemble.size());
    for rule in &ensemble.rules {
        let prompt = render(&rule.text);
        let dist = match backend.label_logprobs(&prompt, labels)? {
            Some(lp) => ActionDistribution::softmax(&lp)
                .map_err(|e| LmError::MalformedResponse(e.to_string()))?,
            None => sampled_distribution(backend, &prompt, labels, opts)?,
        };
        per_rule.push(dist);
    }
    ActionDistribution::mean(&per_rule).map_err(|e| LmError::MalformedResponse(e.to_string()))
}

fn sampled_distribution(
    backend: &dyn Backend,
    prompt: &str,
    labels: &[String],
    opts: &InduceOptions,
) -> Result<ActionDistribution, LmError> {
    let mut counts = vec![1.0; labels.len()];
    let mut hits = 0;
    for s in 0..opts.samples {
        let text = backend.complete(&CompletionRequest {
            prompt,
            temperature: opts.temperature,
            max_tokens: opts.max_tokens,
            sample_index: s as u32,
        })?;
        if let Some(i) = parse_label(&text, labels, opts.answer_marker) {
            counts[i] += 1.0;
            hits += 1;
        }
    }
    if hits == 0 {
        log::warn!("no label in {} samples; using a uniform distribution", opts.samples);
        return Ok(ActionDistribution::uniform(labels.len()));
    }
    ActionDistribution::from_weights(&counts).map_err(|e| LmError::MalformedResponse(e.to_string()))
}
