//! Client for OpenAI-compatible chat-completions endpoints.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::backend::{Backend, BackendConfig, CallRecord, CompletionRequest};
use super::LmError;

const REDACTED: &str = "[REDACTED]";

/// Counting semaphore bounding requests in flight across threads.
struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.count.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.count.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    in_flight: InFlight,
    calls: Mutex<Vec<CallRecord>>,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, LmError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env_var)
            .ok()
            .filter(|k| !k.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| LmError::Config(format!("http client: {e}")))?;
        let limit = config.max_in_flight;
        Ok(Self {
            config,
            client,
            api_key,
            in_flight: InFlight {
                count: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            },
            calls: Mutex::new(Vec::new()),
        })
    }

    fn redact(&self, s: &str) -> String {
        match &self.api_key {
            Some(k) => s.replace(k.as_str(), REDACTED),
            None => s.to_string(),
        }
    }

    fn redact_value(&self, v: Value) -> Value {
        match &self.api_key {
            Some(_) => {
                let text = self.redact(&v.to_string());
                serde_json::from_str(&text).unwrap_or(Value::String(text))
            }
            None => v,
        }
    }

    fn record(&self, rec: CallRecord) {
        self.calls
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(rec);
    }

    /// POST `body`, retrying transport errors, 429 and 5xx. Total wall time is
    /// bounded by `timeout × max(max_retries, 1)`.
    fn post(&self, body: &Value) -> Result<Value, LmError> {
        let url = self.config.endpoint_url.as_deref().expect("validated");
        let attempts = self.config.max_retries.max(1);
        let per_call = Duration::from_secs_f64(self.config.timeout_secs);
        let deadline = Instant::now() + per_call * attempts;
        let _permit = self.in_flight.acquire();
        let mut last_err = String::from("no attempt made");
        for attempt in 1..=attempts {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                break;
            }
            let mut req = self.client.post(url).json(body).timeout(per_call.min(remaining));
            if let Some(k) = &self.api_key {
                req = req.bearer_auth(k);
            }
            let mut rec = CallRecord {
                backend: self.id(),
                attempt,
                request: body.clone(),
                status: None,
                response: None,
                error: None,
            };
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    rec.status = Some(status.as_u16());
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        match serde_json::from_str::<Value>(&text) {
                            Ok(v) => {
                                rec.response = Some(self.redact_value(v.clone()));
                                self.record(rec);
                                return Ok(v);
                            }
                            Err(e) => {
                                let msg = format!("invalid JSON body: {e}");
                                rec.error = Some(msg.clone());
                                self.record(rec);
                                return Err(LmError::MalformedResponse(msg));
                            }
                        }
                    }
                    last_err = self.redact(&format!("HTTP {status}: {text}"));
                    rec.error = Some(last_err.clone());
                    self.record(rec);
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    if !retryable {
                        return Err(LmError::BackendUnavailable(last_err));
                    }
                }
                Err(e) => {
                    last_err = self.redact(&e.to_string());
                    rec.error = Some(last_err.clone());
                    self.record(rec);
                }
            }
            log::warn!("request attempt {attempt}/{attempts} failed: {last_err}");
            if attempt < attempts {
                let backoff = Duration::from_millis(50 << (attempt - 1).min(4));
                std::thread::sleep(backoff.min(deadline.saturating_duration_since(Instant::now())));
            }
        }
        Err(LmError::BackendUnavailable(last_err))
    }

    fn request_body(&self, prompt: &str, temperature: f64, max_tokens: u32, logprobs: bool) -> Value {
        let mut body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        });
        if logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(self.config.top_logprobs);
        }
        body
    }
}

fn message_content(v: &Value) -> Result<String, LmError> {
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LmError::MalformedResponse("missing choices[0].message.content".into()))
}

/// Score labels from the first generated token that begins one of them.
///
/// Labels absent from that position's top list get the smallest listed
/// log-probability. Returns `None` when no position matches any label.
pub fn scores_from_logprobs(v: &Value, labels: &[String]) -> Option<Vec<f64>> {
    let tokens = v.pointer("/choices/0/logprobs/content")?.as_array()?;
    let lower: Vec<String> = labels.iter().map(|l| l.to_ascii_lowercase()).collect();
    let begins_label = |tok: &str| {
        let t = tok.trim().to_ascii_lowercase();
        !t.is_empty() && lower.iter().any(|l| l.starts_with(&t))
    };
    for entry in tokens {
        let tok = entry.get("token").and_then(Value::as_str).unwrap_or("");
        if !begins_label(tok) {
            continue;
        }
        let top = entry.get("top_logprobs")?.as_array()?;
        let mut floor = f64::INFINITY;
        let mut scores = vec![f64::NEG_INFINITY; labels.len()];
        for alt in top {
            let (Some(t), Some(lp)) = (
                alt.get("token").and_then(Value::as_str),
                alt.get("logprob").and_then(Value::as_f64),
            ) else {
                continue;
            };
            floor = floor.min(lp);
            let t = t.trim().to_ascii_lowercase();
            if t.is_empty() {
                continue;
            }
            for (i, l) in lower.iter().enumerate() {
                if l.starts_with(&t) && lp > scores[i] {
                    scores[i] = lp;
                }
            }
        }
        if !floor.is_finite() {
            return None;
        }
        for s in scores.iter_mut() {
            if *s == f64::NEG_INFINITY {
                *s = floor;
            }
        }
        return Some(scores);
    }
    None
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.config.model_name)
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, LmError> {
        let body = self.request_body(req.prompt, req.temperature, req.max_tokens, false);
        message_content(&self.post(&body)?)
    }

    fn label_logprobs(&self, prompt: &str, labels: &[String]) -> Result<Option<Vec<f64>>, LmError> {
        if !self.config.use_logprobs {
            return Ok(None);
        }
        let body = self.request_body(prompt, 0.0, self.config.max_tokens.min(16), true);
        let v = self.post(&body)?;
        Ok(scores_from_logprobs(&v, labels))
    }

    fn drain_calls(&self) -> Vec<CallRecord> {
        std::mem::take(&mut *self.calls.lock().unwrap_or_else(|e| e.into_inner()))
    }
}
