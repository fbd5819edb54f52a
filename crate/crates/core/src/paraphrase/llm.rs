//! HTTP client for an external completion endpoint.
//!
//! Request (POST, JSON):
//!
//! ```json
//! {"prompt": "...", "n": 4, "temperature": 0.7, "max_tokens": 512}
//! ```
//!
//! Accepted responses: a JSON array of strings, `{"texts": [..]}`,
//! `{"text": "..."}` with one variant per line, or `{"choices": [..]}` whose
//! entries carry `text` or `message.content`. Leading list markers such as
//! `1.` or `-` are stripped. If the bearer-token environment variable is set
//! its value is sent as `Authorization: Bearer <token>`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{build_prompt, ParaphraseError, ParaphraseSet, Paraphraser, Provenance};

pub const TOKEN_ENV_VAR: &str = "ROBUST_ENSEMBLE_LLM_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    pub url: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    /// Environment variable holding the bearer token.
    pub token_env: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            temperature: 0.7,
            max_tokens: 512,
            timeout_secs: 60,
            max_in_flight: 4,
            token_env: TOKEN_ENV_VAR.to_string(),
        }
    }
}

#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug)]
pub struct LlmClient {
    config: LlmConfig,
    agent: ureq::Agent,
    token: Option<String>,
    slots: Slots,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    n: usize,
    temperature: f64,
    max_tokens: u32,
}

impl LlmClient {
    pub fn new(config: LlmConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        let slots = Slots { free: Mutex::new(config.max_in_flight.max(1)), cv: Condvar::new() };
        Self { config, agent, token, slots }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn request(&self, prompt: &str, n: usize) -> Result<String, ParaphraseError> {
        let unreachable = |reason: String| ParaphraseError::EndpointUnreachable { url: self.config.url.clone(), reason };
        let _slot = self.slots.acquire();
        let mut req = self.agent.post(&self.config.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let body = CompletionRequest { prompt, n, temperature: self.config.temperature, max_tokens: self.config.max_tokens };
        let mut resp = req.send_json(&body).map_err(|e| unreachable(e.to_string()))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| ParaphraseError::MalformedResponse(e.to_string()))
    }
}

impl Paraphraser for LlmClient {
    fn paraphrase(&self, text: &str, n: usize, _seed: u64) -> Result<ParaphraseSet, ParaphraseError> {
        if text.trim().is_empty() {
            return Err(ParaphraseError::EmptyText);
        }
        let mut variants = if n == 0 { Vec::new() } else { parse_completion(&self.request(&build_prompt(text, n), n)?)? };
        variants.truncate(n);
        let padded = n - variants.len();
        if padded > 0 {
            log::warn!("endpoint returned {} of {n} variants; padding with the original", variants.len());
            variants.resize(n, text.to_string());
        }
        Ok(ParaphraseSet { original: text.to_string(), variants, provenance: Provenance::Llm, padded })
    }
}

fn clean_line(line: &str) -> Option<String> {
    let mut s = line.trim();
    if let Some(rest) = s.strip_prefix(['-', '*', '\u{2022}']) {
        s = rest.trim_start();
    } else {
        let digits = s.chars().take_while(char::is_ascii_digit).count();
        if digits > 0 {
            if let Some(rest) = s[digits..].strip_prefix(['.', ')', ':']) {
                s = rest.trim_start();
            }
        }
    }
    let s = s.trim_matches('"').trim();
    (!s.is_empty() && s != "OUTPUT:").then(|| s.to_string())
}

fn split_block(block: &str) -> Vec<String> {
    block.lines().filter_map(clean_line).collect()
}

/// Extracts the generated texts from a completion response body.
pub fn parse_completion(body: &str) -> Result<Vec<String>, ParaphraseError> {
    let malformed = |msg: &str| ParaphraseError::MalformedResponse(msg.to_string());
    let value: Value = serde_json::from_str(body).map_err(|e| ParaphraseError::MalformedResponse(e.to_string()))?;
    let strings = |items: &[Value]| -> Result<Vec<String>, ParaphraseError> {
        items
            .iter()
            .map(|v| v.as_str().map(|s| s.to_string()).ok_or_else(|| malformed("expected an array of strings")))
            .collect()
    };
    let blocks: Vec<String> = match &value {
        Value::Array(items) => strings(items)?,
        Value::Object(map) => {
            if let Some(texts) = map.get("texts") {
                strings(texts.as_array().ok_or_else(|| malformed("`texts` is not an array"))?)?
            } else if let Some(text) = map.get("text") {
                vec![text.as_str().ok_or_else(|| malformed("`text` is not a string"))?.to_string()]
            } else if let Some(choices) = map.get("choices") {
                choices
                    .as_array()
                    .ok_or_else(|| malformed("`choices` is not an array"))?
                    .iter()
                    .map(|c| {
                        c.get("text")
                            .or_else(|| c.get("message").and_then(|m| m.get("content")))
                            .and_then(Value::as_str)
                            .map(str::to_string)
                            .ok_or_else(|| malformed("choice without text"))
                    })
                    .collect::<Result<_, _>>()?
            } else {
                return Err(malformed("expected `texts`, `text` or `choices`"));
            }
        }
        _ => return Err(malformed("expected a JSON array or object")),
    };
    Ok(blocks.iter().flat_map(|b| split_block(b)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_supported_shapes() {
        let want = vec!["one".to_string(), "two".to_string()];
        assert_eq!(parse_completion(r#"["one", "two"]"#).unwrap(), want);
        assert_eq!(parse_completion(r#"{"texts": ["one", "two"]}"#).unwrap(), want);
        assert_eq!(parse_completion(r#"{"text": "1. one\n2) two\n"}"#).unwrap(), want);
        assert_eq!(parse_completion(r#"{"choices": [{"text": "- one"}, {"message": {"content": "two"}}]}"#).unwrap(), want);
    }

    #[test]
    fn rejects_garbage() {
        for body in ["not json", "42", r#"{"foo": 1}"#, r#"{"texts": [1]}"#, r#"{"choices": [{}]}"#] {
            assert!(matches!(parse_completion(body), Err(ParaphraseError::MalformedResponse(_))), "{body}");
        }
    }
}
