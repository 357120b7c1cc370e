use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{oracle_complete, CompleterError, PromptBundle, Result};
use crate::world::{Cell, GridScene, Subgoal};

/// Scene truth handed to the oracle backend. Only the harness builds this.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth<'a> {
    pub scene: &'a GridScene,
    pub subgoal: Subgoal,
    pub exclude: &'a [Cell],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedEntry {
    /// Hex SHA-256 of the prompt, or `*` to match any prompt.
    pub prompt_hash: String,
    pub response: String,
}

/// Canned replies consumed in file order.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    entries: Mutex<VecDeque<ScriptedEntry>>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptedEntry>) -> Self {
        Self {
            entries: Mutex::new(entries.into()),
        }
    }

    /// Reads a JSONL fixture of `{prompt_hash, response}` objects.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut v = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ScriptedEntry =
                serde_json::from_str(line).map_err(|e| CompleterError::Fixture(format!("line {}: {e}", i + 1)))?;
            v.push(e);
        }
        Ok(Self::new(v))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CompleterError::Fixture(e.to_string()))?;
        Self::from_jsonl(&text)
    }

    /// Takes the first remaining entry matching the prompt hash.
    pub fn next(&self, bundle: &PromptBundle) -> Result<String> {
        let hash = bundle.hash();
        let mut q = self.entries.lock().expect("fixture lock");
        let pos = q
            .iter()
            .position(|e| e.prompt_hash == "*" || e.prompt_hash.eq_ignore_ascii_case(&hash))
            .ok_or(CompleterError::FixtureExhausted)?;
        Ok(q.remove(pos).expect("position is valid").response)
    }

    pub fn remaining(&self) -> usize {
        self.entries.lock().expect("fixture lock").len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Chat-completions URL.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    /// Extra attempts after the first failure.
    pub retries: u32,
    /// Delay before the first retry; doubles each time.
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            api_key: None,
            retries: 3,
            backoff_ms: 500,
            timeout_secs: 60,
        }
    }
}

impl HttpConfig {
    /// Defaults overridden by `LLM_ENDPOINT`, `LLM_API_KEY` and `LLM_MODEL`.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Ok(v) = std::env::var("LLM_ENDPOINT") {
            c.endpoint = v;
        }
        if let Ok(v) = std::env::var("LLM_MODEL") {
            c.model = v;
        }
        c.api_key = std::env::var("LLM_API_KEY").ok().filter(|k| !k.is_empty());
        c
    }
}

/// OpenAI-style chat-completions client.
#[derive(Debug)]
pub struct HttpBackend {
    pub config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Self { config, agent }
    }

    fn attempt(&self, body: &serde_json::Value) -> std::result::Result<String, String> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(k) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let v: serde_json::Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }

    /// Sends the system and agent messages as two chat roles, retrying
    /// failed requests with exponential backoff.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<String> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": bundle.system_message},
                {"role": "user", "content": bundle.agent_message},
            ],
        });
        let mut delay = self.config.backoff_ms;
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(delay));
                delay = delay.saturating_mul(2);
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) => last = e,
            }
        }
        Err(CompleterError::Transport(format!(
            "{} attempts failed, last error: {last}",
            self.config.retries + 1
        )))
    }
}

#[derive(Debug)]
pub enum Backend {
    /// Answers from scene truth and ignores the prompt.
    Oracle,
    Scripted(ScriptedBackend),
    Http(HttpBackend),
}

/// Returns the backend's raw reply. The oracle needs `truth` and renders
/// its answer in the reply format.
pub fn complete(bundle: &PromptBundle, backend: &Backend, truth: Option<GroundTruth<'_>>) -> Result<String> {
    match backend {
        Backend::Oracle => {
            let t = truth.ok_or_else(|| CompleterError::Transport("oracle backend needs scene truth".into()))?;
            Ok(oracle_complete(t.scene, &t.subgoal, t.exclude)?.to_text())
        }
        Backend::Scripted(s) => s.next(bundle),
        Backend::Http(h) => h.complete(bundle),
    }
}
