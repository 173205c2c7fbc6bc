//! Candidate-annotation proposal: prompt rendering and completion
//! backends.
//!
//! A backend turns a prompt into `n` raw completions. The HTTP backend
//! speaks the OpenAI-compatible chat-completions protocol; the scripted
//! backend replays canned completions from a JSON file, which keeps every
//! test and reproduction run offline and deterministic. Raw completions
//! are classified into well-formed annotations and deduplicated before the
//! search sees them.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{classify_annotation, Annotation};

/// Instruction line placed at the top of every prompt.
pub const PROMPT_INSTRUCTION: &str = "Given each Dafny program, propose an assertion, invariant or decreases statement in order to verify the program.";

/// Default name of the environment variable holding the API key.
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

/// A rendered prompt plus bookkeeping about its layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRendering {
    pub text: String,
    /// Byte offset where the program text starts inside `text`.
    pub program_start: usize,
    /// Byte length of the embedded program text.
    pub program_len: usize,
}

/// Render the completion prompt for a program text.
///
/// Layout: the instruction line, a blank line, a `Program:` header line,
/// the program text verbatim, then the `Annotation:` cue that the model's
/// completion continues.
pub fn render_prompt(program: &str) -> PromptRendering {
    let mut text = String::with_capacity(PROMPT_INSTRUCTION.len() + program.len() + 32);
    text.push_str(PROMPT_INSTRUCTION);
    text.push_str("\n\nProgram:\n");
    let program_start = text.len();
    text.push_str(program);
    text.push_str("Annotation:");
    PromptRendering { text, program_start, program_len: program.len() }
}

/// Which backend to use and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    /// OpenAI-compatible chat completions over HTTP.
    Http {
        /// Full URL of the chat-completions endpoint.
        endpoint: String,
        model: String,
        /// Name of the environment variable that holds the API key. The
        /// key itself is never stored in configuration.
        api_key_env: String,
    },
    /// Canned completions from a JSON script file.
    Scripted { path: String },
}

/// Proposal-stage configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerConfig {
    pub backend: BackendConfig,
    /// Number of completions requested per proposal round.
    pub k: u32,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        ProposerConfig {
            backend: BackendConfig::Http {
                endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
                model: "local".into(),
                api_key_env: DEFAULT_API_KEY_ENV.into(),
            },
            k: 5,
            temperature: 0.8,
            max_tokens: 128,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProposerError {
    #[error("transport failure talking to completion endpoint: {0}")]
    Transport(String),
    #[error("completion endpoint returned malformed payload: {0}")]
    Payload(String),
    #[error("could not load completion script: {0}")]
    Script(String),
}

/// Something that can produce raw completions for a prompt.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &str, n: u32) -> Result<Vec<String>, ProposerError>;

    /// Stable identifier echoed into traces and manifests.
    fn describe(&self) -> String;
}

/// Build the backend described by a config, including sampling settings.
pub fn build_backend(config: &ProposerConfig) -> Result<Box<dyn CompletionBackend>, ProposerError> {
    match &config.backend {
        BackendConfig::Http { endpoint, model, api_key_env } => Ok(Box::new(
            HttpBackend::new(endpoint.clone(), model.clone(), api_key_env.clone())
                .with_sampling(config.temperature, config.max_tokens),
        )),
        BackendConfig::Scripted { path } => {
            Ok(Box::new(ScriptedBackend::from_file(Path::new(path))?))
        }
    }
}

// ---------------------------------------------------------------------------
// HTTP backend (OpenAI-compatible chat completions)
// ---------------------------------------------------------------------------

pub struct HttpBackend {
    endpoint: String,
    model: String,
    api_key_env: String,
    client: reqwest::blocking::Client,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    n: u32,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: Option<String>,
}

impl HttpBackend {
    pub fn new(endpoint: String, model: String, api_key_env: String) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .connect_timeout(Duration::from_secs(10))
            .build()
            .expect("client construction cannot fail with static options");
        HttpBackend { endpoint, model, api_key_env, client, temperature: 0.8, max_tokens: 128 }
    }

    pub fn with_sampling(mut self, temperature: f64, max_tokens: u32) -> Self {
        self.temperature = temperature;
        self.max_tokens = max_tokens;
        self
    }

    fn attempt(&self, prompt: &str, n: u32) -> Result<Vec<String>, AttemptError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage { role: "user", content: prompt }],
            n,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Ok(key) = std::env::var(&self.api_key_env) {
            if !key.is_empty() {
                req = req.bearer_auth(key);
            }
        }
        let resp = req.send().map_err(|e| AttemptError::Retryable(e.to_string()))?;
        let code = resp.status();
        if code.as_u16() == 429 || code.is_server_error() {
            return Err(AttemptError::Retryable(format!("HTTP {code}")));
        }
        if !code.is_success() {
            return Err(AttemptError::Fatal(ProposerError::Transport(format!("HTTP {code}"))));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| AttemptError::Fatal(ProposerError::Payload(e.to_string())))?;
        Ok(parsed
            .choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect())
    }
}

enum AttemptError {
    Retryable(String),
    Fatal(ProposerError),
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, prompt: &str, n: u32) -> Result<Vec<String>, ProposerError> {
        const ATTEMPTS: u32 = 3;
        let mut last = String::new();
        for attempt in 0..ATTEMPTS {
            match self.attempt(prompt, n) {
                Ok(choices) => return Ok(choices),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable(msg)) => {
                    last = msg;
                    if attempt + 1 < ATTEMPTS {
                        std::thread::sleep(Duration::from_millis(100 * (attempt as u64 + 1)));
                    }
                }
            }
        }
        Err(ProposerError::Transport(format!("{last} (after {ATTEMPTS} attempts)")))
    }

    fn describe(&self) -> String {
        format!("http:{}@{}", self.model, self.endpoint)
    }
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// Script file format: completions keyed by call ordinal and/or by a
/// marker substring of the prompt, with an optional fallback list.
///
/// ```json
/// {
///   "by_ordinal": { "0": ["invariant i <= n"], "1": ["assert x > 0;"] },
///   "by_path": { "maxArray": ["invariant 0 < index <= a.Length"] },
///   "default": ["decreases n - i"]
/// }
/// ```
///
/// Resolution order per call: the first `by_path` key (in sorted order)
/// found as a substring of the prompt, else `by_ordinal[call_index]`, else
/// `default`, else no completions. Lists are returned whole on every call
/// — the script is never consumed, so a candidate rejected in one search
/// iteration is proposed again in the next.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub by_ordinal: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub by_path: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub default: Vec<String>,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    script: Script,
    calls: AtomicU64,
    label: String,
}

impl ScriptedBackend {
    pub fn from_file(path: &Path) -> Result<Self, ProposerError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ProposerError::Script(format!("{}: {e}", path.display())))?;
        let script: Script = serde_json::from_str(&raw)
            .map_err(|e| ProposerError::Script(format!("{}: {e}", path.display())))?;
        Ok(ScriptedBackend {
            script,
            calls: AtomicU64::new(0),
            label: path.display().to_string(),
        })
    }

    pub fn from_script(script: Script) -> Self {
        ScriptedBackend { script, calls: AtomicU64::new(0), label: "inline".into() }
    }

    /// A backend that always returns no completions.
    pub fn empty() -> Self {
        ScriptedBackend::from_script(Script::default())
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, prompt: &str, n: u32) -> Result<Vec<String>, ProposerError> {
        let ordinal = self.calls.fetch_add(1, Ordering::SeqCst);
        let list = self
            .script
            .by_path
            .iter()
            .find(|(marker, _)| prompt.contains(marker.as_str()))
            .map(|(_, v)| v)
            .or_else(|| self.script.by_ordinal.get(&ordinal.to_string()))
            .unwrap_or(&self.script.default);
        Ok(list.iter().take(n as usize).cloned().collect())
    }

    fn describe(&self) -> String {
        format!("scripted:{}", self.label)
    }
}

// ---------------------------------------------------------------------------
// Proposal assembly
// ---------------------------------------------------------------------------

/// The candidates distilled from one round of completions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalSet {
    /// Well-formed, deduplicated annotations in first-seen order.
    pub candidates: Vec<Annotation>,
    /// Every raw completion as returned by the backend.
    pub raw: Vec<String>,
}

/// Ask the backend for `k` completions for `program` and classify them.
///
/// Dropping a malformed completion or a duplicate never reorders the
/// survivors; order stays the backend's proposal order.
pub fn propose(
    backend: &dyn CompletionBackend,
    program: &str,
    k: u32,
) -> Result<ProposalSet, ProposerError> {
    let prompt = render_prompt(program);
    let raw = backend.complete(&prompt.text, k)?;
    let raw: Vec<String> = raw.into_iter().take(k as usize).collect();
    let mut seen = std::collections::BTreeSet::new();
    let mut candidates = Vec::new();
    for completion in &raw {
        if let Some(ann) = classify_annotation(completion) {
            if seen.insert(ann.normalized.clone()) {
                candidates.push(ann);
            }
        }
    }
    Ok(ProposalSet { candidates, raw })
}
