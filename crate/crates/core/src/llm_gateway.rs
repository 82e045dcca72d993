//! Prompt assembly and the chat-completion client that turns a query into a
//! grounding program.
//!
//! Prompt text lives in data files (`system.txt`, `example_NN.txt`) so it can
//! be edited without a rebuild. The directory is taken from
//! [`LlmConfig::prompts_dir`], else the `SPATIAL_CSP_PROMPTS` environment
//! variable, else the `prompts/` directory shipped with this crate.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::program::{registry_signatures, score_function_list};
use crate::scene::Scene;

pub const PROMPTS_ENV: &str = "SPATIAL_CSP_PROMPTS";
pub const FUNCTIONS_PLACEHOLDER: &str = "<[REGISTERED_FUNCTIONS_PLACEHOLDER]>";
pub const SCORE_FUNCTIONS_PLACEHOLDER: &str = "<[REGISTERED_SCORE_FUNCTIONS_PLACEHOLDER]>";
const SYSTEM_MARKER: &str = "<[SYSTEM]>";
const USER_MARKER: &str = "<[USER]>";
const ASSISTANT_MARKER: &str = "<[ASSISTANT]>";
pub const EXAMPLE_COUNT: usize = 11;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request failed: {0}")]
    Network(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("empty program")]
    Empty,
    #[error("prompt template: {0}")]
    Template(String),
    #[error("invalid LLM configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Environment variable holding the API key; an unset or empty variable
    /// sends no `Authorization` header.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Extra attempts after a network failure or a 5xx response (0 or 1).
    pub retries: u32,
    /// Append one NDJSON record per call here when set.
    pub audit_log: Option<PathBuf>,
    pub prompts_dir: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint_url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model_name: "mistral-large-2407".into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            api_key_env: "LLM_API_KEY".into(),
            timeout_secs: 120,
            retries: 0,
            audit_log: None,
            prompts_dir: None,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        let url = self.endpoint_url.as_str();
        let rest = url.strip_prefix("http://").or_else(|| url.strip_prefix("https://"));
        if rest.is_none_or(|r| r.is_empty() || r.starts_with('/')) {
            return Err(LlmError::Config(format!("endpoint_url `{url}` is not an http(s) URL")));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::Config("temperature must be >= 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::Config("max_output_tokens must be positive".into()));
        }
        if self.timeout_secs == 0 {
            return Err(LlmError::Config("timeout_secs must be positive".into()));
        }
        if self.retries > 1 {
            return Err(LlmError::Config("at most one retry is supported".into()));
        }
        Ok(())
    }
}

/// The system message and the in-context examples, as read from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub system: String,
    /// (user, assistant) pairs in file order.
    pub examples: Vec<(String, String)>,
}

pub fn default_prompts_dir() -> PathBuf {
    match std::env::var_os(PROMPTS_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => Path::new(env!("CARGO_MANIFEST_DIR")).join("prompts"),
    }
}

fn read(path: &Path) -> Result<String, LlmError> {
    std::fs::read_to_string(path).map_err(|e| LlmError::Template(format!("{}: {e}", path.display())))
}

fn after_marker<'t>(text: &'t str, marker: &str, path: &Path) -> Result<&'t str, LlmError> {
    let body = text.trim_start();
    body.strip_prefix(marker).ok_or_else(|| LlmError::Template(format!("{}: expected to start with {marker}", path.display())))
}

impl PromptTemplates {
    pub fn load(dir: &Path) -> Result<Self, LlmError> {
        let system_path = dir.join("system.txt");
        let system = after_marker(&read(&system_path)?, SYSTEM_MARKER, &system_path)?.trim().to_string();
        for placeholder in [FUNCTIONS_PLACEHOLDER, SCORE_FUNCTIONS_PLACEHOLDER] {
            if !system.contains(placeholder) {
                return Err(LlmError::Template(format!("{}: missing {placeholder}", system_path.display())));
            }
        }

        let mut examples = Vec::with_capacity(EXAMPLE_COUNT);
        for i in 1..=EXAMPLE_COUNT {
            let path = dir.join(format!("example_{i:02}.txt"));
            let text = read(&path)?;
            let rest = after_marker(&text, USER_MARKER, &path)?;
            let (user, assistant) = rest
                .split_once(ASSISTANT_MARKER)
                .ok_or_else(|| LlmError::Template(format!("{}: missing {ASSISTANT_MARKER}", path.display())))?;
            let (user, assistant) = (user.trim(), assistant.trim());
            if user.is_empty() || assistant.is_empty() || assistant.contains(USER_MARKER) || assistant.contains(ASSISTANT_MARKER)
            {
                return Err(LlmError::Template(format!("{}: malformed example", path.display())));
            }
            examples.push((user.to_string(), assistant.to_string()));
        }
        Ok(PromptTemplates { system, examples })
    }

    /// Templates from [`default_prompts_dir`].
    pub fn bundled() -> Result<Self, LlmError> {
        Self::load(&default_prompts_dir())
    }

    /// The system message with both placeholders filled in.
    pub fn system_message(&self) -> String {
        self.system
            .replace(FUNCTIONS_PLACEHOLDER, registry_signatures().trim_end())
            .replace(SCORE_FUNCTIONS_PLACEHOLDER, score_function_list().trim_end())
    }

    /// System message, the in-context examples, then the query.
    pub fn messages(&self, query: &str, labels: &[String]) -> Result<Vec<ChatMessage>, LlmError> {
        if query.trim().is_empty() {
            return Err(LlmError::Config("query is empty".into()));
        }
        if labels.is_empty() {
            return Err(LlmError::Config("no relevant object labels".into()));
        }
        let mut out = Vec::with_capacity(2 + 2 * self.examples.len());
        out.push(ChatMessage::new(Role::System, self.system_message()));
        for (user, assistant) in &self.examples {
            out.push(ChatMessage::new(Role::User, user.clone()));
            out.push(ChatMessage::new(Role::Assistant, assistant.clone()));
        }
        out.push(ChatMessage::new(Role::User, format_query(query, labels)));
        Ok(out)
    }
}

/// Formats a query the way the in-context examples present theirs.
pub fn format_query(query: &str, labels: &[String]) -> String {
    let mut s = format!("QUERY:\n{}\n\nRELEVANT OBJECT LABELS:", query.trim());
    for (i, l) in labels.iter().enumerate() {
        s.push_str(&format!("\n[{i}] {l}"));
    }
    s
}

/// Builds the full chat for `query` from the bundled templates.
pub fn build_messages(query: &str, labels: &[String]) -> Result<Vec<ChatMessage>, LlmError> {
    PromptTemplates::bundled()?.messages(query, labels)
}

/// Default relevant labels: distinct scene labels in instance order, with the
/// room center and corner labels last.
pub fn default_labels(scene: &Scene) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for inst in scene.non_virtual() {
        if !labels.contains(&inst.label) {
            labels.push(inst.label.clone());
        }
    }
    for inst in scene.instances().iter().filter(|i| i.is_virtual) {
        if !labels.contains(&inst.label) {
            labels.push(inst.label.clone());
        }
    }
    labels
}

/// Strips one surrounding ``` fence (with optional language tag) and blank
/// lines.
pub fn extract_program(raw: &str) -> Result<String, LlmError> {
    let mut text = raw.trim();
    if let Some(rest) = text.strip_prefix("```") {
        let is_tag = |t: &str| t.trim().chars().all(|c| c.is_ascii_alphanumeric() || "+-_.".contains(c));
        let body = match rest.split_once('\n') {
            Some((tag, body)) if is_tag(tag) => body,
            _ => rest,
        };
        let body = body.trim_end();
        text = body.strip_suffix("```").unwrap_or(body).trim();
    }
    if text.is_empty() {
        return Err(LlmError::Empty);
    }
    Ok(text.to_string())
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// A chat-completion client bound to one configuration and template set.
pub struct LlmClient {
    cfg: LlmConfig,
    templates: PromptTemplates,
    agent: ureq::Agent,
    audit: Option<Mutex<File>>,
}

impl LlmClient {
    pub fn new(cfg: LlmConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let templates = match &cfg.prompts_dir {
            Some(dir) => PromptTemplates::load(dir)?,
            None => PromptTemplates::bundled()?,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let audit = match &cfg.audit_log {
            Some(path) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| LlmError::Config(format!("audit log {}: {e}", path.display())))?,
            )),
            None => None,
        };
        Ok(LlmClient { cfg, templates, agent, audit })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }

    fn audit(&self, record: Json) {
        if let Some(file) = &self.audit {
            let mut f = file.lock().unwrap_or_else(|p| p.into_inner());
            // Audit is best effort; a full disk must not fail grounding.
            let _ = writeln!(f, "{record}");
        }
    }

    fn post_once(&self, body: &Json) -> Result<String, LlmError> {
        let mut req = self.agent.post(&self.cfg.endpoint_url);
        if let Ok(key) = std::env::var(&self.cfg.api_key_env) {
            if !key.is_empty() {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
        }
        let started = unix_now();
        let outcome = req.send_json(body).map_err(|e| LlmError::Network(e.to_string())).and_then(|mut resp| {
            let status = resp.status().as_u16();
            let text = resp.body_mut().read_to_string().map_err(|e| LlmError::Network(e.to_string()))?;
            Ok((status, text))
        });
        let finished = unix_now();
        let (status, text) = match outcome {
            Ok(pair) => pair,
            Err(e) => {
                self.audit(json!({"started": started, "finished": finished, "request": body, "error": e.to_string()}));
                return Err(e);
            }
        };
        self.audit(json!({"started": started, "finished": finished, "request": body, "status": status, "response": text}));
        if !(200..300).contains(&status) {
            return Err(LlmError::Status { status, body: text });
        }
        Ok(text)
    }

    /// Sends the prompt for `query` and returns the extracted program text.
    pub fn generate_program(&self, query: &str, labels: &[String]) -> Result<String, LlmError> {
        let messages = self.templates.messages(query, labels)?;
        let body = json!({
            "model": self.cfg.model_name,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
        });
        let mut attempt = 0;
        let text = loop {
            match self.post_once(&body) {
                Err(LlmError::Network(_)) | Err(LlmError::Status { status: 500..=599, .. }) if attempt < self.cfg.retries => {
                    attempt += 1
                }
                other => break other?,
            }
        };
        let doc: Json = serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()))?;
        let content = doc
            .pointer("/choices/0/message/content")
            .and_then(Json::as_str)
            .ok_or_else(|| LlmError::Malformed("missing choices[0].message.content".into()))?;
        extract_program(content)
    }
}

/// One-shot convenience around [`LlmClient`].
pub fn generate_program(cfg: &LlmConfig, query: &str, labels: &[String]) -> Result<String, LlmError> {
    LlmClient::new(cfg.clone())?.generate_program(query, labels)
}
