//! Single entry point for language-model calls.
//!
//! Every reply is parsed into a typed schema and validated before it leaves
//! this module. Invalid replies are sent back to the provider with the
//! validation error appended, at most `max_retries` times.

pub mod mock;
mod remote;
mod schema;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{mock_complete, MockProvider};
pub use remote::RemoteProvider;
pub use schema::{
    CommentReply, HighlightsReply, ReplySchema, RevisionReply, TechniquePick, TechniquesReply, MAX_COMMENT_CHARS,
    MAX_PASSAGES, MAX_TECHNIQUES,
};

use crate::persona::Personas;
use crate::prompt::{PromptError, SchemaId, TemplateSet};

pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_TIMEOUT_SECS: u64 = 60;
pub const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
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

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub correlation_id: u64,
    pub schema: SchemaId,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("provider timed out")]
    Timeout,
}

/// Anything that can answer a chat-style request with raw text.
pub trait Provider: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("provider timed out")]
    Timeout,
    #[error("no valid {schema} reply after {attempts} attempts: {reason}")]
    SchemaViolationExhausted { schema: SchemaId, attempts: u32, reason: String, last_raw: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl From<ProviderError> for GatewayError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Unreachable(m) => GatewayError::ProviderUnreachable(m),
            ProviderError::Timeout => GatewayError::Timeout,
        }
    }
}

/// A validated reply. Only the gateway can build one.
#[derive(Debug, Clone, PartialEq, Eq)]
#[non_exhaustive]
pub struct StructuredReply<T> {
    pub schema_id: SchemaId,
    pub payload: T,
    pub raw: String,
    pub attempts: u32,
    pub correlation_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Remote,
    Mock,
}

#[derive(Clone, PartialEq, Eq)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub credential: Option<String>,
    pub model: String,
    pub max_retries: u32,
    pub timeout_secs: u64,
}

impl fmt::Debug for ProviderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProviderConfig")
            .field("kind", &self.kind)
            .field("endpoint", &self.endpoint)
            .field("credential", &self.credential.as_ref().map(|_| "<redacted>"))
            .field("model", &self.model)
            .field("max_retries", &self.max_retries)
            .field("timeout_secs", &self.timeout_secs)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown provider kind {0:?} (expected `remote` or `mock`)")]
    UnknownKind(String),
    #[error("remote provider needs {0}")]
    Missing(&'static str),
}

impl ProviderConfig {
    pub fn mock() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: None,
            credential: None,
            model: DEFAULT_MODEL.to_owned(),
            max_retries: DEFAULT_MAX_RETRIES,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn remote(endpoint: impl Into<String>, credential: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::Remote,
            endpoint: Some(endpoint.into()),
            credential: Some(credential.into()),
            ..Self::mock()
        }
    }

    /// Reads `REVT_PROVIDER`, `REVT_LLM_ENDPOINT`, `REVT_LLM_KEY` and
    /// `REVT_LLM_MODEL` through `lookup` (normally `std::env::var`).
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let kind = match lookup("REVT_PROVIDER").as_deref().unwrap_or("mock") {
            "mock" => ProviderKind::Mock,
            "remote" => ProviderKind::Remote,
            other => return Err(ConfigError::UnknownKind(other.to_owned())),
        };
        let config = Self {
            kind,
            endpoint: lookup("REVT_LLM_ENDPOINT").filter(|s| !s.is_empty()),
            credential: lookup("REVT_LLM_KEY").filter(|s| !s.is_empty()),
            model: lookup("REVT_LLM_MODEL").unwrap_or_else(|| DEFAULT_MODEL.to_owned()),
            ..Self::mock()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.kind == ProviderKind::Remote {
            if self.endpoint.is_none() {
                return Err(ConfigError::Missing("REVT_LLM_ENDPOINT"));
            }
            if self.credential.is_none() {
                return Err(ConfigError::Missing("REVT_LLM_KEY"));
            }
        }
        Ok(())
    }
}

pub struct Gateway {
    provider: Arc<dyn Provider>,
    templates: TemplateSet,
    personas: Personas,
    max_retries: u32,
    next_correlation: AtomicU64,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("max_retries", &self.max_retries).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, max_retries: u32) -> Self {
        Self {
            provider,
            templates: TemplateSet::bundled(),
            personas: Personas::bundled(),
            max_retries,
            next_correlation: AtomicU64::new(1),
        }
    }

    pub fn mock() -> Self {
        Self::new(Arc::new(MockProvider), DEFAULT_MAX_RETRIES)
    }

    pub fn from_config(config: &ProviderConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let provider: Arc<dyn Provider> = match config.kind {
            ProviderKind::Mock => Arc::new(MockProvider),
            ProviderKind::Remote => Arc::new(RemoteProvider::new(config)),
        };
        Ok(Self::new(provider, config.max_retries))
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_personas(mut self, personas: Personas) -> Self {
        self.personas = personas;
        self
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn personas(&self) -> &Personas {
        &self.personas
    }

    pub fn max_retries(&self) -> u32 {
        self.max_retries
    }

    /// Sends `prompt` and returns the first reply that validates as `T`.
    pub fn complete<T: ReplySchema>(&self, prompt: &str) -> Result<StructuredReply<T>, GatewayError> {
        let correlation_id = self.next_correlation.fetch_add(1, Ordering::Relaxed);
        let mut request = ChatRequest {
            correlation_id,
            schema: T::SCHEMA,
            messages: vec![ChatMessage { role: Role::User, content: prompt.to_owned() }],
        };
        let mut attempts = 0;
        loop {
            attempts += 1;
            let raw = self.provider.chat(&request)?;
            match T::parse(&raw) {
                Ok(payload) => {
                    return Ok(StructuredReply { schema_id: T::SCHEMA, payload, raw, attempts, correlation_id });
                }
                Err(reason) if attempts > self.max_retries => {
                    return Err(GatewayError::SchemaViolationExhausted {
                        schema: T::SCHEMA,
                        attempts,
                        reason,
                        last_raw: raw,
                    });
                }
                Err(reason) => {
                    request.messages.push(ChatMessage { role: Role::Assistant, content: raw });
                    request.messages.push(ChatMessage {
                        role: Role::User,
                        content: format!(
                            "Your previous reply could not be used: {reason}. Reply again with only a JSON \
                             object in the requested format."
                        ),
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    /// Replays a fixed list of raw replies and records what it was sent.
    struct Scripted {
        replies: Mutex<Vec<String>>,
        seen: Mutex<Vec<ChatRequest>>,
    }

    impl Scripted {
        fn new(replies: &[&str]) -> Arc<Self> {
            Arc::new(Self {
                replies: Mutex::new(replies.iter().rev().map(|s| s.to_string()).collect()),
                seen: Mutex::new(Vec::new()),
            })
        }
    }

    impl Provider for Scripted {
        fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError> {
            self.seen.lock().unwrap().push(request.clone());
            self.replies.lock().unwrap().pop().ok_or(ProviderError::Unreachable("script exhausted".into()))
        }
    }

    const GOOD: &str = r#"{"comment_text":"fine","sentiment":"positive"}"#;

    #[test]
    fn malformed_twice_then_valid() {
        let p = Scripted::new(&["nope", r#"{"comment_text":"x","sentiment":"meh"}"#, GOOD]);
        let g = Gateway::new(p.clone(), 3);
        let r = g.complete::<CommentReply>("prompt").unwrap();
        assert_eq!(r.attempts, 3);
        assert_eq!(r.raw, GOOD);
        let seen = p.seen.lock().unwrap();
        assert_eq!(seen.len(), 3);
        // each retry carries the bad reply and a corrective instruction
        assert_eq!(seen[2].messages.len(), 5);
        assert_eq!(seen[2].messages[3].role, Role::Assistant);
        assert!(seen[2].messages[4].content.contains("could not be used"));
    }

    #[test]
    fn exhaustion_after_max_retries_plus_one() {
        let p = Scripted::new(&["a", "b", "c", "d", GOOD]);
        let g = Gateway::new(p.clone(), 3);
        match g.complete::<CommentReply>("prompt").unwrap_err() {
            GatewayError::SchemaViolationExhausted { attempts, last_raw, .. } => {
                assert_eq!(attempts, 4);
                assert_eq!(last_raw, "d");
            }
            e => panic!("unexpected {e:?}"),
        }
        assert_eq!(p.seen.lock().unwrap().len(), 4);
    }

    #[test]
    fn provider_errors_are_not_retried() {
        let p = Scripted::new(&[]);
        let g = Gateway::new(p.clone(), 3);
        assert!(matches!(g.complete::<CommentReply>("x"), Err(GatewayError::ProviderUnreachable(_))));
        assert_eq!(p.seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn config_from_env_lookup() {
        let env = |pairs: &'static [(&'static str, &'static str)]| {
            move |k: &str| pairs.iter().find(|(n, _)| *n == k).map(|(_, v)| v.to_string())
        };
        assert_eq!(ProviderConfig::from_lookup(env(&[])).unwrap().kind, ProviderKind::Mock);
        assert_eq!(
            ProviderConfig::from_lookup(env(&[("REVT_PROVIDER", "remote"), ("REVT_LLM_ENDPOINT", "http://x")])),
            Err(ConfigError::Missing("REVT_LLM_KEY"))
        );
        let ok = ProviderConfig::from_lookup(env(&[
            ("REVT_PROVIDER", "remote"),
            ("REVT_LLM_ENDPOINT", "http://x"),
            ("REVT_LLM_KEY", "secret"),
        ]))
        .unwrap();
        assert_eq!(ok.max_retries, DEFAULT_MAX_RETRIES);
        assert!(!format!("{ok:?}").contains("secret"));
        assert!(matches!(
            ProviderConfig::from_lookup(env(&[("REVT_PROVIDER", "gpt")])),
            Err(ConfigError::UnknownKind(_))
        ));
    }

    #[test]
    fn mock_is_byte_stable() {
        let g = Gateway::mock();
        let a = g.complete::<CommentReply>("<focus>\nabc\n</focus>").unwrap();
        let b = g.complete::<CommentReply>("<focus>\nabc\n</focus>").unwrap();
        assert_eq!(a.raw, b.raw);
        assert_eq!(a.attempts, 1);
        assert_ne!(a.correlation_id, b.correlation_id);
    }
}
