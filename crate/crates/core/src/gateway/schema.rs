//! Reply shapes the gateway accepts from a provider, and their validation.

use std::collections::BTreeSet;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::document::char_len;
use crate::persona::Sentiment;
use crate::prompt::SchemaId;
use crate::technique::{SuggestionDraft, TechniqueId};

pub const MAX_COMMENT_CHARS: usize = 600;
pub const MAX_TECHNIQUES: usize = 4;
pub const MAX_PASSAGES: usize = 8;

pub trait ReplySchema: Sized + Clone + Serialize + DeserializeOwned {
    const SCHEMA: SchemaId;

    /// Checks the constraints serde cannot express.
    fn check(&self) -> Result<(), String>;

    fn parse(raw: &str) -> Result<Self, String> {
        let value: Self =
            serde_json::from_str(strip_fences(raw)).map_err(|e| format!("not a valid {} reply: {e}", Self::SCHEMA))?;
        value.check()?;
        Ok(value)
    }
}

/// Models like to wrap JSON in markdown fences.
fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let rest = rest.split_once('\n').map_or("", |(_, body)| body);
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentReply {
    pub comment_text: String,
    pub sentiment: Sentiment,
}

impl ReplySchema for CommentReply {
    const SCHEMA: SchemaId = SchemaId::Comment;

    fn check(&self) -> Result<(), String> {
        if self.comment_text.trim().is_empty() {
            return Err("comment_text is empty".into());
        }
        let n = char_len(&self.comment_text);
        if n > MAX_COMMENT_CHARS {
            return Err(format!("comment_text has {n} characters, the limit is {MAX_COMMENT_CHARS}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TechniquePick {
    pub technique: TechniqueId,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TechniquesReply {
    pub techniques: Vec<TechniquePick>,
}

impl TechniquesReply {
    pub fn into_drafts(self) -> Vec<SuggestionDraft> {
        self.techniques
            .into_iter()
            .map(|p| SuggestionDraft { technique: p.technique, rationale: p.rationale })
            .collect()
    }
}

impl ReplySchema for TechniquesReply {
    const SCHEMA: SchemaId = SchemaId::Techniques;

    fn check(&self) -> Result<(), String> {
        let n = self.techniques.len();
        if !(1..=MAX_TECHNIQUES).contains(&n) {
            return Err(format!("expected 1 to {MAX_TECHNIQUES} techniques, got {n}"));
        }
        let mut seen = BTreeSet::new();
        for pick in &self.techniques {
            if !seen.insert(pick.technique) {
                return Err(format!("technique {} listed twice", pick.technique.as_str()));
            }
            if pick.rationale.trim().is_empty() {
                return Err(format!("technique {} has an empty rationale", pick.technique.as_str()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighlightsReply {
    pub passages: Vec<String>,
}

impl ReplySchema for HighlightsReply {
    const SCHEMA: SchemaId = SchemaId::Highlights;

    fn check(&self) -> Result<(), String> {
        let n = self.passages.len();
        if !(1..=MAX_PASSAGES).contains(&n) {
            return Err(format!("expected 1 to {MAX_PASSAGES} passages, got {n}"));
        }
        if self.passages.iter().any(|p| p.is_empty()) {
            return Err("passages must not be empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionReply {
    pub revised_text: String,
}

impl ReplySchema for RevisionReply {
    const SCHEMA: SchemaId = SchemaId::Revision;

    fn check(&self) -> Result<(), String> {
        if self.revised_text.trim().is_empty() {
            return Err("revised_text is empty".into());
        }
        Ok(())
    }
}
