//! Event log entries.
//!
//! Wire shape: `{seq, timestamp, actor, kind, payload, digest}`. `digest`
//! chains each entry to the one before it:
//! `sha256(previous digest ++ "\n" ++ json({seq, timestamp, actor, kind, payload}))`,
//! hex encoded, with the empty string before the first entry.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Millis;
use crate::document::{EditOperation, SpanAnchor};
use crate::persona::{Affect, PersonaId, Sentiment};
use crate::technique::TechniqueSuggestion;

use super::session::{Highlight, RevisionProposal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Writer,
    MadScientist,
    CuriousGirl,
    Assistant,
    System,
}

impl From<PersonaId> for Actor {
    fn from(p: PersonaId) -> Self {
        match p {
            PersonaId::MadScientist => Actor::MadScientist,
            PersonaId::CuriousGirl => Actor::CuriousGirl,
        }
    }
}

/// The model call an event or error belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    RequestComment,
    AcceptComment,
    SelectTechnique,
    RequestRevision,
}

/// An anchor that an edit orphaned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorOwner {
    Comment(u64),
    Highlight(u64),
}

/// Raw provider output kept for audit. Replay never calls a provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapturedReply {
    pub raw: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    SessionCreated {
        session_id: String,
        text: String,
    },
    WriterEdit {
        edit: EditOperation,
        orphaned: Vec<AnchorOwner>,
        discarded_proposals: Vec<u64>,
    },
    CommentGenerated {
        comment_id: u64,
        persona: PersonaId,
        anchor: SpanAnchor,
        text: String,
        sentiment: Sentiment,
        reply: CapturedReply,
    },
    CommentAccepted {
        comment_id: u64,
    },
    CommentRejected {
        comment_id: u64,
    },
    PersonaFlash {
        persona: PersonaId,
        affect: Affect,
        expires_at: Millis,
    },
    SuggestionsGenerated {
        comment_id: u64,
        suggestions: Vec<TechniqueSuggestion>,
        reply: CapturedReply,
    },
    HighlightsGenerated {
        suggestion_id: u64,
        highlights: Vec<Highlight>,
        dismissed: Vec<u64>,
        discarded_proposals: Vec<u64>,
        dropped_passages: Vec<String>,
        reply: CapturedReply,
    },
    RevisionOffered {
        proposal: RevisionProposal,
        replaced: Option<u64>,
        reply: CapturedReply,
    },
    RevisionAdopted {
        proposal_id: u64,
        edit: EditOperation,
        orphaned: Vec<AnchorOwner>,
        discarded_proposals: Vec<u64>,
    },
    GatewayFailed {
        operation: Operation,
        error: String,
    },
    StaleReply {
        operation: Operation,
        base_version: u64,
        current_version: u64,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SessionCreated { .. } => "session_created",
            EventKind::WriterEdit { .. } => "writer_edit",
            EventKind::CommentGenerated { .. } => "comment_generated",
            EventKind::CommentAccepted { .. } => "comment_accepted",
            EventKind::CommentRejected { .. } => "comment_rejected",
            EventKind::PersonaFlash { .. } => "persona_flash",
            EventKind::SuggestionsGenerated { .. } => "suggestions_generated",
            EventKind::HighlightsGenerated { .. } => "highlights_generated",
            EventKind::RevisionOffered { .. } => "revision_offered",
            EventKind::RevisionAdopted { .. } => "revision_adopted",
            EventKind::GatewayFailed { .. } => "gateway_failed",
            EventKind::StaleReply { .. } => "stale_reply",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub timestamp: Millis,
    pub actor: Actor,
    #[serde(flatten)]
    pub kind: EventKind,
    pub digest: String,
}

#[derive(Serialize)]
struct Body<'a> {
    seq: u64,
    timestamp: Millis,
    actor: Actor,
    #[serde(flatten)]
    kind: &'a EventKind,
}

pub(crate) fn chain_digest(previous: &str, seq: u64, timestamp: Millis, actor: Actor, kind: &EventKind) -> String {
    let body = serde_json::to_vec(&Body { seq, timestamp, actor, kind }).expect("events serialize");
    let mut h = Sha256::new();
    h.update(previous.as_bytes());
    h.update(b"\n");
    h.update(&body);
    hex::encode(h.finalize())
}

impl Event {
    pub(crate) fn seal(previous: &str, seq: u64, timestamp: Millis, actor: Actor, kind: EventKind) -> Self {
        let digest = chain_digest(previous, seq, timestamp, actor, &kind);
        Event { seq, timestamp, actor, kind, digest }
    }

    pub fn expected_digest(&self, previous: &str) -> String {
        chain_digest(previous, self.seq, self.timestamp, self.actor, &self.kind)
    }
}
