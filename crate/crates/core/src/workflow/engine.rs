//! Commands over a session.
//!
//! Operations that need the model are split in two. `plan_*` validates
//! against the current state and renders the prompt without mutating
//! anything; `finish_*` takes the gateway result and commits events. A
//! caller may release its lock on the session between the two. If the
//! story version moved in the meantime the reply is dropped and a
//! `stale_reply` event is logged instead.
//!
//! The one-call forms (`request_comment`, `accept_comment`, ...) do both
//! halves back to back.

use std::sync::Arc;

use crate::clock::{Clock, Millis};
use crate::document::{char_len, extract_span, EditOperation, SpanAnchor};
use crate::gateway::{
    CommentReply, Gateway, GatewayError, HighlightsReply, ReplySchema, RevisionReply, StructuredReply, TechniquesReply,
};
use crate::persona::{comment_bindings, CommentState, PersonaId};
use crate::prompt::{Bindings, TemplateId};
use crate::technique::{techniques_bindings, TechniqueSuggestion};

use super::event::{Actor, AnchorOwner, CapturedReply, Event, EventKind, Operation};
use super::session::{Highlight, HighlightState, ProposalState, ReplayError, RevisionProposal, Session};
use super::WorkflowError;

/// A session plus its event log and the clock that stamps new events.
#[derive(Clone)]
pub struct Workbench {
    session: Session,
    log: Vec<Event>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Workbench {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workbench").field("session", &self.session).field("events", &self.log.len()).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditOutcome {
    pub version: u64,
    pub orphaned: Vec<AnchorOwner>,
    pub discarded_proposals: Vec<u64>,
}

/// A model call planned against a specific story version.
pub trait PendingCall {
    type Reply: ReplySchema;
    const OPERATION: Operation;

    fn prompt(&self) -> &str;
    fn base_version(&self) -> u64;

    fn call(&self, gateway: &Gateway) -> Result<StructuredReply<Self::Reply>, GatewayError> {
        gateway.complete::<Self::Reply>(self.prompt())
    }
}

macro_rules! pending {
    ($name:ident, $reply:ty, $op:expr, { $($field:ident: $ty:ty),* }) => {
        #[derive(Debug, Clone)]
        pub struct $name {
            $(pub $field: $ty,)*
            pub base_version: u64,
            pub prompt: String,
        }

        impl PendingCall for $name {
            type Reply = $reply;
            const OPERATION: Operation = $op;

            fn prompt(&self) -> &str {
                &self.prompt
            }

            fn base_version(&self) -> u64 {
                self.base_version
            }
        }
    };
}

pending!(PendingComment, CommentReply, Operation::RequestComment, { persona: PersonaId, anchor: SpanAnchor });
pending!(PendingAccept, TechniquesReply, Operation::AcceptComment, { comment_id: u64 });
pending!(PendingHighlights, HighlightsReply, Operation::SelectTechnique, { suggestion_id: u64 });
pending!(PendingRevision, RevisionReply, Operation::RequestRevision, { highlight_id: u64 });

fn captured<T>(reply: &StructuredReply<T>) -> CapturedReply {
    CapturedReply { raw: reply.raw.clone(), attempts: reply.attempts }
}

impl Workbench {
    /// Starts a new session; the log opens with `session_created`.
    pub fn create(id: impl Into<String>, text: impl Into<String>, clock: Arc<dyn Clock>) -> Self {
        let mut wb = Self { session: Session::empty(), log: Vec::new(), clock };
        wb.commit(vec![(Actor::System, EventKind::SessionCreated { session_id: id.into(), text: text.into() })])
            .expect("a fresh session accepts session_created");
        wb
    }

    /// Rebuilds a workbench from a full event log.
    pub fn from_log(log: Vec<Event>, clock: Arc<dyn Clock>) -> Result<Self, ReplayError> {
        let session = super::replay(None, &log)?;
        Ok(Self { session, log, clock })
    }

    /// Reattaches a session to the log it was derived from.
    pub fn from_parts(session: Session, log: Vec<Event>, clock: Arc<dyn Clock>) -> Result<Self, ReplayError> {
        let head = log.last().map_or((0, ""), |e| (e.seq, e.digest.as_str()));
        if head != (session.event_seq, session.head_digest.as_str()) {
            return Err(ReplayError {
                seq: session.event_seq,
                check: "session does not match the end of its log".into(),
            });
        }
        Ok(Self { session, log, clock })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn events(&self) -> &[Event] {
        &self.log
    }

    /// Events with `seq > after`.
    pub fn events_after(&self, after: u64) -> &[Event] {
        let idx = (after as usize).min(self.log.len());
        &self.log[idx..]
    }

    pub fn now(&self) -> Millis {
        self.clock.now()
    }

    pub fn into_parts(self) -> (Session, Vec<Event>) {
        (self.session, self.log)
    }

    fn commit(&mut self, batch: Vec<(Actor, EventKind)>) -> Result<(), WorkflowError> {
        let now = self.clock.now();
        let mut next = self.session.clone();
        let mut sealed = Vec::with_capacity(batch.len());
        for (actor, kind) in batch {
            let event = Event::seal(&next.head_digest, next.event_seq + 1, now, actor, kind);
            next.apply_in_place(&event).map_err(WorkflowError::Integrity)?;
            sealed.push(event);
        }
        self.session = next;
        self.log.extend(sealed);
        Ok(())
    }

    fn log_failure(&mut self, operation: Operation, error: String) {
        // an error record cannot violate any state rule
        let _ = self.commit(vec![(Actor::System, EventKind::GatewayFailed { operation, error })]);
    }

    /// Shared tail of every `finish_*`: gateway errors and stale replies are
    /// logged and returned; otherwise the reply is handed back.
    fn receive<P: PendingCall>(
        &mut self,
        pending: &P,
        result: Result<StructuredReply<P::Reply>, GatewayError>,
    ) -> Result<StructuredReply<P::Reply>, WorkflowError> {
        let reply = match result {
            Ok(r) => r,
            Err(source) => {
                self.log_failure(P::OPERATION, source.to_string());
                return Err(WorkflowError::Gateway { operation: P::OPERATION, source });
            }
        };
        let current = self.session.document.version;
        if current != pending.base_version() {
            let _ = self.commit(vec![(
                Actor::System,
                EventKind::StaleReply {
                    operation: P::OPERATION,
                    base_version: pending.base_version(),
                    current_version: current,
                },
            )]);
            return Err(WorkflowError::StaleReply { base_version: pending.base_version(), current_version: current });
        }
        Ok(reply)
    }

    pub fn writer_edit(&mut self, edit: EditOperation) -> Result<EditOutcome, WorkflowError> {
        let effects = self.session.edit_effects(&edit)?;
        let outcome = EditOutcome {
            version: effects.document.version,
            orphaned: effects.orphaned.clone(),
            discarded_proposals: effects.discarded_proposals.clone(),
        };
        self.commit(vec![(
            Actor::Writer,
            EventKind::WriterEdit {
                edit,
                orphaned: effects.orphaned,
                discarded_proposals: effects.discarded_proposals,
            },
        )])?;
        Ok(outcome)
    }

    pub fn plan_comment(
        &self,
        gateway: &Gateway,
        persona: PersonaId,
        start: usize,
        end: usize,
    ) -> Result<PendingComment, WorkflowError> {
        let doc = &self.session.document;
        let anchor = extract_span(doc, start, end)?;
        if anchor.is_zero_length() {
            return Err(WorkflowError::EmptySelection);
        }
        let card = gateway.personas().get(persona);
        let prompt = gateway
            .templates()
            .render(TemplateId::CommentatorComment, &comment_bindings(card, &anchor.quote, &doc.text))
            .map_err(|e| WorkflowError::Gateway { operation: Operation::RequestComment, source: e.into() })?;
        Ok(PendingComment { persona, anchor, base_version: doc.version, prompt })
    }

    pub fn finish_comment(
        &mut self,
        pending: PendingComment,
        result: Result<StructuredReply<CommentReply>, GatewayError>,
    ) -> Result<u64, WorkflowError> {
        let reply = self.receive(&pending, result)?;
        let comment_id = self.session.next_id;
        let CommentReply { comment_text, sentiment } = reply.payload.clone();
        self.commit(vec![(
            pending.persona.into(),
            EventKind::CommentGenerated {
                comment_id,
                persona: pending.persona,
                anchor: pending.anchor,
                text: comment_text,
                sentiment,
                reply: captured(&reply),
            },
        )])?;
        Ok(comment_id)
    }

    /// Asks a persona about `[start, end)`. Generating a comment does not
    /// change the persona's avatar.
    pub fn request_comment(
        &mut self,
        gateway: &Gateway,
        persona: PersonaId,
        start: usize,
        end: usize,
    ) -> Result<u64, WorkflowError> {
        let pending = self.plan_comment(gateway, persona, start, end)?;
        let result = pending.call(gateway);
        self.finish_comment(pending, result)
    }

    fn pending_comment(&self, comment_id: u64) -> Result<&crate::persona::Comment, WorkflowError> {
        let c = self.session.comment(comment_id).ok_or(WorkflowError::NotFound { kind: "comment", id: comment_id })?;
        if c.state != CommentState::Pending {
            return Err(WorkflowError::IllegalTransition(format!("comment {comment_id} was already decided")));
        }
        Ok(c)
    }

    pub fn plan_accept(&self, gateway: &Gateway, comment_id: u64) -> Result<PendingAccept, WorkflowError> {
        let c = self.pending_comment(comment_id)?;
        let doc = &self.session.document;
        let prompt = gateway
            .templates()
            .render(TemplateId::AssistantTechniques, &techniques_bindings(&c.text, &c.anchor.quote, &doc.text))
            .map_err(|e| WorkflowError::Gateway { operation: Operation::AcceptComment, source: e.into() })?;
        Ok(PendingAccept { comment_id, base_version: doc.version, prompt })
    }

    /// Commits acceptance, the persona's happy flash, and the suggestion
    /// tags as one batch. On gateway failure the comment stays pending.
    pub fn finish_accept(
        &mut self,
        pending: PendingAccept,
        result: Result<StructuredReply<TechniquesReply>, GatewayError>,
    ) -> Result<Vec<u64>, WorkflowError> {
        let persona = self.pending_comment(pending.comment_id)?.persona;
        let reply = self.receive(&pending, result)?;
        let first = self.session.next_id;
        let suggestions: Vec<TechniqueSuggestion> = reply
            .payload
            .clone()
            .into_drafts()
            .into_iter()
            .enumerate()
            .map(|(i, d)| TechniqueSuggestion {
                id: first + i as u64,
                comment_id: pending.comment_id,
                technique: d.technique,
                rationale: d.rationale,
            })
            .collect();
        let ids = suggestions.iter().map(|s| s.id).collect();
        let now = self.clock.now();
        self.commit(vec![
            (Actor::Writer, EventKind::CommentAccepted { comment_id: pending.comment_id }),
            (
                persona.into(),
                EventKind::PersonaFlash {
                    persona,
                    affect: crate::persona::Affect::Happy,
                    expires_at: now + crate::persona::FLASH_MS,
                },
            ),
            (
                Actor::Assistant,
                EventKind::SuggestionsGenerated {
                    comment_id: pending.comment_id,
                    suggestions,
                    reply: captured(&reply),
                },
            ),
        ])?;
        Ok(ids)
    }

    /// Accepts a pending comment; returns the ids of the suggestions it produced.
    pub fn accept_comment(&mut self, gateway: &Gateway, comment_id: u64) -> Result<Vec<u64>, WorkflowError> {
        let pending = self.plan_accept(gateway, comment_id)?;
        let result = pending.call(gateway);
        self.finish_accept(pending, result)
    }

    pub fn reject_comment(&mut self, comment_id: u64) -> Result<(), WorkflowError> {
        let persona = self.pending_comment(comment_id)?.persona;
        let now = self.clock.now();
        self.commit(vec![
            (Actor::Writer, EventKind::CommentRejected { comment_id }),
            (
                persona.into(),
                EventKind::PersonaFlash {
                    persona,
                    affect: persona.negative_affect(),
                    expires_at: now + crate::persona::FLASH_MS,
                },
            ),
        ])
    }

    pub fn plan_select(&self, gateway: &Gateway, suggestion_id: u64) -> Result<PendingHighlights, WorkflowError> {
        let s = self
            .session
            .suggestion(suggestion_id)
            .ok_or(WorkflowError::NotFound { kind: "suggestion", id: suggestion_id })?;
        let c = self.session.comment(s.comment_id).expect("suggestions always have a comment");
        let doc = &self.session.document;
        let bindings = Bindings::new()
            .with("technique_name", s.technique.technique().name)
            .with("comment_text", &c.text)
            .with("focus_text", &c.anchor.quote)
            .with("full_story", &doc.text);
        let prompt = gateway
            .templates()
            .render(TemplateId::AssistantHighlights, &bindings)
            .map_err(|e| WorkflowError::Gateway { operation: Operation::SelectTechnique, source: e.into() })?;
        Ok(PendingHighlights { suggestion_id, base_version: doc.version, prompt })
    }

    /// Anchors each returned passage at its first occurrence in the story.
    /// Passages that do not occur are dropped; if none survive nothing
    /// changes and the failure is logged. Earlier visible highlights for the
    /// same suggestion are dismissed; consumed ones stay.
    pub fn finish_select(
        &mut self,
        pending: PendingHighlights,
        result: Result<StructuredReply<HighlightsReply>, GatewayError>,
    ) -> Result<Vec<u64>, WorkflowError> {
        if self.session.suggestion(pending.suggestion_id).is_none() {
            return Err(WorkflowError::NotFound { kind: "suggestion", id: pending.suggestion_id });
        }
        let reply = self.receive(&pending, result)?;
        let doc = &self.session.document;
        let mut kept: Vec<SpanAnchor> = Vec::new();
        let mut dropped = Vec::new();
        for passage in &reply.payload.passages {
            if kept.iter().any(|a| &a.quote == passage) {
                continue;
            }
            match doc.find_all(passage).first() {
                Some(&at) => kept.push(extract_span(doc, at, at + char_len(passage)).expect("found in document")),
                None => dropped.push(passage.clone()),
            }
        }
        if kept.is_empty() {
            let err = WorkflowError::NoApplicablePassage { dropped: dropped.len() };
            self.log_failure(Operation::SelectTechnique, err.to_string());
            return Err(err);
        }
        let dismissed: Vec<u64> = self
            .session
            .highlights
            .iter()
            .filter(|h| h.suggestion_id == pending.suggestion_id && h.state == HighlightState::Visible)
            .map(|h| h.id)
            .collect();
        let discarded_proposals = self
            .session
            .proposals
            .iter()
            .filter(|p| p.state == ProposalState::Offered && dismissed.contains(&p.highlight_id))
            .map(|p| p.id)
            .collect();
        let first = self.session.next_id;
        let highlights: Vec<Highlight> = kept
            .into_iter()
            .enumerate()
            .map(|(i, anchor)| Highlight {
                id: first + i as u64,
                suggestion_id: pending.suggestion_id,
                anchor,
                state: HighlightState::Visible,
            })
            .collect();
        let ids = highlights.iter().map(|h| h.id).collect();
        self.commit(vec![(
            Actor::Assistant,
            EventKind::HighlightsGenerated {
                suggestion_id: pending.suggestion_id,
                highlights,
                dismissed,
                discarded_proposals,
                dropped_passages: dropped,
                reply: captured(&reply),
            },
        )])?;
        Ok(ids)
    }

    /// Selects a technique tag; returns the new highlight ids.
    pub fn select_technique(&mut self, gateway: &Gateway, suggestion_id: u64) -> Result<Vec<u64>, WorkflowError> {
        let pending = self.plan_select(gateway, suggestion_id)?;
        let result = pending.call(gateway);
        self.finish_select(pending, result)
    }

    fn revisable_highlight(&self, highlight_id: u64) -> Result<&Highlight, WorkflowError> {
        let h = self
            .session
            .highlight(highlight_id)
            .ok_or(WorkflowError::NotFound { kind: "highlight", id: highlight_id })?;
        if h.state != HighlightState::Visible {
            return Err(WorkflowError::IllegalTransition(format!("highlight {highlight_id} is {:?}", h.state)));
        }
        if !h.anchor.is_live() {
            return Err(WorkflowError::OrphanedHighlight(highlight_id));
        }
        Ok(h)
    }

    pub fn plan_revision(&self, gateway: &Gateway, highlight_id: u64) -> Result<PendingRevision, WorkflowError> {
        let h = self.revisable_highlight(highlight_id)?;
        let s = self.session.suggestion(h.suggestion_id).expect("highlights always have a suggestion");
        let c = self.session.comment(s.comment_id).expect("suggestions always have a comment");
        let doc = &self.session.document;
        let bindings = Bindings::new()
            .with("technique_name", s.technique.technique().name)
            .with("comment_text", &c.text)
            .with("highlight_text", &h.anchor.quote)
            .with("full_story", &doc.text);
        let prompt = gateway
            .templates()
            .render(TemplateId::AssistantRevision, &bindings)
            .map_err(|e| WorkflowError::Gateway { operation: Operation::RequestRevision, source: e.into() })?;
        Ok(PendingRevision { highlight_id, base_version: doc.version, prompt })
    }

    /// Offers a revision for the highlight, replacing any earlier offer.
    pub fn finish_revision(
        &mut self,
        pending: PendingRevision,
        result: Result<StructuredReply<RevisionReply>, GatewayError>,
    ) -> Result<u64, WorkflowError> {
        self.revisable_highlight(pending.highlight_id)?;
        let reply = self.receive(&pending, result)?;
        let replaced = self
            .session
            .proposals
            .iter()
            .find(|p| p.highlight_id == pending.highlight_id && p.state == ProposalState::Offered)
            .map(|p| p.id);
        let proposal = RevisionProposal {
            id: self.session.next_id,
            highlight_id: pending.highlight_id,
            revised_text: reply.payload.revised_text.clone(),
            state: ProposalState::Offered,
        };
        let id = proposal.id;
        self.commit(vec![(
            Actor::Assistant,
            EventKind::RevisionOffered { proposal, replaced, reply: captured(&reply) },
        )])?;
        Ok(id)
    }

    pub fn request_revision(&mut self, gateway: &Gateway, highlight_id: u64) -> Result<u64, WorkflowError> {
        let pending = self.plan_revision(gateway, highlight_id)?;
        let result = pending.call(gateway);
        self.finish_revision(pending, result)
    }

    /// Splices the proposal into the story in place of its highlight.
    /// Returns the new story version.
    pub fn adopt_revision(&mut self, proposal_id: u64) -> Result<u64, WorkflowError> {
        let p =
            self.session.proposal(proposal_id).ok_or(WorkflowError::NotFound { kind: "proposal", id: proposal_id })?;
        let h = self.session.highlight(p.highlight_id).expect("proposals always have a highlight");
        match p.state {
            ProposalState::Offered if h.anchor.is_live() && h.state == HighlightState::Visible => {}
            ProposalState::Adopted => {
                return Err(WorkflowError::IllegalTransition(format!("proposal {proposal_id} was already adopted")))
            }
            ProposalState::Discarded if h.anchor.is_live() => {
                return Err(WorkflowError::IllegalTransition(format!("proposal {proposal_id} was discarded")))
            }
            _ => return Err(WorkflowError::StaleProposal(proposal_id)),
        }
        let edit = EditOperation::replace(
            h.anchor.start,
            h.anchor.end - h.anchor.start,
            p.revised_text.clone(),
            self.session.document.version,
        );
        let highlight_id = h.id;
        let mut effects = self.session.edit_effects(&edit)?;
        effects.exclude_adopted(proposal_id, highlight_id);
        let version = effects.document.version;
        self.commit(vec![(
            Actor::Writer,
            EventKind::RevisionAdopted {
                proposal_id,
                edit,
                orphaned: effects.orphaned,
                discarded_proposals: effects.discarded_proposals,
            },
        )])?;
        Ok(version)
    }
}
