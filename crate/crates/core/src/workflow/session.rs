//! Session state and the single place it changes: [`Session::apply`].
//!
//! Every mutation, live or replayed, goes through `apply`, which re-checks
//! the same rules the engine enforced when it wrote the event. A log that
//! breaks any of them is rejected with a [`ReplayError`] naming the check.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::document::{extract_span, AnchorStatus, Document, EditOperation, SpanAnchor};
use crate::gateway::{CommentReply, ReplySchema, MAX_PASSAGES, MAX_TECHNIQUES};
use crate::persona::{Affect, Comment, CommentState, PersonaId, PersonaState, FLASH_MS};
use crate::technique::TechniqueSuggestion;

use super::event::{AnchorOwner, Event, EventKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighlightState {
    Visible,
    Dismissed,
    Consumed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Highlight {
    pub id: u64,
    pub suggestion_id: u64,
    pub anchor: SpanAnchor,
    pub state: HighlightState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalState {
    Offered,
    Adopted,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionProposal {
    pub id: u64,
    pub highlight_id: u64,
    pub revised_text: String,
    pub state: ProposalState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub document: Document,
    pub comments: Vec<Comment>,
    pub suggestions: Vec<TechniqueSuggestion>,
    pub highlights: Vec<Highlight>,
    pub proposals: Vec<RevisionProposal>,
    pub persona_states: BTreeMap<PersonaId, PersonaState>,
    pub event_seq: u64,
    /// Digest of the last applied event.
    pub head_digest: String,
    /// Next id to hand out. Ids are unique across all entity kinds.
    pub next_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("event {seq}: {check}")]
pub struct ReplayError {
    pub seq: u64,
    pub check: String,
}

/// What an edit does to the anchored objects in a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct EditEffects {
    pub document: Document,
    pub comment_anchors: Vec<SpanAnchor>,
    pub highlight_anchors: Vec<SpanAnchor>,
    pub orphaned: Vec<AnchorOwner>,
    pub discarded_proposals: Vec<u64>,
}

impl EditEffects {
    /// The highlight being adopted is replaced, not orphaned, and its own
    /// proposal is adopted rather than discarded.
    pub(crate) fn exclude_adopted(&mut self, proposal_id: u64, highlight_id: u64) {
        self.orphaned.retain(|o| *o != AnchorOwner::Highlight(highlight_id));
        self.discarded_proposals.retain(|p| *p != proposal_id);
    }
}

impl Default for Session {
    fn default() -> Self {
        Self::empty()
    }
}

impl Session {
    /// The state before `session_created`; replay starts here.
    pub fn empty() -> Self {
        Self {
            id: String::new(),
            document: Document::new("", ""),
            comments: Vec::new(),
            suggestions: Vec::new(),
            highlights: Vec::new(),
            proposals: Vec::new(),
            persona_states: BTreeMap::new(),
            event_seq: 0,
            head_digest: String::new(),
            next_id: 1,
        }
    }

    pub fn comment(&self, id: u64) -> Option<&Comment> {
        self.comments.iter().find(|c| c.id == id)
    }

    pub fn suggestion(&self, id: u64) -> Option<&TechniqueSuggestion> {
        self.suggestions.iter().find(|s| s.id == id)
    }

    pub fn highlight(&self, id: u64) -> Option<&Highlight> {
        self.highlights.iter().find(|h| h.id == id)
    }

    pub fn proposal(&self, id: u64) -> Option<&RevisionProposal> {
        self.proposals.iter().find(|p| p.id == id)
    }

    pub fn suggestions_for(&self, comment_id: u64) -> impl Iterator<Item = &TechniqueSuggestion> {
        self.suggestions.iter().filter(move |s| s.comment_id == comment_id)
    }

    /// A persona's comments in stack order: index 0 is the bottom of the
    /// stack, the newest comment; earlier comments pile up above it.
    pub fn comment_stack(&self, persona: PersonaId) -> Vec<&Comment> {
        let mut stack: Vec<&Comment> = self.comments.iter().filter(|c| c.persona == persona).collect();
        stack.sort_by_key(|c| std::cmp::Reverse(c.created_seq));
        stack
    }

    pub fn persona_state(&self, persona: PersonaId) -> PersonaState {
        self.persona_states.get(&persona).cloned().unwrap_or_else(|| PersonaState::new(persona))
    }

    pub fn avatar_affect(&self, persona: PersonaId, now: Millis) -> Affect {
        self.persona_state(persona).current_affect(now)
    }

    pub(crate) fn edit_effects(&self, edit: &EditOperation) -> Result<EditEffects, crate::document::DocumentError> {
        let document = self.document.apply_edit(edit)?;
        let mut orphaned = Vec::new();
        let comment_anchors: Vec<SpanAnchor> = self
            .comments
            .iter()
            .map(|c| {
                let a = c.anchor.transform(edit, &document);
                if c.anchor.is_live() && !a.is_live() {
                    orphaned.push(AnchorOwner::Comment(c.id));
                }
                a
            })
            .collect();
        let mut newly_orphaned_highlights = BTreeSet::new();
        let highlight_anchors: Vec<SpanAnchor> = self
            .highlights
            .iter()
            .map(|h| {
                let a = h.anchor.transform(edit, &document);
                if h.anchor.is_live() && !a.is_live() {
                    orphaned.push(AnchorOwner::Highlight(h.id));
                    newly_orphaned_highlights.insert(h.id);
                }
                a
            })
            .collect();
        let discarded_proposals = self
            .proposals
            .iter()
            .filter(|p| p.state == ProposalState::Offered && newly_orphaned_highlights.contains(&p.highlight_id))
            .map(|p| p.id)
            .collect();
        Ok(EditEffects { document, comment_anchors, highlight_anchors, orphaned, discarded_proposals })
    }

    fn install_edit(&mut self, effects: EditEffects) {
        self.document = effects.document;
        for (c, a) in self.comments.iter_mut().zip(effects.comment_anchors) {
            c.anchor = a;
        }
        for (h, a) in self.highlights.iter_mut().zip(effects.highlight_anchors) {
            h.anchor = a;
        }
        for p in self.proposals.iter_mut() {
            if effects.discarded_proposals.contains(&p.id) {
                p.state = ProposalState::Discarded;
            }
        }
    }

    fn claim_id(&mut self, id: u64, seq: u64) -> Result<(), ReplayError> {
        if id < self.next_id {
            return Err(ReplayError { seq, check: format!("id {id} is already taken") });
        }
        self.next_id = id + 1;
        Ok(())
    }

    /// Applies one logged event. Sequence, digest and every state rule are
    /// checked; on error `self` is left unchanged.
    pub fn apply(&mut self, event: &Event) -> Result<(), ReplayError> {
        let mut next = self.clone();
        next.apply_in_place(event)?;
        *self = next;
        Ok(())
    }

    pub(crate) fn apply_in_place(&mut self, event: &Event) -> Result<(), ReplayError> {
        let seq = event.seq;
        let fail = |check: String| ReplayError { seq, check };
        if seq != self.event_seq + 1 {
            return Err(fail(format!("expected seq {}, found {seq}", self.event_seq + 1)));
        }
        if event.expected_digest(&self.head_digest) != event.digest {
            return Err(fail("digest does not match the chain".into()));
        }
        match &event.kind {
            EventKind::SessionCreated { session_id, text } => {
                if seq != 1 {
                    return Err(fail("session_created must be the first event".into()));
                }
                self.id = session_id.clone();
                self.document = Document::new(session_id.clone(), text.clone());
                for p in PersonaId::ALL {
                    self.persona_states.insert(p, PersonaState::new(p));
                }
            }
            EventKind::WriterEdit { edit, orphaned, discarded_proposals }
            | EventKind::RevisionAdopted { edit, orphaned, discarded_proposals, .. } => {
                let adopted = match &event.kind {
                    EventKind::RevisionAdopted { proposal_id, .. } => {
                        Some(self.check_adoption(*proposal_id, edit, seq)?)
                    }
                    _ => None,
                };
                let mut effects = self.edit_effects(edit).map_err(|e| fail(e.to_string()))?;
                if let Some((pid, hid)) = adopted {
                    effects.exclude_adopted(pid, hid);
                }
                if &effects.orphaned != orphaned || &effects.discarded_proposals != discarded_proposals {
                    return Err(fail("recorded anchor effects differ from the recomputed ones".into()));
                }
                self.install_edit(effects);
                if let Some((pid, hid)) = adopted {
                    let start = edit.at;
                    let span = extract_span(&self.document, start, start + crate::document::char_len(&edit.inserted))
                        .map_err(|e| fail(e.to_string()))?;
                    let h = self.highlights.iter_mut().find(|h| h.id == hid).expect("checked");
                    h.anchor = SpanAnchor { created_at_version: h.anchor.created_at_version, ..span };
                    h.state = HighlightState::Consumed;
                    self.proposals.iter_mut().find(|p| p.id == pid).expect("checked").state = ProposalState::Adopted;
                }
            }
            EventKind::CommentGenerated { comment_id, persona, anchor, text, sentiment, .. } => {
                if !anchor.is_live() || anchor.quote.is_empty() {
                    return Err(fail("comment anchor must be a live, nonempty selection".into()));
                }
                if self.document.slice(anchor.start, anchor.end).as_deref() != Some(anchor.quote.as_str()) {
                    return Err(fail("comment anchor does not match the document".into()));
                }
                CommentReply { comment_text: text.clone(), sentiment: *sentiment }.check().map_err(fail)?;
                self.claim_id(*comment_id, seq)?;
                self.comments.push(Comment {
                    id: *comment_id,
                    persona: *persona,
                    anchor: anchor.clone(),
                    text: text.clone(),
                    sentiment: *sentiment,
                    state: CommentState::Pending,
                    created_seq: seq,
                });
            }
            EventKind::CommentAccepted { comment_id } | EventKind::CommentRejected { comment_id } => {
                let to = if matches!(event.kind, EventKind::CommentAccepted { .. }) {
                    CommentState::Accepted
                } else {
                    CommentState::Rejected
                };
                let c = self
                    .comments
                    .iter_mut()
                    .find(|c| c.id == *comment_id)
                    .ok_or_else(|| fail(format!("unknown comment {comment_id}")))?;
                if c.state != CommentState::Pending {
                    return Err(fail(format!("comment {comment_id} was already decided")));
                }
                c.state = to;
            }
            EventKind::PersonaFlash { persona, affect, expires_at } => {
                if *affect != Affect::Happy && *affect != persona.negative_affect() {
                    return Err(fail(format!("{persona} cannot flash {}", affect.as_str())));
                }
                if *expires_at != event.timestamp + FLASH_MS {
                    return Err(fail("flash must last exactly one second".into()));
                }
                let state = self.persona_states.entry(*persona).or_insert_with(|| PersonaState::new(*persona));
                state.flash = Some(crate::persona::Flash {
                    affect: *affect,
                    started_at: event.timestamp,
                    expires_at: *expires_at,
                });
            }
            EventKind::SuggestionsGenerated { comment_id, suggestions, .. } => {
                match self.comment(*comment_id) {
                    Some(c) if c.state == CommentState::Accepted => {}
                    _ => return Err(fail(format!("suggestions need accepted comment {comment_id}"))),
                }
                if suggestions.is_empty() || suggestions.len() > MAX_TECHNIQUES {
                    return Err(fail("between 1 and 4 suggestions per comment".into()));
                }
                let mut seen: BTreeSet<_> = self.suggestions_for(*comment_id).map(|s| s.technique).collect();
                for s in suggestions {
                    if s.comment_id != *comment_id || !seen.insert(s.technique) {
                        return Err(fail(format!("suggestion {} repeats a technique or names another comment", s.id)));
                    }
                    self.claim_id(s.id, seq)?;
                    self.suggestions.push(s.clone());
                }
            }
            EventKind::HighlightsGenerated { suggestion_id, highlights, dismissed, discarded_proposals, .. } => {
                if self.suggestion(*suggestion_id).is_none() {
                    return Err(fail(format!("unknown suggestion {suggestion_id}")));
                }
                if highlights.is_empty() || highlights.len() > MAX_PASSAGES {
                    return Err(fail("between 1 and 8 highlights per selection".into()));
                }
                let visible: Vec<u64> = self
                    .highlights
                    .iter()
                    .filter(|h| h.suggestion_id == *suggestion_id && h.state == HighlightState::Visible)
                    .map(|h| h.id)
                    .collect();
                let offered: Vec<u64> = self
                    .proposals
                    .iter()
                    .filter(|p| p.state == ProposalState::Offered && visible.contains(&p.highlight_id))
                    .map(|p| p.id)
                    .collect();
                if &visible != dismissed || &offered != discarded_proposals {
                    return Err(fail("recorded replacements differ from the visible highlights".into()));
                }
                for h in self.highlights.iter_mut().filter(|h| visible.contains(&h.id)) {
                    h.state = HighlightState::Dismissed;
                }
                for p in self.proposals.iter_mut().filter(|p| offered.contains(&p.id)) {
                    p.state = ProposalState::Discarded;
                }
                for h in highlights {
                    let a = &h.anchor;
                    if h.suggestion_id != *suggestion_id
                        || h.state != HighlightState::Visible
                        || !a.is_live()
                        || a.quote.is_empty()
                        || self.document.slice(a.start, a.end).as_deref() != Some(a.quote.as_str())
                    {
                        return Err(fail(format!("highlight {} is not an exact passage of the story", h.id)));
                    }
                    self.claim_id(h.id, seq)?;
                    self.highlights.push(h.clone());
                }
            }
            EventKind::RevisionOffered { proposal, replaced, .. } => {
                let h = self
                    .highlight(proposal.highlight_id)
                    .ok_or_else(|| fail(format!("unknown highlight {}", proposal.highlight_id)))?;
                if h.state != HighlightState::Visible || !h.anchor.is_live() {
                    return Err(fail(format!("highlight {} is not visible and live", h.id)));
                }
                if proposal.state != ProposalState::Offered || proposal.revised_text.trim().is_empty() {
                    return Err(fail("a new proposal must be offered with nonempty text".into()));
                }
                let prior = self
                    .proposals
                    .iter()
                    .find(|p| p.highlight_id == proposal.highlight_id && p.state == ProposalState::Offered)
                    .map(|p| p.id);
                if prior != *replaced {
                    return Err(fail("recorded replacement differs from the offered proposal".into()));
                }
                if let Some(pid) = prior {
                    self.proposals.iter_mut().find(|p| p.id == pid).expect("found").state = ProposalState::Discarded;
                }
                self.claim_id(proposal.id, seq)?;
                self.proposals.push(proposal.clone());
            }
            EventKind::GatewayFailed { .. } | EventKind::StaleReply { .. } => {}
        }
        self.event_seq = seq;
        self.head_digest = event.digest.clone();
        Ok(())
    }

    /// Returns (proposal id, highlight id) if `edit` is exactly the splice
    /// adopting that proposal.
    fn check_adoption(&self, proposal_id: u64, edit: &EditOperation, seq: u64) -> Result<(u64, u64), ReplayError> {
        let fail = |check: String| ReplayError { seq, check };
        let p = self.proposal(proposal_id).ok_or_else(|| fail(format!("unknown proposal {proposal_id}")))?;
        if p.state != ProposalState::Offered {
            return Err(fail(format!("proposal {proposal_id} is not on offer")));
        }
        let h = self.highlight(p.highlight_id).expect("proposals always have a highlight");
        if !h.anchor.is_live() || h.state != HighlightState::Visible {
            return Err(fail(format!("highlight {} is gone", h.id)));
        }
        let expected = EditOperation::replace(
            h.anchor.start,
            h.anchor.end - h.anchor.start,
            p.revised_text.clone(),
            self.document.version,
        );
        if &expected != edit {
            return Err(fail("adoption edit is not the highlight splice".into()));
        }
        Ok((p.id, h.id))
    }

    /// Structural invariants. Returns the first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut ids = BTreeSet::new();
        let all_ids = self
            .comments
            .iter()
            .map(|c| c.id)
            .chain(self.suggestions.iter().map(|s| s.id))
            .chain(self.highlights.iter().map(|h| h.id))
            .chain(self.proposals.iter().map(|p| p.id));
        for id in all_ids {
            if !ids.insert(id) || id >= self.next_id {
                return Err(format!("id {id} is duplicated or unallocated"));
            }
        }
        for w in self.comments.windows(2) {
            if w[0].created_seq >= w[1].created_seq {
                return Err("comment created_seq is not strictly increasing".into());
            }
        }
        let mut pairs = BTreeSet::new();
        for s in &self.suggestions {
            match self.comment(s.comment_id) {
                Some(c) if c.state == CommentState::Accepted => {}
                _ => return Err(format!("suggestion {} has no accepted comment", s.id)),
            }
            if !pairs.insert((s.comment_id, s.technique)) {
                return Err(format!("comment {} has technique {:?} twice", s.comment_id, s.technique));
            }
        }
        for h in &self.highlights {
            if self.suggestion(h.suggestion_id).is_none() {
                return Err(format!("highlight {} has no suggestion", h.id));
            }
            let adopted =
                self.proposals.iter().filter(|p| p.highlight_id == h.id && p.state == ProposalState::Adopted).count();
            let offered =
                self.proposals.iter().filter(|p| p.highlight_id == h.id && p.state == ProposalState::Offered).count();
            if adopted > 1 || offered > 1 {
                return Err(format!("highlight {} has {adopted} adopted and {offered} offered proposals", h.id));
            }
            if (h.state == HighlightState::Consumed) != (adopted == 1) {
                return Err(format!("highlight {} consumed state disagrees with its proposals", h.id));
            }
        }
        for p in &self.proposals {
            if self.highlight(p.highlight_id).is_none() {
                return Err(format!("proposal {} has no highlight", p.id));
            }
        }
        let anchors = self.comments.iter().map(|c| &c.anchor).chain(self.highlights.iter().map(|h| &h.anchor));
        for a in anchors {
            if a.status == AnchorStatus::Live
                && self.document.slice(a.start, a.end).as_deref() != Some(a.quote.as_str())
            {
                return Err(format!("live anchor {}..{} does not match its quote", a.start, a.end));
            }
        }
        Ok(())
    }
}

/// Rebuilds a session from an optional starting point and the events after it.
pub fn replay(snapshot: Option<Session>, events: &[Event]) -> Result<Session, ReplayError> {
    let mut session = snapshot.unwrap_or_else(Session::empty);
    for e in events {
        session.apply_in_place(e)?;
    }
    Ok(session)
}
