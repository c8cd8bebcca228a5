//! The two commentator personas, their comments, and the avatar affect
//! state machine.
//!
//! An avatar shows `calm` by default. Hovering a comment shows the affect
//! matching its sentiment; accepting or rejecting a comment flashes `happy`
//! or the persona's negative affect for [`FLASH_MS`]. A flash outranks hover
//! until it expires.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::document::SpanAnchor;
use crate::gateway::{CommentReply, Gateway, GatewayError};
use crate::prompt::{split_front_matter, Bindings, PromptError, TemplateId};

/// How long an accept/reject reaction stays on screen.
pub const FLASH_MS: Millis = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaId {
    MadScientist,
    CuriousGirl,
}

impl PersonaId {
    pub const ALL: [PersonaId; 2] = [PersonaId::MadScientist, PersonaId::CuriousGirl];

    pub fn as_str(self) -> &'static str {
        match self {
            PersonaId::MadScientist => "mad_scientist",
            PersonaId::CuriousGirl => "curious_girl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }

    pub fn negative_affect(self) -> Affect {
        match self {
            PersonaId::MadScientist => Affect::Angry,
            PersonaId::CuriousGirl => Affect::Disappointed,
        }
    }
}

impl fmt::Display for PersonaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sentiment {
    Positive,
    Neutral,
    Negative,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Positive, Sentiment::Neutral, Sentiment::Negative];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Affect {
    Happy,
    Calm,
    Angry,
    Disappointed,
}

impl Affect {
    pub fn as_str(self) -> &'static str {
        match self {
            Affect::Happy => "happy",
            Affect::Calm => "calm",
            Affect::Angry => "angry",
            Affect::Disappointed => "disappointed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub id: PersonaId,
    pub display_name: String,
    pub persona_card: String,
    pub negative_affect: Affect,
}

#[derive(Debug, thiserror::Error)]
pub enum PersonaError {
    #[error("persona card {file}: {reason}")]
    Malformed { file: String, reason: String },
    #[error("reading persona cards: {0}")]
    Io(#[from] std::io::Error),
}

pub fn parse_persona_card(file: &str, text: &str) -> Result<Persona, PersonaError> {
    let bad = |reason: &str| PersonaError::Malformed { file: file.to_owned(), reason: reason.to_owned() };
    let (fields, body) = split_front_matter(text).ok_or_else(|| bad("missing front matter"))?;
    let id = fields.get("id").and_then(|s| PersonaId::parse(s)).ok_or_else(|| bad("unknown or missing id"))?;
    let display_name = fields.get("display_name").cloned().ok_or_else(|| bad("missing display_name"))?;
    let negative: Affect = fields
        .get("negative_affect")
        .and_then(|s| serde_json::from_value(serde_json::Value::String(s.clone())).ok())
        .ok_or_else(|| bad("missing or unknown negative_affect"))?;
    if negative != id.negative_affect() {
        return Err(bad(&format!("{id} must use negative affect {}", id.negative_affect().as_str())));
    }
    let persona_card = body.trim().to_owned();
    if persona_card.is_empty() {
        return Err(bad("empty card body"));
    }
    Ok(Persona { id, display_name, persona_card, negative_affect: negative })
}

/// Both persona cards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Personas {
    mad_scientist: Persona,
    curious_girl: Persona,
}

impl Personas {
    pub fn bundled() -> Self {
        let parse = |f, t| parse_persona_card(f, t).expect("bundled persona card is well-formed");
        Self {
            mad_scientist: parse("mad_scientist.txt", include_str!("../assets/personas/mad_scientist.txt")),
            curious_girl: parse("curious_girl.txt", include_str!("../assets/personas/curious_girl.txt")),
        }
    }

    /// Bundled cards overridden by `mad_scientist.txt` / `curious_girl.txt` in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PersonaError> {
        let mut set = Self::bundled();
        for id in PersonaId::ALL {
            let path = dir.join(format!("{id}.txt"));
            if !path.exists() {
                continue;
            }
            let card = parse_persona_card(&path.display().to_string(), &std::fs::read_to_string(&path)?)?;
            if card.id != id {
                return Err(PersonaError::Malformed {
                    file: path.display().to_string(),
                    reason: format!("file name says {id} but card says {}", card.id),
                });
            }
            match id {
                PersonaId::MadScientist => set.mad_scientist = card,
                PersonaId::CuriousGirl => set.curious_girl = card,
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: PersonaId) -> &Persona {
        match id {
            PersonaId::MadScientist => &self.mad_scientist,
            PersonaId::CuriousGirl => &self.curious_girl,
        }
    }
}

impl Default for Personas {
    fn default() -> Self {
        Self::bundled()
    }
}

/// Positive → happy, neutral → calm, negative → the persona's own negative affect.
pub fn affect_for(persona: PersonaId, sentiment: Sentiment) -> Affect {
    match sentiment {
        Sentiment::Positive => Affect::Happy,
        Sentiment::Neutral => Affect::Calm,
        Sentiment::Negative => persona.negative_affect(),
    }
}

/// Relative path of the avatar image for a persona in a given affect.
pub fn avatar_asset(persona: PersonaId, affect: Affect) -> String {
    format!("avatars/{}/{}.png", persona.as_str(), affect.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommentState {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub id: u64,
    pub persona: PersonaId,
    pub anchor: SpanAnchor,
    pub text: String,
    pub sentiment: Sentiment,
    pub state: CommentState,
    pub created_seq: u64,
}

impl Comment {
    pub fn is_pending(&self) -> bool {
        self.state == CommentState::Pending
    }
}

/// A comment as produced by the model, before the session numbers it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommentDraft {
    pub persona: PersonaId,
    pub anchor: SpanAnchor,
    pub text: String,
    pub sentiment: Sentiment,
}

impl CommentDraft {
    pub fn into_comment(self, id: u64, created_seq: u64) -> Comment {
        Comment {
            id,
            persona: self.persona,
            anchor: self.anchor,
            text: self.text,
            sentiment: self.sentiment,
            state: CommentState::Pending,
            created_seq,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CommentError {
    #[error("the selected passage is no longer in the story")]
    OrphanedFocus,
    #[error("the selection is empty")]
    EmptyFocus,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl From<PromptError> for CommentError {
    fn from(e: PromptError) -> Self {
        CommentError::Gateway(e.into())
    }
}

pub(crate) fn comment_bindings<'a>(persona: &'a Persona, focus: &'a str, full_story: &'a str) -> Bindings<'a> {
    Bindings::new().with("persona_card", &persona.persona_card).with("focus_text", focus).with("full_story", full_story)
}

/// Asks `persona` for a comment on the anchored passage. The sentiment comes
/// back in the same structured reply as the text.
pub fn generate_comment(
    persona: &Persona,
    focus: &SpanAnchor,
    full_story: &str,
    gateway: &Gateway,
) -> Result<CommentDraft, CommentError> {
    if !focus.is_live() {
        return Err(CommentError::OrphanedFocus);
    }
    if focus.quote.is_empty() {
        return Err(CommentError::EmptyFocus);
    }
    let prompt = gateway
        .templates()
        .render(TemplateId::CommentatorComment, &comment_bindings(persona, &focus.quote, full_story))?;
    let reply = gateway.complete::<CommentReply>(&prompt)?;
    Ok(CommentDraft {
        persona: persona.id,
        anchor: focus.clone(),
        text: reply.payload.comment_text,
        sentiment: reply.payload.sentiment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flash {
    pub affect: Affect,
    pub started_at: Millis,
    pub expires_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaState {
    pub persona: PersonaId,
    /// Affect of the comment currently under the pointer, if any.
    pub hover: Option<Affect>,
    pub flash: Option<Flash>,
}

impl PersonaState {
    pub fn new(persona: PersonaId) -> Self {
        Self { persona, hover: None, flash: None }
    }

    /// What the avatar shows at `now`.
    pub fn current_affect(&self, now: Millis) -> Affect {
        match self.flash {
            Some(f) if f.started_at <= now && now < f.expires_at => f.affect,
            _ => self.hover.unwrap_or(Affect::Calm),
        }
    }

    pub fn flash_active(&self, now: Millis) -> bool {
        self.flash.is_some_and(|f| f.started_at <= now && now < f.expires_at)
    }

    /// Comments of the other persona leave this state untouched.
    pub fn on_hover(&self, comment: &Comment) -> PersonaState {
        if comment.persona != self.persona {
            return self.clone();
        }
        PersonaState { hover: Some(affect_for(self.persona, comment.sentiment)), ..self.clone() }
    }

    pub fn on_hover_end(&self) -> PersonaState {
        PersonaState { hover: None, ..self.clone() }
    }

    /// A new decision replaces any running flash; expiry counts from `now`.
    pub fn on_decision(&self, decision: Decision, now: Millis) -> PersonaState {
        let affect = match decision {
            Decision::Accept => Affect::Happy,
            Decision::Reject => self.persona.negative_affect(),
        };
        PersonaState { flash: Some(Flash { affect, started_at: now, expires_at: now + FLASH_MS }), ..self.clone() }
    }
}
