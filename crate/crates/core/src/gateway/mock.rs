//! Offline provider whose replies are a pure function of the prompt text and
//! the requested schema.
//!
//! Rules:
//! - comment: sentiment is `[positive, neutral, negative][len(focus) % 3]`
//!   with the length counted in characters; the text is a per-persona
//!   template quoting the first eight words of the focus.
//! - techniques: the two catalog entries whose names hash lowest against
//!   the comment text.
//! - highlights: every sentence of the story containing the longest word of
//!   the focus, at most three (first sentence if none match).
//! - revision: the highlight wrapped in [`REVISION_PREFIX`] / [`REVISION_SUFFIX`].
//!
//! Sections are read back out of the `<tag>` blocks the bundled templates
//! emit, so custom templates must keep those blocks for the mock to work.

use sha2::{Digest, Sha256};

use super::schema::{CommentReply, HighlightsReply, RevisionReply, TechniquePick, TechniquesReply};
use super::{ChatRequest, Provider, ProviderError, Role};
use crate::document::char_len;
use crate::persona::Sentiment;
use crate::prompt::SchemaId;
use crate::technique::catalog;

pub const REVISION_PREFIX: &str = "[revised: ";
pub const REVISION_SUFFIX: &str = "]";

const EXCERPT_WORDS: usize = 8;
const EXCERPT_MAX_CHARS: usize = 200;
const MAX_MOCK_HIGHLIGHTS: usize = 3;

#[derive(Debug, Default, Clone, Copy)]
pub struct MockProvider;

impl Provider for MockProvider {
    fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let prompt =
            request.messages.iter().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or_default();
        Ok(mock_complete(prompt, request.schema))
    }
}

/// The raw JSON text the mock replies with.
pub fn mock_complete(prompt: &str, schema: SchemaId) -> String {
    let json = match schema {
        SchemaId::Comment => serde_json::to_string(&mock_comment(prompt)),
        SchemaId::Techniques => serde_json::to_string(&mock_techniques(prompt)),
        SchemaId::Highlights => serde_json::to_string(&mock_highlights(prompt)),
        SchemaId::Revision => serde_json::to_string(&mock_revision(prompt)),
    };
    json.expect("mock replies always serialize")
}

/// Text between `<tag>\n` and the following `\n</tag>`. The story block runs
/// to the last closing tag since it is always emitted last.
fn section<'p>(prompt: &'p str, tag: &str) -> &'p str {
    let open = format!("<{tag}>\n");
    let close = format!("\n</{tag}>");
    let Some(start) = prompt.find(&open).map(|i| i + open.len()) else { return "" };
    let rest = &prompt[start..];
    let end = if tag == "story" { rest.rfind(&close) } else { rest.find(&close) };
    end.map_or(rest, |e| &rest[..e])
}

pub fn mock_sentiment(focus: &str) -> Sentiment {
    Sentiment::ALL[char_len(focus) % 3]
}

fn excerpt(focus: &str) -> String {
    let words: Vec<&str> = focus.split_whitespace().take(EXCERPT_WORDS).collect();
    let joined = words.join(" ");
    if char_len(&joined) <= EXCERPT_MAX_CHARS {
        joined
    } else {
        let cut: String = joined.chars().take(EXCERPT_MAX_CHARS).collect();
        format!("{cut}...")
    }
}

fn mock_comment(prompt: &str) -> CommentReply {
    let focus = section(prompt, "focus");
    let persona = section(prompt, "persona");
    let quoted = excerpt(focus);
    let comment_text = if persona.starts_with("Mad Scientist") {
        format!("Hmm! \"{quoted}\" - where is the mechanism? Show me the science behind it, not just the spectacle.")
    } else if persona.starts_with("Curious Girl") {
        format!("Wait, \"{quoted}\" - what does that mean for someone like me? I got a little lost here.")
    } else {
        format!("About \"{quoted}\": think about how a first-time reader meets this passage.")
    };
    CommentReply { comment_text, sentiment: mock_sentiment(focus) }
}

fn rank(name: &str, comment: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update([0u8]);
    h.update(comment.as_bytes());
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

fn mock_techniques(prompt: &str) -> TechniquesReply {
    let comment = section(prompt, "comment");
    let mut ranked: Vec<_> = catalog().iter().enumerate().map(|(i, t)| (rank(t.name, comment), i, t)).collect();
    ranked.sort_by_key(|(h, i, _)| (*h, *i));
    let techniques = ranked
        .into_iter()
        .take(2)
        .map(|(_, _, t)| TechniquePick {
            technique: t.id,
            rationale: format!("{} could address this comment: {}.", t.name, t.purposes[0].to_lowercase()),
        })
        .collect();
    TechniquesReply { techniques }
}

/// Longest alphanumeric run in `text`; the first one wins ties.
pub fn longest_word(text: &str) -> &str {
    text.split(|c: char| !c.is_alphanumeric()).fold("", |best, w| if char_len(w) > char_len(best) { w } else { best })
}

/// Sentences of `text`, trimmed. A sentence ends at `.`, `!` or `?` followed
/// by whitespace or the end of text, and at every line break.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let boundary = match c {
            '\n' => Some(i),
            '.' | '!' | '?' => match chars.peek() {
                None => Some(i + c.len_utf8()),
                Some((_, next)) if next.is_whitespace() => Some(i + c.len_utf8()),
                _ => None,
            },
            _ => None,
        };
        if let Some(end) = boundary {
            out.push(&text[start..end]);
            start = end;
        }
    }
    out.push(&text[start..]);
    out.into_iter().map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn mock_highlights(prompt: &str) -> HighlightsReply {
    let story = section(prompt, "story");
    let word = longest_word(section(prompt, "focus"));
    let all = sentences(story);
    let mut passages: Vec<String> = Vec::new();
    if !word.is_empty() {
        for s in all.iter().filter(|s| s.contains(word)) {
            if passages.len() == MAX_MOCK_HIGHLIGHTS {
                break;
            }
            if !passages.iter().any(|p| p == s) {
                passages.push((*s).to_owned());
            }
        }
    }
    if passages.is_empty() {
        passages.extend(all.first().map(|s| (*s).to_owned()));
    }
    HighlightsReply { passages }
}

fn mock_revision(prompt: &str) -> RevisionReply {
    RevisionReply { revised_text: format!("{REVISION_PREFIX}{}{REVISION_SUFFIX}", section(prompt, "highlight")) }
}
