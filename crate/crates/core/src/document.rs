//! Story text, the edit algebra over it, and span anchors that survive edits.
//!
//! All offsets are Unicode code points. A browser selection is reported in
//! characters, so byte offsets never cross the public surface.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocumentError {
    #[error("edit targets version {edit_base} but the document is at version {current}")]
    VersionMismatch { edit_base: u64, current: u64 },
    #[error("range {start}..{end} is outside a document of {len} characters")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("selection start {start} is after its end {end}")]
    InvertedRange { start: usize, end: usize },
}

/// Mutable story body. Edits produce a new value; the receiver is left alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub version: u64,
}

/// A single splice: delete `deleted_len` characters at `at`, then insert `inserted`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOperation {
    pub at: usize,
    pub deleted_len: usize,
    pub inserted: String,
    pub base_version: u64,
}

impl EditOperation {
    pub fn insert(at: usize, text: impl Into<String>, base_version: u64) -> Self {
        Self { at, deleted_len: 0, inserted: text.into(), base_version }
    }

    pub fn delete(at: usize, len: usize, base_version: u64) -> Self {
        Self { at, deleted_len: len, inserted: String::new(), base_version }
    }

    pub fn replace(at: usize, len: usize, text: impl Into<String>, base_version: u64) -> Self {
        Self { at, deleted_len: len, inserted: text.into(), base_version }
    }

    pub fn is_identity(&self) -> bool {
        self.deleted_len == 0 && self.inserted.is_empty()
    }

    /// Net change in document length, in characters.
    pub fn delta(&self) -> isize {
        char_len(&self.inserted) as isize - self.deleted_len as isize
    }

    fn deleted_end(&self) -> usize {
        self.at + self.deleted_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStatus {
    Live,
    Orphaned,
}

/// An edit-stable reference into a document. `quote` is what the writer
/// selected; it is the ground truth used to re-find the span after edits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanAnchor {
    pub start: usize,
    pub end: usize,
    pub quote: String,
    pub created_at_version: u64,
    pub status: AnchorStatus,
}

impl SpanAnchor {
    pub fn is_live(&self) -> bool {
        self.status == AnchorStatus::Live
    }

    pub fn is_zero_length(&self) -> bool {
        self.start == self.end
    }

    fn orphaned(&self) -> SpanAnchor {
        SpanAnchor { status: AnchorStatus::Orphaned, ..self.clone() }
    }

    fn moved_to(&self, start: usize) -> SpanAnchor {
        SpanAnchor { start, end: start + char_len(&self.quote), status: AnchorStatus::Live, ..self.clone() }
    }

    /// Carries the anchor across `edit`. `edited` must be the document the
    /// edit produced.
    ///
    /// Edits wholly before the span shift it, edits wholly after leave it
    /// alone, and anything touching the span falls back to re-resolution
    /// against the edited text.
    pub fn transform(&self, edit: &EditOperation, edited: &Document) -> SpanAnchor {
        if !self.is_live() {
            return self.clone();
        }
        if edit.is_identity() {
            return self.clone();
        }
        if edit.deleted_end() <= self.start {
            let start = (self.start as isize + edit.delta()) as usize;
            return self.moved_to(start);
        }
        if edit.at >= self.end {
            return self.clone();
        }
        resolve_anchor(edited, self)
    }
}

/// Re-establishes where `anchor` lives in `doc`.
///
/// If the text at the anchor's offsets still equals its quote the anchor is
/// returned as is. Otherwise the whole document is searched and the anchor
/// moves only if the quote occurs exactly once; zero or several matches
/// orphan it. Orphaned anchors stay orphaned.
pub fn resolve_anchor(doc: &Document, anchor: &SpanAnchor) -> SpanAnchor {
    if !anchor.is_live() {
        return anchor.clone();
    }
    if slice_chars(&doc.text, anchor.start, anchor.end).as_deref() == Some(anchor.quote.as_str()) {
        return anchor.clone();
    }
    match unique_occurrence(&doc.text, &anchor.quote) {
        Some(start) => anchor.moved_to(start),
        None => anchor.orphaned(),
    }
}

/// Builds a live anchor over `doc.text[start..end]`. Zero-length spans are
/// permitted here; callers that need a real selection check
/// [`SpanAnchor::is_zero_length`].
pub fn extract_span(doc: &Document, start: usize, end: usize) -> Result<SpanAnchor, DocumentError> {
    if start > end {
        return Err(DocumentError::InvertedRange { start, end });
    }
    let quote =
        slice_chars(&doc.text, start, end).ok_or(DocumentError::OutOfBounds { start, end, len: doc.char_len() })?;
    Ok(SpanAnchor { start, end, quote, created_at_version: doc.version, status: AnchorStatus::Live })
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into(), version: 0 }
    }

    pub fn char_len(&self) -> usize {
        char_len(&self.text)
    }

    pub fn slice(&self, start: usize, end: usize) -> Option<String> {
        slice_chars(&self.text, start, end)
    }

    pub fn apply_edit(&self, edit: &EditOperation) -> Result<Document, DocumentError> {
        if edit.base_version != self.version {
            return Err(DocumentError::VersionMismatch { edit_base: edit.base_version, current: self.version });
        }
        let len = self.char_len();
        let end = edit.at.saturating_add(edit.deleted_len);
        if end > len {
            return Err(DocumentError::OutOfBounds { start: edit.at, end, len });
        }
        let from = byte_offset(&self.text, edit.at).expect("bounds checked");
        let to = byte_offset(&self.text, end).expect("bounds checked");
        let mut text = String::with_capacity(self.text.len() - (to - from) + edit.inserted.len());
        text.push_str(&self.text[..from]);
        text.push_str(&edit.inserted);
        text.push_str(&self.text[to..]);
        Ok(Document { id: self.id.clone(), text, version: self.version + 1 })
    }

    /// Character offset of `needle` if it occurs exactly once.
    pub fn find_unique(&self, needle: &str) -> Option<usize> {
        unique_occurrence(&self.text, needle)
    }

    /// Character offsets of every occurrence, overlapping ones included.
    pub fn find_all(&self, needle: &str) -> Vec<usize> {
        occurrences(&self.text, needle, usize::MAX)
    }
}

pub(crate) fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Byte offset of the `chars`-th character; `Some(s.len())` at the end.
pub(crate) fn byte_offset(s: &str, chars: usize) -> Option<usize> {
    if chars == 0 {
        return Some(0);
    }
    let mut indices = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    indices.nth(chars)
}

pub(crate) fn slice_chars(s: &str, start: usize, end: usize) -> Option<String> {
    if start > end {
        return None;
    }
    let from = byte_offset(s, start)?;
    let to = byte_offset(s, end)?;
    Some(s[from..to].to_owned())
}

fn occurrences(haystack: &str, needle: &str, limit: usize) -> Vec<usize> {
    let mut found = Vec::new();
    let mut chars_before = 0;
    let mut last_byte = 0;
    let mut search_from = 0;
    while found.len() < limit && search_from <= haystack.len() {
        let Some(rel) = haystack[search_from..].find(needle) else { break };
        let at = search_from + rel;
        chars_before += char_len(&haystack[last_byte..at]);
        last_byte = at;
        found.push(chars_before);
        // step one character so overlapping matches are counted
        match haystack[at..].chars().next() {
            Some(c) => search_from = at + c.len_utf8(),
            None => break,
        }
    }
    found
}

fn unique_occurrence(haystack: &str, needle: &str) -> Option<usize> {
    match occurrences(haystack, needle, 2).as_slice() {
        [only] => Some(*only),
        _ => None,
    }
}
