//! Prompt templates with named placeholders.
//!
//! Templates are plain-text files with a short front-matter header:
//!
//! ```text
//! ---
//! id: commentator_comment
//! schema: comment
//! ---
//! body with {focus_text} and friends
//! ```
//!
//! Substitution is single-pass: text bound to a placeholder is inserted
//! literally and never re-expanded, even if it looks like `{full_story}`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PLACEHOLDERS: [&str; 6] =
    ["persona_card", "full_story", "focus_text", "comment_text", "technique_name", "highlight_text"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    CommentatorComment,
    AssistantTechniques,
    AssistantHighlights,
    AssistantRevision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    Comment,
    Techniques,
    Highlights,
    Revision,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::CommentatorComment,
        TemplateId::AssistantTechniques,
        TemplateId::AssistantHighlights,
        TemplateId::AssistantRevision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::CommentatorComment => "commentator_comment",
            TemplateId::AssistantTechniques => "assistant_techniques",
            TemplateId::AssistantHighlights => "assistant_highlights",
            TemplateId::AssistantRevision => "assistant_revision",
        }
    }

    pub fn schema(self) -> SchemaId {
        match self {
            TemplateId::CommentatorComment => SchemaId::Comment,
            TemplateId::AssistantTechniques => SchemaId::Techniques,
            TemplateId::AssistantHighlights => SchemaId::Highlights,
            TemplateId::AssistantRevision => SchemaId::Revision,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl SchemaId {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaId::Comment => "comment",
            SchemaId::Techniques => "techniques",
            SchemaId::Highlights => "highlights",
            SchemaId::Revision => "revision",
        }
    }
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("unbound placeholder(s): {}", .0.join(", "))]
    Unbound(Vec<String>),
    #[error("template file {file}: {reason}")]
    Malformed { file: String, reason: String },
    #[error("template {template} must declare schema {expected}, found {found}")]
    WrongSchema { template: String, expected: SchemaId, found: String },
    #[error("reading templates: {0}")]
    Io(String),
}

/// Values for placeholders, by name.
#[derive(Debug, Clone, Default)]
pub struct Bindings<'a>(BTreeMap<&'a str, &'a str>);

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &'a str, value: &'a str) -> Self {
        self.0.insert(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&'a str> {
        self.0.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
    pub output_schema: SchemaId,
}

enum Piece<'t> {
    Literal(&'t str),
    Slot(&'static str),
}

fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let slot = PLACEHOLDERS.iter().find(|name| after.starts_with(*name) && after[name.len()..].starts_with('}'));
        match slot {
            Some(name) => {
                out.push(Piece::Literal(&rest[..open]));
                out.push(Piece::Slot(name));
                rest = &after[name.len() + 1..];
            }
            None => {
                out.push(Piece::Literal(&rest[..open + 1]));
                rest = after;
            }
        }
    }
    out.push(Piece::Literal(rest));
    out
}

impl PromptTemplate {
    /// Placeholder names the body uses, deduplicated, in order of first use.
    pub fn required(&self) -> Vec<&'static str> {
        let mut names: Vec<&'static str> = Vec::new();
        for piece in pieces(&self.body) {
            if let Piece::Slot(name) = piece {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names
    }

    pub fn render(&self, bindings: &Bindings<'_>) -> Result<String, PromptError> {
        let missing: Vec<String> =
            self.required().into_iter().filter(|n| bindings.get(n).is_none()).map(str::to_owned).collect();
        if !missing.is_empty() {
            return Err(PromptError::Unbound(missing));
        }
        let mut out = String::with_capacity(self.body.len());
        for piece in pieces(&self.body) {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(name) => out.push_str(bindings.get(name).unwrap_or_default()),
            }
        }
        Ok(out)
    }
}

/// Splits `---`-delimited front matter into `key: value` pairs and the body.
pub(crate) fn split_front_matter(text: &str) -> Option<(BTreeMap<String, String>, String)> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let rest = text.strip_prefix("---\n")?;
    let close = rest.find("\n---\n")?;
    let mut fields = BTreeMap::new();
    for line in rest[..close].lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once(':')?;
        fields.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    Some((fields, rest[close + 5..].to_owned()))
}

pub fn parse_template(file: &str, text: &str) -> Result<PromptTemplate, PromptError> {
    let malformed = |reason: &str| PromptError::Malformed { file: file.to_owned(), reason: reason.to_owned() };
    let (fields, body) = split_front_matter(text).ok_or_else(|| malformed("missing front matter"))?;
    let id = fields.get("id").ok_or_else(|| malformed("front matter lacks `id`"))?;
    let id = TemplateId::parse(id).ok_or_else(|| malformed("unknown template id"))?;
    let schema = fields.get("schema").ok_or_else(|| malformed("front matter lacks `schema`"))?;
    if schema != id.schema().as_str() {
        return Err(PromptError::WrongSchema {
            template: id.as_str().to_owned(),
            expected: id.schema(),
            found: schema.clone(),
        });
    }
    Ok(PromptTemplate { id, body, output_schema: id.schema() })
}

const BUNDLED: [(&str, &str); 4] = [
    ("commentator_comment.txt", include_str!("../assets/prompts/commentator_comment.txt")),
    ("assistant_techniques.txt", include_str!("../assets/prompts/assistant_techniques.txt")),
    ("assistant_highlights.txt", include_str!("../assets/prompts/assistant_highlights.txt")),
    ("assistant_revision.txt", include_str!("../assets/prompts/assistant_revision.txt")),
];

/// One template per [`TemplateId`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl TemplateSet {
    pub fn bundled() -> Self {
        let templates = BUNDLED
            .iter()
            .map(|(file, text)| {
                let t = parse_template(file, text).expect("bundled template is well-formed");
                (t.id, t)
            })
            .collect();
        Self { templates }
    }

    /// Bundled templates overridden by any `*.txt` template files in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::bundled();
        let entries = std::fs::read_dir(dir).map_err(|e| PromptError::Io(e.to_string()))?;
        for entry in entries {
            let path = entry.map_err(|e| PromptError::Io(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Io(e.to_string()))?;
            let t = parse_template(&path.display().to_string(), &text)?;
            set.templates.insert(t.id, t);
        }
        Ok(set)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(&self, id: TemplateId, bindings: &Bindings<'_>) -> Result<String, PromptError> {
        self.get(id).render(bindings)
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::bundled()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_comment_bindings() -> Bindings<'static> {
        Bindings::new()
            .with("persona_card", "Mad Scientist card")
            .with("full_story", "Once upon a time a cell divided.")
            .with("focus_text", "a cell divided")
    }

    #[test]
    fn bundled_templates_declare_their_schema() {
        let set = TemplateSet::bundled();
        for id in TemplateId::ALL {
            assert_eq!(set.get(id).output_schema, id.schema());
            assert!(!set.get(id).required().is_empty());
        }
    }

    #[test]
    fn comment_prompt_contains_focus_verbatim() {
        let set = TemplateSet::bundled();
        let out = set.render(TemplateId::CommentatorComment, &full_comment_bindings()).unwrap();
        assert!(out.contains("a cell divided"));
        for name in PLACEHOLDERS {
            assert!(!out.contains(&format!("{{{name}}}")));
        }
    }

    #[test]
    fn missing_focus_is_named() {
        let set = TemplateSet::bundled();
        let b = Bindings::new().with("persona_card", "x").with("full_story", "y");
        assert_eq!(
            set.render(TemplateId::CommentatorComment, &b).unwrap_err(),
            PromptError::Unbound(vec!["focus_text".into()])
        );
    }

    /// Reference splice: scan left to right, replacing each known slot once.
    fn naive_one_pass(body: &str, b: &Bindings<'_>) -> String {
        let mut out = String::new();
        let mut i = 0;
        'outer: while i < body.len() {
            for name in PLACEHOLDERS {
                let token = format!("{{{name}}}");
                if body[i..].starts_with(&token) {
                    out.push_str(b.get(name).unwrap());
                    i += token.len();
                    continue 'outer;
                }
            }
            let c = body[i..].chars().next().unwrap();
            out.push(c);
            i += c.len_utf8();
        }
        out
    }

    #[test]
    fn placeholder_syntax_in_bindings_is_literal() {
        let t = PromptTemplate {
            id: TemplateId::AssistantRevision,
            body: "A={focus_text} B={full_story} {unknown} {".into(),
            output_schema: SchemaId::Revision,
        };
        let b = Bindings::new().with("focus_text", "{full_story}").with("full_story", "S");
        let out = t.render(&b).unwrap();
        assert_eq!(out, naive_one_pass(&t.body, &b));
        assert_eq!(out, "A={full_story} B=S {unknown} {");
    }

    #[test]
    fn front_matter_validation() {
        assert!(matches!(parse_template("x", "no header"), Err(PromptError::Malformed { .. })));
        let wrong = "---\nid: assistant_revision\nschema: comment\n---\nbody {highlight_text}\n";
        assert!(matches!(parse_template("x", wrong), Err(PromptError::WrongSchema { .. })));
        let ok = "---\nid: assistant_revision\nschema: revision\n---\nbody {highlight_text}\n";
        assert_eq!(parse_template("x", ok).unwrap().required(), vec!["highlight_text"]);
    }

    #[test]
    fn load_dir_overrides_bundled() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("rev.txt"),
            "---\nid: assistant_revision\nschema: revision\n---\nONLY {highlight_text}\n",
        )
        .unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        let out = set.render(TemplateId::AssistantRevision, &Bindings::new().with("highlight_text", "h")).unwrap();
        assert_eq!(out, "ONLY h\n");
        assert_eq!(set.get(TemplateId::CommentatorComment), TemplateSet::bundled().get(TemplateId::CommentatorComment));
    }
}
