//! The four science-story writing techniques the assistant may suggest.

use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError, TechniquesReply};
use crate::persona::{Comment, CommentState};
use crate::prompt::{Bindings, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechniqueId {
    #[serde(alias = "Humor")]
    Humor,
    #[serde(alias = "Analogy and Metaphor")]
    AnalogyMetaphor,
    #[serde(alias = "Emotional Arousal")]
    EmotionalArousal,
    #[serde(alias = "Suspense and Surprise")]
    SuspenseSurprise,
}

impl TechniqueId {
    pub const ALL: [TechniqueId; 4] = [
        TechniqueId::Humor,
        TechniqueId::AnalogyMetaphor,
        TechniqueId::EmotionalArousal,
        TechniqueId::SuspenseSurprise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TechniqueId::Humor => "humor",
            TechniqueId::AnalogyMetaphor => "analogy_metaphor",
            TechniqueId::EmotionalArousal => "emotional_arousal",
            TechniqueId::SuspenseSurprise => "suspense_surprise",
        }
    }

    pub fn technique(self) -> &'static Technique {
        &CATALOG[self as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Technique {
    pub id: TechniqueId,
    pub name: &'static str,
    pub definition: &'static str,
    pub purposes: &'static [&'static str],
}

static CATALOG: [Technique; 4] = [
    Technique {
        id: TechniqueId::Humor,
        name: "Humor",
        definition: "The use of wit, jokes, or light-hearted language to make complex topics \
                     more engaging and enjoyable.",
        purposes: &["Capture attention", "Simplify understanding", "Make the content relatable to readers"],
    },
    Technique {
        id: TechniqueId::AnalogyMetaphor,
        name: "Analogy and Metaphor",
        definition: "Compare complex ideas to familiar concepts to enhance understanding.",
        purposes: &[
            "Simplify obscure topics by relating them to everyday experiences or imagery",
            "Make the content memorable",
        ],
    },
    Technique {
        id: TechniqueId::EmotionalArousal,
        name: "Emotional Arousal",
        definition: "The use of evocative language or storytelling to trigger readers' emotions \
                     and create a deeper connection",
        purposes: &["Engage readers", "Make the content memorable", "Inspire curiosity"],
    },
    Technique {
        id: TechniqueId::SuspenseSurprise,
        name: "Suspense and Surprise",
        definition: "Build anticipation through uncertainty and captivate readers by delivering \
                     unexpected twists or revelations.",
        purposes: &["Engage readers", "Stimulating curiosity", "Make the content memorable"],
    },
];

/// The closed catalog, in display order.
pub fn catalog() -> &'static [Technique] {
    &CATALOG
}

/// One suggestion tag, tied to the accepted comment that caused it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TechniqueSuggestion {
    pub id: u64,
    pub comment_id: u64,
    pub technique: TechniqueId,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionDraft {
    pub technique: TechniqueId,
    pub rationale: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SuggestError {
    #[error("comment {0} has not been accepted")]
    NotAccepted(u64),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub(crate) fn techniques_bindings<'a>(comment_text: &'a str, focus: &'a str, full_story: &'a str) -> Bindings<'a> {
    Bindings::new().with("comment_text", comment_text).with("focus_text", focus).with("full_story", full_story)
}

/// Asks the assistant which techniques would address an accepted comment.
/// Only accepted comments may activate the assistant.
pub fn suggest_techniques(
    comment: &Comment,
    full_story: &str,
    gateway: &Gateway,
) -> Result<Vec<SuggestionDraft>, SuggestError> {
    if comment.state != CommentState::Accepted {
        return Err(SuggestError::NotAccepted(comment.id));
    }
    let prompt = gateway
        .templates()
        .render(TemplateId::AssistantTechniques, &techniques_bindings(&comment.text, &comment.anchor.quote, full_story))
        .map_err(GatewayError::from)?;
    let reply = gateway.complete::<TechniquesReply>(&prompt)?;
    Ok(reply.payload.into_drafts())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_matches_table() {
        let c = catalog();
        assert_eq!(c.len(), 4);
        let names: Vec<_> = c.iter().map(|t| t.name).collect();
        assert_eq!(names, ["Humor", "Analogy and Metaphor", "Emotional Arousal", "Suspense and Surprise"]);
        assert!(c[0].definition.starts_with("The use of wit, jokes, or light-hearted language"));
        assert!(c[3].purposes.contains(&"Stimulating curiosity"));
        for t in c {
            assert!(!t.definition.is_empty());
            assert!((1..=3).contains(&t.purposes.len()));
            assert_eq!(t.id.technique().name, t.name);
        }
    }

    #[test]
    fn ids_parse_from_id_or_display_name() {
        let by_id: TechniqueId = serde_json::from_str("\"analogy_metaphor\"").unwrap();
        let by_name: TechniqueId = serde_json::from_str("\"Analogy and Metaphor\"").unwrap();
        assert_eq!(by_id, by_name);
        assert!(serde_json::from_str::<TechniqueId>("\"sarcasm\"").is_err());
        for id in TechniqueId::ALL {
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{}\"", id.as_str()));
        }
    }
}
