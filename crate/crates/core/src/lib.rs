//! A revision workbench for science stories.
//!
//! Two commentator personas give sentiment-tagged feedback on passages the
//! writer selects. Accepting a comment wakes a writing assistant that
//! suggests techniques, highlights passages where they apply, and drafts
//! revisions the writer may adopt. The writer can edit freely throughout;
//! comments and highlights follow the text through edits.

pub mod clock;
pub mod document;
pub mod gateway;
pub mod persona;
pub mod prompt;
pub mod script;
pub mod store;
pub mod technique;
pub mod workflow;
