//! Span anchors carried across writer edits: shifted, re-found, or orphaned.
//!
//! cargo run -p revtogether --example anchors

use revtogether::document::{extract_span, Document, EditOperation};

fn show(doc: &Document, label: &str, anchor: &revtogether::document::SpanAnchor) {
    let at = doc.slice(anchor.start, anchor.end).unwrap_or_default();
    println!("{label:<28} {:?} {}..{} -> {at:?}", anchor.status, anchor.start, anchor.end);
}

fn main() {
    let mut doc = Document::new("demo", "The café squid 🦑 glows. Its glow hides its shadow.");
    let start = doc.find_unique("hides its shadow").expect("phrase present");
    let mut anchor = extract_span(&doc, start, start + "hides its shadow".chars().count()).expect("valid span");
    show(&doc, "selected", &anchor);

    let steps = [
        ("insert before the span", EditOperation::insert(0, "At night, ", 0)),
        ("append after the span", EditOperation::insert(60, "!", 1)),
        ("retype across the span", EditOperation::replace(43, 18, "hides its shadow?!", 2)),
        ("rewrite the quoted words", EditOperation::replace(43, 5, "masks", 3)),
    ];
    for (label, edit) in steps {
        doc = doc.apply_edit(&edit).expect("edit applies");
        anchor = anchor.transform(&edit, &doc);
        show(&doc, label, &anchor);
    }
    println!("\nfinal text: {}", doc.text);
}
