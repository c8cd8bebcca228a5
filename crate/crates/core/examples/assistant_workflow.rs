//! The gated assistant: a comment must be accepted before techniques are
//! suggested, a technique chosen before passages are highlighted, and a
//! highlight asked about before a revision can be adopted.
//!
//! cargo run -p revtogether --example assistant_workflow

use std::sync::Arc;

use revtogether::clock::SimulatedClock;
use revtogether::gateway::Gateway;
use revtogether::persona::PersonaId;
use revtogether::technique::catalog;
use revtogether::workflow::Workbench;

fn main() {
    println!("techniques:");
    for t in catalog() {
        println!("  {}: {} ({})", t.name, t.definition, t.purposes.join("; "));
    }

    let gateway = Gateway::mock();
    let story = "Deep in the ocean, a tiny squid glows. Bacteria living in its light organ make the glow. \
                 Its glow hides its shadow from predators below.";
    let mut wb = Workbench::create("assistant", story, Arc::new(SimulatedClock::starting_at(0)));

    let comment = wb.request_comment(&gateway, PersonaId::MadScientist, 39, 88).expect("comment");
    println!("\ncomment {comment}: {}", wb.session().comment(comment).unwrap().text);
    match wb.select_technique(&gateway, comment + 1) {
        Ok(_) => unreachable!("no suggestion exists before acceptance"),
        Err(e) => println!("select before accepting: {e}"),
    }

    let suggestions = wb.accept_comment(&gateway, comment).expect("accept");
    for id in &suggestions {
        let s = wb.session().suggestion(*id).unwrap();
        println!("suggestion {id}: {} ({})", s.technique.technique().name, s.rationale);
    }

    let highlights = wb.select_technique(&gateway, suggestions[0]).expect("select");
    for id in &highlights {
        println!("highlight {id}: {:?}", wb.session().highlight(*id).unwrap().anchor.quote);
    }

    let proposal = wb.request_revision(&gateway, highlights[0]).expect("revision");
    println!("proposal {proposal}: {:?}", wb.session().proposal(proposal).unwrap().revised_text);
    let version = wb.adopt_revision(proposal).expect("adopt");
    println!("\nstory v{version}: {}", wb.session().document.text);
    println!("{} events logged", wb.events().len());
}
