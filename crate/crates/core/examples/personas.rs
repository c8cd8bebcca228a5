//! Persona affect: the sentiment table, hover images, and the decision
//! flash on a simulated clock.
//!
//! cargo run -p revtogether --example personas

use std::sync::Arc;

use revtogether::clock::{Clock, SimulatedClock};
use revtogether::gateway::Gateway;
use revtogether::persona::{affect_for, avatar_asset, PersonaId, Sentiment};
use revtogether::workflow::Workbench;

fn main() {
    for p in PersonaId::ALL {
        let row: Vec<String> =
            Sentiment::ALL.iter().map(|s| format!("{s:?} -> {}", avatar_asset(p, affect_for(p, *s)))).collect();
        println!("{:<14} {}", p.as_str(), row.join(", "));
    }

    let gateway = Gateway::mock();
    let clock = SimulatedClock::starting_at(0);
    let story = "Deep in the ocean, a tiny squid glows. Bacteria make the glow.";
    let mut wb = Workbench::create("personas", story, Arc::new(clock.clone()));
    let a = wb.request_comment(&gateway, PersonaId::CuriousGirl, 0, 38).expect("comment");
    let b = wb.request_comment(&gateway, PersonaId::CuriousGirl, 39, 62).expect("comment");
    for c in &wb.session().comments {
        let hover = wb.session().persona_state(c.persona).on_hover(c);
        println!("\ncomment {} ({:?}): {}", c.id, c.sentiment, c.text);
        println!("  hovering shows {:?}", hover.current_affect(clock.now()));
    }

    wb.accept_comment(&gateway, a).expect("accept");
    clock.advance(400);
    wb.reject_comment(b).expect("reject");
    println!();
    for t in [0, 399, 400, 1_000, 1_399, 1_400] {
        println!("t={t:>5} ms  curious_girl shows {:?}", wb.session().avatar_affect(PersonaId::CuriousGirl, t));
    }
}
