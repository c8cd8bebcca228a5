//! Saving a session to disk, appending to its log, loading it back, and
//! verifying the snapshot against a full replay.
//!
//! cargo run -p revtogether --example persistence [-- <data-dir>]

use std::path::PathBuf;
use std::sync::Arc;

use revtogether::clock::SimulatedClock;
use revtogether::document::EditOperation;
use revtogether::gateway::Gateway;
use revtogether::persona::PersonaId;
use revtogether::script::cmd_replay;
use revtogether::store::Store;
use revtogether::workflow::Workbench;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root =
        std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("revtogether-store"));
    let store = Store::open(&root)?;
    let clock = Arc::new(SimulatedClock::starting_at(0));
    let mut wb = Workbench::create("persisted", "A tiny squid glows in the dark sea.", clock.clone());
    let c = wb.request_comment(&Gateway::mock(), PersonaId::MadScientist, 2, 12)?;
    store.save(wb.session(), wb.events())?;
    println!("saved {} events", wb.events().len());

    wb.reject_comment(c)?;
    wb.writer_edit(EditOperation::insert(0, "Tonight, ", 0))?;
    store.save(wb.session(), wb.events())?;
    println!("appended, log now has {} events", wb.events().len());

    let loaded = store.load("persisted")?;
    assert_eq!(&loaded.session, wb.session());
    println!("loaded: {:?} (version {})", loaded.session.document.text, loaded.session.document.version);

    let (_, report) = cmd_replay(&store.session_dir("persisted")?)?;
    println!("replay check: {report:?}");
    println!("files under {}", store.session_dir("persisted")?.display());
    Ok(())
}
