//! Runs the bundled fixture story through the canonical script with the
//! mock provider and prints the transcript.
//!
//! cargo run -p revtogether --example scripted_session [-- <out-dir>]

use std::path::{Path, PathBuf};

use revtogether::gateway::Gateway;
use revtogether::script::cmd_run_script;

fn main() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out =
        std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("revtogether-script"));
    match cmd_run_script(&fixtures.join("story.txt"), &fixtures.join("canonical.script"), &out, &Gateway::mock()) {
        Ok(run) => {
            print!("{}", run.transcript);
            println!("\nfinal story ({} events) written to {}", run.workbench.events().len(), out.display());
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code().into());
        }
    }
}
