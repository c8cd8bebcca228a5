use std::fs;
use std::path::{Path, PathBuf};

use revtogether::gateway::Gateway;
use revtogether::persona::CommentState;
use revtogether::script::{cmd_replay, cmd_run_script, CliError, StepError};
use revtogether::store::ReplayReport;
use revtogether::workflow::{ErrorCode, WorkflowError};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn script_file(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("test.script");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn canonical_run_matches_golden_files() {
    let out = tempfile::tempdir().unwrap();
    let f = fixtures();
    let run = cmd_run_script(&f.join("story.txt"), &f.join("canonical.script"), out.path(), &Gateway::mock()).unwrap();
    assert!(run.failure.is_none());
    for name in ["story.txt", "events.jsonl"] {
        let got = fs::read(out.path().join(name)).unwrap();
        let want = fs::read(f.join("golden").join(name)).unwrap();
        assert!(got == want, "{name} differs from the golden copy");
    }
    let s = run.workbench.session();
    assert_eq!(s.comments.len(), 4);
    assert_eq!(s.comments.iter().filter(|c| c.state == CommentState::Accepted).count(), 2);
    assert_eq!(s.document.version, 1);
}

#[test]
fn empty_script_leaves_story_untouched() {
    let out = tempfile::tempdir().unwrap();
    let script = script_file(out.path(), "# nothing to do\n\n");
    let story = fixtures().join("story.txt");
    cmd_run_script(&story, &script, &out.path().join("o"), &Gateway::mock()).unwrap();
    assert_eq!(fs::read(out.path().join("o/story.txt")).unwrap(), fs::read(story).unwrap());
}

#[test]
fn accepting_a_missing_comment_exits_2_and_rolls_back() {
    let out = tempfile::tempdir().unwrap();
    let script =
        script_file(out.path(), "comment mad_scientist \"squid erases its own silhouette\"\naccept 77\nreject first\n");
    let err =
        cmd_run_script(&fixtures().join("story.txt"), &script, &out.path().join("o"), &Gateway::mock()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    match &err {
        CliError::Step { step, line, error: StepError::Workflow(w) } => {
            assert_eq!((*step, *line), (2, 2));
            assert_eq!(w.code(), ErrorCode::NotFound);
        }
        other => panic!("unexpected {other:?}"),
    }
    let events = fs::read_to_string(out.path().join("o/events.jsonl")).unwrap();
    assert_eq!(events.lines().count(), 2);
    let transcript = fs::read_to_string(out.path().join("o/transcript.txt")).unwrap();
    assert!(transcript.contains("FAILED"));
}

#[test]
fn illegal_state_step_exits_2() {
    let out = tempfile::tempdir().unwrap();
    let script = script_file(out.path(), "comment curious_girl \"It borrows it.\"\nreject 1\naccept 1\n");
    let err =
        cmd_run_script(&fixtures().join("story.txt"), &script, &out.path().join("o"), &Gateway::mock()).unwrap_err();
    assert!(matches!(
        &err,
        CliError::Step { step: 3, error: StepError::Workflow(WorkflowError::IllegalTransition(_)), .. }
    ));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn missing_inputs_exit_1_and_bad_syntax_exits_2() {
    let out = tempfile::tempdir().unwrap();
    let err = cmd_run_script(Path::new("/no/such/story"), Path::new("/no/such/script"), out.path(), &Gateway::mock())
        .unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let script = script_file(out.path(), "launch rockets\n");
    let err = cmd_run_script(&fixtures().join("story.txt"), &script, out.path(), &Gateway::mock()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn replay_of_run_output() {
    let out = tempfile::tempdir().unwrap();
    let f = fixtures();
    let run = cmd_run_script(&f.join("story.txt"), &f.join("canonical.script"), out.path(), &Gateway::mock()).unwrap();
    let (session, report) = cmd_replay(out.path()).unwrap();
    assert_eq!(&session, run.workbench.session());
    assert_eq!(report, ReplayReport::Identical { events: run.workbench.events().len() as u64 });

    let log = out.path().join("events.jsonl");
    let text = fs::read_to_string(&log).unwrap();
    fs::write(&log, text.replacen("[revised: ", "[REVISED: ", 1)).unwrap();
    let (_, report) = cmd_replay(out.path()).unwrap();
    let tampered_seq = text.lines().position(|l| l.contains("[revised: ")).unwrap() as u64 + 1;
    assert!(matches!(report, ReplayReport::Diverged { seq, .. } if seq == tampered_seq), "{report:?}");

    fs::write(&log, &text).unwrap();
    fs::remove_file(out.path().join("snapshot.json")).unwrap();
    let (_, report) = cmd_replay(out.path()).unwrap();
    assert!(matches!(report, ReplayReport::NoSnapshot { .. }));

    assert_eq!(cmd_replay(&out.path().join("nowhere")).unwrap_err().exit_code(), 1);
}
