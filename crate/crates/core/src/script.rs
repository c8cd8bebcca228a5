//! Scripted sessions for batch runs and tests.
//!
//! A script is plain text, one command per line. Blank lines and lines
//! starting with `#` are skipped. Arguments are shell-quoted.
//!
//! ```text
//! comment mad_scientist "exact passage"    # or: comment curious_girl 10 42
//! accept last                              # accept | reject <comment-ref>
//! select first                             # <suggestion-ref>, or a technique id
//! revise first                             # <highlight-ref>
//! adopt last                               # <proposal-ref>
//! replace "old text" "new text"
//! insert-before "anchor" "text"
//! insert-after "anchor" "text"
//! delete "text"
//! edit 12 3 "text"                         # raw edit: at, deleted length, inserted
//! wait 1500                                # advance the clock (ms)
//! ```
//!
//! Quoted passages must occur exactly once in the current story. A ref is
//! a numeric id, `first` or `last`. `first`/`last` range over the entities the
//! command can act on: pending comments, all suggestions, visible live
//! highlights, offered proposals.
//!
//! Runs use a simulated clock that starts at zero and advances
//! [`STEP_MS`] after every step, so output is reproducible.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::clock::{Clock, SimulatedClock};
use crate::document::{EditOperation, SpanAnchor};
use crate::gateway::Gateway;
use crate::persona::{CommentState, PersonaId};
use crate::store::{self, ReplayReport, StoreError};
use crate::technique::TechniqueId;
use crate::workflow::{ErrorCode, Event, HighlightState, ProposalState, Session, Workbench, WorkflowError};

pub const STEP_MS: u64 = 100;
pub const SCRIPT_SESSION_ID: &str = "script";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ref {
    Id(u64),
    First,
    Last,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    Quote(String),
    Offsets(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Comment(PersonaId, Selection),
    Accept(Ref),
    Reject(Ref),
    Select(Ref),
    SelectTechnique(TechniqueId),
    Revise(Ref),
    Adopt(Ref),
    Replace(String, String),
    InsertBefore(String, String),
    InsertAfter(String, String),
    Delete(String),
    Edit { at: usize, deleted_len: usize, inserted: String },
    Wait(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    /// 1-based line in the script file.
    pub line: usize,
    pub source: String,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

fn parse_ref(s: &str) -> Option<Ref> {
    match s {
        "first" => Some(Ref::First),
        "last" => Some(Ref::Last),
        _ => s.parse().ok().map(Ref::Id),
    }
}

fn parse_command(words: &[String]) -> Result<Command, String> {
    let arg_ref = |w: &String| parse_ref(w).ok_or_else(|| format!("{w:?} is not a ref (id, first, last)"));
    let num = |w: &String| w.parse::<usize>().map_err(|_| format!("{w:?} is not a number"));
    let words: Vec<&String> = words.iter().collect();
    let cmd = match words.as_slice() {
        [c, persona, quote] if c.as_str() == "comment" => Command::Comment(
            PersonaId::parse(persona).ok_or_else(|| format!("unknown persona {persona:?}"))?,
            Selection::Quote((*quote).clone()),
        ),
        [c, persona, s, e] if c.as_str() == "comment" => Command::Comment(
            PersonaId::parse(persona).ok_or_else(|| format!("unknown persona {persona:?}"))?,
            Selection::Offsets(num(s)?, num(e)?),
        ),
        [c, r] if c.as_str() == "accept" => Command::Accept(arg_ref(r)?),
        [c, r] if c.as_str() == "reject" => Command::Reject(arg_ref(r)?),
        [c, r] if c.as_str() == "select" => match parse_ref(r) {
            Some(r) => Command::Select(r),
            None => Command::SelectTechnique(
                serde_json::from_value(serde_json::Value::String((*r).clone()))
                    .map_err(|_| format!("{r:?} is neither a ref nor a technique id"))?,
            ),
        },
        [c, r] if c.as_str() == "revise" => Command::Revise(arg_ref(r)?),
        [c, r] if c.as_str() == "adopt" => Command::Adopt(arg_ref(r)?),
        [c, a, b] if c.as_str() == "replace" => Command::Replace((*a).clone(), (*b).clone()),
        [c, a, b] if c.as_str() == "insert-before" => Command::InsertBefore((*a).clone(), (*b).clone()),
        [c, a, b] if c.as_str() == "insert-after" => Command::InsertAfter((*a).clone(), (*b).clone()),
        [c, a] if c.as_str() == "delete" => Command::Delete((*a).clone()),
        [c, at, len, text] if c.as_str() == "edit" => {
            Command::Edit { at: num(at)?, deleted_len: num(len)?, inserted: (*text).clone() }
        }
        [c, ms] if c.as_str() == "wait" => Command::Wait(ms.parse().map_err(|_| format!("{ms:?} is not a number"))?),
        [c, ..] => return Err(format!("unknown command or wrong arguments: {c}")),
        [] => unreachable!("blank lines are skipped"),
    };
    Ok(cmd)
}

pub fn parse_script(text: &str) -> Result<Vec<Step>, ParseError> {
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let words = shlex::split(trimmed).ok_or_else(|| ParseError { line, reason: "unbalanced quotes".into() })?;
        let command = parse_command(&words).map_err(|reason| ParseError { line, reason })?;
        steps.push(Step { line, source: trimmed.to_owned(), command });
    }
    Ok(steps)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("{0:?} does not occur in the story")]
    QuoteMissing(String),
    #[error("{quote:?} occurs {count} times in the story")]
    QuoteAmbiguous { quote: String, count: usize },
    #[error("no {0} matches the ref")]
    NothingToRef(&'static str),
    #[error("the most recent accepted comment has no {0} suggestion")]
    NoSuchTechnique(&'static str),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
}

impl StepError {
    pub fn is_gateway(&self) -> bool {
        matches!(self, StepError::Workflow(e) if e.code() == ErrorCode::GatewayFailure)
    }
}

fn locate(session: &Session, quote: &str) -> Result<(usize, usize), StepError> {
    let hits = session.document.find_all(quote);
    match hits.as_slice() {
        [] => Err(StepError::QuoteMissing(quote.to_owned())),
        [at] => Ok((*at, at + quote.chars().count())),
        _ => Err(StepError::QuoteAmbiguous { quote: quote.to_owned(), count: hits.len() }),
    }
}

fn pick(ids: Vec<u64>, r: &Ref, kind: &'static str) -> Result<u64, StepError> {
    match r {
        Ref::Id(id) => Ok(*id),
        Ref::First => ids.first().copied().ok_or(StepError::NothingToRef(kind)),
        Ref::Last => ids.last().copied().ok_or(StepError::NothingToRef(kind)),
    }
}

fn describe_anchor(a: &SpanAnchor) -> String {
    let mut q: String = a.quote.chars().take(48).collect();
    if q.chars().count() < a.quote.chars().count() {
        q.push_str("...");
    }
    format!("[{}..{}] {q:?}", a.start, a.end)
}

/// Runs one command; returns a transcript line.
pub fn execute(
    wb: &mut Workbench,
    gateway: &Gateway,
    command: &Command,
    clock: &SimulatedClock,
) -> Result<String, StepError> {
    let s = wb.session();
    let version = s.document.version;
    let edit = |wb: &mut Workbench, e: EditOperation| -> Result<String, StepError> {
        let out = wb.writer_edit(e)?;
        let mut line = format!("story now at version {}", out.version);
        if !out.orphaned.is_empty() {
            let _ = write!(line, "; orphaned {:?}", out.orphaned);
        }
        Ok(line)
    };
    Ok(match command {
        Command::Comment(persona, sel) => {
            let (start, end) = match sel {
                Selection::Quote(q) => locate(s, q)?,
                Selection::Offsets(a, b) => (*a, *b),
            };
            let id = wb.request_comment(gateway, *persona, start, end)?;
            let c = wb.session().comment(id).expect("just created");
            format!(
                "{persona} commented #{id} ({}) on {}: {}",
                serde_json::to_value(c.sentiment).expect("serializes").as_str().unwrap_or_default(),
                describe_anchor(&c.anchor),
                c.text
            )
        }
        Command::Accept(r) | Command::Reject(r) => {
            let pending = s.comments.iter().filter(|c| c.state == CommentState::Pending).map(|c| c.id).collect();
            let id = pick(pending, r, "pending comment")?;
            if matches!(command, Command::Accept(_)) {
                let sids = wb.accept_comment(gateway, id)?;
                let names: Vec<String> = sids
                    .iter()
                    .map(|sid| {
                        let sg = wb.session().suggestion(*sid).expect("just created");
                        format!("#{sid} {}", sg.technique.technique().name)
                    })
                    .collect();
                format!("accepted #{id}; suggestions {}", names.join(", "))
            } else {
                wb.reject_comment(id)?;
                format!("rejected #{id}")
            }
        }
        Command::Select(_) | Command::SelectTechnique(_) => {
            let id = match command {
                Command::Select(r) => pick(s.suggestions.iter().map(|x| x.id).collect(), r, "suggestion")?,
                Command::SelectTechnique(t) => {
                    let latest = s
                        .comments
                        .iter()
                        .filter(|c| c.state == CommentState::Accepted)
                        .max_by_key(|c| c.created_seq)
                        .ok_or(StepError::NothingToRef("accepted comment"))?;
                    s.suggestions_for(latest.id)
                        .find(|x| x.technique == *t)
                        .map(|x| x.id)
                        .ok_or(StepError::NoSuchTechnique(t.technique().name))?
                }
                _ => unreachable!(),
            };
            let hids = wb.select_technique(gateway, id)?;
            let spans: Vec<String> = hids
                .iter()
                .map(|h| format!("#{h} {}", describe_anchor(&wb.session().highlight(*h).expect("just created").anchor)))
                .collect();
            format!("selected #{id}; highlights {}", spans.join("; "))
        }
        Command::Revise(r) => {
            let visible = s
                .highlights
                .iter()
                .filter(|h| h.state == HighlightState::Visible && h.anchor.is_live())
                .map(|h| h.id)
                .collect();
            let hid = pick(visible, r, "visible highlight")?;
            let pid = wb.request_revision(gateway, hid)?;
            format!(
                "proposal #{pid} for highlight #{hid}: {}",
                wb.session().proposal(pid).expect("just created").revised_text
            )
        }
        Command::Adopt(r) => {
            let offered = s.proposals.iter().filter(|p| p.state == ProposalState::Offered).map(|p| p.id).collect();
            let pid = pick(offered, r, "offered proposal")?;
            let v = wb.adopt_revision(pid)?;
            format!("adopted #{pid}; story now at version {v}")
        }
        Command::Replace(old, new) => {
            let (a, b) = locate(s, old)?;
            edit(wb, EditOperation::replace(a, b - a, new.clone(), version))?
        }
        Command::InsertBefore(anchor, text) => {
            let (a, _) = locate(s, anchor)?;
            edit(wb, EditOperation::insert(a, text.clone(), version))?
        }
        Command::InsertAfter(anchor, text) => {
            let (_, b) = locate(s, anchor)?;
            edit(wb, EditOperation::insert(b, text.clone(), version))?
        }
        Command::Delete(text) => {
            let (a, b) = locate(s, text)?;
            edit(wb, EditOperation::delete(a, b - a, version))?
        }
        Command::Edit { at, deleted_len, inserted } => {
            edit(wb, EditOperation::replace(*at, *deleted_len, inserted.clone(), version))?
        }
        Command::Wait(ms) => {
            clock.advance(*ms);
            format!("waited {ms} ms")
        }
    })
}

#[derive(Debug, Clone)]
pub struct StepFailure {
    /// 1-based index among the script's steps.
    pub step: usize,
    pub line: usize,
    pub error: StepError,
}

#[derive(Debug, Clone)]
pub struct ScriptRun {
    pub workbench: Workbench,
    pub transcript: String,
    pub steps_run: usize,
    pub failure: Option<StepFailure>,
}

/// Runs `steps` against a fresh session. Stops at the first failing step;
/// the returned state is the one after the last successful step.
pub fn run_script(story: &str, steps: &[Step], gateway: &Gateway) -> ScriptRun {
    let clock = SimulatedClock::starting_at(0);
    let mut wb = Workbench::create(SCRIPT_SESSION_ID, story, Arc::new(clock.clone()));
    let mut transcript = String::new();
    let _ = writeln!(transcript, "story: {} characters", story.chars().count());
    for (i, step) in steps.iter().enumerate() {
        clock.advance(STEP_MS);
        let checkpoint = wb.clone();
        match execute(&mut wb, gateway, &step.command, &clock) {
            Ok(line) => {
                let _ = writeln!(transcript, "{:>3} t={:<6} {}\n      {line}", i + 1, clock.now(), step.source);
            }
            Err(error) => {
                wb = checkpoint;
                let _ =
                    writeln!(transcript, "{:>3} t={:<6} {}\n      FAILED: {error}", i + 1, clock.now(), step.source);
                return ScriptRun {
                    workbench: wb,
                    transcript,
                    steps_run: i,
                    failure: Some(StepFailure { step: i + 1, line: step.line, error }),
                };
            }
        }
    }
    ScriptRun { workbench: wb, transcript, steps_run: steps.len(), failure: None }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("script {0}")]
    Parse(#[from] ParseError),
    #[error("step {step} (line {line}) failed: {error}")]
    Step { step: usize, line: usize, error: StepError },
    #[error("{0}")]
    Config(String),
}

impl CliError {
    /// 1 environment, 2 script or state, 3 provider.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Config(_) => 1,
            CliError::Store(StoreError::Io { .. }) | CliError::Store(StoreError::Locked(_)) => 1,
            CliError::Store(_) | CliError::Parse(_) => 2,
            CliError::Step { error, .. } if error.is_gateway() => 3,
            CliError::Step { .. } => 2,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn write(path: &Path, data: &str) -> Result<(), CliError> {
    fs::write(path, data).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

pub const STORY_FILE: &str = "story.txt";
pub const TRANSCRIPT_FILE: &str = "transcript.txt";

/// Writes `story.txt`, `transcript.txt`, `snapshot.json` and
/// `events.jsonl` into `out_dir`, replacing earlier output.
pub fn write_outputs(out_dir: &Path, session: &Session, events: &[Event], transcript: &str) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|source| CliError::Io { path: out_dir.to_owned(), source })?;
    for f in ["snapshot.json", "events.jsonl"] {
        let p = out_dir.join(f);
        if p.exists() {
            fs::remove_file(&p).map_err(|source| CliError::Io { path: p.clone(), source })?;
        }
    }
    store::save_dir(out_dir, session, events)?;
    write(&out_dir.join(STORY_FILE), &session.document.text)?;
    write(&out_dir.join(TRANSCRIPT_FILE), transcript)
}

/// Runs a script file against a story file and writes the results. On a
/// failing step the outputs reflect the last good step and the error is
/// returned.
pub fn cmd_run_script(
    story_file: &Path,
    script_file: &Path,
    out_dir: &Path,
    gateway: &Gateway,
) -> Result<ScriptRun, CliError> {
    let story = read(story_file)?;
    let steps = parse_script(&read(script_file)?)?;
    let run = run_script(&story, &steps, gateway);
    write_outputs(out_dir, run.workbench.session(), run.workbench.events(), &run.transcript)?;
    match &run.failure {
        Some(f) => Err(CliError::Step { step: f.step, line: f.line, error: f.error.clone() }),
        None => Ok(run),
    }
}

/// Replays the log in `dir` from empty and compares with its snapshot.
pub fn cmd_replay(dir: &Path) -> Result<(Session, ReplayReport), CliError> {
    if !dir.join("events.jsonl").exists() {
        return Err(CliError::Io {
            path: dir.join("events.jsonl"),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no event log"),
        });
    }
    Ok(store::verify_dir(dir)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_command() {
        let text = r#"
# a comment
comment mad_scientist "tiny squid"
comment curious_girl 3 9
accept last
reject 4
select first
select humor
select "Analogy and Metaphor"
revise 12
adopt last
replace "a b" "c"
insert-before "x" "y "
insert-after "x" " y"
delete 'gone'
edit 1 2 ""
wait 1000
"#;
        let steps = parse_script(text).unwrap();
        assert_eq!(steps.len(), 15);
        assert_eq!(steps[0].line, 3);
        assert_eq!(steps[0].command, Command::Comment(PersonaId::MadScientist, Selection::Quote("tiny squid".into())));
        assert_eq!(steps[1].command, Command::Comment(PersonaId::CuriousGirl, Selection::Offsets(3, 9)));
        assert_eq!(steps[3].command, Command::Reject(Ref::Id(4)));
        assert_eq!(steps[5].command, Command::SelectTechnique(TechniqueId::Humor));
        assert_eq!(steps[6].command, Command::SelectTechnique(TechniqueId::AnalogyMetaphor));
        assert_eq!(steps[12].command, Command::Delete("gone".into()));
        assert_eq!(steps[13].command, Command::Edit { at: 1, deleted_len: 2, inserted: String::new() });
    }

    #[test]
    fn parse_errors_name_the_line() {
        assert_eq!(parse_script("wait 1\nfrobnicate").unwrap_err().line, 2);
        assert_eq!(parse_script("comment \"unclosed").unwrap_err().line, 1);
        assert!(parse_script("comment nobody \"x\"").is_err());
        assert!(parse_script("accept maybe").is_err());
        assert!(parse_script("select sarcasm").is_err());
    }

    #[test]
    fn ambiguous_quote_is_an_error() {
        let g = Gateway::mock();
        let steps = parse_script("comment mad_scientist \"the\"").unwrap();
        let run = run_script("the cat and the dog", &steps, &g);
        let f = run.failure.unwrap();
        assert_eq!(f.error, StepError::QuoteAmbiguous { quote: "the".into(), count: 2 });
        assert_eq!(run.workbench.events().len(), 1);
    }

    #[test]
    fn exit_codes() {
        let step = |error| CliError::Step { step: 1, line: 1, error };
        assert_eq!(step(StepError::NothingToRef("comment")).exit_code(), 2);
        let gw = WorkflowError::Gateway {
            operation: crate::workflow::Operation::RequestComment,
            source: crate::gateway::GatewayError::Timeout,
        };
        assert_eq!(step(StepError::Workflow(gw)).exit_code(), 3);
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
    }
}
