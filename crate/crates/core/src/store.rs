//! On-disk sessions.
//!
//! ```text
//! <root>/sessions/<id>/snapshot.json   full session at a watermark seq
//! <root>/sessions/<id>/events.jsonl    every event, one JSON object per line
//! <root>/sessions/<id>/.lock           present while a writer holds the directory
//! ```
//!
//! Both files carry `format_version`. The log is only ever appended to.
//! Loading verifies the log's digest chain and the snapshot checksum, then
//! replays the events past the watermark onto the snapshot.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::workflow::{replay, Event, Session};

pub const FORMAT_VERSION: u32 = 1;

const SNAPSHOT: &str = "snapshot.json";
const EVENTS: &str = "events.jsonl";
const LOCK: &str = ".lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no session {0}")]
    NotFound(String),
    #[error("{0:?} is not a valid session id")]
    InvalidId(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("integrity check failed: {check}")]
    Integrity { check: String },
    #[error("format version {found} is newer than supported version {supported}")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("session directory is locked by another writer ({0})")]
    Locked(PathBuf),
    #[error("the stored log has {stored} events, more than the {given} being saved")]
    Conflict { stored: u64, given: u64 },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_owned(), source }
}

fn integrity(check: impl Into<String>) -> StoreError {
    StoreError::Integrity { check: check.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub format_version: u32,
    pub session_id: String,
    /// Seq of the last event folded into `session`.
    pub watermark: u64,
    pub head_digest: String,
    /// sha256 of the compact JSON encoding of `session`.
    pub checksum: String,
    pub session: Session,
}

impl SessionSnapshot {
    pub fn of(session: &Session) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            session_id: session.id.clone(),
            watermark: session.event_seq,
            head_digest: session.head_digest.clone(),
            checksum: checksum(session),
            session: session.clone(),
        }
    }
}

fn checksum(session: &Session) -> String {
    let bytes = serde_json::to_vec(session).expect("sessions serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    format_version: u32,
    #[serde(flatten)]
    event: Event,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

/// A session as read back from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loaded {
    pub session: Session,
    pub events: Vec<Event>,
    /// False when no snapshot was present and the log was replayed from empty.
    pub from_snapshot: bool,
}

/// Outcome of replaying a stored log from empty against its snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayReport {
    Identical {
        events: u64,
    },
    /// No snapshot to compare against; the log replayed cleanly.
    NoSnapshot {
        events: u64,
    },
    Diverged {
        seq: u64,
        reason: String,
    },
}

/// Exclusive write access to one session directory. Released on drop.
#[derive(Debug)]
pub struct SessionLock {
    path: PathBuf,
}

impl Drop for SessionLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let sessions = root.join("sessions");
        fs::create_dir_all(&sessions).map_err(io_err(&sessions))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::InvalidId(id.to_owned()));
        }
        Ok(self.root.join("sessions").join(id))
    }

    /// Ids of every stored session, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("sessions");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            if let Some(name) = entry.file_name().to_str() {
                if valid_id(name) && entry.path().is_dir() {
                    ids.push(name.to_owned());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn lock(&self, id: &str) -> Result<SessionLock, StoreError> {
        let dir = self.session_dir(id)?;
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(SessionLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::Locked(path)),
            Err(e) => Err(StoreError::Io { path, source: e }),
        }
    }

    /// Appends the events not yet on disk, then rewrites the snapshot.
    /// `events` must be the session's complete log.
    pub fn save(&self, session: &Session, events: &[Event]) -> Result<(), StoreError> {
        let _lock = self.lock(&session.id)?;
        self.save_locked(session, events)
    }

    /// As [`Store::save`], for a caller already holding the lock.
    pub fn save_locked(&self, session: &Session, events: &[Event]) -> Result<(), StoreError> {
        let dir = self.session_dir(&session.id)?;
        save_dir(&dir, session, events)
    }

    pub fn exists(&self, id: &str) -> bool {
        self.session_dir(id).is_ok_and(|d| d.join(EVENTS).exists() || d.join(SNAPSHOT).exists())
    }

    pub fn load(&self, id: &str) -> Result<Loaded, StoreError> {
        load_dir(&self.session_dir(id)?, id)
    }
}

/// Writes a session into `dir` using the store layout, without locking.
/// Events already on disk must be a prefix of `events`; only the rest is
/// appended.
pub fn save_dir(dir: &Path, session: &Session, events: &[Event]) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    if events.last().map_or(0, |e| e.seq) != session.event_seq {
        return Err(integrity("session does not match the end of the log being saved"));
    }
    let log_path = dir.join(EVENTS);
    let stored = match fs::read_to_string(&log_path) {
        Ok(text) => parse_log(&text)?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(StoreError::Io { path: log_path, source: e }),
    };
    let n = stored.len();
    if n > events.len() {
        return Err(StoreError::Conflict { stored: n as u64, given: events.len() as u64 });
    }
    if n > 0 && stored[n - 1].digest != events[n - 1].digest {
        return Err(integrity(format!("stored event {} differs from the one being saved", stored[n - 1].seq)));
    }
    if n < events.len() {
        let mut buf = Vec::new();
        for e in &events[n..] {
            serde_json::to_writer(&mut buf, &LogLine { format_version: FORMAT_VERSION, event: e.clone() })
                .expect("events serialize");
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&log_path).map_err(io_err(&log_path))?;
        f.write_all(&buf).map_err(io_err(&log_path))?;
        f.sync_data().map_err(io_err(&log_path))?;
    }
    let snap = serde_json::to_vec_pretty(&SessionSnapshot::of(session)).expect("snapshots serialize");
    write_atomic(&dir.join(SNAPSHOT), &snap)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("json.tmp");
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn check_version(found: Option<u32>, what: &str) -> Result<(), StoreError> {
    match found {
        None => Err(integrity(format!("{what} has no format_version"))),
        Some(v) if v > FORMAT_VERSION => Err(StoreError::UnsupportedVersion { found: v, supported: FORMAT_VERSION }),
        Some(_) => Ok(()),
    }
}

/// Parses and chain-checks a log. Every line must end in LF.
pub fn parse_log(text: &str) -> Result<Vec<Event>, StoreError> {
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(integrity("event log ends mid-line"));
    }
    let mut events: Vec<Event> = Vec::new();
    let mut prev = String::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let probe: VersionProbe =
            serde_json::from_str(line).map_err(|e| integrity(format!("event line {lineno} is not valid JSON: {e}")))?;
        check_version(probe.format_version, &format!("event line {lineno}"))?;
        let parsed: LogLine =
            serde_json::from_str(line).map_err(|e| integrity(format!("event line {lineno} is malformed: {e}")))?;
        let e = parsed.event;
        if e.seq != lineno as u64 {
            return Err(integrity(format!("event line {lineno} has seq {}", e.seq)));
        }
        if e.expected_digest(&prev) != e.digest {
            return Err(integrity(format!("event {} breaks the digest chain", e.seq)));
        }
        prev = e.digest.clone();
        events.push(e);
    }
    Ok(events)
}

pub fn read_snapshot(path: &Path) -> Result<Option<SessionSnapshot>, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(StoreError::Io { path: path.to_owned(), source: e }),
    };
    let probe: VersionProbe =
        serde_json::from_str(&text).map_err(|e| integrity(format!("snapshot is not valid JSON: {e}")))?;
    check_version(probe.format_version, "snapshot")?;
    let snap: SessionSnapshot =
        serde_json::from_str(&text).map_err(|e| integrity(format!("snapshot is malformed: {e}")))?;
    if checksum(&snap.session) != snap.checksum {
        return Err(integrity("snapshot checksum mismatch"));
    }
    if snap.session.event_seq != snap.watermark
        || snap.session.head_digest != snap.head_digest
        || snap.session.id != snap.session_id
    {
        return Err(integrity("snapshot header disagrees with its session"));
    }
    Ok(Some(snap))
}

fn read_log(dir: &Path) -> Result<Option<Vec<Event>>, StoreError> {
    let path = dir.join(EVENTS);
    match fs::read_to_string(&path) {
        Ok(text) => parse_log(&text).map(Some),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(StoreError::Io { path, source: e }),
    }
}

/// Loads the session stored in `dir`. `id` is checked against the contents.
pub fn load_dir(dir: &Path, id: &str) -> Result<Loaded, StoreError> {
    let snapshot = read_snapshot(&dir.join(SNAPSHOT))?;
    let events = match read_log(dir)? {
        Some(events) => events,
        None if snapshot.is_some() => return Err(integrity("snapshot present but event log missing")),
        None => return Err(StoreError::NotFound(id.to_owned())),
    };
    let (base, tail, from_snapshot) = match snapshot {
        Some(snap) => {
            let w = snap.watermark as usize;
            if w > events.len() {
                return Err(integrity(format!("snapshot watermark {w} is past the end of the log ({})", events.len())));
            }
            let at_w = if w == 0 { "" } else { events[w - 1].digest.as_str() };
            if at_w != snap.head_digest {
                return Err(integrity(format!("snapshot digest does not match event {w}")));
            }
            (Some(snap.session), &events[w..], true)
        }
        None => (None, &events[..], false),
    };
    let session = replay(base, tail).map_err(|e| integrity(e.to_string()))?;
    if session.id != id {
        return Err(integrity(format!("directory {id} holds session {:?}", session.id)));
    }
    Ok(Loaded { session, events, from_snapshot })
}

/// Rebuilds the session in `dir` from an empty state and compares it with
/// the stored snapshot.
pub fn verify_dir(dir: &Path) -> Result<(Session, ReplayReport), StoreError> {
    let snapshot = read_snapshot(&dir.join(SNAPSHOT))?;
    let text = fs::read_to_string(dir.join(EVENTS)).map_err(io_err(&dir.join(EVENTS)))?;
    let mut session = Session::empty();
    let mut prev = String::new();
    for (i, line) in text.lines().enumerate() {
        let seq = i as u64 + 1;
        if let Err(reason) = verify_step(&mut session, &mut prev, line, snapshot.as_ref()) {
            return Ok((session, ReplayReport::Diverged { seq, reason }));
        }
    }
    let events = session.event_seq;
    let report = match snapshot {
        None => ReplayReport::NoSnapshot { events },
        Some(snap) if snap.watermark > events => {
            ReplayReport::Diverged { seq: events + 1, reason: "log ends before the snapshot watermark".into() }
        }
        Some(_) => ReplayReport::Identical { events },
    };
    Ok((session, report))
}

fn verify_step(
    session: &mut Session,
    prev: &mut String,
    line: &str,
    snapshot: Option<&SessionSnapshot>,
) -> Result<(), String> {
    let e = serde_json::from_str::<LogLine>(line).map_err(|err| format!("unreadable: {err}"))?.event;
    if e.expected_digest(prev) != e.digest {
        return Err("payload does not match its digest".into());
    }
    *prev = e.digest.clone();
    session.apply(&e).map_err(|err| err.check)?;
    match snapshot {
        Some(snap) if snap.watermark == e.seq && snap.session != *session => {
            Err("state differs from the snapshot".into())
        }
        _ => Ok(()),
    }
}
