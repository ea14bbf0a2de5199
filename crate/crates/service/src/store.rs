//! Session records, their event logs and on-disk persistence.
//!
//! Each session owns an append-only event list guarded by a mutex. Every
//! append is written to `<data_dir>/sessions/<id>.jsonl` before it becomes
//! visible, then the session's watch channel is bumped so subscribers wake
//! up and read from their own cursor. Readers only ever see whole events.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use insight_core::agent::{StepKind, Tool, TraceStep};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use crate::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Finished,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Thought,
    Act,
    Observe,
    Finish,
    ProtocolError,
    /// Closes a session that ended without a final answer.
    Failed,
}

impl From<StepKind> for EventKind {
    fn from(k: StepKind) -> Self {
        match k {
            StepKind::Thought => EventKind::Thought,
            StepKind::Act => EventKind::Act,
            StepKind::Observe => EventKind::Observe,
            StepKind::Finish => EventKind::Finish,
            StepKind::ProtocolError => EventKind::ProtocolError,
        }
    }
}

/// One line of the event stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<Tool>,
    pub content: String,
    pub ok: bool,
}

impl Event {
    pub fn is_terminal(&self) -> bool {
        matches!(self.kind, EventKind::Finish | EventKind::Failed)
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("event serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub user_id: String,
    pub question: String,
    pub backend: String,
    pub status: Status,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
}

struct Inner {
    record: SessionRecord,
    events: Vec<Event>,
    log: Option<File>,
}

pub struct Session {
    inner: Mutex<Inner>,
    dir: Option<PathBuf>,
    notify: watch::Sender<usize>,
}

fn record_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

fn events_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

fn write_record(dir: &Path, record: &SessionRecord) -> Result<(), ServiceError> {
    let path = record_path(dir, &record.session_id);
    let tmp = path.with_extension("json.tmp");
    let json = serde_json::to_string_pretty(record).expect("record serializes");
    fs::write(&tmp, json + "\n").map_err(|e| ServiceError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| ServiceError::io(&path, e))
}

impl Session {
    /// A new running session. With a directory, its record and event log
    /// are persisted there.
    pub fn create(record: SessionRecord, dir: Option<&Path>) -> Result<Session, ServiceError> {
        let log = match dir {
            Some(d) => {
                write_record(d, &record)?;
                let path = events_path(d, &record.session_id);
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| ServiceError::io(&path, e))?;
                Some(file)
            }
            None => None,
        };
        Ok(Session {
            inner: Mutex::new(Inner {
                record,
                events: Vec::new(),
                log,
            }),
            dir: dir.map(Path::to_path_buf),
            notify: watch::channel(0).0,
        })
    }

    /// Reload a persisted session. Sessions still marked running were lost
    /// with the previous process and yield `None`.
    pub fn load(dir: &Path, id: &str) -> Result<Option<Session>, ServiceError> {
        let rpath = record_path(dir, id);
        let raw = fs::read_to_string(&rpath).map_err(|e| ServiceError::io(&rpath, e))?;
        let record: SessionRecord =
            serde_json::from_str(&raw).map_err(|e| ServiceError::Corrupt(format!("{}: {e}", rpath.display())))?;
        if record.status == Status::Running {
            return Ok(None);
        }
        let epath = events_path(dir, id);
        let file = File::open(&epath).map_err(|e| ServiceError::io(&epath, e))?;
        let mut events = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ServiceError::io(&epath, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let ev: Event = serde_json::from_str(&line)
                .map_err(|e| ServiceError::Corrupt(format!("{}:{}: {e}", epath.display(), i + 1)))?;
            if ev.seq != events.len() as u64 {
                return Err(ServiceError::Corrupt(format!("{}: sequence gap at line {}", epath.display(), i + 1)));
            }
            events.push(ev);
        }
        let n = events.len();
        Ok(Some(Session {
            inner: Mutex::new(Inner {
                record,
                events,
                log: None,
            }),
            dir: None,
            notify: watch::channel(n).0,
        }))
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn record(&self) -> SessionRecord {
        self.lock().record.clone()
    }

    pub fn status(&self) -> Status {
        self.lock().record.status
    }

    pub fn len(&self) -> usize {
        self.lock().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Events with `seq >= from`, and whether the session has ended.
    pub fn events_from(&self, from: usize) -> (Vec<Event>, bool) {
        let inner = self.lock();
        let tail = inner.events.get(from..).map(<[Event]>::to_vec).unwrap_or_default();
        (tail, inner.record.status != Status::Running)
    }

    pub fn subscribe(&self) -> watch::Receiver<usize> {
        self.notify.subscribe()
    }

    /// Append one event; its sequence number is assigned here. Events after
    /// the session has ended are dropped.
    pub fn push(&self, kind: EventKind, tool: Option<Tool>, content: String, ok: bool) -> Option<u64> {
        let mut inner = self.lock();
        if inner.record.status != Status::Running {
            return None;
        }
        let ev = Event {
            seq: inner.events.len() as u64,
            kind,
            tool,
            content,
            ok,
        };
        if let Some(log) = inner.log.as_mut() {
            if let Err(e) = log.write_all(ev.to_line().as_bytes()).and_then(|_| log.flush()) {
                tracing::warn!(session = %inner.record.session_id, error = %e, "cannot append event");
            }
        }
        if ev.is_terminal() {
            inner.record.status = if ev.kind == EventKind::Finish {
                Status::Finished
            } else {
                Status::Failed
            };
            inner.record.finished_at = Some(Utc::now());
            inner.log = None;
            if let Some(dir) = &self.dir {
                if let Err(e) = write_record(dir, &inner.record) {
                    tracing::warn!(session = %inner.record.session_id, error = %e, "cannot update record");
                }
            }
        }
        let seq = ev.seq;
        inner.events.push(ev);
        let n = inner.events.len();
        drop(inner);
        self.notify.send_replace(n);
        Some(seq)
    }

    pub fn push_step(&self, step: &TraceStep) -> Option<u64> {
        self.push(step.kind.into(), step.tool, step.content.clone(), step.ok)
    }
}

/// Ids of every persisted session record under `dir`, sorted.
pub fn persisted_ids(dir: &Path) -> Result<Vec<String>, ServiceError> {
    let mut ids = Vec::new();
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(ids),
        Err(e) => return Err(ServiceError::io(dir, e)),
    };
    for entry in entries {
        let path = entry.map_err(|e| ServiceError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}
