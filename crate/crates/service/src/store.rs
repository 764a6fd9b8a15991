//! Append-only JSON-lines event log per session. Replaying the log rebuilds
//! the session; periodic snapshots of the node values let replay check that
//! it reached the same posterior.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::session::{CreateSession, Environment, Session};

/// A snapshot of node values is logged after every this many labels.
pub const SNAPSHOT_EVERY: usize = 10;

/// Largest difference between replayed and logged node values.
pub const REPLAY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    Create {
        id: String,
        created_ms: u64,
        request: CreateSession,
    },
    Query {
        step: usize,
        index: usize,
    },
    Label {
        step: usize,
        index: usize,
        label: i64,
        timestamp_ms: u64,
    },
    Snapshot {
        step: usize,
        values: Vec<f64>,
    },
}

pub struct EventLog {
    path: PathBuf,
    file: File,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> ApiError {
    ApiError::internal(format!("{}: {e}", path.display()))
}

impl EventLog {
    pub fn path_for(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("{id}.jsonl"))
    }

    /// Opens `path` for appending, creating it if needed.
    pub fn open(path: PathBuf) -> Result<EventLog, ApiError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_error(&path, e))?;
        Ok(EventLog { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &Event) -> Result<(), ApiError> {
        let mut line = serde_json::to_vec(event).map_err(|e| io_error(&self.path, e))?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| io_error(&self.path, e))?;
        self.file.sync_data().map_err(|e| io_error(&self.path, e))
    }

    /// Logs a label and, on snapshot steps, the node values after it.
    pub fn record_label(&mut self, session: &Session, index: usize, label: i64, step: usize) -> Result<(), ApiError> {
        let timestamp_ms = session.history().last().map_or(0, |h| h.timestamp_ms);
        self.append(&Event::Label {
            step,
            index,
            label,
            timestamp_ms,
        })?;
        if step % SNAPSHOT_EVERY == 0 {
            if let Some(values) = session.node_values() {
                self.append(&Event::Snapshot { step, values })?;
            }
        }
        Ok(())
    }
}

/// Reads every event in `path`. A final line without its newline is a
/// partial write and is dropped.
pub fn read_events(path: &Path) -> Result<Vec<Event>, ApiError> {
    let f = File::open(path).map_err(|e| io_error(path, e))?;
    let mut events = Vec::new();
    let mut reader = BufReader::new(f);
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        let read = reader.read_line(&mut line).map_err(|e| io_error(path, e))?;
        if read == 0 {
            break;
        }
        number += 1;
        if !line.ends_with('\n') {
            warn!("{}: dropping partial line {number}", path.display());
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| io_error(path, format!("line {number}: {e}")))?;
        events.push(event);
    }
    Ok(events)
}

/// Rebuilds a session from its events, checking logged snapshots.
pub fn replay(events: &[Event], env: &Environment) -> Result<Session, ApiError> {
    let mut it = events.iter();
    let Some(Event::Create {
        id,
        created_ms,
        request,
    }) = it.next()
    else {
        return Err(ApiError::internal("event log does not start with a create event"));
    };
    let mut session = Session::create_at(id.clone(), request.clone(), env, *created_ms)?;
    for event in it {
        match event {
            Event::Create { .. } => return Err(ApiError::internal("duplicate create event")),
            Event::Query { index, .. } => session.restore_pending(*index)?,
            Event::Label {
                step,
                index,
                label,
                timestamp_ms,
            } => {
                let out = session.submit_label(*index, *label, *timestamp_ms)?;
                if out.step != *step {
                    return Err(ApiError::internal(format!("replayed label at step {} but log says {step}", out.step)));
                }
            }
            Event::Snapshot { step, values } => {
                let replayed = session
                    .node_values()
                    .ok_or_else(|| ApiError::internal(format!("snapshot at step {step} after completion")))?;
                let gap = replayed
                    .iter()
                    .zip(values)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if replayed.len() != values.len() || !(gap <= REPLAY_TOLERANCE) {
                    return Err(ApiError::internal(format!(
                        "replay diverged at step {step}: max difference {gap:e}"
                    )));
                }
            }
        }
    }
    Ok(session)
}

/// Loads every `*.jsonl` session in `dir`. Logs that fail to replay are
/// reported and skipped.
pub fn load_dir(dir: &Path, env: &Environment) -> Result<Vec<(Session, EventLog)>, ApiError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_error(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        match read_events(&path).and_then(|ev| replay(&ev, env)) {
            Ok(session) => out.push((session, EventLog::open(path)?)),
            Err(e) => warn!("skipping {}: {e}", path.display()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{DatasetSpec, ModelParams, QueryOutcome};
    use graphal_core::acquisition::AcquisitionKind;
    use graphal_core::experiment::UpdateMode;
    use graphal_core::posterior::ModelKind;

    fn request() -> CreateSession {
        CreateSession {
            dataset: DatasetSpec::Checkerboard {
                points: Some(100),
                grid: None,
                seed: Some(1),
            },
            model: ModelKind::Probit,
            acquisition: AcquisitionKind::Mc,
            update_mode: UpdateMode::Na,
            params: ModelParams {
                length_scale: Some(0.1),
                ..ModelParams::default()
            },
            seed_labels: Vec::new(),
            initial_per_class: Some(1),
            free_labeling: false,
            seed: 4,
        }
    }

    #[test]
    fn replay_reproduces_session() {
        let dir = tempfile::tempdir().unwrap();
        let env = Environment::default();
        let mut s = Session::create("abc".into(), request(), &env).unwrap();
        let mut log = EventLog::open(EventLog::path_for(dir.path(), "abc")).unwrap();
        log.append(&Event::Create {
            id: "abc".into(),
            created_ms: s.created_ms(),
            request: request(),
        })
        .unwrap();
        for i in 0..12 {
            let QueryOutcome::Pending(q) = s.next_query().unwrap() else {
                panic!()
            };
            log.append(&Event::Query { step: q.step, index: q.index }).unwrap();
            let y = if i % 3 == 0 { -1 } else { 1 };
            let out = s.submit_label(q.index, y, 100 + i).unwrap();
            log.record_label(&s, q.index, y, out.step).unwrap();
        }
        let QueryOutcome::Pending(q) = s.next_query().unwrap() else {
            panic!()
        };
        log.append(&Event::Query { step: q.step, index: q.index }).unwrap();

        let events = read_events(log.path()).unwrap();
        assert!(events.iter().any(|e| matches!(e, Event::Snapshot { step: 10, .. })));
        let back = replay(&events, &env).unwrap();
        assert_eq!(back.history(), s.history());
        assert_eq!(back.pending(), Some(q.index));
        assert_eq!(back.node_values(), s.node_values());

        let mut tampered = events.clone();
        for e in &mut tampered {
            if let Event::Snapshot { values, .. } = e {
                values[0] += 1e-9;
            }
        }
        assert_eq!(replay(&tampered, &env).err().unwrap().code, "internal");
    }

    #[test]
    fn partial_trailing_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        let create = serde_json::to_string(&Event::Create {
            id: "x".into(),
            created_ms: 0,
            request: request(),
        })
        .unwrap();
        fs::write(&path, format!("{create}\n{{\"event\":\"qu")).unwrap();
        assert_eq!(read_events(&path).unwrap().len(), 1);
        fs::write(&path, format!("{create}\nnot json\n")).unwrap();
        assert!(read_events(&path).is_err());
    }
}
