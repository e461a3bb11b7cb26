//! Append-only JSON-lines event logs, one file per session.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};

use super::session::EventRecord;

/// Milliseconds since the Unix epoch.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Starts at a fixed instant and advances by `step` on every read.
#[derive(Debug)]
pub struct ManualClock {
    next: std::sync::atomic::AtomicU64,
    step: u64,
}

impl ManualClock {
    pub fn new(start: u64, step: u64) -> Self {
        ManualClock {
            next: std::sync::atomic::AtomicU64::new(start),
            step,
        }
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.next.fetch_add(self.step, std::sync::atomic::Ordering::SeqCst)
    }
}

pub fn log_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.jsonl"))
}

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    pub fn open(path: PathBuf) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(EventLog { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, rec: &EventRecord) -> Result<()> {
        let mut line = serde_json::to_vec(rec)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }
}

/// Read a log. A torn final line (crash mid-append) is dropped with a
/// warning; a bad line anywhere else is an error.
pub fn read_log(path: &Path) -> Result<Vec<EventRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EventRecord>(line) {
            Ok(rec) => out.push(rec),
            Err(e) if i == last => {
                log::warn!("{}: dropping torn final line: {e}", path.display());
            }
            Err(e) => {
                return Err(Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)));
            }
        }
    }
    Ok(out)
}
