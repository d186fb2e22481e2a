use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use crate::model::{Envelope, Event};
use crate::ServiceError;

/// Append-only JSONL event log, optionally mirrored to a file.
#[derive(Debug, Default)]
pub struct EventLog {
    path: Option<PathBuf>,
    file: Option<File>,
    entries: Vec<Envelope>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path`, loading existing entries. The file is created if absent.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref().to_path_buf();
        let entries = if path.exists() { read_entries(&path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path: Some(path), file: Some(file), entries })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn entries(&self) -> &[Envelope] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_seq(&self) -> u64 {
        self.entries.len() as u64 + 1
    }

    /// Writes the event durably before it becomes visible in memory.
    pub fn append(&mut self, event: Event, timestamp: DateTime<Utc>) -> Result<&Envelope, ServiceError> {
        let envelope = Envelope { event, seq: self.next_seq(), timestamp };
        if let Some(file) = self.file.as_mut() {
            let mut line = serde_json::to_string(&envelope)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        self.entries.push(envelope);
        Ok(self.entries.last().expect("just pushed"))
    }
}

pub fn read_entries(path: &Path) -> Result<Vec<Envelope>, ServiceError> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let env: Envelope = serde_json::from_str(&line)
            .map_err(|e| ServiceError::Corrupt(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if env.seq != entries.len() as u64 + 1 {
            return Err(ServiceError::Corrupt(format!(
                "{}:{}: expected seq {}, found {}",
                path.display(),
                i + 1,
                entries.len() + 1,
                env.seq
            )));
        }
        entries.push(env);
    }
    Ok(entries)
}
