//! Record store backed by an append-only event log.
//!
//! Each log line is one event: a record entering the store or a mutation of
//! an existing record. The current state is the fold of all lines, so the
//! file doubles as the audit trail.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use medthink::data::Manifest;

use crate::error::{Error, Result};
use crate::record::{AnnotationRecord, Mutation, State};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        seq: u64,
        record: AnnotationRecord,
    },
    Mutated {
        seq: u64,
        sample_id: String,
        /// Version the record reaches after this mutation.
        version: u64,
        mutation: Mutation,
    },
}

struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    fn append(&mut self, event: &Event) -> Result<()> {
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

#[derive(Default)]
pub struct Store {
    records: BTreeMap<String, AnnotationRecord>,
    order: Vec<String>,
    seq: u64,
    log: Option<EventLog>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("records", &self.records.len())
            .field("seq", &self.seq)
            .field("log", &self.log.as_ref().map(|l| &l.path))
            .finish()
    }
}

impl Store {
    /// In-memory store with one fresh record per manifest sample.
    pub fn from_manifest(manifest: &Manifest) -> Result<Self> {
        let mut s = Store::default();
        s.seed(manifest)?;
        Ok(s)
    }

    /// Opens (or creates) the log at `path`, replays it, then adds records
    /// for any manifest samples the log does not know yet.
    pub fn open(path: &Path, manifest: Option<&Manifest>) -> Result<Self> {
        let mut s = if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Store::replay(&text)?
        } else {
            Store::default()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        s.log = Some(EventLog { path: path.to_path_buf(), file });
        if let Some(m) = manifest {
            s.seed(m)?;
        }
        Ok(s)
    }

    fn seed(&mut self, manifest: &Manifest) -> Result<()> {
        for sample in &manifest.samples {
            if !self.records.contains_key(&sample.id) {
                self.insert(AnnotationRecord::new(sample))?;
            }
        }
        Ok(())
    }

    /// Folds log text into a store without attaching a writer.
    pub fn replay(text: &str) -> Result<Self> {
        let mut s = Store::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Log { line: line_no, message };
            let event: Event = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            match event {
                Event::Created { seq, record } => {
                    s.expect_seq(seq).map_err(err)?;
                    if s.records.contains_key(&record.sample_id) {
                        return Err(err(format!("{} created twice", record.sample_id)));
                    }
                    s.order.push(record.sample_id.clone());
                    s.records.insert(record.sample_id.clone(), record);
                }
                Event::Mutated { seq, sample_id, version, mutation } => {
                    s.expect_seq(seq).map_err(err)?;
                    let rec = s
                        .records
                        .get_mut(&sample_id)
                        .ok_or_else(|| err(format!("mutation of unknown record {sample_id}")))?;
                    rec.apply(mutation).map_err(|e| err(e.to_string()))?;
                    if rec.version != version {
                        return Err(err(format!("{sample_id} reached version {}, log says {version}", rec.version)));
                    }
                }
            }
        }
        Ok(s)
    }

    fn expect_seq(&mut self, seq: u64) -> std::result::Result<(), String> {
        if seq != self.seq + 1 {
            return Err(format!("sequence {seq} follows {}", self.seq));
        }
        self.seq = seq;
        Ok(())
    }

    pub fn insert(&mut self, record: AnnotationRecord) -> Result<()> {
        if self.records.contains_key(&record.sample_id) {
            return Err(Error::contract(format!("record {} already exists", record.sample_id)));
        }
        let event = Event::Created { seq: self.seq + 1, record: record.clone() };
        if let Some(log) = &mut self.log {
            log.append(&event)?;
        }
        self.seq += 1;
        self.order.push(record.sample_id.clone());
        self.records.insert(record.sample_id.clone(), record);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&AnnotationRecord> {
        self.records.get(id).ok_or_else(|| Error::NotFound(id.to_string()))
    }

    /// Records in insertion order.
    pub fn records(&self) -> impl Iterator<Item = &AnnotationRecord> {
        self.order.iter().map(|id| &self.records[id])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of events written or replayed so far.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn queue(&self, state: Option<State>, limit: usize) -> Vec<&AnnotationRecord> {
        self.records()
            .filter(|r| state.is_none_or(|s| r.state == s))
            .take(limit)
            .collect()
    }

    pub fn counts(&self) -> BTreeMap<State, usize> {
        let mut out = BTreeMap::new();
        for r in self.records.values() {
            *out.entry(r.state).or_insert(0) += 1;
        }
        out
    }

    /// Version-checked mutation. The event is logged before the in-memory
    /// record changes, so a failed write leaves both untouched.
    pub fn apply(&mut self, id: &str, version: u64, mutation: Mutation) -> Result<&AnnotationRecord> {
        let next = self.get(id)?.mutated(version, mutation.clone())?;
        let event = Event::Mutated {
            seq: self.seq + 1,
            sample_id: id.to_string(),
            version: next.version,
            mutation,
        };
        if let Some(log) = &mut self.log {
            log.append(&event)?;
        }
        self.seq += 1;
        let slot = self.records.get_mut(id).expect("checked above");
        *slot = next;
        Ok(slot)
    }
}
