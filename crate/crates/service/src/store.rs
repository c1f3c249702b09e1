//! Append-only JSONL journal of goal cycles. Each record is flushed and
//! synced before the write is acknowledged; a torn final line left by a
//! crash is dropped on open.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use crate::types::GoalCycle;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("goal store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("goal store record {line}: {source}")]
    Corrupt { line: usize, source: serde_json::Error },
}

pub struct GoalStore {
    path: Option<PathBuf>,
    file: Mutex<Option<File>>,
    cycles: RwLock<BTreeMap<String, Vec<GoalCycle>>>,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl GoalStore {
    pub fn in_memory() -> Self {
        Self { path: None, file: Mutex::new(None), cycles: RwLock::default(), locks: Mutex::default() }
    }

    /// Opens or creates the journal and replays it.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut cycles: BTreeMap<String, Vec<GoalCycle>> = BTreeMap::new();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut n = 0;
        loop {
            line.clear();
            let read = reader.read_line(&mut line)?;
            if read == 0 {
                break;
            }
            n += 1;
            if !line.ends_with('\n') {
                break;
            }
            let c: GoalCycle = serde_json::from_str(line.trim_end()).map_err(|source| StoreError::Corrupt { line: n, source })?;
            cycles.entry(c.student_id.clone()).or_default().push(c);
            good_len += read as u64;
        }
        drop(reader);
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            file: Mutex::new(Some(file)),
            cycles: RwLock::new(cycles),
            locks: Mutex::default(),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Serializes writers for one student.
    pub fn student_lock(&self, student: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks.lock().expect("lock map").entry(student.to_string()).or_default().clone()
    }

    pub fn cycles(&self, student: &str) -> Vec<GoalCycle> {
        self.cycles.read().expect("cycle index").get(student).cloned().unwrap_or_default()
    }

    /// Durably appends one record. Callers hold the student's lock.
    pub fn append(&self, cycle: GoalCycle) -> Result<(), StoreError> {
        if let Some(f) = self.file.lock().expect("journal").as_mut() {
            let mut line = serde_json::to_vec(&cycle).map_err(|source| StoreError::Corrupt { line: 0, source })?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        self.cycles.write().expect("cycle index").entry(cycle.student_id.clone()).or_default().push(cycle);
        Ok(())
    }
}
