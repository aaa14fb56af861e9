//! Append-only JSONL persistence under a run's output root.
//!
//! One file per record kind; re-reading a store yields records in write
//! order. There is no database: replaying a run is reading its files.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use trapline_core::context::ObservationRecord;
use trapline_core::metrics::EvalReport;
use trapline_core::qa::AnswerRecord;
use trapline_core::report::AlpacaEntry;

pub const OBSERVATIONS_FILE: &str = "observations.jsonl";
pub const ANSWERS_FILE: &str = "answers.jsonl";
pub const ALPACA_FILE: &str = "alpaca.json";
pub const EVAL_FILE: &str = "eval.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.md";
pub const ANNOTATED_DIR: &str = "annotated";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt record in {path}: {source}")]
    Corrupt {
        path: PathBuf,
        source: serde_json::Error,
    },
}

#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn create(root: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(root).map_err(|source| StoreError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn open(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    fn append_line(&self, file: &str, record: &impl Serialize) -> Result<(), StoreError> {
        let path = self.path(file);
        let mut handle = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
        let json = serde_json::to_string(record).expect("records serialize");
        writeln!(handle, "{json}").map_err(|source| StoreError::Io { path, source })
    }

    fn read_lines<T: DeserializeOwned>(&self, file: &str) -> Result<Vec<T>, StoreError> {
        let path = self.path(file);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let handle = std::fs::File::open(&path).map_err(|source| StoreError::Io {
            path: path.clone(),
            source,
        })?;
        let mut records = Vec::new();
        for line in BufReader::new(handle).lines() {
            let line = line.map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|source| StoreError::Corrupt {
                path: path.clone(),
                source,
            })?);
        }
        Ok(records)
    }

    pub fn append_observation(&self, record: &ObservationRecord) -> Result<(), StoreError> {
        self.append_line(OBSERVATIONS_FILE, record)
    }

    pub fn read_observations(&self) -> Result<Vec<ObservationRecord>, StoreError> {
        self.read_lines(OBSERVATIONS_FILE)
    }

    pub fn append_answer(&self, record: &AnswerRecord) -> Result<(), StoreError> {
        self.append_line(ANSWERS_FILE, record)
    }

    pub fn read_answers(&self) -> Result<Vec<AnswerRecord>, StoreError> {
        self.read_lines(ANSWERS_FILE)
    }

    pub fn write_alpaca(&self, entries: &[AlpacaEntry]) -> Result<(), StoreError> {
        let json = trapline_core::report::to_canonical_json(entries);
        self.write_text(ALPACA_FILE, &(json + "\n"))
    }

    pub fn read_alpaca(&self) -> Result<Vec<AlpacaEntry>, StoreError> {
        let path = self.path(ALPACA_FILE);
        let text = std::fs::read_to_string(&path).map_err(|source| StoreError::Io {
            path: path.clone(),
            source,
        })?;
        trapline_core::report::parse_entries(&text).map_err(|e| StoreError::Corrupt {
            path,
            source: serde_json::Error::io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                e.to_string(),
            )),
        })
    }

    pub fn write_eval(&self, report: &EvalReport) -> Result<(), StoreError> {
        let json = serde_json::to_string_pretty(report).expect("eval report serializes");
        self.write_text(EVAL_FILE, &(json + "\n"))
    }

    pub fn write_text(&self, file: &str, text: &str) -> Result<(), StoreError> {
        let path = self.path(file);
        std::fs::write(&path, text).map_err(|source| StoreError::Io { path, source })
    }

    pub fn write_bytes_in(&self, dir: &str, file: &str, bytes: &[u8]) -> Result<(), StoreError> {
        let path = self.root.join(dir).join(file);
        std::fs::write(&path, bytes).map_err(|source| StoreError::Io { path, source })
    }

    pub fn read_text(&self, file: &str) -> Result<String, StoreError> {
        let path = self.path(file);
        std::fs::read_to_string(&path).map_err(|source| StoreError::Io { path, source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use trapline_core::context::SceneContext;

    fn observation(id: &str) -> ObservationRecord {
        trapline_core::context::fuse(id, &[], SceneContext::empty("raw"))
    }

    #[test]
    fn records_read_back_in_write_order() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::create(dir.path()).unwrap();
        for i in 0..5 {
            store.append_observation(&observation(&format!("asset-{i}"))).unwrap();
        }
        let records = store.read_observations().unwrap();
        assert_eq!(records.len(), 5);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.asset_id, format!("asset-{i}"));
        }
    }

    #[test]
    fn missing_files_read_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::create(dir.path()).unwrap();
        assert!(store.read_observations().unwrap().is_empty());
        assert!(store.read_answers().unwrap().is_empty());
    }

    #[test]
    fn corrupt_lines_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::create(dir.path()).unwrap();
        std::fs::write(store.path(OBSERVATIONS_FILE), "{not json}\n").unwrap();
        assert!(matches!(
            store.read_observations(),
            Err(StoreError::Corrupt { .. })
        ));
    }
}
