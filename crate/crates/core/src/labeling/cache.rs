//! Append-only JSON-lines response cache. Lookups go through an in-memory
//! index; writes funnel through a single mutex-guarded appender.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::LabelingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStage {
    Identify,
    Tasks,
    Labels,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub stage: PromptStage,
    pub report_id: String,
    pub task_id: String,
    pub model: String,
    /// Stored as text so the key is hashable and round-trips exactly.
    pub temperature: String,
    pub prompt_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    #[serde(flatten)]
    pub key: CacheKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub raw_response: String,
    /// Set when the response could not be used; such records are kept for
    /// inspection but never served as hits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct LabelCache {
    path: PathBuf,
    index: RwLock<HashMap<CacheKey, CacheRecord>>,
    writer: Mutex<Option<File>>,
}

impl LabelCache {
    /// Opens (or lazily creates) the cache file. Malformed lines, such as a
    /// torn final write, are skipped with a warning.
    pub fn open(path: &Path) -> Result<Self, LabelingError> {
        let io_err = |source| LabelingError::Cache {
            path: path.display().to_string(),
            source,
        };
        let mut index = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io_err)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(&line) {
                    Ok(rec) if rec.error.is_none() => {
                        index.insert(rec.key.clone(), rec);
                    }
                    Ok(_) => {}
                    Err(e) => log::warn!(
                        "{}:{}: skipping malformed cache line: {e}",
                        path.display(),
                        lineno + 1
                    ),
                }
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            index: RwLock::new(index),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache index poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &CacheKey) -> Option<CacheRecord> {
        self.index
            .read()
            .expect("cache index poisoned")
            .get(key)
            .cloned()
    }

    /// Appends a record and flushes it. Usable records become visible to
    /// `get` immediately.
    pub fn append(&self, record: CacheRecord) -> Result<(), LabelingError> {
        let io_err = |source| LabelingError::Cache {
            path: self.path.display().to_string(),
            source,
        };
        let mut line = serde_json::to_string(&record).expect("cache record serializes");
        line.push('\n');
        {
            let mut guard = self.writer.lock().expect("cache writer poisoned");
            if guard.is_none() {
                if let Some(parent) = self.path.parent() {
                    std::fs::create_dir_all(parent).map_err(io_err)?;
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&self.path)
                    .map_err(io_err)?;
                *guard = Some(file);
            }
            let file = guard.as_mut().expect("writer opened above");
            file.write_all(line.as_bytes()).map_err(io_err)?;
            file.flush().map_err(io_err)?;
        }
        if record.error.is_none() {
            self.index
                .write()
                .expect("cache index poisoned")
                .insert(record.key.clone(), record);
        }
        Ok(())
    }
}
