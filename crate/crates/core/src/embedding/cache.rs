use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingFingerprint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub text_sha256: String,
    pub provider: String,
    pub model: String,
    /// Unit-norm vector as used for scoring.
    pub vector: Vec<f64>,
}

type Key = (String, String, String);

/// JSON-lines store of normalized vectors keyed by (text hash, provider,
/// model). One appender, concurrent readers.
#[derive(Debug)]
pub struct EmbeddingCache {
    path: PathBuf,
    index: RwLock<HashMap<Key, Vec<f64>>>,
    writer: Mutex<Option<File>>,
}

impl EmbeddingCache {
    pub fn open(path: &Path) -> Result<Self, EmbeddingError> {
        let io_err = |source| EmbeddingError::Io {
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
                match serde_json::from_str::<EmbeddingRecord>(&line) {
                    Ok(r) => {
                        index.insert((r.text_sha256, r.provider, r.model), r.vector);
                    }
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

    pub fn get(&self, fp: &EmbeddingFingerprint, text_sha256: &str) -> Option<Vec<f64>> {
        let key = (
            text_sha256.to_string(),
            fp.provider.clone(),
            fp.model.clone(),
        );
        self.index
            .read()
            .expect("cache index poisoned")
            .get(&key)
            .cloned()
    }

    pub fn append(&self, record: &EmbeddingRecord) -> Result<(), EmbeddingError> {
        let io_err = |source| EmbeddingError::Io {
            path: self.path.display().to_string(),
            source,
        };
        let mut line = serde_json::to_string(record).expect("embedding record serializes");
        line.push('\n');
        {
            let mut guard = self.writer.lock().expect("cache writer poisoned");
            if guard.is_none() {
                if let Some(parent) = self.path.parent() {
                    std::fs::create_dir_all(parent).map_err(io_err)?;
                }
                *guard = Some(
                    OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&self.path)
                        .map_err(io_err)?,
                );
            }
            let file = guard.as_mut().expect("writer opened above");
            file.write_all(line.as_bytes()).map_err(io_err)?;
            file.flush().map_err(io_err)?;
        }
        let key = (
            record.text_sha256.clone(),
            record.provider.clone(),
            record.model.clone(),
        );
        self.index
            .write()
            .expect("cache index poisoned")
            .insert(key, record.vector.clone());
        Ok(())
    }
}
