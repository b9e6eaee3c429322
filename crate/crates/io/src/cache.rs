//! Content-addressed on-disk cache of entailment matrices, one JSON file
//! per key.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xcheck_core::{EntailmentMatrix, MatrixKind};

use crate::error::{IoError, Result};
use crate::jsonl::write_atomic;

const KEY_DOMAIN: &[u8] = b"xcheck-entail-cache-v1";

/// SHA-256 over the provider id and the ordered answer texts. Order matters:
/// permuting answers permutes the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    pub fn new(rows: &[String], cols: Option<&[String]>, provider_id: &str) -> Self {
        let mut h = Sha256::new();
        h.update(KEY_DOMAIN);
        feed(&mut h, provider_id);
        h.update((rows.len() as u64).to_le_bytes());
        rows.iter().for_each(|t| feed(&mut h, t));
        match cols {
            None => h.update([0u8]),
            Some(cols) => {
                h.update([1u8]);
                h.update((cols.len() as u64).to_le_bytes());
                cols.iter().for_each(|t| feed(&mut h, t));
            }
        }
        Self(h.finalize().into())
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

fn feed(h: &mut Sha256, text: &str) {
    h.update((text.len() as u64).to_le_bytes());
    h.update(text.as_bytes());
}

#[derive(Serialize, Deserialize)]
struct Entry {
    kind: MatrixKind,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MatrixCache {
    dir: PathBuf,
}

impl MatrixCache {
    /// Creates the directory if needed.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| IoError::file(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.hex()))
    }

    /// Unreadable or invalid entries count as misses.
    pub fn get(&self, key: &CacheKey) -> Option<EntailmentMatrix> {
        let text = std::fs::read_to_string(self.path_for(key)).ok()?;
        let entry: Entry = serde_json::from_str(&text).ok()?;
        EntailmentMatrix::validate(&entry.rows, entry.kind).ok()
    }

    pub fn put(&self, key: &CacheKey, matrix: &EntailmentMatrix) -> Result<()> {
        let entry = Entry {
            kind: matrix.kind(),
            rows: matrix.to_rows(),
        };
        let bytes = serde_json::to_vec(&entry).map_err(|e| IoError::Config(e.to_string()))?;
        write_atomic(self.path_for(key), &bytes)
    }

    pub fn len(&self) -> usize {
        std::fs::read_dir(&self.dir)
            .map(|it| {
                it.filter_map(|e| e.ok())
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
