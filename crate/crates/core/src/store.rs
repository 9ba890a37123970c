//! On-disk run store: one JSON-lines stream per record type plus a stage
//! ledger with content hashes for resumable runs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Recorded completion of one stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub input_hash: String,
    /// Output stream names and the hashes of their contents.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file so readers never see partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl RunStore {
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(root.join("store")).map_err(io_err(root))?;
        Ok(RunStore {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stream_path(&self, stream: &str) -> PathBuf {
        self.root.join("store").join(format!("{stream}.jsonl"))
    }

    pub fn has_stream(&self, stream: &str) -> bool {
        self.stream_path(stream).exists()
    }

    /// Replaces `stream` with `records`, each tagged with its schema.
    /// Returns the content hash.
    pub fn write_stream<T: Serialize>(
        &self,
        stream: &str,
        records: &[T],
    ) -> Result<String, StoreError> {
        let path = self.stream_path(stream);
        let mut buf = Vec::new();
        for r in records {
            let mut v = serde_json::to_value(r).map_err(|e| StoreError::Record {
                path: path.display().to_string(),
                line: 0,
                message: e.to_string(),
            })?;
            let schema = serde_json::Value::String(format!("{stream}/{SCHEMA_VERSION}"));
            match &mut v {
                serde_json::Value::Object(m) => {
                    m.insert("schema".into(), schema);
                }
                other => {
                    let inner = std::mem::take(other);
                    let mut m = serde_json::Map::new();
                    m.insert("schema".into(), schema);
                    m.insert("value".into(), inner);
                    *other = serde_json::Value::Object(m);
                }
            }
            serde_json::to_writer(&mut buf, &v).expect("in-memory write");
            buf.push(b'\n');
        }
        write_atomic(&path, &buf)?;
        Ok(sha256_hex(&buf))
    }

    pub fn read_stream<T: DeserializeOwned>(&self, stream: &str) -> Result<Vec<T>, StoreError> {
        let path = self.stream_path(stream);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let want = format!("{stream}/{SCHEMA_VERSION}");
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let err = |message: String| StoreError::Record {
                path: path.display().to_string(),
                line: i + 1,
                message,
            };
            let mut v: serde_json::Value =
                serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let m = v
                .as_object_mut()
                .ok_or_else(|| err("not an object".into()))?;
            match m.remove("schema") {
                Some(serde_json::Value::String(s)) if s == want => {}
                other => return Err(err(format!("schema {other:?}, expected {want}"))),
            }
            let v = match m.remove("value") {
                Some(inner) if m.is_empty() => inner,
                Some(inner) => {
                    m.insert("value".into(), inner);
                    v
                }
                None => v,
            };
            out.push(serde_json::from_value(v).map_err(|e| err(e.to_string()))?);
        }
        Ok(out)
    }

    pub fn stream_hash(&self, stream: &str) -> Option<String> {
        fs::read(self.stream_path(stream))
            .ok()
            .map(|b| sha256_hex(&b))
    }

    fn ledger_path(&self) -> PathBuf {
        self.root.join("store").join("stages.json")
    }

    pub fn stages(&self) -> BTreeMap<String, StageEntry> {
        fs::read_to_string(self.ledger_path())
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }

    pub fn record_stage(&self, stage: &str, entry: StageEntry) -> Result<(), StoreError> {
        let mut all = self.stages();
        all.insert(stage.to_string(), entry);
        let text = serde_json::to_string_pretty(&all).expect("serializable ledger");
        write_atomic(&self.ledger_path(), text.as_bytes())
    }

    pub fn forget_stage(&self, stage: &str) -> Result<(), StoreError> {
        let mut all = self.stages();
        if all.remove(stage).is_some() {
            let text = serde_json::to_string_pretty(&all).expect("serializable ledger");
            write_atomic(&self.ledger_path(), text.as_bytes())?;
        }
        Ok(())
    }

    /// True when `stage` completed with `input_hash` and every output it
    /// recorded is still present and unchanged.
    pub fn is_fresh(&self, stage: &str, input_hash: &str) -> bool {
        match self.stages().get(stage) {
            Some(e) if e.input_hash == input_hash => e
                .outputs
                .iter()
                .all(|(s, h)| self.output_hash(s).as_deref() == Some(h.as_str())),
            _ => false,
        }
    }

    /// Hash of a stream, or of a plain file under the store root when the
    /// name contains a path separator.
    pub fn output_hash(&self, name: &str) -> Option<String> {
        if name.contains('/') {
            fs::read(self.root.join(name)).ok().map(|b| sha256_hex(&b))
        } else {
            self.stream_hash(name)
        }
    }
}

/// Incremental hash over everything a stage depends on.
#[derive(Default)]
pub struct InputHasher {
    h: Sha256,
}

impl InputHasher {
    pub fn new(stage: &str) -> Self {
        let mut s = InputHasher::default();
        s.add("stage", stage.as_bytes());
        s
    }

    pub fn add(&mut self, label: &str, bytes: &[u8]) -> &mut Self {
        self.h.update((label.len() as u64).to_le_bytes());
        self.h.update(label.as_bytes());
        self.h.update((bytes.len() as u64).to_le_bytes());
        self.h.update(bytes);
        self
    }

    pub fn add_json<T: Serialize>(&mut self, label: &str, v: &T) -> &mut Self {
        let bytes = serde_json::to_vec(v).expect("serializable input");
        self.add(label, &bytes)
    }

    /// Adds file contents, or a marker when the file is absent.
    pub fn add_file(&mut self, label: &str, path: Option<&Path>) -> &mut Self {
        match path.and_then(|p| fs::read(p).ok()) {
            Some(b) => self.add(label, &b),
            None => self.add(label, b"<none>"),
        }
    }

    pub fn finish(self) -> String {
        hex::encode(self.h.finalize())
    }
}
