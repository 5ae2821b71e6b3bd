//! JSONL result records.
//!
//! Each line is one [`ResultRecord`]. Files are append-only; a record is
//! identified by `(record_kind, config_hash, seed)`, which is what makes
//! interrupted sweeps resumable.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Trace,
    MomentReport,
    BoundednessReport,
    RateFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub record_kind: RecordKind,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub payload: serde_json::Value,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: unsupported schema version {version}")]
    Schema { path: PathBuf, line: usize, version: u32 },
    #[error("payload encoding failed: {0}")]
    Encode(String),
}

impl ResultRecord {
    pub fn new<P: Serialize>(
        kind: RecordKind,
        config_hash: impl Into<String>,
        seed: Option<u64>,
        payload: &P,
    ) -> Result<Self, RecordError> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            record_kind: kind,
            config_hash: config_hash.into(),
            seed,
            payload: serde_json::to_value(payload).map_err(|e| RecordError::Encode(e.to_string()))?,
        })
    }

    pub fn key(&self) -> RecordKey {
        (self.record_kind, self.config_hash.clone(), self.seed)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

pub type RecordKey = (RecordKind, String, Option<u64>);

/// Reads every record of a JSONL file.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>, RecordError> {
    let io_err = |source| RecordError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ResultRecord = serde_json::from_str(&line).map_err(|e| RecordError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(RecordError::Schema { path: path.to_path_buf(), line: i + 1, version: rec.schema_version });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Destination for completed records.
pub trait RecordSink {
    fn contains(&self, key: &RecordKey) -> bool;
    fn append(&mut self, record: &ResultRecord) -> Result<(), RecordError>;
}

/// In-memory sink.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub records: Vec<ResultRecord>,
}

impl RecordSink for MemorySink {
    fn contains(&self, key: &RecordKey) -> bool {
        self.records.iter().any(|r| &r.key() == key)
    }

    fn append(&mut self, record: &ResultRecord) -> Result<(), RecordError> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Append-only JSONL file, flushed after every record.
pub struct JsonlSink {
    path: PathBuf,
    writer: BufWriter<File>,
    keys: HashSet<RecordKey>,
}

impl JsonlSink {
    /// Opens (or creates) `path`, indexing the records already present. A
    /// truncated final line left by an interrupted write is discarded.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, RecordError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| RecordError::Io { path: path.clone(), source };
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(&path).map_err(io_err)?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io_err)?;
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        if complete < text.len() {
            file.set_len(complete as u64).map_err(io_err)?;
        }
        file.seek(SeekFrom::Start(complete as u64)).map_err(io_err)?;
        let mut keys = HashSet::new();
        for (i, line) in text[..complete].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ResultRecord = serde_json::from_str(line).map_err(|e| RecordError::Malformed {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            keys.insert(rec.key());
        }
        Ok(Self { path: path.clone(), writer: BufWriter::new(file), keys })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

impl RecordSink for JsonlSink {
    fn contains(&self, key: &RecordKey) -> bool {
        self.keys.contains(key)
    }

    fn append(&mut self, record: &ResultRecord) -> Result<(), RecordError> {
        let io_err = |source| RecordError::Io { path: self.path.clone(), source };
        writeln!(self.writer, "{}", record.to_line()).map_err(io_err)?;
        self.writer.flush().map_err(io_err)?;
        self.keys.insert(record.key());
        Ok(())
    }
}
