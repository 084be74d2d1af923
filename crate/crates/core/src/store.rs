//! Durable label storage: an append-only JSONL log plus a snapshot of the
//! current state.
//!
//! Every accepted record gets a sequence number and is flushed to disk
//! before `append` returns. The log is never rewritten, so it holds the
//! full submission history. The snapshot holds the latest record per
//! (sentence, annotator) and lets `open` skip the log prefix it covers.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotate::AnnotationRecord;
use crate::error::StoreError;

pub const LOG_FILE: &str = "labels.log.jsonl";
pub const SNAPSHOT_FILE: &str = "labels.snapshot.json";
pub const DEFAULT_COMPACT_EVERY: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub record: AnnotationRecord,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    entries: Vec<LogEntry>,
}

type Key = (String, String);

#[derive(Debug)]
pub struct LabelStore {
    dir: PathBuf,
    log: File,
    next_seq: u64,
    current: BTreeMap<Key, LogEntry>,
    since_snapshot: usize,
    compact_every: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn key_of(r: &AnnotationRecord) -> Key {
    (r.sentence_id.clone(), r.annotator_id.clone())
}

impl LabelStore {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        Self::open_with(dir, DEFAULT_COMPACT_EVERY)
    }

    /// `compact_every = 0` disables automatic snapshots.
    pub fn open_with(dir: &Path, compact_every: usize) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut current = BTreeMap::new();
        let mut covered = 0u64;
        if snap_path.exists() {
            let text = fs::read_to_string(&snap_path).map_err(io_err(&snap_path))?;
            let snap: Snapshot = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: snap_path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?;
            covered = snap.seq;
            for e in snap.entries {
                current.insert(key_of(&e.record), e);
            }
        }

        let log_path = dir.join(LOG_FILE);
        let (entries, valid_len) = read_log(&log_path)?;
        let mut next_seq = covered;
        let mut since_snapshot = 0;
        for e in entries {
            next_seq = next_seq.max(e.seq);
            if e.seq > covered {
                since_snapshot += 1;
                current.insert(key_of(&e.record), e);
            }
        }
        let mut log = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(false)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        let on_disk = log.metadata().map_err(io_err(&log_path))?.len();
        if on_disk != valid_len {
            log::warn!("discarding {} bytes of torn write at end of {}", on_disk - valid_len, log_path.display());
            log.set_len(valid_len).map_err(io_err(&log_path))?;
            log.sync_data().map_err(io_err(&log_path))?;
        }
        log.seek(SeekFrom::End(0)).map_err(io_err(&log_path))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            log,
            next_seq: next_seq + 1,
            current,
            since_snapshot,
            compact_every,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Returns once the entry is on disk. A resubmission for the same
    /// (sentence, annotator) supersedes the earlier one.
    pub fn append(&mut self, record: AnnotationRecord) -> Result<LogEntry, StoreError> {
        let entry = LogEntry {
            seq: self.next_seq,
            record,
        };
        let mut line = serde_json::to_string(&entry).expect("log entry serializes");
        line.push('\n');
        let path = self.dir.join(LOG_FILE);
        self.log.write_all(line.as_bytes()).map_err(io_err(&path))?;
        self.log.flush().map_err(io_err(&path))?;
        self.log.sync_data().map_err(io_err(&path))?;
        self.next_seq += 1;
        self.current.insert(key_of(&entry.record), entry.clone());
        self.since_snapshot += 1;
        if self.compact_every > 0 && self.since_snapshot >= self.compact_every {
            self.compact()?;
        }
        Ok(entry)
    }

    /// Latest record per (sentence, annotator), in submission order.
    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.entries().into_iter().map(|e| e.record.clone()).collect()
    }

    pub fn entries(&self) -> Vec<&LogEntry> {
        let mut v: Vec<&LogEntry> = self.current.values().collect();
        v.sort_by_key(|e| e.seq);
        v
    }

    pub fn get(&self, sentence_id: &str, annotator_id: &str) -> Option<&AnnotationRecord> {
        self.current
            .get(&(sentence_id.to_string(), annotator_id.to_string()))
            .map(|e| &e.record)
    }

    pub fn for_sentence(&self, sentence_id: &str) -> Vec<AnnotationRecord> {
        self.entries()
            .into_iter()
            .filter(|e| e.record.sentence_id == sentence_id)
            .map(|e| e.record.clone())
            .collect()
    }

    pub fn for_annotator(&self, annotator_id: &str) -> Vec<AnnotationRecord> {
        self.entries()
            .into_iter()
            .filter(|e| e.record.annotator_id == annotator_id)
            .map(|e| e.record.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    /// Number of log entries written so far, superseded ones included.
    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    /// Every entry ever appended, superseded ones included.
    pub fn history(&self) -> Result<Vec<LogEntry>, StoreError> {
        Ok(read_log(&self.dir.join(LOG_FILE))?.0)
    }

    /// Writes the current state atomically: temp file, fsync, rename.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        let snap = Snapshot {
            seq: self.last_seq(),
            entries: self.entries().into_iter().cloned().collect(),
        };
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            serde_json::to_writer(&mut f, &snap).expect("snapshot serializes");
            f.flush().map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        self.since_snapshot = 0;
        Ok(())
    }
}

/// Parsed entries and the byte length of the well-formed prefix. Only the
/// final line may be malformed, and only if it lacks its newline.
fn read_log(path: &Path) -> Result<(Vec<LogEntry>, u64), StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut reader = BufReader::new(file);
    let mut entries = Vec::new();
    let mut valid = 0u64;
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        let trimmed = buf.trim();
        if trimmed.is_empty() {
            if complete {
                valid += n as u64;
            }
            continue;
        }
        match serde_json::from_str::<LogEntry>(trimmed) {
            Ok(e) if complete => {
                entries.push(e);
                valid += n as u64;
            }
            _ if !complete => break,
            Ok(_) => unreachable!("complete lines are handled above"),
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.display().to_string(),
                    line: line_no,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((entries, valid))
}
