//! Append-only JSON-lines log of releases.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::mechanism::ReleaseRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub id: u64,
    /// Milliseconds since the Unix epoch, or a counter continuing the
    /// previous entry when the clock is unavailable or behind.
    pub timestamp_ms: u64,
    pub record: ReleaseRecord,
}

pub fn parse_ledger_line(line: &str) -> Result<LedgerEntry, serde_json::Error> {
    serde_json::from_str(line)
}

/// Complete lines only: a trailing fragment without a newline is a write
/// in progress and is skipped.
fn parse_entries(text: &str) -> Result<Vec<LedgerEntry>, IoError> {
    let complete = match text.rfind('\n') {
        Some(end) => &text[..end],
        None => "",
    };
    let mut out: Vec<LedgerEntry> = Vec::new();
    for (i, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry = parse_ledger_line(line).map_err(|e| IoError::Ledger { line: i + 1, message: e.to_string() })?;
        if let Some(prev) = out.last() {
            if entry.id <= prev.id {
                return Err(IoError::Ledger {
                    line: i + 1,
                    message: format!("id {} does not follow {}", entry.id, prev.id),
                });
            }
        }
        out.push(entry);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Ledger {
    path: PathBuf,
}

impl Ledger {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// All entries; a missing file is an empty ledger. Reads take no lock.
    pub fn entries(&self) -> Result<Vec<LedgerEntry>, IoError> {
        match std::fs::read_to_string(&self.path) {
            Ok(text) => parse_entries(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(source) => Err(IoError::File { path: self.path.clone(), source }),
        }
    }

    /// Entries with the given ids, in the order asked.
    pub fn get(&self, ids: &[u64]) -> Result<Vec<LedgerEntry>, IoError> {
        let all = self.entries()?;
        ids.iter()
            .map(|id| all.iter().find(|e| e.id == *id).cloned().ok_or(IoError::MissingEntry(*id)))
            .collect()
    }

    /// Appends under an exclusive advisory lock and returns the new entry.
    pub fn append(&self, record: ReleaseRecord) -> Result<LedgerEntry, IoError> {
        let wrap = |source| IoError::File { path: self.path.clone(), source };
        let mut file: File = OpenOptions::new().read(true).append(true).create(true).open(&self.path).map_err(wrap)?;
        file.lock().map_err(wrap)?;
        let result = (|| {
            let mut text = String::new();
            file.seek(SeekFrom::Start(0))?;
            file.read_to_string(&mut text)?;
            let last = parse_entries(&text)?.pop();
            let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).ok();
            let (id, timestamp_ms) = match &last {
                Some(prev) => (prev.id + 1, now.filter(|t| *t > prev.timestamp_ms).unwrap_or(prev.timestamp_ms + 1)),
                None => (1, now.unwrap_or(0)),
            };
            let entry = LedgerEntry { id, timestamp_ms, record };
            let mut line = String::new();
            if !text.is_empty() && !text.ends_with('\n') {
                line.push('\n');
            }
            line.push_str(&serde_json::to_string(&entry)?);
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
            Ok(entry)
        })();
        file.unlock().map_err(wrap)?;
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainModel, StateSequence};
    use crate::mechanism::{count_state, release, Framework, MechanismConfig, Variant};

    fn record(seed: u64) -> ReleaseRecord {
        let fw = Framework::full(3, vec![ChainModel::random(2, 1)]).unwrap();
        let data = StateSequence::new(vec![0, 1, 1], 2).unwrap();
        release(&data, &count_state(0, 2).unwrap(), 1.0, &fw, &MechanismConfig::new(Variant::Exact), seed).unwrap()
    }

    #[test]
    fn ids_and_timestamps_increase() {
        let dir = tempfile::tempdir().unwrap();
        let ledger = Ledger::new(dir.path().join("l.jsonl"));
        assert!(ledger.entries().unwrap().is_empty());
        let written: Vec<_> = (0..5).map(|s| ledger.append(record(s)).unwrap()).collect();
        let read = ledger.entries().unwrap();
        assert_eq!(read, written);
        for w in read.windows(2) {
            assert_eq!(w[1].id, w[0].id + 1);
            assert!(w[1].timestamp_ms > w[0].timestamp_ms);
        }
        assert_eq!(ledger.get(&[3, 1]).unwrap().iter().map(|e| e.id).collect::<Vec<_>>(), vec![3, 1]);
        assert!(matches!(ledger.get(&[9]), Err(IoError::MissingEntry(9))));
    }

    #[test]
    fn replay_reproduces_sigma() {
        let dir = tempfile::tempdir().unwrap();
        let ledger = Ledger::new(dir.path().join("l.jsonl"));
        ledger.append(record(1)).unwrap();
        for e in ledger.entries().unwrap() {
            assert_eq!(e.record.replay_sigma().unwrap(), e.record.sigma_max);
        }
    }

    #[test]
    fn partial_and_corrupt_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.jsonl");
        let ledger = Ledger::new(&path);
        ledger.append(record(1)).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"id\":2,").unwrap();
        assert_eq!(ledger.entries().unwrap().len(), 1);

        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(ledger.entries(), Err(IoError::Ledger { line: 1, .. })));

        let e = serde_json::to_string(&LedgerEntry { id: 4, timestamp_ms: 0, record: record(1) }).unwrap();
        std::fs::write(&path, format!("{e}\n{e}\n")).unwrap();
        assert!(matches!(ledger.entries(), Err(IoError::Ledger { line: 2, .. })));
    }

    #[test]
    fn concurrent_appends_serialize() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.jsonl");
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let path = path.clone();
                std::thread::spawn(move || {
                    let ledger = Ledger::new(path);
                    for i in 0..5 {
                        ledger.append(record(t * 10 + i)).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let ids: Vec<u64> = Ledger::new(&path).entries().unwrap().iter().map(|e| e.id).collect();
        assert_eq!(ids, (1..=40).collect::<Vec<_>>());
    }
}
