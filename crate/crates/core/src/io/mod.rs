//! Files: model JSON, state-sequence CSV, release ledger, query specs.

mod fit;
mod ledger;

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::chain::{ChainError, ChainModel, StateSequence};
use crate::mechanism::{count_state, LipschitzQuery, QueryError};

pub use fit::{fit_chain, fit_labeled, FitConfig};
pub use ledger::{parse_ledger_line, Ledger, LedgerEntry};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("CSV has no `state` column")]
    MissingStateColumn,
    #[error("line {line}: unknown state {label:?}")]
    UnknownState { label: String, line: usize },
    #[error("no sequences to fit")]
    EmptyInput,
    #[error("sequence {index} uses states outside the {states}-state alphabet")]
    AlphabetMismatch { index: usize, states: usize },
    #[error("need at least {needed} sequences, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("smoothing must be non-negative and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("bad query spec {0:?}: expected `count:STATE` or `histogram`")]
    BadQuerySpec(String),
    #[error("ledger line {line}: {message}")]
    Ledger { line: usize, message: String },
    #[error("no ledger entry with id {0}")]
    MissingEntry(u64),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.to_path_buf(), source }
}

/// Parses and validates a model from JSON text.
pub fn parse_model(text: &str) -> Result<ChainModel, IoError> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_model(path: &Path) -> Result<ChainModel, IoError> {
    parse_model(&fs::read_to_string(path).map_err(file_error(path))?)
}

pub fn write_model(path: &Path, model: &ChainModel) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(model)?;
    text.push('\n');
    fs::write(path, text).map_err(file_error(path))
}

/// State labels of each sequence in a CSV file.
///
/// The file needs a `state` column. An optional `sequence` column splits
/// rows into several sequences, kept in order of first appearance; without
/// it the whole file is one sequence.
pub fn parse_sequences<R: Read>(reader: R) -> Result<Vec<Vec<String>>, IoError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let state_col = headers.iter().position(|h| h == "state").ok_or(IoError::MissingStateColumn)?;
    let seq_col = headers.iter().position(|h| h == "sequence");
    let mut ids: Vec<String> = Vec::new();
    let mut out: Vec<Vec<String>> = Vec::new();
    for row in csv.records() {
        let row = row?;
        let label = row.get(state_col).unwrap_or_default().to_string();
        let id = seq_col.and_then(|c| row.get(c)).unwrap_or_default();
        let slot = match ids.iter().position(|s| s == id) {
            Some(i) => i,
            None => {
                ids.push(id.to_string());
                out.push(Vec::new());
                out.len() - 1
            }
        };
        out[slot].push(label);
    }
    Ok(out)
}

pub fn read_sequences(path: &Path) -> Result<Vec<Vec<String>>, IoError> {
    parse_sequences(fs::File::open(path).map_err(file_error(path))?)
}

/// Maps labels to state indices of `model`.
pub fn encode(labels: &[String], model: &ChainModel) -> Result<StateSequence, IoError> {
    let values = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            model
                .state_index(l)
                .ok_or_else(|| IoError::UnknownState { label: l.clone(), line: i + 2 })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StateSequence::new(values, model.num_states())?)
}

/// Writes one sequence with a `state` header.
pub fn write_sequence<W: Write>(writer: W, seq: &StateSequence, model: &ChainModel) -> Result<(), IoError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["state"])?;
    for &v in seq.values() {
        csv.write_record([&model.states()[v]])?;
    }
    csv.flush()?;
    Ok(())
}

/// What to release.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuerySpec {
    /// Occurrences of one state, by label or index.
    Count(String),
    /// Every state's count, one release each.
    Histogram,
}

impl FromStr for QuerySpec {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self, IoError> {
        let s = s.trim();
        if s == "histogram" {
            return Ok(QuerySpec::Histogram);
        }
        match s.strip_prefix("count:") {
            Some(state) if !state.is_empty() => Ok(QuerySpec::Count(state.to_string())),
            _ => Err(IoError::BadQuerySpec(s.to_string())),
        }
    }
}

impl QuerySpec {
    /// The queries this spec expands to for `model`. A count label that is
    /// not a state name is read as a state index.
    pub fn resolve(&self, model: &ChainModel) -> Result<Vec<LipschitzQuery>, IoError> {
        let k = model.num_states();
        match self {
            QuerySpec::Histogram => Ok((0..k).map(|s| count_state(s, k)).collect::<Result<_, _>>()?),
            QuerySpec::Count(label) => {
                let index = match model.state_index(label) {
                    Some(i) => i,
                    None => label.parse().map_err(|_| IoError::UnknownState { label: label.clone(), line: 0 })?,
                };
                Ok(vec![count_state(index, k)?])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        for seed in 0..20 {
            let m = ChainModel::random(3, seed);
            write_model(&path, &m).unwrap();
            assert_eq!(read_model(&path).unwrap(), m);
        }
        assert!(matches!(read_model(&dir.path().join("missing.json")), Err(IoError::File { .. })));
        assert!(matches!(parse_model("{\"states\":[\"a\"],\"initial\":[1],\"transition\":[[0.5]]}"), Err(IoError::Json(_))));
    }

    #[test]
    fn sequences_from_csv() {
        let one = parse_sequences("state\na\nb\n a \n".as_bytes()).unwrap();
        assert_eq!(one, vec![vec!["a", "b", "a"]]);
        let many = parse_sequences("sequence,state\nx,a\ny,b\nx,b\n".as_bytes()).unwrap();
        assert_eq!(many, vec![vec!["a", "b"], vec!["b"]]);
        assert!(matches!(parse_sequences("label\na\n".as_bytes()), Err(IoError::MissingStateColumn)));
    }

    #[test]
    fn encode_and_write() {
        let m = ChainModel::new(vec!["lo".into(), "hi".into()], vec![0.5, 0.5], vec![vec![0.5, 0.5]; 2]).unwrap();
        let seq = encode(&["hi".into(), "lo".into()], &m).unwrap();
        assert_eq!(seq.values(), &[1, 0]);
        assert!(matches!(encode(&["mid".into()], &m), Err(IoError::UnknownState { line: 2, .. })));
        let mut out = Vec::new();
        write_sequence(&mut out, &seq, &m).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "state\nhi\nlo\n");
    }

    #[test]
    fn query_specs() {
        let m = ChainModel::new(vec!["lo".into(), "hi".into()], vec![0.5, 0.5], vec![vec![0.5, 0.5]; 2]).unwrap();
        assert_eq!("histogram".parse::<QuerySpec>().unwrap().resolve(&m).unwrap().len(), 2);
        let q = &"count:hi".parse::<QuerySpec>().unwrap().resolve(&m).unwrap()[0];
        assert_eq!(q.id(), "count:1");
        assert_eq!(q.evaluate(&[1, 1, 0]), 2.0);
        assert_eq!("count:0".parse::<QuerySpec>().unwrap().resolve(&m).unwrap()[0].id(), "count:0");
        assert!("count:".parse::<QuerySpec>().is_err());
        assert!("sum".parse::<QuerySpec>().is_err());
        assert!("count:7".parse::<QuerySpec>().unwrap().resolve(&m).is_err());
        assert!("count:mid".parse::<QuerySpec>().unwrap().resolve(&m).is_err());
    }
}
