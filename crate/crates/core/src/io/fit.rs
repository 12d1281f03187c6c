//! Maximum-likelihood chain fitting with additive smoothing.

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::chain::{ChainModel, StateSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Pseudo-count added to every transition and initial count.
    pub alpha: f64,
    pub min_sequences: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { alpha: 1.0, min_sequences: 1 }
    }
}

fn smoothed(counts: &[f64], alpha: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + alpha * counts.len() as f64;
    if total <= 0.0 {
        // Unseen state without smoothing: uniform row.
        return vec![1.0 / counts.len() as f64; counts.len()];
    }
    counts.iter().map(|c| (c + alpha) / total).collect()
}

/// `P[u][v] = (n(u→v) + α) / (n(u→·) + kα)`, initial distribution from
/// first symbols with the same smoothing.
pub fn fit_chain(states: Vec<String>, sequences: &[StateSequence], config: &FitConfig) -> Result<ChainModel, IoError> {
    if !(config.alpha >= 0.0 && config.alpha.is_finite()) {
        return Err(IoError::InvalidAlpha(config.alpha));
    }
    if sequences.is_empty() || sequences.iter().all(|s| s.is_empty()) {
        return Err(IoError::EmptyInput);
    }
    if sequences.len() < config.min_sequences {
        return Err(IoError::InsufficientData { needed: config.min_sequences, got: sequences.len() });
    }
    let k = states.len();
    if let Some(index) = sequences.iter().position(|s| s.values().iter().any(|&v| v >= k)) {
        return Err(IoError::AlphabetMismatch { index, states: k });
    }
    let mut first = vec![0.0; k];
    let mut trans = vec![vec![0.0; k]; k];
    for seq in sequences.iter().filter(|s| !s.is_empty()) {
        let v = seq.values();
        first[v[0]] += 1.0;
        for w in v.windows(2) {
            trans[w[0]][w[1]] += 1.0;
        }
    }
    let initial = smoothed(&first, config.alpha);
    let transition = trans.iter().map(|row| smoothed(row, config.alpha)).collect();
    Ok(ChainModel::new(states, initial, transition)?)
}

/// Fits from label sequences. The alphabet is `states` when given, else
/// the sorted set of labels seen.
pub fn fit_labeled(
    sequences: &[Vec<String>],
    states: Option<Vec<String>>,
    config: &FitConfig,
) -> Result<ChainModel, IoError> {
    let states = states.unwrap_or_else(|| {
        let mut s: Vec<String> = sequences.iter().flatten().cloned().collect();
        s.sort();
        s.dedup();
        s
    });
    let encoded = sequences
        .iter()
        .enumerate()
        .map(|(index, seq)| {
            let values = seq
                .iter()
                .map(|l| states.iter().position(|s| s == l))
                .collect::<Option<Vec<_>>>()
                .ok_or(IoError::AlphabetMismatch { index, states: states.len() })?;
            Ok(StateSequence::new(values, states.len().max(1))?)
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    fit_chain(states, &encoded, config)
}
