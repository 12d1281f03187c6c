//! Finite-state, time-homogeneous Markov chains.
//!
//! A [`ChainModel`] is one adversary belief `(q, P)`. Time indices are
//! 1-based throughout the crate, matching `X_1 -> X_2 -> ... -> X_T`.

mod spectral;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

pub use spectral::{spectral, SpectralInfo, PERIODICITY_EPS, STATIONARY_TOLERANCE};

/// Tolerance on row and initial-distribution sums at validation time.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChainError {
    #[error("model has no states")]
    Empty,
    #[error("duplicate state label {0:?}")]
    DuplicateLabel(String),
    #[error("transition matrix must be {expected}x{expected}")]
    DimensionMismatch { expected: usize },
    #[error("entry at row {row}, column {col} is {value}, outside [0, 1]")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("transition row {row} sums to {sum}, not 1")]
    NonStochasticRow { row: usize, sum: f64 },
    #[error("initial distribution is invalid (sum {sum})")]
    BadInitial { sum: f64 },
    #[error("time index {0} is invalid; times start at 1")]
    InvalidTime(usize),
    #[error("gap {0} is invalid; gaps start at 1")]
    InvalidGap(usize),
    #[error("time {time} minus gap {gap} falls before the start of the chain")]
    OutOfRange { time: usize, gap: usize },
    #[error("sequence length must be at least 1")]
    InvalidLength,
    #[error("state index {index} out of range for {states} states")]
    BadState { index: usize, states: usize },
    #[error("chain is not irreducible")]
    NotIrreducible,
    #[error("chain is periodic with period {0}")]
    NotAperiodic(u64),
    #[error("stationary distribution has a zero entry")]
    ZeroStationaryEntry,
    #[error("eigenvalue 1 of P·P* has multiplicity {0}; eigen-gap undefined")]
    DegenerateGap(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawChainModel {
    states: Vec<String>,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
}

/// A Markov chain `(q, P)` over labelled states.
///
/// Construction validates the invariants and renormalizes rows, so every
/// `ChainModel` in circulation is row-stochastic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChainModel", into = "RawChainModel")]
pub struct ChainModel {
    states: Vec<String>,
    initial: Vec<f64>,
    transition: Matrix,
}

impl TryFrom<RawChainModel> for ChainModel {
    type Error = ChainError;

    fn try_from(raw: RawChainModel) -> Result<Self, ChainError> {
        ChainModel::new(raw.states, raw.initial, raw.transition)
    }
}

impl From<ChainModel> for RawChainModel {
    fn from(m: ChainModel) -> Self {
        RawChainModel {
            states: m.states,
            initial: m.initial,
            transition: m.transition.to_rows(),
        }
    }
}

/// Checks the raw parts of a model, reporting the first violated constraint.
pub fn validate(states: &[String], initial: &[f64], transition: &[Vec<f64>]) -> Result<(), ChainError> {
    let k = states.len();
    if k == 0 {
        return Err(ChainError::Empty);
    }
    let mut seen = HashSet::new();
    for s in states {
        if !seen.insert(s.as_str()) {
            return Err(ChainError::DuplicateLabel(s.clone()));
        }
    }
    if transition.len() != k || transition.iter().any(|r| r.len() != k) {
        return Err(ChainError::DimensionMismatch { expected: k });
    }
    for (row, r) in transition.iter().enumerate() {
        for (col, &value) in r.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ChainError::NegativeEntry { row, col, value });
            }
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
            return Err(ChainError::NonStochasticRow { row, sum });
        }
    }
    let sum: f64 = initial.iter().sum();
    if initial.len() != k
        || initial.iter().any(|x| !(0.0..=1.0).contains(x))
        || (sum - 1.0).abs() > STOCHASTIC_TOLERANCE
    {
        return Err(ChainError::BadInitial { sum });
    }
    Ok(())
}

/// Rescales to unit sum. Rows already within roundoff of 1 are left
/// untouched so that serialization round-trips are exact.
fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() <= 1e-12 {
        return;
    }
    for x in v {
        *x /= s;
    }
}

impl ChainModel {
    pub fn new(
        states: Vec<String>,
        mut initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
    ) -> Result<Self, ChainError> {
        validate(&states, &initial, &transition)?;
        let mut transition = Matrix::from_rows(&transition).expect("validated square");
        for i in 0..transition.dim() {
            normalize(transition.row_mut(i));
        }
        normalize(&mut initial);
        Ok(Self {
            states,
            initial,
            transition,
        })
    }

    /// Model with states labelled `s0, s1, ...`.
    pub fn from_parts(initial: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self, ChainError> {
        let states = (0..initial.len()).map(|i| format!("s{i}")).collect();
        Self::new(states, initial, transition)
    }

    /// A random model with every entry strictly positive (hence irreducible
    /// and aperiodic), deterministic in `seed`.
    pub fn random(k: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha20Rng| -> Vec<f64> {
            let mut v: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
            normalize(&mut v);
            v
        };
        let initial = draw(&mut rng);
        let transition = (0..k).map(|_| draw(&mut rng)).collect();
        Self::from_parts(initial, transition).expect("random model is valid")
    }

    /// The same transitions started from a different initial distribution.
    pub fn with_initial(&self, initial: Vec<f64>) -> Result<Self, ChainError> {
        Self::new(self.states.clone(), initial, self.transition.to_rows())
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    /// Distribution of `X_t`, i.e. `q·P^(t-1)`.
    pub fn marginal(&self, t: usize) -> Result<Vec<f64>, ChainError> {
        if t < 1 {
            return Err(ChainError::InvalidTime(t));
        }
        Ok(self
            .transition
            .pow_stochastic(t - 1)
            .left_mul(&self.initial))
    }

    /// `P^gap`: entry `[v][u] = P(X_{i+gap} = u | X_i = v)`.
    pub fn forward_conditional(&self, gap: usize) -> Result<Matrix, ChainError> {
        if gap < 1 {
            return Err(ChainError::InvalidGap(gap));
        }
        Ok(self.transition.pow_stochastic(gap))
    }

    /// Rows `v` of `P(X_{time-gap} = u | X_time = v)` by Bayes' rule. A row is
    /// `None` when `P(X_time = v) = 0`.
    pub fn backward_conditional(
        &self,
        time: usize,
        gap: usize,
    ) -> Result<Vec<Option<Vec<f64>>>, ChainError> {
        if gap < 1 {
            return Err(ChainError::InvalidGap(gap));
        }
        if time <= gap {
            return Err(ChainError::OutOfRange { time, gap });
        }
        let earlier = self.marginal(time - gap)?;
        let forward = self.transition.pow_stochastic(gap);
        let k = self.num_states();
        let rows = (0..k)
            .map(|v| {
                let joint: Vec<f64> = (0..k).map(|u| earlier[u] * forward[(u, v)]).collect();
                let total: f64 = joint.iter().sum();
                (total > 0.0).then(|| joint.into_iter().map(|x| x / total).collect())
            })
            .collect();
        Ok(rows)
    }

    /// Draws `X_1..X_len` from the chain.
    pub fn sample(&self, len: usize, seed: u64) -> Result<StateSequence, ChainError> {
        if len < 1 {
            return Err(ChainError::InvalidLength);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(len);
        let mut current = draw_categorical(&self.initial, &mut rng);
        values.push(current);
        for _ in 1..len {
            current = draw_categorical(self.transition.row(current), &mut rng);
            values.push(current);
        }
        Ok(StateSequence { values })
    }

    /// Probability of an entire path.
    pub fn path_probability(&self, path: &[usize]) -> f64 {
        let Some((&first, rest)) = path.split_first() else {
            return 1.0;
        };
        let mut p = self.initial[first];
        let mut prev = first;
        for &x in rest {
            p *= self.transition[(prev, x)];
            prev = x;
        }
        p
    }
}

fn draw_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Roundoff in the cumulative sum: fall back to the last state with mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// A realized path `X_1..X_T` as state indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSequence {
    values: Vec<usize>,
}

impl StateSequence {
    pub fn new(values: Vec<usize>, num_states: usize) -> Result<Self, ChainError> {
        if values.is_empty() {
            return Err(ChainError::InvalidLength);
        }
        if let Some(&index) = values.iter().find(|&&v| v >= num_states) {
            return Err(ChainError::BadState {
                index,
                states: num_states,
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
