//! Max-influence of a node on a Markov quilt.
//!
//! For a chain, the minimal quilts of `X_i` are `{X_{i-a}, X_{i+b}}`,
//! `{X_{i-a}}`, `{X_{i+b}}` and the empty set. Given `X_i`, the left and
//! right quilt nodes are conditionally independent, so
//! `P(x_Q | X_i = u)` factors into a backward and a forward term and the
//! log-ratio maximization splits per factor.

use serde::{Deserialize, Serialize};

use crate::chain::{spectral, ChainError, ChainModel, SpectralInfo};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InfluenceError {
    #[error("belief set is empty")]
    EmptyThetaSet,
    #[error("quilt {shape:?} does not fit a chain of length {horizon}")]
    InvalidShape { shape: QuiltShape, horizon: usize },
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Which of the four minimal-quilt forms a shape has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuiltKind {
    TwoSided,
    LeftOnly,
    RightOnly,
    Empty,
}

/// A minimal Markov quilt for `node`: quilt nodes at `node - left` and
/// `node + right` when present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuiltShape {
    pub node: usize,
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl QuiltShape {
    pub fn empty(node: usize) -> Self {
        Self { node, left: None, right: None }
    }

    pub fn two_sided(node: usize, left: usize, right: usize) -> Self {
        Self { node, left: Some(left), right: Some(right) }
    }

    pub fn left_only(node: usize, left: usize) -> Self {
        Self { node, left: Some(left), right: None }
    }

    pub fn right_only(node: usize, right: usize) -> Self {
        Self { node, left: None, right: Some(right) }
    }

    pub fn kind(&self) -> QuiltKind {
        match (self.left, self.right) {
            (Some(_), Some(_)) => QuiltKind::TwoSided,
            (Some(_), None) => QuiltKind::LeftOnly,
            (None, Some(_)) => QuiltKind::RightOnly,
            (None, None) => QuiltKind::Empty,
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<(), InfluenceError> {
        let ok = self.node >= 1
            && self.node <= horizon
            && self.left.is_none_or(|a| a >= 1 && a < self.node)
            && self.right.is_none_or(|b| b >= 1 && self.node + b <= horizon);
        if ok {
            Ok(())
        } else {
            Err(InfluenceError::InvalidShape { shape: *self, horizon })
        }
    }

    /// First and last index of the nearby set `X_N` (inclusive).
    pub fn nearby_range(&self, horizon: usize) -> (usize, usize) {
        let first = self.left.map_or(1, |a| self.node - a + 1);
        let last = self.right.map_or(horizon, |b| self.node + b - 1);
        (first, last)
    }

    /// `|X_N|`.
    pub fn nearby_size(&self, horizon: usize) -> usize {
        let (first, last) = self.nearby_range(horizon);
        last + 1 - first
    }

    /// The quilt nodes themselves, ascending.
    pub fn quilt_nodes(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(2);
        if let Some(a) = self.left {
            v.push(self.node - a);
        }
        if let Some(b) = self.right {
            v.push(self.node + b);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceMethod {
    Exact,
    Approx,
}

/// A max-influence value; `+∞` is a legitimate result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceValue {
    #[serde(with = "crate::serde_ext")]
    pub value: f64,
    pub method: InfluenceMethod,
}

impl InfluenceValue {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// `max_j log(num_j / den_j)` over entries not both zero. A positive
/// numerator over a zero denominator is `+∞`.
pub(crate) fn max_log_ratio(num: &[f64], den: &[f64]) -> f64 {
    num.iter()
        .zip(den)
        .filter(|(n, d)| **n > 0.0 || **d > 0.0)
        .map(|(&n, &d)| {
            if d == 0.0 {
                f64::INFINITY
            } else if n == 0.0 {
                f64::NEG_INFINITY
            } else {
                (n / d).ln()
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Ordered pairs `(u, v)`, `u != v`, both with positive mass at the node.
fn secret_pairs(marginal: &[f64]) -> Vec<(usize, usize)> {
    let k = marginal.len();
    let mut out = Vec::new();
    for u in 0..k {
        for v in 0..k {
            if u != v && marginal[u] > 0.0 && marginal[v] > 0.0 {
                out.push((u, v));
            }
        }
    }
    out
}

/// Combines per-pair backward and forward terms into the influence value.
fn combine(
    pairs: &[(usize, usize)],
    back: Option<&dyn Fn(usize, usize) -> f64>,
    fwd: Option<&dyn Fn(usize, usize) -> f64>,
) -> f64 {
    if back.is_none() && fwd.is_none() {
        return 0.0;
    }
    pairs
        .iter()
        .map(|&(u, v)| back.map_or(0.0, |f| f(u, v)) + fwd.map_or(0.0, |f| f(u, v)))
        .fold(0.0, f64::max)
}

/// Exact max-influence `e_θ(X_Q | X_i)` of `shape.node` on its quilt.
pub fn exact_max_influence(model: &ChainModel, shape: &QuiltShape) -> Result<InfluenceValue, InfluenceError> {
    let node_marginal = model.marginal(shape.node)?;
    let pairs = secret_pairs(&node_marginal);
    let backward = shape
        .left
        .map(|a| model.backward_conditional(shape.node, a))
        .transpose()?;
    let forward = shape.right.map(|b| model.forward_conditional(b)).transpose()?;

    let back_term = |u: usize, v: usize| {
        let rows = backward.as_ref().unwrap();
        match (&rows[u], &rows[v]) {
            (Some(ru), Some(rv)) => max_log_ratio(ru, rv),
            _ => unreachable!("pairs have positive marginal"),
        }
    };
    let fwd_term = |u: usize, v: usize| {
        let f = forward.as_ref().unwrap();
        max_log_ratio(f.row(u), f.row(v))
    };
    let value = combine(
        &pairs,
        backward.is_some().then_some(&back_term as &dyn Fn(usize, usize) -> f64),
        forward.is_some().then_some(&fwd_term as &dyn Fn(usize, usize) -> f64),
    );
    Ok(InfluenceValue { value, method: InfluenceMethod::Exact })
}

/// Smallest offset for which the spectral bound applies:
/// `2·log(1/π_min)/g`.
pub fn approx_offset_threshold(spec: &SpectralInfo) -> f64 {
    2.0 * (1.0 / spec.pi_min).ln() / spec.gap
}

/// `log((π_min + e^{-g·d/2}) / (π_min − e^{-g·d/2}))`, `+∞` when the
/// denominator is not positive.
fn spectral_term(spec: &SpectralInfo, offset: usize) -> f64 {
    let decay = (-spec.gap * offset as f64 / 2.0).exp();
    if spec.pi_min <= decay {
        f64::INFINITY
    } else {
        ((spec.pi_min + decay) / (spec.pi_min - decay)).ln()
    }
}

/// Spectral upper bound on max-influence.
///
/// Two-sided quilts get `2·term(a) + term(b)`; a left-only quilt gets
/// `2·term(a)` and a right-only quilt `term(b)` unless `allow_one_sided` is
/// false, in which case one-sided quilts are `+∞`.
pub fn approx_max_influence(spec: &SpectralInfo, shape: &QuiltShape, allow_one_sided: bool) -> InfluenceValue {
    let threshold = approx_offset_threshold(spec);
    let far = |d: usize| d as f64 >= threshold;
    let value = match (shape.left, shape.right) {
        (None, None) => 0.0,
        (Some(a), Some(b)) if far(a) && far(b) => 2.0 * spectral_term(spec, a) + spectral_term(spec, b),
        (Some(a), None) if allow_one_sided && far(a) => 2.0 * spectral_term(spec, a),
        (None, Some(b)) if allow_one_sided && far(b) => spectral_term(spec, b),
        _ => f64::INFINITY,
    };
    InfluenceValue { value, method: InfluenceMethod::Approx }
}

/// `e_Θ(X_Q | X_i)`: supremum over the belief set.
pub fn influence_over_set(
    models: &[ChainModel],
    shape: &QuiltShape,
    method: InfluenceMethod,
) -> Result<InfluenceValue, InfluenceError> {
    if models.is_empty() {
        return Err(InfluenceError::EmptyThetaSet);
    }
    let mut best = 0.0f64;
    for m in models {
        let v = match method {
            InfluenceMethod::Exact => exact_max_influence(m, shape)?,
            InfluenceMethod::Approx => approx_max_influence(&spectral(m)?, shape, true),
        };
        best = best.max(v.value);
    }
    Ok(InfluenceValue { value: best, method })
}

/// Precomputed marginals, matrix powers and per-pair log-ratio terms for
/// evaluating exact max-influence of every quilt in a chain of fixed
/// length. Agrees with [`exact_max_influence`] shape by shape.
#[derive(Debug, Clone)]
pub struct ExactInfluenceTable {
    horizon: usize,
    k: usize,
    marginals: Vec<Vec<f64>>,
    powers: Vec<Matrix>,
    forward_terms: Vec<Vec<f64>>,
}

impl ExactInfluenceTable {
    pub fn new(model: &ChainModel, horizon: usize) -> Self {
        let k = model.num_states();
        let mut marginals = Vec::with_capacity(horizon);
        let mut current = model.initial().to_vec();
        for _ in 0..horizon {
            marginals.push(current.clone());
            current = model.transition().left_mul(&current);
            current.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
        }
        let mut powers = Vec::with_capacity(horizon.saturating_sub(1));
        let mut p = model.transition().clone();
        for _ in 1..horizon {
            powers.push(p.clone());
            p = p.mul_stochastic(model.transition());
        }
        let forward_terms = powers
            .iter()
            .map(|pb| {
                let mut t = vec![0.0; k * k];
                for u in 0..k {
                    for v in 0..k {
                        if u != v {
                            t[u * k + v] = max_log_ratio(pb.row(u), pb.row(v));
                        }
                    }
                }
                t
            })
            .collect();
        Self { horizon, k, marginals, powers, forward_terms }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn pairs(&self, node: usize) -> Vec<(usize, usize)> {
        secret_pairs(&self.marginals[node - 1])
    }

    /// Per-pair backward terms for quilt node `node - left`, indexed `u*k + v`.
    pub fn backward_terms(&self, node: usize, left: usize) -> Vec<f64> {
        let k = self.k;
        let earlier = &self.marginals[node - left - 1];
        let pa = &self.powers[left - 1];
        let rows: Vec<Option<Vec<f64>>> = (0..k)
            .map(|u| {
                let joint: Vec<f64> = (0..k).map(|x| earlier[x] * pa[(x, u)]).collect();
                let total: f64 = joint.iter().sum();
                (total > 0.0).then(|| joint.into_iter().map(|j| j / total).collect())
            })
            .collect();
        let mut t = vec![0.0; k * k];
        for u in 0..k {
            for v in 0..k {
                if let (Some(ru), Some(rv)) = (&rows[u], &rows[v]) {
                    if u != v {
                        t[u * k + v] = max_log_ratio(ru, rv);
                    }
                }
            }
        }
        t
    }

    pub fn forward_terms(&self, right: usize) -> &[f64] {
        &self.forward_terms[right - 1]
    }

    /// Influence from precomputed terms; `back`/`fwd` are `None` when the
    /// quilt has no node on that side.
    pub fn combine(&self, pairs: &[(usize, usize)], back: Option<&[f64]>, fwd: Option<&[f64]>) -> f64 {
        let k = self.k;
        if back.is_none() && fwd.is_none() {
            return 0.0;
        }
        pairs
            .iter()
            .map(|&(u, v)| {
                let i = u * k + v;
                back.map_or(0.0, |b| b[i]) + fwd.map_or(0.0, |f| f[i])
            })
            .fold(0.0, f64::max)
    }

    pub fn influence(&self, shape: &QuiltShape) -> f64 {
        let pairs = self.pairs(shape.node);
        let back = shape.left.map(|a| self.backward_terms(shape.node, a));
        let fwd = shape.right.map(|b| self.forward_terms(b));
        self.combine(&pairs, back.as_deref(), fwd)
    }
}
