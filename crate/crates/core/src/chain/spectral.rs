//! Stationary distribution, time reversal and the eigen-gap of `P·P*`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{ChainError, ChainModel};
use crate::matrix::{symmetric_eigenvalues, Matrix};

/// L1 residual `‖πP − π‖₁` the stationary solve must reach.
pub const STATIONARY_TOLERANCE: f64 = 1e-10;
/// Eigenvalues within this distance of 1 count as unit eigenvalues.
pub const PERIODICITY_EPS: f64 = 1e-8;
const POWER_ITERATION_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    pub stationary: Vec<f64>,
    pub pi_min: f64,
    pub reversal: Matrix,
    /// `min{1 − |λ| : |λ| < 1}` over eigenvalues of `P·P*`.
    pub gap: f64,
    /// Eigenvalues of `P·P*`, ascending.
    pub eigenvalues: Vec<f64>,
}

/// Spectral summary of an irreducible, aperiodic chain.
pub fn spectral(model: &ChainModel) -> Result<SpectralInfo, ChainError> {
    let p = model.transition();
    let k = p.dim();
    if !strongly_connected(p) {
        return Err(ChainError::NotIrreducible);
    }
    let period = period(p);
    if period != 1 {
        return Err(ChainError::NotAperiodic(period));
    }
    let pi = stationary(p);
    let pi_min = pi.iter().copied().fold(f64::INFINITY, f64::min);
    if pi_min <= 0.0 {
        return Err(ChainError::ZeroStationaryEntry);
    }

    let mut reversal = Matrix::zeros(k);
    for u in 0..k {
        for v in 0..k {
            reversal[(u, v)] = pi[v] * p[(v, u)] / pi[u];
        }
    }

    // P·P* is self-adjoint in L²(π); D^{1/2}·M·D^{-1/2} is symmetric.
    let m = p.mul(&reversal);
    let mut sym = Matrix::zeros(k);
    for u in 0..k {
        for v in 0..k {
            sym[(u, v)] = pi[u].sqrt() * m[(u, v)] / pi[v].sqrt();
        }
    }
    let eigenvalues = symmetric_eigenvalues(&sym);
    let unit = eigenvalues
        .iter()
        .filter(|l| l.abs() >= 1.0 - PERIODICITY_EPS)
        .count();
    if unit > 1 {
        return Err(ChainError::DegenerateGap(unit));
    }
    let gap = eigenvalues
        .iter()
        .filter(|l| l.abs() < 1.0 - PERIODICITY_EPS)
        .map(|l| 1.0 - l.abs())
        .fold(f64::INFINITY, f64::min);
    // A single-state chain has no non-unit eigenvalue.
    let gap = if gap.is_finite() { gap.clamp(0.0, 1.0) } else { 1.0 };

    Ok(SpectralInfo {
        stationary: pi,
        pi_min,
        reversal,
        gap,
        eigenvalues,
    })
}

fn reachable(p: &Matrix, transpose: bool) -> Vec<bool> {
    let k = p.dim();
    let mut seen = vec![false; k];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..k {
            let w = if transpose { p[(v, u)] } else { p[(u, v)] };
            if w > 0.0 && !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

fn strongly_connected(p: &Matrix) -> bool {
    reachable(p, false).into_iter().all(|x| x) && reachable(p, true).into_iter().all(|x| x)
}

/// Period of a strongly connected chain: gcd over edges `u -> v` of
/// `level(u) + 1 − level(v)` for BFS levels from state 0.
fn period(p: &Matrix) -> u64 {
    let k = p.dim();
    let mut level = vec![usize::MAX; k];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..k {
            if p[(u, v)] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0u64;
    for u in 0..k {
        for v in 0..k {
            if p[(u, v)] > 0.0 {
                let d = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs();
                g = gcd(g, d);
            }
        }
    }
    g
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn l1_residual(p: &Matrix, pi: &[f64]) -> f64 {
    p.left_mul(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
}

fn stationary(p: &Matrix) -> Vec<f64> {
    let k = p.dim();
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..POWER_ITERATION_CAP {
        if l1_residual(p, &pi) <= STATIONARY_TOLERANCE {
            return pi;
        }
        pi = p.left_mul(&pi);
        let s: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|x| *x /= s);
    }
    solve_stationary(p)
}

/// Solves `π(P − I) = 0, Σπ = 1` by Gaussian elimination with partial
/// pivoting, replacing the last balance equation with the normalization.
fn solve_stationary(p: &Matrix) -> Vec<f64> {
    let k = p.dim();
    // Rows are equations: (Pᵀ − I)π = 0.
    let mut a = vec![vec![0.0; k + 1]; k];
    for (i, row) in a.iter_mut().enumerate() {
        for j in 0..k {
            row[j] = p[(j, i)] - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[k - 1] = vec![1.0; k + 1];
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let d = a[col][col];
        if d.abs() < f64::MIN_POSITIVE {
            continue;
        }
        for r in 0..k {
            if r != col {
                let f = a[r][col] / d;
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut pi: Vec<f64> = (0..k).map(|i| (a[i][k] / a[i][i]).max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= s);
    pi
}
