//! Two-node binary chain on which releasing the same Laplace mechanism
//! twice costs more than twice its budget.

use std::f64::consts::E;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{empirical_epsilon_on, GridSelection, NoisyRelease, OracleError, OracleFramework, VerificationCheck, VerificationReport};
use crate::chain::ChainModel;

pub const COUNTEREXAMPLE_P: f64 = 0.9;
pub const COUNTEREXAMPLE_Q: f64 = 0.01;

/// Closed-form constants next to the oracle's values for one `(p, q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub p: f64,
    pub q: f64,
    /// `(max S)² / e²`, the two candidates.
    pub single_constants: [f64; 2],
    /// `max D(w, w) / e²`, the two candidates.
    pub diagonal_constants: [f64; 2],
    pub single_closed_form: f64,
    pub single_oracle: f64,
    pub diagonal_closed_form: f64,
    pub diagonal_oracle: f64,
    /// Supremum over the full `(w, w')` plane.
    pub joint_oracle: f64,
    /// Whether the joint release needs more than twice the single budget.
    pub violated: bool,
}

impl CounterexampleReport {
    /// Largest disagreement between the closed form and the oracle.
    pub fn disagreement(&self) -> f64 {
        (self.single_closed_form - self.single_oracle)
            .abs()
            .max((self.diagonal_closed_form - self.diagonal_oracle).abs())
    }

    pub fn verdict(&self) -> String {
        let c = self.single_constants[0].max(self.single_constants[1]);
        let d = self.diagonal_constants[0].max(self.diagonal_constants[1]);
        if self.violated {
            format!("SEQUENTIAL COMPOSITION VIOLATED: {d:.4} > {c:.4}")
        } else {
            format!("sequential composition holds: {d:.4} <= {c:.4}")
        }
    }

    pub fn to_verification(&self) -> VerificationReport {
        let check = |name: &str, bound: f64, achieved: f64, pass: bool| VerificationCheck {
            name: name.to_string(),
            bound,
            achieved,
            witness: None,
            pass,
        };
        VerificationReport {
            checks: vec![
                check("single release: oracle = closed form", self.single_closed_form, self.single_oracle, (self.single_closed_form - self.single_oracle).abs() <= 1e-6),
                check("diagonal joint: oracle = closed form", self.diagonal_closed_form, self.diagonal_oracle, (self.diagonal_closed_form - self.diagonal_oracle).abs() <= 1e-6),
                check("full-plane joint >= diagonal", self.diagonal_oracle, self.joint_oracle, self.joint_oracle >= self.diagonal_oracle - 1e-12),
                check("joint exceeds twice the single budget", 2.0 * self.single_oracle, self.joint_oracle, self.violated),
            ],
        }
    }
}

impl fmt::Display for CounterexampleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p = {}, q = {}", self.p, self.q)?;
        writeln!(f, "(max S)^2 = e^2 max{{{:.4}, {:.4}}}", self.single_constants[0], self.single_constants[1])?;
        writeln!(f, "max D(w,w) = e^2 max{{{:.4}, {:.4}}}", self.diagonal_constants[0], self.diagonal_constants[1])?;
        writeln!(f, "single epsilon: closed form {:.6}, oracle {:.6}", self.single_closed_form, self.single_oracle)?;
        writeln!(f, "diagonal joint epsilon: closed form {:.6}, oracle {:.6}", self.diagonal_closed_form, self.diagonal_oracle)?;
        writeln!(f, "full-plane joint epsilon: {:.6}", self.joint_oracle)?;
        write!(f, "{}", self.verdict())
    }
}

/// The chain `[1−q, q; 1−p, p]` with a uniform start.
pub fn counterexample_chain(p: f64, q: f64) -> Result<ChainModel, OracleError> {
    Ok(ChainModel::from_parts(vec![0.5, 0.5], vec![vec![1.0 - q, q], vec![1.0 - p, p]])?)
}

/// Closed form and oracle for `F = X_1 + X_2`, unit Laplace noise, secret
/// `X_1 ∈ {0, 1}`.
pub fn analyze_binary_pair(p: f64, q: f64) -> Result<CounterexampleReport, OracleError> {
    let e2 = E * E;
    let single_constants = [
        ((q + E * (1.0 - q)) / (p + E * (1.0 - p))).powi(2),
        ((E * p + 1.0 - p) / (E * q + 1.0 - q)).powi(2),
    ];
    let diagonal_constants = [
        (q + e2 * (1.0 - q)) / (p + e2 * (1.0 - p)),
        (e2 * p + 1.0 - p) / (e2 * q + 1.0 - q),
    ];
    // Extreme values of S(w) and D(w, w) over w.
    let s = [
        (p + E * (1.0 - p)) / (E * q + e2 * (1.0 - q)),
        (e2 * p + E * (1.0 - p)) / (E * q + (1.0 - q)),
    ];
    let d = [
        (p + e2 * (1.0 - p)) / (e2 * q + e2 * e2 * (1.0 - q)),
        (e2 * e2 * p + e2 * (1.0 - p)) / (e2 * q + (1.0 - q)),
    ];
    let single_closed_form = s[0].ln().abs().max(s[1].ln().abs());
    let diagonal_closed_form = d[0].ln().abs().max(d[1].ln().abs());

    let fw = OracleFramework::new(2, vec![counterexample_chain(p, q)?], vec![1]);
    let release = NoisyRelease::new(1.0, |x| (x[0] + x[1]) as f64);
    let single_oracle = empirical_epsilon_on(std::slice::from_ref(&release), &fw, GridSelection::Full)?.value;
    let pair = [release.clone(), release];
    let diagonal_oracle = empirical_epsilon_on(&pair, &fw, GridSelection::Diagonal)?.value;
    let joint_oracle = empirical_epsilon_on(&pair, &fw, GridSelection::Full)?.value;

    Ok(CounterexampleReport {
        p,
        q,
        single_constants,
        diagonal_constants,
        single_closed_form,
        single_oracle,
        diagonal_closed_form,
        diagonal_oracle,
        joint_oracle,
        violated: joint_oracle > 2.0 * single_oracle + 1e-9,
    })
}

pub fn verify_counterexample() -> CounterexampleReport {
    analyze_binary_pair(COUNTEREXAMPLE_P, COUNTEREXAMPLE_Q).expect("fixed instance is valid")
}
