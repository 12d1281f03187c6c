//! Exact verification by full enumeration of small chains.
//!
//! A mechanism that releases `F_r(X) + σ_r·Z_r` for independent Laplace
//! draws has, conditioned on a secret, the output density
//!
//! ```text
//! p(w | s) = Σ_x P(x | s) · Π_r (1/(2σ_r)) · exp(−|w_r − F_r(x)| / σ_r)
//! ```
//!
//! Between consecutive breakpoints `F_r(x)` each coordinate enters as
//! `A·e^{w/σ} + B·e^{−w/σ}`, so a ratio of two such densities is a Möbius
//! map of `e^{2w/σ}` and is monotone per cell. The supremum of the
//! log-ratio is therefore attained on the breakpoint grid or in one of the
//! limits `w → ±∞`, and evaluating there is exact.

mod counterexample;
mod remote;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain::{ChainError, ChainModel};
use crate::mechanism::{Framework, LipschitzQuery, MechanismError, ReleaseRecord, SubchainWindow};

pub use counterexample::{verify_counterexample, CounterexampleReport, COUNTEREXAMPLE_P, COUNTEREXAMPLE_Q};
pub use remote::{check_joint_remote_bound, RemoteBoundReport};

/// Largest number of sequences `k^T` the oracle will enumerate.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("enumerating {states}^{horizon} sequences exceeds the limit of {ENUMERATION_LIMIT}")]
    TooLarge { states: usize, horizon: usize },
    #[error("secret X_{node} = {value} has probability zero")]
    ZeroProbabilitySecret { node: usize, value: usize },
    #[error("densities have different dimensions or noise scales")]
    SupportMismatch,
    #[error("secret node {node} outside [1, {horizon}]")]
    BadNode { node: usize, horizon: usize },
    #[error("no releases to evaluate")]
    NoReleases,
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// One additively noised scalar release, as a function of the whole chain.
#[derive(Clone)]
pub struct NoisyRelease {
    eval: Arc<dyn Fn(&[usize]) -> f64 + Send + Sync>,
    sigma: f64,
}

impl std::fmt::Debug for NoisyRelease {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoisyRelease").field("sigma", &self.sigma).finish_non_exhaustive()
    }
}

impl NoisyRelease {
    pub fn new(sigma: f64, eval: impl Fn(&[usize]) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(eval), sigma }
    }

    /// The rescaled query applied to `window` of the chain.
    pub fn windowed(query: &LipschitzQuery, window: SubchainWindow, sigma: f64) -> Self {
        let query = query.clone();
        Self::new(sigma, move |x| query.scaled(&x[window.start - 1..window.end]))
    }

    /// The release a mechanism record describes, given the query it used.
    pub fn from_record(record: &ReleaseRecord, query: &LipschitzQuery) -> Self {
        Self::windowed(query, record.window(), record.sigma_max)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn evaluate(&self, x: &[usize]) -> f64 {
        (self.eval)(x)
    }
}

/// Beliefs, chain length and the nodes whose values are secret.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFramework {
    pub horizon: usize,
    pub models: Vec<ChainModel>,
    pub secret_nodes: Vec<usize>,
}

impl OracleFramework {
    pub fn new(horizon: usize, models: Vec<ChainModel>, secret_nodes: Vec<usize>) -> Self {
        Self { horizon, models, secret_nodes }
    }

    /// Secrets are the nodes of the framework's window.
    pub fn from_framework(fw: &Framework) -> Self {
        Self::new(fw.horizon, fw.models.clone(), (fw.window.start..=fw.window.end).collect())
    }

    /// Secrets are the nodes of all the given windows.
    pub fn from_windows(fw: &Framework, windows: &[SubchainWindow]) -> Self {
        let mut nodes: Vec<usize> = windows.iter().flat_map(|w| w.start..=w.end).collect();
        nodes.sort_unstable();
        nodes.dedup();
        Self::new(fw.horizon, fw.models.clone(), nodes)
    }
}

/// Calls `visit(x, P(x))` for every sequence of positive probability.
pub fn enumerate_paths(
    model: &ChainModel,
    horizon: usize,
    mut visit: impl FnMut(&[usize], f64),
) -> Result<(), OracleError> {
    let k = model.num_states();
    let too_large = || OracleError::TooLarge { states: k, horizon };
    let total = (k as u64).checked_pow(horizon as u32).ok_or_else(too_large)?;
    if total > ENUMERATION_LIMIT {
        return Err(too_large());
    }
    if horizon == 0 {
        return Ok(());
    }
    let mut x = vec![0usize; horizon];
    loop {
        let p = model.path_probability(&x);
        if p > 0.0 {
            visit(&x, p);
        }
        // Odometer increment, last position fastest.
        let mut pos = horizon;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            x[pos] += 1;
            if x[pos] < k {
                break;
            }
            x[pos] = 0;
        }
    }
}

/// A point mass of the noiseless output vector with its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vec<f64>,
    pub weight: f64,
}

/// Mixture of product-Laplace kernels centred at the atoms. Weights sum to
/// 1 for conditional densities; sub-densities (joint with an event) carry
/// less mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDensity {
    pub scales: Vec<f64>,
    pub atoms: Vec<Atom>,
}

fn point_key(point: &[f64]) -> Vec<u64> {
    point.iter().map(|x| x.to_bits()).collect()
}

#[derive(Default)]
struct AtomAccumulator {
    atoms: BTreeMap<Vec<u64>, (Vec<f64>, f64)>,
}

impl AtomAccumulator {
    fn add(&mut self, point: Vec<f64>, weight: f64) {
        self.atoms
            .entry(point_key(&point))
            .or_insert_with(|| (point, 0.0))
            .1 += weight;
    }

    fn finish(self, scales: Vec<f64>, normalizer: f64) -> OutputDensity {
        let mut atoms: Vec<Atom> = self
            .atoms
            .into_values()
            .map(|(point, w)| Atom { point, weight: w / normalizer })
            .collect();
        atoms.sort_by(|a, b| {
            a.point
                .iter()
                .zip(&b.point)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        OutputDensity { scales, atoms }
    }
}

/// A coordinate of an evaluation point: finite, or one of the limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPoint {
    NegInf,
    At(f64),
    PosInf,
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl OutputDensity {
    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Distinct atom coordinates along `axis`, ascending.
    pub fn breakpoints(&self, axis: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.atoms.iter().map(|a| a.point[axis]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Density at a finite point.
    pub fn density(&self, w: &[f64]) -> f64 {
        self.atoms
            .iter()
            .map(|a| {
                a.weight
                    * a.point
                        .iter()
                        .zip(w)
                        .zip(&self.scales)
                        .map(|((f, w), s)| (-(w - f).abs() / s).exp() / (2.0 * s))
                        .product::<f64>()
            })
            .sum()
    }

    /// Log density at a grid point. At an infinite coordinate the kernel is
    /// replaced by its leading factor `e^{±F/σ}` (the common `e^{∓w/σ}`
    /// cancels in any ratio taken at the same point).
    pub fn log_density_at(&self, point: &[GridPoint]) -> f64 {
        log_sum_exp(self.atoms.iter().filter(|a| a.weight > 0.0).map(|a| {
            let mut lk = a.weight.ln();
            for ((f, p), s) in a.point.iter().zip(point).zip(&self.scales) {
                lk += match p {
                    GridPoint::At(w) => -(w - f).abs() / s,
                    GridPoint::PosInf => f / s,
                    GridPoint::NegInf => -f / s,
                } - (2.0 * s).ln();
            }
            lk
        }))
    }

    /// Marginal along one axis.
    pub fn marginal(&self, axis: usize) -> OutputDensity {
        let mut acc = AtomAccumulator::default();
        for a in &self.atoms {
            acc.add(vec![a.point[axis]], a.weight);
        }
        acc.finish(vec![self.scales[axis]], 1.0)
    }

    /// Product of independent densities, axes concatenated.
    pub fn product(parts: &[OutputDensity]) -> OutputDensity {
        let mut atoms = vec![Atom { point: Vec::new(), weight: 1.0 }];
        for part in parts {
            atoms = atoms
                .iter()
                .flat_map(|a| {
                    part.atoms.iter().map(move |b| Atom {
                        point: a.point.iter().chain(&b.point).copied().collect(),
                        weight: a.weight * b.weight,
                    })
                })
                .collect();
        }
        let scales = parts.iter().flat_map(|p| p.scales.iter().copied()).collect();
        OutputDensity { scales, atoms }
    }
}

/// The exact evaluation grid for a set of densities of equal dimension.
fn evaluation_axes(densities: &[&OutputDensity]) -> Vec<Vec<GridPoint>> {
    let dim = densities[0].dim();
    (0..dim)
        .map(|axis| {
            let mut finite: Vec<f64> = densities.iter().flat_map(|d| d.breakpoints(axis)).collect();
            finite.sort_by(f64::total_cmp);
            finite.dedup();
            std::iter::once(GridPoint::NegInf)
                .chain(finite.into_iter().map(GridPoint::At))
                .chain(std::iter::once(GridPoint::PosInf))
                .collect()
        })
        .collect()
}

fn for_each_grid_point(axes: &[Vec<GridPoint>], mut f: impl FnMut(&[GridPoint])) {
    let mut idx = vec![0usize; axes.len()];
    let mut point: Vec<GridPoint> = axes.iter().map(|a| a[0]).collect();
    loop {
        f(&point);
        let mut pos = axes.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < axes[pos].len() {
                point[pos] = axes[pos][idx[pos]];
                break;
            }
            idx[pos] = 0;
            point[pos] = axes[pos][0];
        }
    }
}

/// `|log(p/q)|` with `0/0` excluded (`None`) and `x/0` infinite.
fn abs_log_ratio(lp: f64, lq: f64) -> Option<f64> {
    match (lp == f64::NEG_INFINITY, lq == f64::NEG_INFINITY) {
        (true, true) => None,
        (false, false) => Some((lp - lq).abs()),
        _ => Some(f64::INFINITY),
    }
}

/// `P(x | X_node = value)`-weighted mixture of the releases' noiseless
/// outputs.
pub fn joint_conditional_density(
    model: &ChainModel,
    horizon: usize,
    releases: &[NoisyRelease],
    node: usize,
    value: usize,
) -> Result<OutputDensity, OracleError> {
    if node < 1 || node > horizon {
        return Err(OracleError::BadNode { node, horizon });
    }
    if releases.is_empty() {
        return Err(OracleError::NoReleases);
    }
    let mut acc = AtomAccumulator::default();
    let mut mass = 0.0;
    enumerate_paths(model, horizon, |x, p| {
        if x[node - 1] == value {
            mass += p;
            acc.add(releases.iter().map(|r| r.evaluate(x)).collect(), p);
        }
    })?;
    if mass <= 0.0 {
        return Err(OracleError::ZeroProbabilitySecret { node, value });
    }
    Ok(acc.finish(releases.iter().map(|r| r.sigma).collect(), mass))
}

/// Output density of `F(X)/L + σ·Z` given `X_node = value`.
pub fn conditional_density(
    model: &ChainModel,
    horizon: usize,
    query: &LipschitzQuery,
    sigma: f64,
    node: usize,
    value: usize,
) -> Result<OutputDensity, OracleError> {
    let q = query.clone();
    let release = NoisyRelease::new(sigma, move |x| q.scaled(x));
    joint_conditional_density(model, horizon, &[release], node, value)
}

/// Where the supremum was attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub theta: usize,
    pub node: usize,
    pub values: (usize, usize),
    pub point: Vec<GridPoint>,
}

impl std::fmt::Display for GridPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridPoint::NegInf => f.write_str("-inf"),
            GridPoint::At(w) => write!(f, "{w}"),
            GridPoint::PosInf => f.write_str("+inf"),
        }
    }
}

impl std::fmt::Display for Witness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let point: Vec<String> = self.point.iter().map(|p| p.to_string()).collect();
        write!(
            f,
            "belief {}, X_{} = {} vs {}, w = ({})",
            self.theta,
            self.node,
            self.values.0,
            self.values.1,
            point.join(", ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEpsilon {
    #[serde(with = "crate::serde_ext")]
    pub value: f64,
    pub witness: Option<Witness>,
}

/// Which grid points to examine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSelection {
    /// The full product grid with limit rays: exact supremum.
    Full,
    /// Only points with all coordinates equal.
    Diagonal,
}

/// Sup over beliefs, secret pairs and outputs of `|log p(w|s_a)/p(w|s_b)|`.
pub fn empirical_epsilon(releases: &[NoisyRelease], fw: &OracleFramework) -> Result<EmpiricalEpsilon, OracleError> {
    empirical_epsilon_on(releases, fw, GridSelection::Full)
}

pub fn empirical_epsilon_on(
    releases: &[NoisyRelease],
    fw: &OracleFramework,
    selection: GridSelection,
) -> Result<EmpiricalEpsilon, OracleError> {
    let mut best = EmpiricalEpsilon { value: 0.0, witness: None };
    for (theta, model) in fw.models.iter().enumerate() {
        let k = model.num_states();
        for &node in &fw.secret_nodes {
            let mut densities = Vec::new();
            for value in 0..k {
                match joint_conditional_density(model, fw.horizon, releases, node, value) {
                    Ok(d) => densities.push((value, d)),
                    Err(OracleError::ZeroProbabilitySecret { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            if densities.len() < 2 {
                continue;
            }
            let refs: Vec<&OutputDensity> = densities.iter().map(|(_, d)| d).collect();
            let axes = evaluation_axes(&refs);
            let mut visit = |point: &[GridPoint]| {
                let logs: Vec<f64> = densities.iter().map(|(_, d)| d.log_density_at(point)).collect();
                for i in 0..densities.len() {
                    for j in (i + 1)..densities.len() {
                        if let Some(r) = abs_log_ratio(logs[i], logs[j]) {
                            if r > best.value {
                                best = EmpiricalEpsilon {
                                    value: r,
                                    witness: Some(Witness {
                                        theta,
                                        node,
                                        values: (densities[i].0, densities[j].0),
                                        point: point.to_vec(),
                                    }),
                                };
                            }
                        }
                    }
                }
            };
            match selection {
                GridSelection::Full => for_each_grid_point(&axes, &mut visit),
                GridSelection::Diagonal => {
                    let mut coords: Vec<GridPoint> = axes.iter().flatten().copied().collect();
                    coords.sort_by(|a, b| grid_order(a).total_cmp(&grid_order(b)));
                    coords.dedup();
                    for c in coords {
                        visit(&vec![c; releases.len()]);
                    }
                }
            }
        }
    }
    Ok(best)
}

fn grid_order(p: &GridPoint) -> f64 {
    match p {
        GridPoint::NegInf => f64::NEG_INFINITY,
        GridPoint::At(w) => *w,
        GridPoint::PosInf => f64::INFINITY,
    }
}

/// Recomputes `|log ratio|` at a witness.
pub fn evaluate_witness(releases: &[NoisyRelease], fw: &OracleFramework, witness: &Witness) -> Result<f64, OracleError> {
    let model = &fw.models[witness.theta];
    let da = joint_conditional_density(model, fw.horizon, releases, witness.node, witness.values.0)?;
    let db = joint_conditional_density(model, fw.horizon, releases, witness.node, witness.values.1)?;
    Ok(abs_log_ratio(da.log_density_at(&witness.point), db.log_density_at(&witness.point)).unwrap_or(0.0))
}

/// Max-divergence in both directions between a joint density and a
/// reference (typically the product of its marginals), exact on the
/// breakpoint grid.
pub fn estimate_max_divergence(joint: &OutputDensity, product: &OutputDensity) -> Result<f64, OracleError> {
    if joint.scales != product.scales {
        return Err(OracleError::SupportMismatch);
    }
    let axes = evaluation_axes(&[joint, product]);
    let mut worst = 0.0f64;
    for_each_grid_point(&axes, |point| {
        if let Some(r) = abs_log_ratio(joint.log_density_at(point), product.log_density_at(point)) {
            worst = worst.max(r);
        }
    });
    Ok(worst)
}

/// The smallest `E` bounding the max-divergence between the joint output
/// of the releases and the product of their marginals, over every belief
/// and every secret in the framework.
pub fn max_divergence_bound(releases: &[NoisyRelease], fw: &OracleFramework) -> Result<f64, OracleError> {
    let mut e = 0.0f64;
    for model in &fw.models {
        for &node in &fw.secret_nodes {
            for value in 0..model.num_states() {
                let joint = match joint_conditional_density(model, fw.horizon, releases, node, value) {
                    Ok(d) => d,
                    Err(OracleError::ZeroProbabilitySecret { .. }) => continue,
                    Err(err) => return Err(err),
                };
                let marginals: Vec<OutputDensity> = (0..joint.dim()).map(|a| joint.marginal(a)).collect();
                e = e.max(estimate_max_divergence(&joint, &OutputDensity::product(&marginals))?);
            }
        }
    }
    Ok(e)
}

/// Exact max-influence of `X_node` on an arbitrary node set by enumeration.
pub fn enumerated_influence(
    model: &ChainModel,
    horizon: usize,
    node: usize,
    targets: &[usize],
) -> Result<f64, OracleError> {
    let k = model.num_states();
    // joint[u][x_A] = P(X_node = u, X_A = x_A)
    let mut joint: Vec<BTreeMap<Vec<usize>, f64>> = vec![BTreeMap::new(); k];
    enumerate_paths(model, horizon, |x, p| {
        let key: Vec<usize> = targets.iter().map(|&t| x[t - 1]).collect();
        *joint[x[node - 1]].entry(key).or_insert(0.0) += p;
    })?;
    let mass: Vec<f64> = joint.iter().map(|m| m.values().sum()).collect();
    if targets.is_empty() {
        return Ok(0.0);
    }
    let mut keys: Vec<&Vec<usize>> = joint.iter().flat_map(|m| m.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut best = 0.0f64;
    for u in 0..k {
        for v in 0..k {
            if u == v || mass[u] <= 0.0 || mass[v] <= 0.0 {
                continue;
            }
            for key in &keys {
                let pu = joint[u].get(*key).copied().unwrap_or(0.0) / mass[u];
                let pv = joint[v].get(*key).copied().unwrap_or(0.0) / mass[v];
                if pu > 0.0 {
                    best = best.max(if pv > 0.0 { (pu / pv).ln() } else { f64::INFINITY });
                }
            }
        }
    }
    Ok(best)
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationCheck {
    pub name: String,
    #[serde(with = "crate::serde_ext")]
    pub bound: f64,
    #[serde(with = "crate::serde_ext")]
    pub achieved: f64,
    pub witness: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<VerificationCheck>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::influence::{exact_max_influence, QuiltShape};
    use crate::mechanism::count_state;
    use approx::assert_abs_diff_eq;

    fn model(q: &[f64], p: &[&[f64]]) -> ChainModel {
        ChainModel::from_parts(q.to_vec(), p.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn uniform_iid() -> ChainModel {
        model(&[0.5, 0.5], &[&[0.5, 0.5], &[0.5, 0.5]])
    }

    #[test]
    fn enumeration_covers_all_mass() {
        let m = ChainModel::random(3, 4);
        let mut total = 0.0;
        let mut count = 0;
        enumerate_paths(&m, 5, |_, p| {
            total += p;
            count += 1;
        })
        .unwrap();
        assert_eq!(count, 243);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert!(matches!(
            enumerate_paths(&ChainModel::random(4, 1), 11, |_, _| {}),
            Err(OracleError::TooLarge { .. })
        ));
    }

    #[test]
    fn conditional_density_examples() {
        let q = count_state(0, 2).unwrap();
        let single = conditional_density(&uniform_iid(), 1, &q, 1.0, 1, 0).unwrap();
        assert_eq!(single.atoms, vec![Atom { point: vec![1.0], weight: 1.0 }]);

        let two = conditional_density(&uniform_iid(), 2, &q, 1.0, 1, 0).unwrap();
        assert_eq!(two.breakpoints(0), vec![1.0, 2.0]);
        assert_abs_diff_eq!(two.atoms[0].weight, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(two.atoms[1].weight, 0.5, epsilon = 1e-15);

        let sure = model(&[1.0, 0.0], &[&[0.5, 0.5], &[0.5, 0.5]]);
        assert_eq!(
            conditional_density(&sure, 2, &q, 1.0, 1, 1),
            Err(OracleError::ZeroProbabilitySecret { node: 1, value: 1 })
        );
    }

    #[test]
    fn densities_integrate_to_one() {
        let m = ChainModel::random(2, 77);
        let q = count_state(1, 2).unwrap();
        for sigma in [0.5, 2.0] {
            let d = conditional_density(&m, 4, &q, sigma, 2, 0).unwrap();
            assert_abs_diff_eq!(d.mass(), 1.0, epsilon = 1e-12);
            // Trapezoid rule over [-60σ, 4 + 60σ]; tails are below e^-60.
            let (lo, hi) = (-60.0 * sigma, 4.0 + 60.0 * sigma);
            let n = 400_000;
            let h = (hi - lo) / n as f64;
            let mut s = 0.5 * (d.density(&[lo]) + d.density(&[hi]));
            for i in 1..n {
                s += d.density(&[lo + i as f64 * h]);
            }
            assert_abs_diff_eq!(s * h, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn noise_only_mechanism_has_zero_epsilon() {
        let fw = OracleFramework::new(3, vec![ChainModel::random(2, 9)], vec![1, 2, 3]);
        let r = empirical_epsilon(&[NoisyRelease::new(1.0, |_| 0.0)], &fw).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn identity_query_recovers_laplace_epsilon() {
        let fw = OracleFramework::new(1, vec![uniform_iid()], vec![1]);
        for eps in [0.3, 1.0, 2.5] {
            let r = empirical_epsilon(&[NoisyRelease::new(1.0 / eps, |x| x[0] as f64)], &fw).unwrap();
            assert_abs_diff_eq!(r.value, eps, epsilon = 1e-12);
        }
    }

    #[test]
    fn witness_reproduces_value() {
        let fw = OracleFramework::new(4, vec![ChainModel::random(2, 21), ChainModel::random(2, 22)], vec![1, 2, 3, 4]);
        let q = count_state(0, 2).unwrap();
        let releases = [NoisyRelease::windowed(&q, SubchainWindow::new(1, 4), 1.7)];
        let r = empirical_epsilon(&releases, &fw).unwrap();
        let again = evaluate_witness(&releases, &fw, r.witness.as_ref().unwrap()).unwrap();
        assert!((again - r.value).abs() <= 1e-9);
    }

    #[test]
    fn grid_supremum_dominates_dense_scan() {
        let m = ChainModel::random(2, 5);
        let q = count_state(1, 2).unwrap();
        let fw = OracleFramework::new(3, vec![m.clone()], vec![2]);
        let r = empirical_epsilon(&[NoisyRelease::windowed(&q, SubchainWindow::new(1, 3), 0.8)], &fw).unwrap();
        let d0 = conditional_density(&m, 3, &q, 0.8, 2, 0).unwrap();
        let d1 = conditional_density(&m, 3, &q, 0.8, 2, 1).unwrap();
        let mut scan = 0.0f64;
        for i in 0..=20_000 {
            let w = -20.0 + i as f64 * 0.002;
            scan = scan.max((d0.density(&[w]) / d1.density(&[w])).ln().abs());
        }
        assert!(scan <= r.value + 1e-12);
        assert!(r.value - scan < 1e-6, "grid {} scan {}", r.value, scan);
    }

    #[test]
    fn divergence_examples() {
        // Releases of disjoint independent coordinates are independent.
        let fw = OracleFramework::new(2, vec![uniform_iid()], vec![1, 2]);
        let a = NoisyRelease::new(1.0, |x| x[0] as f64);
        let b = NoisyRelease::new(1.0, |x| x[1] as f64);
        assert_abs_diff_eq!(max_divergence_bound(&[a, b], &fw).unwrap(), 0.0, epsilon = 1e-12);

        // Two independent-noise releases of the same query are dependent.
        let m = ChainModel::random(2, 3);
        let fw = OracleFramework::new(2, vec![m], vec![1, 2]);
        let f = |x: &[usize]| (x[0] + x[1]) as f64;
        let e = max_divergence_bound(&[NoisyRelease::new(1.0, f), NoisyRelease::new(1.0, f)], &fw).unwrap();
        assert!(e > 0.0 && e.is_finite());

        let one = OutputDensity { scales: vec![1.0], atoms: vec![Atom { point: vec![0.0], weight: 1.0 }] };
        let other = OutputDensity { scales: vec![2.0], atoms: vec![Atom { point: vec![0.0], weight: 1.0 }] };
        assert_eq!(estimate_max_divergence(&one, &other), Err(OracleError::SupportMismatch));
        assert_eq!(estimate_max_divergence(&one, &one).unwrap(), 0.0);
    }

    #[test]
    fn enumerated_influence_matches_quilt_formula() {
        for seed in 0..30 {
            let m = ChainModel::random(3, seed);
            let cases = [
                (QuiltShape::two_sided(3, 2, 1), vec![1, 4]),
                (QuiltShape::left_only(4, 1), vec![3]),
                (QuiltShape::right_only(2, 2), vec![4]),
                (QuiltShape::empty(2), vec![]),
            ];
            for (shape, nodes) in cases {
                let direct = exact_max_influence(&m, &shape).unwrap().value;
                let brute = enumerated_influence(&m, 4, shape.node, &nodes).unwrap();
                assert!((direct - brute).abs() <= 1e-9, "{shape:?}: {direct} vs {brute}");
            }
        }
    }
}
