//! The Markov Quilt Mechanism.
//!
//! For every belief `θ`, every node `X_i` in scope and every minimal quilt
//! of `X_i`, the mechanism scores the quilt by `|X_N| / (ε − e_θ(X_Q|X_i))`,
//! keeps the cheapest quilt per node, and releases `F(D) + σ_max·Z` with
//! `σ_max` the worst node under the worst belief and `Z ~ Lap(1)`.

mod laplace;
mod query;

use serde::{Deserialize, Serialize};

use crate::chain::{spectral, ChainError, ChainModel, StateSequence};
use crate::influence::{
    approx_max_influence, ExactInfluenceTable, InfluenceError, InfluenceMethod, QuiltKind, QuiltShape,
};

pub use laplace::{laplace_inverse_cdf, laplace_noise};
pub use query::{count_state, LipschitzQuery, QueryError};

/// Mechanism variant: exact max-influence or its spectral upper bound.
pub type Variant = InfluenceMethod;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MechanismError {
    #[error("data has length {got}, window needs {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("belief set is empty")]
    EmptyThetaSet,
    #[error("models disagree on the number of states")]
    StateCountMismatch,
    #[error("window [{start}, {end}] does not fit a chain of length {horizon}")]
    InvalidWindow { start: usize, end: usize, horizon: usize },
    #[error("node {node} outside [1, {horizon}]")]
    OutOfRange { node: usize, horizon: usize },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Influence(#[from] InfluenceError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Contiguous block of time indices `[start, end]`, 1-based and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubchainWindow {
    pub start: usize,
    pub end: usize,
}

impl SubchainWindow {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.start..=self.end).contains(&t)
    }

    pub fn overlaps(&self, other: &SubchainWindow) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// A Pufferfish framework for a chain of length `horizon`: the belief set
impl std::fmt::Display for SubchainWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// `Θ` and the window whose secrets are protected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Framework {
    pub horizon: usize,
    pub window: SubchainWindow,
    pub models: Vec<ChainModel>,
}

impl Framework {
    pub fn new(horizon: usize, window: SubchainWindow, models: Vec<ChainModel>) -> Result<Self, MechanismError> {
        let fw = Self { horizon, window, models };
        fw.validate()?;
        Ok(fw)
    }

    /// Framework whose window is the whole chain.
    pub fn full(horizon: usize, models: Vec<ChainModel>) -> Result<Self, MechanismError> {
        Self::new(horizon, SubchainWindow::new(1, horizon), models)
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        let Some(first) = self.models.first() else {
            return Err(MechanismError::EmptyThetaSet);
        };
        if self.models.iter().any(|m| m.num_states() != first.num_states()) {
            return Err(MechanismError::StateCountMismatch);
        }
        let w = self.window;
        if w.start < 1 || w.end < w.start || w.end > self.horizon {
            return Err(MechanismError::InvalidWindow { start: w.start, end: w.end, horizon: self.horizon });
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.models[0].num_states()
    }

    /// Same belief set and horizon, different window.
    pub fn with_window(&self, window: SubchainWindow) -> Result<Self, MechanismError> {
        Self::new(self.horizon, window, self.models.clone())
    }

    /// True when both frameworks describe the same chain and beliefs.
    pub fn same_beliefs(&self, other: &Framework) -> bool {
        self.horizon == other.horizon && self.models == other.models
    }

    /// The subchain `X^{[start, end]}` under `model`: same transitions,
    /// initial distribution the marginal at `start`.
    pub fn windowed_model(&self, model: &ChainModel) -> Result<ChainModel, ChainError> {
        model.with_initial(model.marginal(self.window.start)?)
    }
}

/// Which nodes the mechanism protects and over which chain quilts are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeScope {
    /// Nodes and quilts inside the release window only.
    #[default]
    Window,
    /// Every node of the full chain, as in the unwindowed mechanism.
    WholeChain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub variant: Variant,
    /// Whether the spectral bound may score one-sided quilts.
    #[serde(default = "default_true")]
    pub approx_one_sided: bool,
    #[serde(default)]
    pub scope: NodeScope,
    /// Chains longer than this restrict two-sided offsets to `max_offset`.
    #[serde(default = "default_search_threshold")]
    pub search_threshold: usize,
    #[serde(default = "default_max_offset")]
    pub max_offset: usize,
}

fn default_true() -> bool {
    true
}

fn default_search_threshold() -> usize {
    512
}

fn default_max_offset() -> usize {
    64
}

impl MechanismConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            approx_one_sided: true,
            scope: NodeScope::Window,
            search_threshold: default_search_threshold(),
            max_offset: default_max_offset(),
        }
    }
}

/// The quilt chosen for one node under one belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveQuilt {
    pub quilt: QuiltShape,
    #[serde(with = "crate::serde_ext")]
    pub influence: f64,
    pub score: f64,
}

/// Every quilt of node `i` in a chain of length `horizon`.
pub fn enumerate_quilts(horizon: usize, node: usize) -> Result<Vec<QuiltShape>, MechanismError> {
    if node < 1 || node > horizon {
        return Err(MechanismError::OutOfRange { node, horizon });
    }
    let mut out = Vec::with_capacity((node - 1) * (horizon - node) + horizon);
    for a in 1..node {
        for b in 1..=(horizon - node) {
            out.push(QuiltShape::two_sided(node, a, b));
        }
    }
    out.extend((1..node).map(|a| QuiltShape::left_only(node, a)));
    out.extend((1..=(horizon - node)).map(|b| QuiltShape::right_only(node, b)));
    out.push(QuiltShape::empty(node));
    Ok(out)
}

/// `|X_N| / (ε − e)` when `e < ε`, otherwise `+∞`.
pub fn score(shape: &QuiltShape, influence: f64, epsilon: f64, horizon: usize) -> f64 {
    if influence < epsilon {
        shape.nearby_size(horizon) as f64 / (epsilon - influence)
    } else {
        f64::INFINITY
    }
}

/// Ordering used to pick the active quilt among equal scores: fewer nearby
/// nodes, then two-sided before one-sided before empty, then smallest
/// offsets.
fn tie_key(shape: &QuiltShape, horizon: usize) -> (usize, u8, usize, usize) {
    let rank = match shape.kind() {
        QuiltKind::TwoSided => 0,
        QuiltKind::LeftOnly | QuiltKind::RightOnly => 1,
        QuiltKind::Empty => 2,
    };
    (
        shape.nearby_size(horizon),
        rank,
        shape.left.unwrap_or(0),
        shape.right.unwrap_or(0),
    )
}

struct Best {
    horizon: usize,
    current: Option<ActiveQuilt>,
}

impl Best {
    fn offer(&mut self, quilt: QuiltShape, influence: f64, score: f64) {
        let better = match &self.current {
            None => true,
            Some(cur) => match score.total_cmp(&cur.score) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => tie_key(&quilt, self.horizon) < tie_key(&cur.quilt, self.horizon),
            },
        };
        if better {
            self.current = Some(ActiveQuilt { quilt, influence, score });
        }
    }

    /// Lower bound `|X_N|/ε` on any score cannot beat the current best.
    fn hopeless(&self, nearby: usize, epsilon: f64) -> bool {
        self.current
            .as_ref()
            .is_some_and(|c| nearby as f64 / epsilon > c.score)
    }
}

/// Influence oracle for one belief over a chain of fixed length.
enum Scorer {
    Exact(ExactInfluenceTable),
    Approx { spec: crate::chain::SpectralInfo, one_sided: bool },
}

/// Active quilt of each node in `1..=horizon`.
fn active_quilts_for_model(
    model: &ChainModel,
    horizon: usize,
    epsilon: f64,
    config: &MechanismConfig,
) -> Result<Vec<ActiveQuilt>, MechanismError> {
    let scorer = match config.variant {
        InfluenceMethod::Exact => Scorer::Exact(ExactInfluenceTable::new(model, horizon)),
        InfluenceMethod::Approx => Scorer::Approx {
            spec: spectral(model)?,
            one_sided: config.approx_one_sided,
        },
    };
    let limit = if horizon > config.search_threshold {
        config.max_offset
    } else {
        usize::MAX
    };
    let mut out = Vec::with_capacity(horizon);
    for node in 1..=horizon {
        let mut best = Best { horizon, current: None };
        let offer = |best: &mut Best, shape: QuiltShape, e: f64| {
            let s = score(&shape, e, epsilon, horizon);
            best.offer(shape, e, s);
        };
        let empty = QuiltShape::empty(node);
        offer(&mut best, empty, 0.0);

        match &scorer {
            Scorer::Exact(table) => {
                let pairs = table.pairs(node);
                let back: Vec<Vec<f64>> = (1..node).map(|a| table.backward_terms(node, a)).collect();
                for b in 1..=(horizon - node) {
                    let shape = QuiltShape::right_only(node, b);
                    if !best.hopeless(shape.nearby_size(horizon), epsilon) {
                        offer(&mut best, shape, table.combine(&pairs, None, Some(table.forward_terms(b))));
                    }
                }
                for a in 1..node {
                    let shape = QuiltShape::left_only(node, a);
                    if !best.hopeless(shape.nearby_size(horizon), epsilon) {
                        offer(&mut best, shape, table.combine(&pairs, Some(&back[a - 1]), None));
                    }
                    for b in 1..=(horizon - node).min(limit) {
                        if a > limit || best.hopeless(a + b - 1, epsilon) {
                            break;
                        }
                        let e = table.combine(&pairs, Some(&back[a - 1]), Some(table.forward_terms(b)));
                        offer(&mut best, QuiltShape::two_sided(node, a, b), e);
                    }
                }
            }
            Scorer::Approx { spec, one_sided } => {
                let approx = |shape: &QuiltShape| approx_max_influence(spec, shape, *one_sided).value;
                for b in 1..=(horizon - node) {
                    let shape = QuiltShape::right_only(node, b);
                    if !best.hopeless(shape.nearby_size(horizon), epsilon) {
                        offer(&mut best, shape, approx(&shape));
                    }
                }
                for a in 1..node {
                    let shape = QuiltShape::left_only(node, a);
                    if !best.hopeless(shape.nearby_size(horizon), epsilon) {
                        offer(&mut best, shape, approx(&shape));
                    }
                    for b in 1..=(horizon - node).min(limit) {
                        if a > limit || best.hopeless(a + b - 1, epsilon) {
                            break;
                        }
                        let shape = QuiltShape::two_sided(node, a, b);
                        offer(&mut best, shape, approx(&shape));
                    }
                }
            }
        }
        out.push(best.current.expect("empty quilt always offered"));
    }
    Ok(out)
}

/// Noise scale and per-belief active quilts.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub sigma_max: f64,
    /// `active_quilts[θ][i - 1]` for nodes in scope coordinates.
    pub active_quilts: Vec<Vec<ActiveQuilt>>,
}

/// Runs the quilt search without touching data.
pub fn calibrate(framework: &Framework, epsilon: f64, config: &MechanismConfig) -> Result<Calibration, MechanismError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(MechanismError::InvalidEpsilon(epsilon));
    }
    framework.validate()?;
    let mut sigma_max = 0.0f64;
    let mut active_quilts = Vec::with_capacity(framework.models.len());
    for model in &framework.models {
        let (scoped, horizon) = match config.scope {
            NodeScope::Window => (framework.windowed_model(model)?, framework.window.len()),
            NodeScope::WholeChain => (model.clone(), framework.horizon),
        };
        let quilts = active_quilts_for_model(&scoped, horizon, epsilon, config)?;
        sigma_max = quilts.iter().map(|q| q.score).fold(sigma_max, f64::max);
        active_quilts.push(quilts);
    }
    Ok(Calibration { sigma_max, active_quilts })
}

/// Everything one mechanism invocation decided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseRecord {
    pub variant: Variant,
    pub epsilon: f64,
    pub sigma_max: f64,
    /// Released value on the rescaled (1-Lipschitz) query.
    pub output: f64,
    pub query: String,
    /// The query was divided by this before noising.
    pub lipschitz: f64,
    pub seed: u64,
    pub config: MechanismConfig,
    #[serde(flatten)]
    pub framework: Framework,
    /// `active_quilts[θ][i - 1]`, one entry per node in scope.
    pub active_quilts: Vec<Vec<ActiveQuilt>>,
}

impl ReleaseRecord {
    pub fn window(&self) -> SubchainWindow {
        self.framework.window
    }

    /// Released value on the query's original scale.
    pub fn unscaled_output(&self) -> f64 {
        self.output * self.lipschitz
    }

    /// Recomputes `σ_max` from the stored framework, budget and settings.
    pub fn replay_sigma(&self) -> Result<f64, MechanismError> {
        let mut config = self.config;
        config.variant = self.variant;
        Ok(calibrate(&self.framework, self.epsilon, &config)?.sigma_max)
    }

    /// Whether, for belief `theta`, some node's active quilt is two-sided.
    pub fn has_two_sided_active(&self, theta: usize) -> bool {
        self.active_quilts
            .get(theta)
            .is_some_and(|qs| qs.iter().any(|q| q.quilt.kind() == QuiltKind::TwoSided))
    }
}

/// Releases `F(D)/L + σ_max·Z` for the data inside `framework.window`.
pub fn release(
    data: &StateSequence,
    query: &LipschitzQuery,
    epsilon: f64,
    framework: &Framework,
    config: &MechanismConfig,
    seed: u64,
) -> Result<ReleaseRecord, MechanismError> {
    framework.validate()?;
    let expected = framework.window.len();
    if data.len() != expected {
        return Err(MechanismError::LengthMismatch { expected, got: data.len() });
    }
    let k = framework.num_states();
    if let Some(&index) = data.values().iter().find(|&&v| v >= k) {
        return Err(ChainError::BadState { index, states: k }.into());
    }
    let calibration = calibrate(framework, epsilon, config)?;
    let scaled = query.evaluate(data.values()) / query.lipschitz();
    let output = scaled + calibration.sigma_max * laplace_noise(seed);
    Ok(ReleaseRecord {
        variant: config.variant,
        epsilon,
        sigma_max: calibration.sigma_max,
        output,
        query: query.id().to_string(),
        lipschitz: query.lipschitz(),
        seed,
        config: *config,
        framework: framework.clone(),
        active_quilts: calibration.active_quilts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::influence::exact_max_influence;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn model(q: &[f64], p: &[&[f64]]) -> ChainModel {
        ChainModel::from_parts(q.to_vec(), p.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn enumeration_examples() {
        let shapes = enumerate_quilts(3, 2).unwrap();
        assert_eq!(shapes.len(), 4);
        assert!(shapes.contains(&QuiltShape::two_sided(2, 1, 1)));
        assert!(shapes.contains(&QuiltShape::left_only(2, 1)));
        assert!(shapes.contains(&QuiltShape::right_only(2, 1)));
        assert!(shapes.contains(&QuiltShape::empty(2)));

        let shapes = enumerate_quilts(5, 1).unwrap();
        assert_eq!(shapes.len(), 5);
        assert!(shapes.iter().all(|s| s.left.is_none()));
        assert!(enumerate_quilts(5, 6).is_err());
        assert!(enumerate_quilts(5, 0).is_err());
    }

    #[test]
    fn enumeration_count_closed_form() {
        for horizon in 1..=20 {
            for node in 1..=horizon {
                let shapes = enumerate_quilts(horizon, node).unwrap();
                let expected = (node - 1) * (horizon - node) + (node - 1) + (horizon - node) + 1;
                assert_eq!(shapes.len(), expected);
                assert!(shapes.contains(&QuiltShape::empty(node)));
                assert!(shapes.iter().all(|s| s.validate(horizon).is_ok()));
            }
        }
    }

    #[test]
    fn score_examples() {
        let q = QuiltShape::two_sided(5, 2, 3);
        assert_eq!(score(&q, 1.0, 1.0, 10), f64::INFINITY);
        assert_eq!(score(&q, 2.0, 1.0, 10), f64::INFINITY);
        assert_eq!(score(&QuiltShape::empty(5), 0.0, 0.5, 10), 20.0);
        assert_abs_diff_eq!(score(&q, 0.2, 1.0, 10), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn independent_chain_degenerates_to_laplace() {
        let m = model(&[0.4, 0.6], &[&[0.3, 0.7], &[0.3, 0.7]]);
        let fw = Framework::full(6, vec![m]).unwrap();
        let cal = calibrate(&fw, 1.0, &MechanismConfig::new(Variant::Exact)).unwrap();
        assert_abs_diff_eq!(cal.sigma_max, 1.0, epsilon = 1e-12);
        // Interior nodes pick the tightest two-sided quilt.
        assert_eq!(cal.active_quilts[0][2].quilt, QuiltShape::two_sided(3, 1, 1));
        // End nodes have only one-sided quilts available.
        assert_eq!(cal.active_quilts[0][0].quilt, QuiltShape::right_only(1, 1));
    }

    #[test]
    fn sigma_never_exceeds_empty_quilt() {
        let identity = model(&[0.5, 0.5], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let fw = Framework::full(5, vec![identity]).unwrap();
        let cal = calibrate(&fw, 0.5, &MechanismConfig::new(Variant::Exact)).unwrap();
        assert_abs_diff_eq!(cal.sigma_max, 10.0, epsilon = 1e-12);
        assert!(cal.active_quilts[0].iter().all(|q| q.quilt.kind() == QuiltKind::Empty));
    }

    #[test]
    fn release_errors() {
        let m = ChainModel::random(2, 1);
        let fw = Framework::full(4, vec![m.clone()]).unwrap();
        let q = count_state(0, 2).unwrap();
        let cfg = MechanismConfig::new(Variant::Exact);
        let short = StateSequence::new(vec![0, 1], 2).unwrap();
        assert_eq!(
            release(&short, &q, 1.0, &fw, &cfg, 0),
            Err(MechanismError::LengthMismatch { expected: 4, got: 2 })
        );
        let data = StateSequence::new(vec![0, 1, 1, 0], 2).unwrap();
        assert_eq!(release(&data, &q, 0.0, &fw, &cfg, 0), Err(MechanismError::InvalidEpsilon(0.0)));
        assert_eq!(release(&data, &q, f64::NAN, &fw, &cfg, 0).unwrap_err().to_string().contains("epsilon"), true);
        assert_eq!(Framework::full(4, vec![]), Err(MechanismError::EmptyThetaSet));
        assert!(matches!(
            Framework::new(4, SubchainWindow::new(3, 5), vec![m.clone()]),
            Err(MechanismError::InvalidWindow { .. })
        ));
        assert_eq!(
            Framework::full(4, vec![m, ChainModel::random(3, 1)]),
            Err(MechanismError::StateCountMismatch)
        );
        let periodic = model(&[0.5, 0.5], &[&[0.0, 1.0], &[1.0, 0.0]]);
        let fw = Framework::full(4, vec![periodic]).unwrap();
        assert!(matches!(
            release(&data, &q, 1.0, &fw, &MechanismConfig::new(Variant::Approx), 0),
            Err(MechanismError::Chain(ChainError::NotAperiodic(2)))
        ));
    }

    #[test]
    fn release_is_deterministic_and_decomposes() {
        let m = ChainModel::random(3, 8);
        let fw = Framework::full(5, vec![m]).unwrap();
        let data = StateSequence::new(vec![0, 2, 2, 1, 0], 3).unwrap();
        let q = count_state(2, 3).unwrap();
        let cfg = MechanismConfig::new(Variant::Exact);
        let a = release(&data, &q, 0.7, &fw, &cfg, 1234).unwrap();
        let b = release(&data, &q, 0.7, &fw, &cfg, 1234).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.output, 2.0 + a.sigma_max * laplace_noise(1234));
        let c = release(&data, &q, 0.7, &fw, &cfg, 1235).unwrap();
        assert_ne!(a.output, c.output);
        assert_eq!(a.replay_sigma().unwrap(), a.sigma_max);
    }

    #[test]
    fn windowed_release_uses_window_marginal() {
        let m = model(&[1.0, 0.0], &[&[0.9, 0.1], &[0.2, 0.8]]);
        let fw = Framework::new(8, SubchainWindow::new(3, 5), vec![m.clone()]).unwrap();
        let windowed = fw.windowed_model(&m).unwrap();
        assert_eq!(windowed.initial(), m.marginal(3).unwrap().as_slice());
        let data = StateSequence::new(vec![0, 0, 1], 2).unwrap();
        let rec = release(&data, &count_state(1, 2).unwrap(), 1.0, &fw, &MechanismConfig::new(Variant::Exact), 5).unwrap();
        assert_eq!(rec.active_quilts[0].len(), 3);
        assert!(rec.sigma_max <= 3.0);
    }

    #[test]
    fn record_json_shape() {
        let m = ChainModel::random(2, 3);
        let fw = Framework::full(3, vec![m]).unwrap();
        let data = StateSequence::new(vec![0, 1, 1], 2).unwrap();
        let rec = release(&data, &count_state(0, 2).unwrap(), 1.0, &fw, &MechanismConfig::new(Variant::Exact), 9).unwrap();
        let json: serde_json::Value = serde_json::to_value(&rec).unwrap();
        assert_eq!(json["window"], serde_json::json!({"start": 1, "end": 3}));
        let quilt = &json["active_quilts"][0][1]["quilt"];
        assert!(quilt.get("node").is_some() && quilt.get("left").is_some() && quilt.get("right").is_some());
        let back: ReleaseRecord = serde_json::from_value(json).unwrap();
        assert_eq!(back, rec);
    }

    /// Brute force over the enumerated quilts with no pruning.
    fn brute_force_sigma(m: &ChainModel, horizon: usize, epsilon: f64) -> f64 {
        (1..=horizon)
            .map(|i| {
                enumerate_quilts(horizon, i)
                    .unwrap()
                    .iter()
                    .map(|s| score(s, exact_max_influence(m, s).unwrap().value, epsilon, horizon))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn pruned_search_matches_brute_force(k in 1usize..4, seed in 0u64..300, horizon in 1usize..9, eps in 0.1f64..3.0) {
            let m = ChainModel::random(k, seed);
            let fw = Framework::full(horizon, vec![m.clone()]).unwrap();
            let cal = calibrate(&fw, eps, &MechanismConfig::new(Variant::Exact)).unwrap();
            let brute = brute_force_sigma(&m, horizon, eps);
            prop_assert!((cal.sigma_max - brute).abs() <= 1e-9 * brute.max(1.0));
        }

        #[test]
        fn sigma_nonincreasing_in_epsilon(k in 2usize..4, seed in 0u64..300, horizon in 1usize..10) {
            let fw = Framework::full(horizon, vec![ChainModel::random(k, seed)]).unwrap();
            for variant in [Variant::Exact, Variant::Approx] {
                let cfg = MechanismConfig::new(variant);
                let mut last = f64::INFINITY;
                for eps in [0.1, 0.25, 0.5, 1.0, 2.0, 4.0] {
                    let s = calibrate(&fw, eps, &cfg).unwrap().sigma_max;
                    prop_assert!(s <= last + 1e-12);
                    prop_assert!(s <= horizon as f64 / eps + 1e-12);
                    last = s;
                }
            }
        }

        #[test]
        fn approx_noise_dominates_exact(k in 2usize..4, seed in 0u64..300, horizon in 1usize..12, eps in 0.2f64..4.0) {
            let fw = Framework::full(horizon, vec![ChainModel::random(k, seed)]).unwrap();
            let exact = calibrate(&fw, eps, &MechanismConfig::new(Variant::Exact)).unwrap().sigma_max;
            let approx = calibrate(&fw, eps, &MechanismConfig::new(Variant::Approx)).unwrap().sigma_max;
            prop_assert!(approx >= exact - 1e-12);
        }
    }
}
