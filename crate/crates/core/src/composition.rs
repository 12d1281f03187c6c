//! Privacy accounting for several releases on the same chain.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::influence::{influence_over_set, InfluenceError, InfluenceMethod, QuiltShape};
use crate::mechanism::{ReleaseRecord, SubchainWindow, Variant};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompositionError {
    #[error("no records to compose")]
    EmptyInput,
    #[error("records use different chain lengths or belief sets")]
    MixedFrameworks,
    #[error("records cover different windows {0} and {1}; sequential rules need the same window")]
    WindowMismatch(SubchainWindow, SubchainWindow),
    #[error("active quilts differ between records at belief {theta}, node {node}")]
    QuiltMismatch { theta: usize, node: usize },
    #[error("max-divergence bound must be non-negative, got {0}")]
    NegativeE(f64),
    #[error("windows {0} and {1} overlap; parallel rules need disjoint windows")]
    OverlappingWindows(SubchainWindow, SubchainWindow),
    #[error("windows {0} and {1} partially overlap; no rule covers this. Release over identical or disjoint windows, or supply a max-divergence bound for the sequential rule")]
    PartialOverlap(SubchainWindow, SubchainWindow),
    #[error("record {0} is not an approximate-variant release")]
    NotApproxVariant(usize),
    #[error(transparent)]
    Influence(#[from] InfluenceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `K · max ε` under fixed quilts.
    Thm1,
    /// Disjoint windows, correlation through the boundary nodes.
    Thm2,
    /// Disjoint, far-apart windows of approximate releases: `max ε`.
    Thm3,
    /// `ε_A + ε_B + 2E` for any mechanisms.
    Thm5,
    /// `Σ ε` for quilt-mechanism releases.
    Thm6,
    /// Left-to-right application of the two-window rules to more than two
    /// windows. Not a theorem.
    PairwiseParallel,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Thm1 => "thm1",
            Rule::Thm2 => "thm2",
            Rule::Thm3 => "thm3",
            Rule::Thm5 => "thm5",
            Rule::Thm6 => "thm6",
            Rule::PairwiseParallel => "pairwise_parallel",
        })
    }
}

/// A precondition the accountant evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub evidence: String,
}

impl Check {
    fn new(name: &str, passed: bool, evidence: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, evidence: evidence.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    #[serde(with = "crate::serde_ext")]
    pub epsilon: f64,
    pub rule: Rule,
    pub checks: Vec<Check>,
    /// Identifiers of the composed records.
    pub inputs: Vec<String>,
    /// False for heuristic rules.
    pub theorem_backed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CompositionReport {
    fn new(epsilon: f64, rule: Rule, count: usize) -> Self {
        let mut notes = Vec::new();
        if epsilon.is_infinite() {
            notes.push("no finite guarantee".to_string());
        }
        Self {
            epsilon,
            rule,
            checks: Vec::new(),
            inputs: (0..count).map(|i| format!("#{i}")).collect(),
            theorem_backed: rule != Rule::PairwiseParallel,
            notes,
        }
    }

    /// Replaces the positional input labels.
    pub fn with_inputs(mut self, ids: impl IntoIterator<Item = impl ToString>) -> Self {
        self.inputs = ids.into_iter().map(|s| s.to_string()).collect();
        self
    }
}

impl fmt::Display for CompositionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "epsilon: {}", self.epsilon)?;
        write!(f, "rule: {}", self.rule)?;
        if !self.theorem_backed {
            write!(f, " (heuristic, not a theorem)")?;
        }
        writeln!(f)?;
        writeln!(f, "inputs: {}", self.inputs.join(", "))?;
        for c in &self.checks {
            writeln!(f, "  [{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.evidence)?;
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}

fn same_framework(records: &[ReleaseRecord]) -> Result<(), CompositionError> {
    let first = records.first().ok_or(CompositionError::EmptyInput)?;
    if records.iter().any(|r| !r.framework.same_beliefs(&first.framework)) {
        return Err(CompositionError::MixedFrameworks);
    }
    Ok(())
}

fn same_window(records: &[ReleaseRecord]) -> Result<(), CompositionError> {
    same_framework(records)?;
    let w = records[0].window();
    match records.iter().find(|r| r.window() != w) {
        Some(r) => Err(CompositionError::WindowMismatch(w, r.window())),
        None => Ok(()),
    }
}

/// `Σ ε_k` for quilt-mechanism releases over one framework and window.
pub fn compose_sequential_mqm(records: &[ReleaseRecord]) -> Result<CompositionReport, CompositionError> {
    same_window(records)?;
    let eps: f64 = records.iter().map(|r| r.epsilon).sum();
    let mut report = CompositionReport::new(eps, Rule::Thm6, records.len());
    report.checks.push(Check::new(
        "same framework and window",
        true,
        format!("window {}", records[0].window()),
    ));
    Ok(report)
}

/// `K · max ε_k`, valid only when every record chose the same quilts.
pub fn compose_sequential_legacy(records: &[ReleaseRecord]) -> Result<CompositionReport, CompositionError> {
    same_window(records)?;
    let reference = &records[0].active_quilts;
    for r in &records[1..] {
        for (theta, (a, b)) in reference.iter().zip(&r.active_quilts).enumerate() {
            if let Some(idx) = a.iter().zip(b).position(|(x, y)| x.quilt != y.quilt) {
                return Err(CompositionError::QuiltMismatch { theta, node: idx + 1 });
            }
        }
    }
    let max = records.iter().map(|r| r.epsilon).fold(0.0, f64::max);
    let mut report = CompositionReport::new(records.len() as f64 * max, Rule::Thm1, records.len());
    report.checks.push(Check::new("same framework and window", true, ""));
    report.checks.push(Check::new("same quilts", true, "active quilts identical for every belief and node"));
    Ok(report)
}

/// `ε_A + ε_B + 2E` where `E` bounds the max-divergence between the joint
/// output and the product of its marginals.
pub fn compose_sequential_general(eps_a: f64, eps_b: f64, e: f64) -> Result<CompositionReport, CompositionError> {
    if e.is_nan() || e < 0.0 {
        return Err(CompositionError::NegativeE(e));
    }
    let mut report = CompositionReport::new(eps_a + eps_b + 2.0 * e, Rule::Thm5, 2);
    report.checks.push(Check::new("max-divergence bound", true, format!("E = {e}")));
    Ok(report)
}

/// The two-window bound given the boundary influences.
///
/// `forward` is the influence of `X_{T2}` on `X_{T3}` and `backward` that
/// of `X_{T3}` on `X_{T2}`, for windows `[T1, T2]` before `[T3, T4]`.
pub fn parallel_bound(eps_a: f64, eps_b: f64, forward: f64, backward: f64) -> f64 {
    let sum = eps_a + eps_b;
    sum.min(eps_a + forward).max(sum.min(eps_b + backward))
}

/// Influences across the gap between two ordered disjoint windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryInfluence {
    #[serde(with = "crate::serde_ext")]
    pub forward: f64,
    #[serde(with = "crate::serde_ext")]
    pub backward: f64,
}

pub fn boundary_influence(
    record: &ReleaseRecord,
    left_end: usize,
    right_start: usize,
    method: InfluenceMethod,
) -> Result<BoundaryInfluence, CompositionError> {
    let models = &record.framework.models;
    let gap = right_start - left_end;
    let forward = influence_over_set(models, &QuiltShape::right_only(left_end, gap), method)?.value;
    let backward = influence_over_set(models, &QuiltShape::left_only(right_start, gap), method)?.value;
    Ok(BoundaryInfluence { forward, backward })
}

fn ordered<'a>(a: &'a ReleaseRecord, b: &'a ReleaseRecord) -> Result<(&'a ReleaseRecord, &'a ReleaseRecord), CompositionError> {
    if !a.framework.same_beliefs(&b.framework) {
        return Err(CompositionError::MixedFrameworks);
    }
    let (wa, wb) = (a.window(), b.window());
    if wa.overlaps(&wb) {
        return Err(CompositionError::OverlappingWindows(wa, wb));
    }
    Ok(if wa.end < wb.start { (a, b) } else { (b, a) })
}

fn uncovered_note(a: SubchainWindow, b: SubchainWindow, horizon: usize) -> Option<String> {
    let covered = a.len() + b.len();
    (covered < horizon).then(|| {
        format!("nodes outside {a} and {b} are not protected by this guarantee")
    })
}

/// Two releases on disjoint windows, bounded through the influence
/// between the windows' facing endpoints.
pub fn compose_parallel_general(
    a: &ReleaseRecord,
    b: &ReleaseRecord,
    method: InfluenceMethod,
) -> Result<CompositionReport, CompositionError> {
    let (first, second) = ordered(a, b)?;
    let (wa, wb) = (first.window(), second.window());
    let infl = boundary_influence(first, wa.end, wb.start, method)?;
    let eps = parallel_bound(first.epsilon, second.epsilon, infl.forward, infl.backward);
    let mut report = CompositionReport::new(eps, Rule::Thm2, 2);
    report.checks.push(Check::new(
        "disjoint windows",
        true,
        format!("{wa} before {wb}"),
    ));
    report.checks.push(Check::new(
        "boundary influence",
        true,
        format!(
            "forward e(X_{t3} | X_{t2}) = {}, backward e(X_{t2} | X_{t3}) = {} ({})",
            infl.forward,
            infl.backward,
            match method {
                InfluenceMethod::Exact => "exact",
                InfluenceMethod::Approx => "spectral bound",
            },
            t2 = wa.end,
            t3 = wb.start
        ),
    ));
    report.notes.extend(uncovered_note(wa, wb, first.framework.horizon));
    Ok(report)
}

/// `max(ε_A, ε_B)` for approximate releases on far-apart windows that each
/// have a two-sided active quilt under every belief; otherwise the
/// two-window bound with exact influences.
pub fn compose_parallel_mqm_approx(a: &ReleaseRecord, b: &ReleaseRecord) -> Result<CompositionReport, CompositionError> {
    for (i, r) in [a, b].into_iter().enumerate() {
        if r.variant != Variant::Approx {
            return Err(CompositionError::NotApproxVariant(i));
        }
    }
    let (first, second) = ordered(a, b)?;
    let (wa, wb) = (first.window(), second.window());
    let thetas = first.framework.models.len();
    let one_sided: Vec<String> = [("A", first), ("B", second)]
        .iter()
        .flat_map(|(name, r)| {
            (0..thetas)
                .filter(|&t| !r.has_two_sided_active(t))
                .map(move |t| format!("window {name} belief {t}"))
        })
        .collect();
    let two_sided = Check::new(
        "two-sided active quilt",
        one_sided.is_empty(),
        if one_sided.is_empty() {
            "every belief has a node with a two-sided active quilt in each window".to_string()
        } else {
            format!("no two-sided active quilt for {}", one_sided.join(", "))
        },
    );
    let gap = wb.start - wa.end;
    let needed = (wa.end - wa.start).max(wb.end - wb.start);
    let far = Check::new("far apart", gap >= needed, format!("T3 - T2 = {gap}, need >= {needed}"));

    let mut report = if two_sided.passed && far.passed {
        let mut r = CompositionReport::new(first.epsilon.max(second.epsilon), Rule::Thm3, 2);
        r.notes.extend(uncovered_note(wa, wb, first.framework.horizon));
        r
    } else {
        let mut r = compose_parallel_general(first, second, InfluenceMethod::Exact)?;
        r.notes.push("conditions for max(epsilon) failed; fell back to thm2".to_string());
        r
    };
    report.checks.insert(0, far);
    report.checks.insert(0, two_sided);
    Ok(report)
}

/// Disjoint windows composed left to right with the two-window rules.
/// Labeled as a heuristic: the theorems cover two windows only.
pub fn compose_parallel_pairwise(records: &[ReleaseRecord]) -> Result<CompositionReport, CompositionError> {
    same_framework(records)?;
    let mut order: Vec<&ReleaseRecord> = records.iter().collect();
    order.sort_by_key(|r| r.window().start);
    for pair in order.windows(2) {
        if pair[0].window().overlaps(&pair[1].window()) {
            return Err(CompositionError::OverlappingWindows(pair[0].window(), pair[1].window()));
        }
    }
    let mut eps = order[0].epsilon;
    let mut checks = Vec::new();
    for pair in order.windows(2) {
        let (wa, wb) = (pair[0].window(), pair[1].window());
        let infl = boundary_influence(pair[0], wa.end, wb.start, InfluenceMethod::Exact)?;
        eps = parallel_bound(eps, pair[1].epsilon, infl.forward, infl.backward);
        checks.push(Check::new(
            "disjoint windows",
            true,
            format!("{wa} then {wb}: forward {}, backward {}", infl.forward, infl.backward),
        ));
    }
    let mut report = CompositionReport::new(eps, Rule::PairwiseParallel, records.len());
    report.checks = checks;
    report
        .notes
        .push("more than two disjoint windows: composed pairwise left to right; this extends the two-window theorem and is not itself proven".to_string());
    Ok(report)
}

/// Picks the rule from the windows: identical windows compose by summing
/// budgets, two disjoint windows use the far-apart rule when it applies
/// and the boundary-influence rule otherwise.
pub fn compose_auto(records: &[ReleaseRecord]) -> Result<CompositionReport, CompositionError> {
    same_framework(records)?;
    let w = records[0].window();
    if records.iter().all(|r| r.window() == w) {
        return compose_sequential_mqm(records);
    }
    for (i, a) in records.iter().enumerate() {
        for b in &records[i + 1..] {
            let (wa, wb) = (a.window(), b.window());
            if wa != wb && wa.overlaps(&wb) {
                return Err(CompositionError::PartialOverlap(wa, wb));
            }
        }
    }
    let distinct = {
        let mut ws: Vec<_> = records.iter().map(|r| r.window()).collect();
        ws.sort_by_key(|w| w.start);
        ws.dedup();
        ws.len()
    };
    if records.len() == 2 && distinct == 2 {
        let (a, b) = (&records[0], &records[1]);
        if a.variant == Variant::Approx && b.variant == Variant::Approx {
            return compose_parallel_mqm_approx(a, b);
        }
        return compose_parallel_general(a, b, InfluenceMethod::Exact);
    }
    if distinct == records.len() {
        return compose_parallel_pairwise(records);
    }
    // Several releases per window: sum within windows, then combine windows.
    let mut groups: Vec<(SubchainWindow, f64, ReleaseRecord)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|g| g.0 == r.window()) {
            Some(g) => g.1 += r.epsilon,
            None => groups.push((r.window(), r.epsilon, r.clone())),
        }
    }
    let merged: Vec<ReleaseRecord> = groups
        .into_iter()
        .map(|(_, eps, mut r)| {
            r.epsilon = eps;
            r
        })
        .collect();
    let mut report = compose_parallel_pairwise(&merged)?;
    report.inputs = (0..records.len()).map(|i| format!("#{i}")).collect();
    report.notes.push("budgets of releases sharing a window were summed first".to_string());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainModel, StateSequence};
    use crate::mechanism::{count_state, release, Framework, MechanismConfig};

    fn record(model: &ChainModel, horizon: usize, window: (usize, usize), eps: f64, variant: Variant) -> ReleaseRecord {
        let fw = Framework::new(horizon, SubchainWindow::new(window.0, window.1), vec![model.clone()]).unwrap();
        let data = StateSequence::new(vec![0; fw.window.len()], 2).unwrap();
        release(&data, &count_state(0, 2).unwrap(), eps, &fw, &MechanismConfig::new(variant), 7).unwrap()
    }

    fn iid() -> ChainModel {
        ChainModel::from_parts(vec![0.5, 0.5], vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap()
    }

    #[test]
    fn sequential_examples() {
        let m = iid();
        let rs: Vec<_> = [0.3, 0.5, 0.2].iter().map(|&e| record(&m, 4, (1, 4), e, Variant::Exact)).collect();
        assert!((compose_sequential_mqm(&rs).unwrap().epsilon - 1.0).abs() < 1e-12);
        assert!((compose_sequential_legacy(&rs).unwrap().epsilon - 1.5).abs() < 1e-12);
        assert_eq!(compose_sequential_mqm(&rs[..1]).unwrap().epsilon, 0.3);
        assert_eq!(compose_sequential_mqm(&[]), Err(CompositionError::EmptyInput));

        let half: Vec<_> = (0..2).map(|_| record(&m, 4, (1, 4), 0.5, Variant::Exact)).collect();
        assert_eq!(compose_sequential_legacy(&half).unwrap().epsilon, 1.0);
        assert_eq!(compose_sequential_mqm(&half).unwrap().epsilon, 1.0);
    }

    #[test]
    fn different_quilts_still_sum() {
        let m = ChainModel::from_parts(vec![0.5, 0.5], vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let a = record(&m, 4, (1, 4), 0.3, Variant::Exact);
        let b = record(&m, 4, (1, 4), 5.0, Variant::Exact);
        assert_ne!(a.active_quilts, b.active_quilts);
        assert!(matches!(compose_sequential_legacy(&[a.clone(), b.clone()]), Err(CompositionError::QuiltMismatch { .. })));
        assert!((compose_sequential_mqm(&[a, b]).unwrap().epsilon - 5.3).abs() < 1e-12);
    }

    #[test]
    fn mixed_inputs_rejected() {
        let a = record(&iid(), 4, (1, 4), 0.3, Variant::Exact);
        let b = record(&ChainModel::random(2, 1), 4, (1, 4), 0.3, Variant::Exact);
        assert_eq!(compose_sequential_mqm(&[a.clone(), b]), Err(CompositionError::MixedFrameworks));
        let c = record(&iid(), 4, (1, 2), 0.3, Variant::Exact);
        assert!(matches!(compose_sequential_mqm(&[a, c]), Err(CompositionError::WindowMismatch(..))));
    }

    #[test]
    fn general_sequential_examples() {
        assert!((compose_sequential_general(0.5, 0.3, 0.0).unwrap().epsilon - 0.8).abs() < 1e-12);
        assert_eq!(compose_sequential_general(0.5, 0.5, 0.25).unwrap().epsilon, 1.5);
        let inf = compose_sequential_general(0.5, 0.5, f64::INFINITY).unwrap();
        assert!(inf.epsilon.is_infinite());
        assert_eq!(inf.notes, vec!["no finite guarantee".to_string()]);
        assert_eq!(compose_sequential_general(0.5, 0.5, -0.1), Err(CompositionError::NegativeE(-0.1)));
    }

    #[test]
    fn parallel_bound_examples() {
        assert_eq!(parallel_bound(0.5, 0.7, 0.0, 0.0), 0.7);
        assert_eq!(parallel_bound(0.5, 0.7, f64::INFINITY, f64::INFINITY), 1.2);
        assert!((parallel_bound(0.5, 0.5, 0.2, 0.1) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn parallel_on_independent_chain() {
        let m = iid();
        let a = record(&m, 6, (1, 2), 0.5, Variant::Exact);
        let b = record(&m, 6, (5, 6), 0.7, Variant::Exact);
        let r = compose_parallel_general(&a, &b, InfluenceMethod::Exact).unwrap();
        assert!((r.epsilon - 0.7).abs() < 1e-12);
        assert_eq!(r.rule, Rule::Thm2);
        assert_eq!(r.notes.len(), 1);
        // Order of arguments does not matter.
        assert_eq!(compose_parallel_general(&b, &a, InfluenceMethod::Exact).unwrap().epsilon, r.epsilon);
        let c = record(&m, 6, (2, 5), 0.5, Variant::Exact);
        assert!(matches!(compose_parallel_general(&a, &c, InfluenceMethod::Exact), Err(CompositionError::OverlappingWindows(..))));
    }

    #[test]
    fn deterministic_coupling_sums() {
        // Near-deterministic flips: the endpoints nearly determine each other.
        let m = ChainModel::from_parts(vec![0.5, 0.5], vec![vec![1e-9, 1.0 - 1e-9], vec![1.0 - 1e-9, 1e-9]]).unwrap();
        let a = record(&m, 4, (1, 1), 0.5, Variant::Exact);
        let b = record(&m, 4, (2, 2), 0.7, Variant::Exact);
        let r = compose_parallel_general(&a, &b, InfluenceMethod::Exact).unwrap();
        assert!((r.epsilon - 1.2).abs() < 1e-12);
    }

    #[test]
    fn far_apart_approx_releases() {
        // Gap 1 and π_min = 1/2: offsets of 2 pass the spectral threshold,
        // and large budgets make the two-sided quilts cheaper than empty.
        let m = ChainModel::from_parts(vec![0.5, 0.5], vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let a = record(&m, 24, (1, 8), 10.0, Variant::Approx);
        let b = record(&m, 24, (17, 24), 12.0, Variant::Approx);
        assert!(a.has_two_sided_active(0) && b.has_two_sided_active(0));
        let r = compose_parallel_mqm_approx(&a, &b).unwrap();
        assert_eq!(r.rule, Rule::Thm3);
        assert_eq!(r.epsilon, 12.0);
        assert!(r.checks.iter().all(|c| c.passed));
        assert_eq!(compose_auto(&[a.clone(), b.clone()]).unwrap().rule, Rule::Thm3);

        // Windows too close.
        let c = record(&m, 24, (10, 17), 12.0, Variant::Approx);
        let r = compose_parallel_mqm_approx(&a, &c).unwrap();
        assert_eq!(r.rule, Rule::Thm2);
        let far = r.checks.iter().find(|c| c.name == "far apart").unwrap();
        assert!(!far.passed);

        let exact = record(&m, 24, (17, 24), 12.0, Variant::Exact);
        assert_eq!(compose_parallel_mqm_approx(&a, &exact), Err(CompositionError::NotApproxVariant(1)));
    }

    #[test]
    fn one_sided_window_falls_back() {
        let m = ChainModel::from_parts(vec![0.5, 0.5], vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        // A single-node window only admits the empty quilt.
        let a = record(&m, 24, (1, 1), 10.0, Variant::Approx);
        let b = record(&m, 24, (17, 24), 12.0, Variant::Approx);
        let r = compose_parallel_mqm_approx(&a, &b).unwrap();
        assert_eq!(r.rule, Rule::Thm2);
        assert!(!r.checks[0].passed);
    }

    #[test]
    fn auto_dispatch() {
        let m = iid();
        let a = record(&m, 6, (1, 6), 0.3, Variant::Exact);
        let b = record(&m, 6, (1, 6), 0.5, Variant::Exact);
        let r = compose_auto(&[a, b]).unwrap();
        assert_eq!(r.rule, Rule::Thm6);
        assert!((r.epsilon - 0.8).abs() < 1e-12);

        let x = record(&m, 6, (1, 2), 0.3, Variant::Exact);
        let y = record(&m, 6, (3, 4), 0.5, Variant::Exact);
        let z = record(&m, 6, (5, 6), 0.6, Variant::Exact);
        assert_eq!(compose_auto(&[x.clone(), y.clone()]).unwrap().rule, Rule::Thm2);
        let r = compose_auto(&[x.clone(), y.clone(), z.clone()]).unwrap();
        assert_eq!(r.rule, Rule::PairwiseParallel);
        assert!(!r.theorem_backed);
        assert!((r.epsilon - 0.6).abs() < 1e-12);

        let r = compose_auto(&[x.clone(), x.clone(), z]).unwrap();
        assert!((r.epsilon - 0.6).abs() < 1e-12);

        let w = record(&m, 6, (2, 3), 0.5, Variant::Exact);
        assert!(matches!(compose_auto(&[x, w]), Err(CompositionError::PartialOverlap(..))));
    }

    proptest::proptest! {
        #[test]
        fn parallel_bound_symmetry_and_floor(
            a in 0.01f64..5.0, b in 0.01f64..5.0, f in 0.0f64..5.0, k in 0.0f64..5.0,
        ) {
            let v = parallel_bound(a, b, f, k);
            proptest::prop_assert_eq!(v, parallel_bound(b, a, k, f));
            proptest::prop_assert!(v >= a.max(b));
            proptest::prop_assert!(v <= a + b);
        }
    }

    #[test]
    fn report_json_shape() {
        let r = compose_sequential_general(0.5, 0.5, f64::INFINITY).unwrap().with_inputs([3, 4]);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["epsilon"], "inf");
        assert_eq!(v["rule"], "thm5");
        assert_eq!(v["inputs"], serde_json::json!(["3", "4"]));
        assert_eq!(v["checks"][0]["passed"], true);
        let back: CompositionReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
