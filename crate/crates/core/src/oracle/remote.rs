//! The per-node bound on the output joint with the quilt and remote nodes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{abs_log_ratio, enumerate_paths, evaluation_axes, for_each_grid_point, AtomAccumulator, OracleError};
use crate::chain::ChainModel;
use crate::mechanism::{calibrate, Framework, LipschitzQuery, MechanismConfig, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteBoundReport {
    pub epsilon: f64,
    pub sigma_max: f64,
    /// Largest `|log ratio|` seen over nodes, realizations and outputs.
    #[serde(with = "crate::serde_ext")]
    pub worst: f64,
    /// Node attaining `worst`.
    pub node: Option<usize>,
    pub pass: bool,
}

/// For each node `i` with active quilt `X_Q` and remote nodes `X_R`, checks
/// that `p(F(X) + σ_max·Z = w, X_{Q∪R} = x | X_i = a) ≤ e^ε · p(…| X_i = b)`
/// at every exact evaluation point, where `σ_max` comes from the exact
/// mechanism with budget `calibrate_epsilon` and the check uses `epsilon`.
pub fn check_joint_remote_bound(
    model: &ChainModel,
    horizon: usize,
    query: &LipschitzQuery,
    calibrate_epsilon: f64,
    epsilon: f64,
) -> Result<RemoteBoundReport, OracleError> {
    let fw = Framework::full(horizon, vec![model.clone()])?;
    let cal = calibrate(&fw, calibrate_epsilon, &MechanismConfig::new(Variant::Exact))?;
    let sigma = cal.sigma_max;
    let k = model.num_states();

    let mut paths = Vec::new();
    enumerate_paths(model, horizon, |x, p| paths.push((x.to_vec(), p)))?;

    let mut worst = 0.0f64;
    let mut worst_node = None;
    for (idx, active) in cal.active_quilts[0].iter().enumerate() {
        let node = idx + 1;
        let (first, last) = active.quilt.nearby_range(horizon);
        let mut marginal = vec![0.0; k];
        // (value, realization outside the nearby set) -> sub-density atoms
        let mut groups: BTreeMap<Vec<usize>, Vec<AtomAccumulator>> = BTreeMap::new();
        for (x, p) in &paths {
            marginal[x[node - 1]] += p;
            let outside: Vec<usize> = (1..=horizon).filter(|t| *t < first || *t > last).map(|t| x[t - 1]).collect();
            let accs = groups.entry(outside).or_insert_with(|| (0..k).map(|_| AtomAccumulator::default()).collect());
            accs[x[node - 1]].add(vec![query.scaled(x)], *p);
        }
        let values: Vec<usize> = (0..k).filter(|&v| marginal[v] > 0.0).collect();
        for accs in groups.into_values() {
            let densities: Vec<_> = accs
                .into_iter()
                .enumerate()
                .filter(|(v, _)| marginal[*v] > 0.0)
                .map(|(v, acc)| acc.finish(vec![sigma], marginal[v]))
                .collect();
            let refs: Vec<_> = densities.iter().collect();
            let axes = evaluation_axes(&refs);
            for_each_grid_point(&axes, |point| {
                let logs: Vec<f64> = densities.iter().map(|d| d.log_density_at(point)).collect();
                for i in 0..values.len() {
                    for j in (i + 1)..values.len() {
                        if let Some(r) = abs_log_ratio(logs[i], logs[j]) {
                            if r > worst {
                                worst = r;
                                worst_node = Some(node);
                            }
                        }
                    }
                }
            });
        }
    }
    Ok(RemoteBoundReport {
        epsilon,
        sigma_max: sigma,
        worst,
        node: worst_node,
        pass: worst <= epsilon + 1e-9,
    })
}
