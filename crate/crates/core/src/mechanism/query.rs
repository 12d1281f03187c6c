use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("state {state} out of range for {states} states")]
    BadState { state: usize, states: usize },
    #[error("Lipschitz constant must be positive and finite, got {0}")]
    BadConstant(f64),
    #[error("query {id} moved by {change} after one flip, above its constant {constant}")]
    NotLipschitz { id: String, change: f64, constant: f64 },
}

type Eval = dyn Fn(&[usize]) -> f64 + Send + Sync;

/// A scalar query on state sequences with a declared Lipschitz constant
/// under Hamming distance. The mechanism releases `evaluate(x) / constant`.
#[derive(Clone)]
pub struct LipschitzQuery {
    id: String,
    lipschitz: f64,
    eval: Arc<Eval>,
}

impl fmt::Debug for LipschitzQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzQuery")
            .field("id", &self.id)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl LipschitzQuery {
    pub fn new(
        id: impl Into<String>,
        lipschitz: f64,
        eval: impl Fn(&[usize]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, QueryError> {
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(QueryError::BadConstant(lipschitz));
        }
        Ok(Self {
            id: id.into(),
            lipschitz,
            eval: Arc::new(eval),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn evaluate(&self, x: &[usize]) -> f64 {
        (self.eval)(x)
    }

    /// The query divided by its constant, as the mechanism sees it.
    pub fn scaled(&self, x: &[usize]) -> f64 {
        self.evaluate(x) / self.lipschitz
    }

    /// Randomized spot check: flips one coordinate of random sequences and
    /// verifies the value moves by at most the declared constant.
    pub fn spot_check(&self, num_states: usize, len: usize, trials: usize, seed: u64) -> Result<(), QueryError> {
        if num_states < 2 || len == 0 {
            return Ok(());
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for _ in 0..trials {
            let mut x: Vec<usize> = (0..len).map(|_| rng.gen_range(0..num_states)).collect();
            let before = self.evaluate(&x);
            let t = rng.gen_range(0..len);
            x[t] = (x[t] + rng.gen_range(1..num_states)) % num_states;
            let change = (self.evaluate(&x) - before).abs();
            if change > self.lipschitz * (1.0 + 1e-12) {
                return Err(QueryError::NotLipschitz {
                    id: self.id.clone(),
                    change,
                    constant: self.lipschitz,
                });
            }
        }
        Ok(())
    }
}

/// `#{t : x_t = state}`, 1-Lipschitz.
pub fn count_state(state: usize, num_states: usize) -> Result<LipschitzQuery, QueryError> {
    if state >= num_states {
        return Err(QueryError::BadState { state, states: num_states });
    }
    LipschitzQuery::new(format!("count:{state}"), 1.0, move |x| {
        x.iter().filter(|&&v| v == state).count() as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_examples() {
        let q = count_state(0, 2).unwrap();
        assert_eq!(q.evaluate(&[0, 1, 0, 1]), 2.0);
        assert_eq!(q.lipschitz(), 1.0);
        assert_eq!(count_state(1, 2).unwrap().evaluate(&[1; 7]), 7.0);
        assert_eq!(count_state(2, 2).unwrap_err(), QueryError::BadState { state: 2, states: 2 });
        q.spot_check(3, 10, 500, 1).unwrap();
    }

    #[test]
    fn spot_check_catches_violation() {
        let doubled = LipschitzQuery::new("double", 1.0, |x| 2.0 * x.iter().filter(|&&v| v == 0).count() as f64).unwrap();
        assert!(matches!(doubled.spot_check(2, 5, 200, 3), Err(QueryError::NotLipschitz { .. })));
        let rescaled = LipschitzQuery::new("double", 2.0, |x| 2.0 * x.iter().filter(|&&v| v == 0).count() as f64).unwrap();
        rescaled.spot_check(2, 5, 200, 3).unwrap();
        assert_eq!(rescaled.scaled(&[0, 0, 1]), 2.0);
        assert!(LipschitzQuery::new("bad", 0.0, |_| 0.0).is_err());
    }
}
