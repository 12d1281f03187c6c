//! Laplace noise by inverse-CDF sampling from a seeded ChaCha stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Inverse CDF of the standard Laplace distribution (location 0, scale 1).
/// `u` must lie in the open interval `(0, 1)`.
pub fn laplace_inverse_cdf(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    if u < 0.5 {
        (2.0 * u).ln()
    } else {
        -(2.0 * (1.0 - u)).ln()
    }
}

/// One `Lap(1)` draw, a pure function of `seed`.
pub fn laplace_noise(seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // Stream 1 is reserved for noise so other consumers of the seed do not
    // collide with it.
    rng.set_stream(1);
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return laplace_inverse_cdf(u);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn inverse_cdf_values() {
        assert_eq!(laplace_inverse_cdf(0.5), 0.0);
        assert_abs_diff_eq!(laplace_inverse_cdf(0.25), -(2f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(laplace_inverse_cdf(0.75), 2f64.ln(), epsilon = 1e-15);
        // CDF(x) = 1 - e^{-x}/2 for x >= 0.
        let x = laplace_inverse_cdf(0.9);
        assert_abs_diff_eq!(1.0 - (-x).exp() / 2.0, 0.9, epsilon = 1e-14);
    }

    #[test]
    fn draws_follow_laplace_moments() {
        let n = 200_000u64;
        let draws: Vec<f64> = (0..n).map(laplace_noise).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let abs_mean = draws.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        // E[Z] = 0, E|Z| = 1; standard errors are about 0.003 and 0.002.
        assert!(mean.abs() < 0.015, "mean {mean}");
        assert!((abs_mean - 1.0).abs() < 0.01, "E|Z| {abs_mean}");
        assert_eq!(laplace_noise(42), laplace_noise(42));
    }
}
