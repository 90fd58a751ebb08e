//! Upper bounds on the global communication barrier between a target and
//! its moment-matched Gaussian reference,
//! `Λ ≤ √(½ (E₁[g] + E_φ[g]))` with `g ≥ |log π₁ − log q_φ|`.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::model::log_add_exp;
use crate::rng::{purpose, SeedSequence};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundResult {
    pub bound_value: f64,
    pub inputs: Vec<(String, f64)>,
}

/// Bound for a bivariate standard normal with correlation `rho` against the
/// diagonal Gaussian with matching marginals.
pub fn corr_gaussian_bound(rho: f64) -> Result<BoundResult> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho must lie in [0, 1), got {rho}")));
    }
    let v = -0.5 * (1.0 - rho * rho).ln() + rho / (1.0 - rho);
    Ok(BoundResult {
        bound_value: v.max(0.0).sqrt(),
        inputs: vec![("rho".into(), rho)],
    })
}

/// Monte Carlo bound for `½ N(−μ, 1) + ½ N(μ, 1)` against its moment match
/// `N(0, μ² + 1)`.
pub fn mixture_bound_mc(mu: f64, n_samples: u64, seq: &SeedSequence) -> Result<BoundResult> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    if n_samples < 100_000 {
        return Err(Error::Domain(format!("need at least 1e5 samples, got {n_samples}")));
    }
    let var_q = mu * mu + 1.0;
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI).ln();
    let log_target = |x: f64| {
        let a = -0.5 * (x + mu) * (x + mu);
        let b = -0.5 * (x - mu) * (x - mu);
        log_norm + log_add_exp(a, b) - std::f64::consts::LN_2
    };
    let log_q = |x: f64| log_norm - 0.5 * var_q.ln() - 0.5 * x * x / var_q;
    let g = |x: f64| (log_target(x) - log_q(x)).abs();

    let mut rng = seq.derive(&[purpose::ANALYSIS]).rng();
    let (mut e_target, mut e_ref) = (0.0, 0.0);
    for i in 0..n_samples {
        let z: f64 = StandardNormal.sample(&mut rng);
        let x_target = if i % 2 == 0 { z - mu } else { z + mu };
        let z2: f64 = StandardNormal.sample(&mut rng);
        let x_ref = z2 * var_q.sqrt();
        e_target += g(x_target);
        e_ref += g(x_ref);
    }
    let n = n_samples as f64;
    let v = 0.5 * (e_target / n + e_ref / n);
    Ok(BoundResult {
        bound_value: v.sqrt(),
        inputs: vec![("mu".into(), mu), ("n_samples".into(), n)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::approx_constant)]
    fn corr_bound_values() {
        assert_eq!(corr_gaussian_bound(0.0).unwrap().bound_value, 0.0);
        for (rho, want) in [(0.9, 3.14), (0.95, 4.49), (0.99, 10.05)] {
            let b = corr_gaussian_bound(rho).unwrap().bound_value;
            assert!((b - want).abs() < 0.01, "{rho}: {b}");
        }
    }

    #[test]
    fn corr_bound_domain() {
        assert!(matches!(corr_gaussian_bound(1.0), Err(Error::Domain(_))));
        assert!(corr_gaussian_bound(-0.1).is_err());
    }

    #[test]
    fn corr_bound_monotone() {
        let mut prev = -1.0;
        for k in 0..100 {
            let b = corr_gaussian_bound(k as f64 / 100.0).unwrap().bound_value;
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn mixture_bound_values() {
        let seq = SeedSequence::new(9);
        let b5 = mixture_bound_mc(5.0, 200_000, &seq).unwrap().bound_value;
        let b10 = mixture_bound_mc(10.0, 200_000, &seq).unwrap().bound_value;
        assert!((b5 - 1.7).abs() < 0.1, "{b5}");
        assert!((b10 - 3.2).abs() < 0.2, "{b10}");
    }

    #[test]
    fn mixture_bound_vanishes_as_modes_merge() {
        let b = mixture_bound_mc(1e-3, 100_000, &SeedSequence::new(1))
            .unwrap()
            .bound_value;
        assert!(b < 0.01, "{b}");
    }
}
