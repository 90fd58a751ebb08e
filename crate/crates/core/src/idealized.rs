//! Index-process simulator under efficient local exploration.
//!
//! There is no state space: edge `n` accepts a proposed swap with
//! probability `1 − r_n`, independently of everything else. Machines move
//! exactly as in [`crate::nrpt`], so restart counts can be compared with the
//! closed-form restart rate.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{restart_rate_formula, IndexTopology, IndexTrace, RestartCounter, RestartCounts};
use crate::nrpt::{deo_direction, edge_proposed};
use crate::rng::{purpose, SeedSequence};
use crate::{Error, Result};

/// Rejection probabilities per edge, for one or two legs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "legs")]
pub enum IdealizedRates {
    Single {
        rates: Vec<f64>,
    },
    /// Variational leg rates run from its reference to the target; fixed leg
    /// rates likewise run from the fixed reference to the target.
    Two {
        variational: Vec<f64>,
        fixed: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealizedSpec {
    pub rates: IdealizedRates,
    pub iterations: u64,
}

impl IdealizedSpec {
    pub fn single(rates: Vec<f64>, iterations: u64) -> Self {
        Self {
            rates: IdealizedRates::Single { rates },
            iterations,
        }
    }

    pub fn two(variational: Vec<f64>, fixed: Vec<f64>, iterations: u64) -> Self {
        Self {
            rates: IdealizedRates::Two { variational, fixed },
            iterations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let legs: Vec<&Vec<f64>> = match &self.rates {
            IdealizedRates::Single { rates } => vec![rates],
            IdealizedRates::Two { variational, fixed } => vec![variational, fixed],
        };
        for r in legs {
            if r.is_empty() {
                return Err(Error::Config("idealized rates must contain at least one edge".into()));
            }
            if let Some(bad) = r.iter().find(|&&x| !(0.0..1.0).contains(&x)) {
                return Err(Error::Config(format!("idealized rate {bad} is outside [0, 1)")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::Config("idealized iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Rejection rate of every global edge, bottom to top.
    pub fn edge_rates(&self) -> Vec<f64> {
        match &self.rates {
            IdealizedRates::Single { rates } => rates.clone(),
            IdealizedRates::Two { variational, fixed } => {
                variational.iter().chain(fixed.iter().rev()).copied().collect()
            }
        }
    }

    pub fn topology(&self) -> IndexTopology {
        match &self.rates {
            IdealizedRates::Single { rates } => IndexTopology::Single { n: rates.len() },
            IdealizedRates::Two { variational, fixed } => IndexTopology::TwoReference {
                n_phi: variational.len(),
                n_bar: variational.len() + fixed.len(),
            },
        }
    }

    /// Restart rate predicted by the closed form, summed over legs.
    pub fn theoretical_rate(&self) -> f64 {
        match &self.rates {
            IdealizedRates::Single { rates } => restart_rate_formula(rates),
            IdealizedRates::Two { variational, fixed } => {
                restart_rate_formula(variational) + restart_rate_formula(fixed)
            }
        }
    }
}

/// Drive the index process, handing each iteration's positions and
/// directions to `sink`.
fn drive<F: FnMut(&[u32], &[i8])>(spec: &IdealizedSpec, seq: &SeedSequence, mut sink: F) -> Result<()> {
    spec.validate()?;
    let rates = spec.edge_rates();
    let m = rates.len() + 1;
    let mut rng = seq.derive(&[purpose::IDEALIZED]).rng();
    let mut machine_of_chain: Vec<usize> = (0..m).collect();
    let mut positions = vec![0u32; m];
    let mut directions = vec![0i8; m];
    for t in 1..=spec.iterations {
        let first = if t % 2 == 0 { 0 } else { 1 };
        for n in (first..rates.len()).step_by(2) {
            debug_assert!(edge_proposed(t, n));
            if rng.random::<f64>() >= rates[n] {
                machine_of_chain.swap(n, n + 1);
            }
        }
        for (c, &j) in machine_of_chain.iter().enumerate() {
            positions[j] = c as u32;
            directions[j] = deo_direction(t, c);
        }
        sink(&positions, &directions);
    }
    Ok(())
}

pub fn simulate_index_process(spec: &IdealizedSpec, seq: &SeedSequence) -> Result<IndexTrace> {
    let m = spec.edge_rates().len() + 1;
    let mut trace = IndexTrace::with_capacity(m, spec.iterations as usize);
    drive(spec, seq, |p, d| trace.push(p, d))?;
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdealizedResult {
    pub counts: RestartCounts,
    pub tau_hat: f64,
    pub tau_theory: f64,
}

/// Restart counts without storing the trace.
pub fn simulate_restarts(spec: &IdealizedSpec, seq: &SeedSequence) -> Result<IdealizedResult> {
    let mut counter = RestartCounter::new(spec.topology());
    drive(spec, seq, |p, d| counter.observe(p, d))?;
    let counts = counter.counts();
    Ok(IdealizedResult {
        tau_hat: counts.total() as f64 / spec.iterations as f64,
        tau_theory: spec.theoretical_rate(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::count_restarts;

    #[test]
    fn no_rejection_gives_half() {
        let spec = IdealizedSpec::single(vec![0.0; 3], 100_000);
        let res = simulate_restarts(&spec, &SeedSequence::new(1)).unwrap();
        assert!((res.tau_hat - 0.5).abs() < 1e-3, "{}", res.tau_hat);
        assert!(res.tau_hat <= 0.5);
    }

    #[test]
    fn streaming_matches_trace() {
        let spec = IdealizedSpec::two(vec![0.2, 0.4], vec![0.1, 0.3, 0.5], 5_000);
        let seq = SeedSequence::new(2);
        let trace = simulate_index_process(&spec, &seq).unwrap();
        let res = simulate_restarts(&spec, &seq).unwrap();
        assert_eq!(count_restarts(&trace, spec.topology()), res.counts);
    }

    #[test]
    fn five_edge_formula() {
        let spec = IdealizedSpec::single(vec![0.1, 0.2, 0.3, 0.2, 0.1], 1_000_000);
        let res = simulate_restarts(&spec, &SeedSequence::new(3)).unwrap();
        assert!((res.tau_theory - 0.2325).abs() < 1e-4);
        assert!((res.tau_hat / res.tau_theory - 1.0).abs() < 0.02, "{}", res.tau_hat);
    }

    #[test]
    fn bottleneck_kills_restarts() {
        let spec = IdealizedSpec::single(vec![0.1, 0.999, 0.1], 200_000);
        let res = simulate_restarts(&spec, &SeedSequence::new(4)).unwrap();
        assert!(res.tau_hat < 0.002, "{}", res.tau_hat);
    }

    #[test]
    fn fixed_leg_is_reversed_on_the_global_axis() {
        let spec = IdealizedSpec::two(vec![0.1, 0.2], vec![0.3, 0.4], 1);
        assert_eq!(spec.edge_rates(), vec![0.1, 0.2, 0.4, 0.3]);
        assert_eq!(spec.topology(), IndexTopology::TwoReference { n_phi: 2, n_bar: 4 });
    }

    #[test]
    fn invalid_rates_rejected() {
        assert!(IdealizedSpec::single(vec![1.0], 10).validate().is_err());
        assert!(IdealizedSpec::single(vec![], 10).validate().is_err());
        assert!(IdealizedSpec::single(vec![0.5], 0).validate().is_err());
    }
}
