//! Restart counting, restart-rate and barrier estimates, KS distance.
//!
//! Restarts are read off the index process of each physical machine: its
//! chain index `n_t(j)` and direction flag `ε_t(j)` after every iteration.
//! With a reference at β = 0 only, a restart is a trip from `(0, −1)` to
//! `(N, +1)`. With a second reference at β = 1 and the target at index
//! `N_φ`, trips `(0, −1) → (N_φ, +1)` and `(N̄, +1) → (N_φ, −1)` are counted
//! separately.

use crate::nrpt::RejectionStats;
use crate::path::{AnnealingPath, AnnealingSchedule, LogTerms};

/// Above this KS distance a marginal is flagged as having lost mass.
pub const KS_FAILURE_THRESHOLD: f64 = 0.1;

/// Largest rejection rate used when forming odds `r / (1 − r)`.
pub const MAX_REJECTION: f64 = 1.0 - 1e-10;

/// Per-iteration `(n_t(j), ε_t(j))` for every machine `j`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IndexTrace {
    n_machines: usize,
    positions: Vec<u32>,
    directions: Vec<i8>,
}

impl IndexTrace {
    pub fn new(n_machines: usize) -> Self {
        Self::with_capacity(n_machines, 0)
    }

    pub fn with_capacity(n_machines: usize, iterations: usize) -> Self {
        Self {
            n_machines,
            positions: Vec::with_capacity(n_machines * iterations),
            directions: Vec::with_capacity(n_machines * iterations),
        }
    }

    pub fn n_machines(&self) -> usize {
        self.n_machines
    }

    /// Number of recorded iterations.
    pub fn len(&self) -> usize {
        self.positions.len().checked_div(self.n_machines).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, positions: &[u32], directions: &[i8]) {
        assert_eq!(positions.len(), self.n_machines);
        assert_eq!(directions.len(), self.n_machines);
        self.positions.extend_from_slice(positions);
        self.directions.extend_from_slice(directions);
    }

    pub fn position(&self, t: usize, machine: usize) -> u32 {
        self.positions[t * self.n_machines + machine]
    }

    pub fn direction(&self, t: usize, machine: usize) -> i8 {
        self.directions[t * self.n_machines + machine]
    }

    pub fn positions_at(&self, t: usize) -> &[u32] {
        &self.positions[t * self.n_machines..(t + 1) * self.n_machines]
    }

    pub fn directions_at(&self, t: usize) -> &[i8] {
        &self.directions[t * self.n_machines..(t + 1) * self.n_machines]
    }
}

/// Where the references and the target sit on the chain index axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexTopology {
    /// Reference at index 0, target at index `n`.
    Single { n: usize },
    /// Variational reference at 0, target at `n_phi`, fixed reference at `n_bar`.
    TwoReference { n_phi: usize, n_bar: usize },
}

impl IndexTopology {
    pub fn n_chains(&self) -> usize {
        match *self {
            IndexTopology::Single { n } => n + 1,
            IndexTopology::TwoReference { n_bar, .. } => n_bar + 1,
        }
    }

    pub fn target_index(&self) -> usize {
        match *self {
            IndexTopology::Single { n } => n,
            IndexTopology::TwoReference { n_phi, .. } => n_phi,
        }
    }
}

/// Restart tallies. `lower` counts restarts from the reference at index 0,
/// `upper` those from the reference at the top index (two-reference only).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RestartCounts {
    pub lower: u64,
    pub upper: u64,
    pub per_machine: Vec<(u64, u64)>,
}

impl RestartCounts {
    pub fn total(&self) -> u64 {
        self.lower + self.upper
    }
}

/// Streaming restart counter; state carries across successive traces.
#[derive(Clone, Debug)]
pub struct RestartCounter {
    topology: IndexTopology,
    armed_lower: Vec<bool>,
    armed_upper: Vec<bool>,
    lower: Vec<u64>,
    upper: Vec<u64>,
}

impl RestartCounter {
    pub fn new(topology: IndexTopology) -> Self {
        let m = topology.n_chains();
        Self {
            topology,
            armed_lower: vec![false; m],
            armed_upper: vec![false; m],
            lower: vec![0; m],
            upper: vec![0; m],
        }
    }

    pub fn observe(&mut self, positions: &[u32], directions: &[i8]) {
        let target = self.topology.target_index() as u32;
        let top = match self.topology {
            IndexTopology::Single { .. } => None,
            IndexTopology::TwoReference { n_bar, .. } => Some(n_bar as u32),
        };
        for (j, (&n, &e)) in positions.iter().zip(directions).enumerate() {
            if n == 0 && e == -1 {
                self.armed_lower[j] = true;
            } else if n == target && e == 1 && self.armed_lower[j] {
                self.lower[j] += 1;
                self.armed_lower[j] = false;
            }
            if let Some(top) = top {
                if n == top && e == 1 {
                    self.armed_upper[j] = true;
                } else if n == target && e == -1 && self.armed_upper[j] {
                    self.upper[j] += 1;
                    self.armed_upper[j] = false;
                }
            }
        }
    }

    pub fn feed(&mut self, trace: &IndexTrace) {
        assert_eq!(trace.n_machines(), self.topology.n_chains());
        for t in 0..trace.len() {
            self.observe(trace.positions_at(t), trace.directions_at(t));
        }
    }

    pub fn counts(&self) -> RestartCounts {
        RestartCounts {
            lower: self.lower.iter().sum(),
            upper: self.upper.iter().sum(),
            per_machine: self.lower.iter().copied().zip(self.upper.iter().copied()).collect(),
        }
    }
}

pub fn count_restarts(trace: &IndexTrace, topology: IndexTopology) -> RestartCounts {
    let mut c = RestartCounter::new(topology);
    c.feed(trace);
    c.counts()
}

/// Restarts per iteration.
pub fn restart_rate_hat(counts: &RestartCounts, iterations: u64) -> f64 {
    assert!(iterations >= 1);
    counts.total() as f64 / iterations as f64
}

/// `(2 + 2 Σ r_n / (1 − r_n))⁻¹`, the restart rate under efficient local
/// exploration.
pub fn restart_rate_formula(r: &[f64]) -> f64 {
    let odds: f64 = r
        .iter()
        .map(|&x| {
            let x = x.clamp(0.0, MAX_REJECTION);
            x / (1.0 - x)
        })
        .sum();
    1.0 / (2.0 + 2.0 * odds)
}

/// Sum of the edge rejection rates.
pub fn gcb_hat(stats: &RejectionStats) -> f64 {
    stats.r.iter().sum()
}

/// Local barrier estimate at every grid point, in global β units.
///
/// `ensemble[n]` holds the endpoint terms of chain `n` over time. Each chain
/// contributes `½ mean |ℓ_t − ℓ_{t+lag}|` with `lag = 2`. On a concatenated
/// path the local estimate is doubled to account for the leg's β scale, and
/// the target chain is reported with the variational leg's `ℓ`.
pub fn lcb_estimate(path: &AnnealingPath, sched: &AnnealingSchedule, ensemble: &[Vec<LogTerms>]) -> Vec<(f64, f64)> {
    const LAG: usize = 2;
    let scale = if path.is_concatenated() { 2.0 } else { 1.0 };
    sched
        .betas()
        .iter()
        .zip(ensemble)
        .filter_map(|(&b, terms)| {
            if terms.len() < 2 {
                return None;
            }
            let lag = LAG.min(terms.len() - 1);
            let (leg, _) = path.leg_of(b);
            let ell: Vec<f64> = terms.iter().map(|t| path.log_ratio(leg, t)).collect();
            let mut sum = 0.0;
            let mut k = 0usize;
            for w in ell.windows(lag + 1) {
                let d = w[lag] - w[0];
                if d.is_finite() {
                    sum += d.abs();
                    k += 1;
                }
            }
            (k > 0).then(|| (b, scale * 0.5 * sum / k as f64))
        })
        .collect()
}

/// Trapezoid integral of a barrier profile.
pub fn integrate_profile(profile: &[(f64, f64)]) -> f64 {
    profile
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

/// Sup distance between the empirical CDFs of two samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "ks_distance needs non-empty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = if a[i].total_cmp(&b[j]).is_le() { a[i] } else { b[j] };
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn ks_flag(distance: f64) -> bool {
    distance > KS_FAILURE_THRESHOLD
}
