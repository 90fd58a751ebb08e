//! Round-based tuning of the annealing schedule and the variational
//! reference.
//!
//! Round `r = 1, 2, …, R` runs `2^r` NRPT iterations, re-spaces each leg's
//! schedule so that its edges carry equal rejection mass, refits the
//! variational reference to the round's target-chain draws, and carries the
//! final ensemble into the next round.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{gcb_hat, lcb_estimate, IndexTopology, RestartCounter, RestartCounts};
use crate::model::Problem;
use crate::nrpt::{nrpt_run, EnsembleState, NrptConfig};
use crate::path::{concat_schedule, AnnealingPath, AnnealingSchedule, Leg};
use crate::reference::{moment_match_update, DiagGaussian, FullGaussian, MomentAccumulator, Reference, ReferenceKind};
use crate::rng::SeedSequence;
use crate::{Error, Result};

/// Respace a schedule so every edge carries the same share of the
/// cumulative rejection.
///
/// The cumulative barrier is interpolated linearly through
/// `(β_n, r_0 + … + r_{n−1})` and inverted at `n Λ̂(1) / N`.
pub fn update_schedule(r: &[f64], old: &AnnealingSchedule) -> Result<AnnealingSchedule> {
    let n = old.n_edges();
    if r.len() != n {
        return Err(Error::Contract(format!(
            "{} rejection rates for a schedule with {n} edges",
            r.len()
        )));
    }
    if let Some(bad) = r.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Contract(format!("rejection rate {bad} outside [0, 1]")));
    }
    let beta = old.betas();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for &x in r {
        cum.push(cum.last().unwrap() + x);
    }
    let total = cum[n];
    if total <= 0.0 {
        return Ok(AnnealingSchedule::uniform(n));
    }
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut k = 1;
    for i in 1..n {
        let y = total * i as f64 / n as f64;
        while k < n && cum[k] < y {
            k += 1;
        }
        let (c0, c1) = (cum[k - 1], cum[k]);
        let w = if c1 > c0 {
            ((y - c0) / (c1 - c0)).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let mut b = beta[k - 1] + w * (beta[k] - beta[k - 1]);
        let prev = *out.last().unwrap();
        if !(b > prev) {
            b = next_up(prev);
        }
        out.push(b);
    }
    out.push(1.0);
    // keep the tail strictly below 1 after any nudging
    for i in (1..n).rev() {
        if !(out[i] < out[i + 1]) {
            out[i] = next_down(out[i + 1]);
        }
    }
    AnnealingSchedule::new(out)
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        f64::MIN_POSITIVE
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

fn next_down(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    /// Single path from the fixed reference.
    FixedOnly,
    /// Single path from the variational reference.
    VariationalOnly,
    /// Variational reference, target, fixed reference on one concatenated path.
    Stabilized,
}

impl Topology {
    pub const ALL: [Topology; 3] = [Topology::FixedOnly, Topology::VariationalOnly, Topology::Stabilized];

    pub fn as_str(&self) -> &'static str {
        match self {
            Topology::FixedOnly => "fixed-only",
            Topology::VariationalOnly => "variational-only",
            Topology::Stabilized => "stabilized",
        }
    }

    pub fn legs(&self) -> &'static [Leg] {
        match self {
            Topology::FixedOnly => &[Leg::Fixed],
            Topology::VariationalOnly => &[Leg::Variational],
            Topology::Stabilized => &[Leg::Variational, Leg::Fixed],
        }
    }

    pub fn is_variational(&self) -> bool {
        !matches!(self, Topology::FixedOnly)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Topology::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown topology `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub topology: Topology,
    pub reference_kind: ReferenceKind,
    /// Edges in the variational leg of a stabilized run.
    pub variational_edges: usize,
    /// Edges in the fixed leg of a stabilized run.
    pub fixed_edges: usize,
    /// Tuning rounds; round `r` runs `2^r` iterations.
    pub rounds: u32,
    /// Leading rounds left out of the returned trace.
    pub burn_in_rounds: u32,
    /// Return target draws from every round, tuning rounds included.
    pub trace_all_rounds: bool,
    /// Estimate the local barrier profile in the final round.
    pub record_barrier: bool,
    /// Variance of the initial variational reference `N(0, v I)`.
    pub initial_variance: f64,
    pub nrpt: NrptConfig,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            topology: Topology::Stabilized,
            reference_kind: ReferenceKind::GaussianDiag,
            variational_edges: 10,
            fixed_edges: 10,
            rounds: 10,
            burn_in_rounds: 2,
            trace_all_rounds: false,
            record_barrier: false,
            initial_variance: 100.0,
            nrpt: NrptConfig::default(),
        }
    }
}

impl AdaptConfig {
    /// Edges on the path; single-leg topologies use the combined count so
    /// that every topology runs the same number of chains.
    pub fn total_edges(&self) -> usize {
        self.variational_edges + self.fixed_edges
    }

    pub fn validate(&self) -> Result<()> {
        if self.variational_edges == 0 || self.fixed_edges == 0 {
            return Err(Error::Config("each leg needs at least one edge".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.rounds > 40 {
            return Err(Error::Config("rounds must be at most 40".into()));
        }
        if !(self.initial_variance.is_finite() && self.initial_variance > 0.0) {
            return Err(Error::Config("initial_variance must be positive".into()));
        }
        if self.topology.is_variational() && self.reference_kind == ReferenceKind::FixedClosedForm {
            return Err(Error::Config(
                "the variational reference must be gaussian-diag or gaussian-full".into(),
            ));
        }
        self.nrpt.slice.validate()
    }
}

/// One leg's summary for one round.
#[derive(Clone, Debug, PartialEq)]
pub struct LegRound {
    pub leg: Leg,
    /// Rejection rates from the leg's reference towards the target.
    pub rejection: Vec<f64>,
    pub gcb_hat: f64,
    pub restarts: u64,
    pub tau_hat: f64,
    /// Schedule of this leg used during the round, reference at β = 0.
    pub schedule: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundReport {
    pub round: u32,
    pub iterations: u64,
    pub legs: Vec<LegRound>,
    /// Variational reference parameters after this round's update.
    pub reference_params: Vec<(String, f64)>,
}

impl RoundReport {
    pub fn leg(&self, leg: Leg) -> Option<&LegRound> {
        self.legs.iter().find(|l| l.leg == leg)
    }

    pub fn restarts(&self) -> u64 {
        self.legs.iter().map(|l| l.restarts).sum()
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub topology: Topology,
    pub param_names: Vec<String>,
    pub rounds: Vec<RoundReport>,
    /// Final variational reference (absent for fixed-only).
    pub reference: Option<Reference>,
    /// Target-chain draws after burn-in.
    pub trace: Vec<Vec<f64>>,
    /// Global iteration number (1-based) of the first trace row.
    pub trace_start: u64,
    /// Chain index holding the target.
    pub target_chain: usize,
    /// Local barrier profile of the final round, if requested.
    pub barrier: Vec<(f64, f64)>,
    pub restarts: RestartCounts,
    pub total_iterations: u64,
}

impl RunReport {
    pub fn last_round(&self) -> &RoundReport {
        self.rounds.last().expect("a run has at least one round")
    }
}

fn initial_reference(kind: ReferenceKind, dim: usize, var: f64) -> Result<Reference> {
    match kind {
        ReferenceKind::GaussianDiag => Ok(Reference::GaussianDiag(DiagGaussian::isotropic(dim, 0.0, var)?)),
        ReferenceKind::GaussianFull => Ok(Reference::GaussianFull(FullGaussian::new(
            vec![0.0; dim],
            DMatrix::identity(dim, dim) * var,
        )?)),
        ReferenceKind::FixedClosedForm => Err(Error::Config("fixed references are not tunable".into())),
    }
}

/// Run all tuning rounds of one replicate.
pub fn variational_pt_run(cfg: &AdaptConfig, problem: &Problem, seq: &SeedSequence) -> Result<RunReport> {
    cfg.validate()?;
    let target = &problem.target;
    let dim = target.dim();
    let mut q = if cfg.topology.is_variational() {
        Some(initial_reference(cfg.reference_kind, dim, cfg.initial_variance)?)
    } else {
        None
    };
    let (n_phi, n_fix) = (cfg.variational_edges, cfg.fixed_edges);
    let mut var_sched = AnnealingSchedule::uniform(n_phi);
    let mut fix_sched = AnnealingSchedule::uniform(n_fix);
    let mut single_sched = AnnealingSchedule::uniform(cfg.total_edges());
    let index_topology = match cfg.topology {
        Topology::Stabilized => IndexTopology::TwoReference {
            n_phi,
            n_bar: n_phi + n_fix,
        },
        _ => IndexTopology::Single { n: cfg.total_edges() },
    };
    let mut counter = RestartCounter::new(index_topology);
    let mut ensemble: Option<EnsembleState> = None;
    let mut rounds = Vec::with_capacity(cfg.rounds as usize);
    let mut trace = Vec::new();
    let mut trace_start = 0;
    let mut barrier = Vec::new();
    let mut total_iterations = 0u64;

    for round in 1..=cfg.rounds {
        let iterations = 1u64 << round;
        let (path, sched) = match cfg.topology {
            Topology::FixedOnly => (
                AnnealingPath::linear(problem.fixed_reference.clone(), target.clone())?,
                single_sched.clone(),
            ),
            Topology::VariationalOnly => (
                AnnealingPath::linear(q.clone().unwrap(), target.clone())?,
                single_sched.clone(),
            ),
            Topology::Stabilized => {
                let var_path = AnnealingPath::linear(q.clone().unwrap(), target.clone())?;
                let fix_path = AnnealingPath::linear(problem.fixed_reference.clone(), target.clone())?;
                (
                    AnnealingPath::concat(&var_path, &fix_path)?,
                    concat_schedule(&var_sched, &fix_sched),
                )
            }
        };

        let init_seq = seq.derive(&[0]);
        let x0 = match ensemble.take() {
            None => EnsembleState::initialize(&path, &sched, &init_seq)?,
            Some(mut e) => {
                e.repair(&path, &sched, &seq.derive(&[0, round as u64]))?;
                e
            }
        };
        let last = round == cfg.rounds;
        let nrpt_cfg = NrptConfig {
            record_ensemble: cfg.record_barrier && last,
            ..cfg.nrpt
        };
        let out = nrpt_run(x0, &sched, iterations, &path, &nrpt_cfg, &seq.derive(&[round as u64]))?;

        let before = counter.counts();
        counter.feed(&out.index);
        let after = counter.counts();
        let new_lower = after.lower - before.lower;
        let new_upper = after.upper - before.upper;

        let legs = match cfg.topology {
            Topology::FixedOnly | Topology::VariationalOnly => {
                let leg = cfg.topology.legs()[0];
                let lr = LegRound {
                    leg,
                    gcb_hat: gcb_hat(&out.stats),
                    rejection: out.stats.r.clone(),
                    restarts: new_lower,
                    tau_hat: new_lower as f64 / iterations as f64,
                    schedule: single_sched.betas().to_vec(),
                };
                single_sched = update_schedule(&out.stats.r, &single_sched)?;
                vec![lr]
            }
            Topology::Stabilized => {
                let var_r = out.stats.r[..n_phi].to_vec();
                let mut fix_r = out.stats.r[n_phi..].to_vec();
                fix_r.reverse();
                let lv = LegRound {
                    leg: Leg::Variational,
                    gcb_hat: var_r.iter().sum(),
                    rejection: var_r.clone(),
                    restarts: new_lower,
                    tau_hat: new_lower as f64 / iterations as f64,
                    schedule: var_sched.betas().to_vec(),
                };
                let lf = LegRound {
                    leg: Leg::Fixed,
                    gcb_hat: fix_r.iter().sum(),
                    rejection: fix_r.clone(),
                    restarts: new_upper,
                    tau_hat: new_upper as f64 / iterations as f64,
                    schedule: fix_sched.betas().to_vec(),
                };
                var_sched = update_schedule(&var_r, &var_sched)?;
                fix_sched = update_schedule(&fix_r, &fix_sched)?;
                vec![lv, lf]
            }
        };

        if let Some(prev) = q.as_ref() {
            let mut acc = MomentAccumulator::new(dim, cfg.reference_kind);
            for x in &out.target_trace {
                acc.push(x);
            }
            q = Some(moment_match_update(&acc, cfg.reference_kind, prev));
        }

        if last {
            if let Some(ens) = out.ensemble.as_ref() {
                barrier = lcb_estimate(&path, &sched, ens);
            }
        }
        if cfg.trace_all_rounds || round > cfg.burn_in_rounds {
            if trace.is_empty() {
                trace_start = total_iterations + 1;
            }
            trace.extend(out.target_trace);
        }
        total_iterations += iterations;
        rounds.push(RoundReport {
            round,
            iterations,
            legs,
            reference_params: q.as_ref().map(|r| r.params()).unwrap_or_default(),
        });
        ensemble = Some(out.state);
    }

    Ok(RunReport {
        topology: cfg.topology,
        param_names: target.param_names().to_vec(),
        rounds,
        reference: q,
        trace,
        trace_start,
        target_chain: index_topology.target_index(),
        barrier,
        restarts: counter.counts(),
        total_iterations,
    })
}
