//! Non-reversible parallel tempering with deterministic even-odd swaps.
//!
//! Every iteration explores all chains, then proposes swaps on the even
//! edges (iteration index even) or the odd edges (iteration index odd).
//! Iterations are numbered from 1 inside a run. Rejection probabilities are
//! accumulated for every edge on every iteration, proposed or not.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::IndexTrace;
use crate::explore::{explore, SliceConfig};
use crate::path::{AnnealingPath, AnnealingSchedule, LogTerms};
use crate::rng::{purpose, Rng, SeedSequence};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NrptConfig {
    pub slice: SliceConfig,
    /// Chains sitting exactly on a reference are refreshed by an i.i.d. draw
    /// instead of slice sampling.
    pub iid_reference_draws: bool,
    /// Explore chains on the rayon pool. Results do not depend on this.
    pub parallel: bool,
    /// Keep the endpoint log densities of every chain at every iteration.
    pub record_ensemble: bool,
}

impl Default for NrptConfig {
    fn default() -> Self {
        Self {
            slice: SliceConfig::default(),
            iid_reference_draws: true,
            parallel: false,
            record_ensemble: false,
        }
    }
}

/// Chain states plus the physical machine currently holding each chain.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleState {
    pub states: Vec<Vec<f64>>,
    pub machine_of_chain: Vec<usize>,
}

impl EnsembleState {
    /// One machine per chain, machine `j` starting on chain `j`.
    pub fn new(states: Vec<Vec<f64>>) -> Self {
        let machine_of_chain = (0..states.len()).collect();
        Self {
            states,
            machine_of_chain,
        }
    }

    pub fn n_chains(&self) -> usize {
        self.states.len()
    }

    /// Draw a starting state for every chain of `sched` on `path`.
    pub fn initialize(path: &AnnealingPath, sched: &AnnealingSchedule, seq: &SeedSequence) -> Result<Self> {
        let states = sched
            .betas()
            .iter()
            .enumerate()
            .map(|(n, &b)| {
                let mut rng = seq.derive(&[purpose::INIT, n as u64]).rng();
                initial_point(path, b, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(states))
    }

    /// Replace states that have zero density under the current path.
    ///
    /// Needed when the path changes between rounds and an old state falls
    /// outside the support of its new annealed distribution.
    pub fn repair(&mut self, path: &AnnealingPath, sched: &AnnealingSchedule, seq: &SeedSequence) -> Result<usize> {
        let mut fixed = 0;
        for (n, (x, &b)) in self.states.iter_mut().zip(sched.betas()).enumerate() {
            if !path.log_anneal(b, x).is_finite() {
                let mut rng = seq.derive(&[purpose::INIT, n as u64]).rng();
                *x = initial_point(path, b, &mut rng)?;
                fixed += 1;
            }
        }
        Ok(fixed)
    }
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Reference draws, alternating between the path's references, until one
/// lands where `π_β` is positive.
fn initial_point(path: &AnnealingPath, beta: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    let refs: Vec<_> = match path {
        AnnealingPath::Linear { reference, .. } => vec![reference],
        AnnealingPath::Concatenated { variational, fixed, .. } => {
            if beta <= 0.5 {
                vec![variational, fixed]
            } else {
                vec![fixed, variational]
            }
        }
    };
    for attempt in 0..10_000 {
        let x = refs[attempt % refs.len()].sample_iid(rng);
        if path.log_anneal(beta, &x).is_finite() {
            return Ok(x);
        }
    }
    Err(Error::Contract(format!(
        "could not find a starting point with positive density at beta = {beta}"
    )))
}

/// Mean rejection probability per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct RejectionStats {
    pub r: Vec<f64>,
    pub proposals: Vec<u64>,
}

impl RejectionStats {
    pub fn n_edges(&self) -> usize {
        self.r.len()
    }

    /// Rejection rates of edges `range`, e.g. one leg of a concatenated run.
    pub fn slice(&self, range: std::ops::Range<usize>) -> RejectionStats {
        RejectionStats {
            r: self.r[range.clone()].to_vec(),
            proposals: self.proposals[range].to_vec(),
        }
    }
}

/// Swap acceptance probability from the endpoint terms of the two states.
///
/// Evaluated in log space; never NaN. A proposal into zero density is
/// rejected and a current state of zero density is always left.
pub fn swap_accept_from_terms(path: &AnnealingPath, b_lo: f64, b_hi: f64, lo: &LogTerms, hi: &LogTerms) -> f64 {
    let num = path.combine(b_lo, hi) + path.combine(b_hi, lo);
    let den = path.combine(b_lo, lo) + path.combine(b_hi, hi);
    accept_from_log_ratio(num, den)
}

#[inline]
fn accept_from_log_ratio(num: f64, den: f64) -> f64 {
    if num.is_nan() || num == f64::NEG_INFINITY {
        return 0.0;
    }
    if den == f64::NEG_INFINITY {
        return 1.0;
    }
    let d = num - den;
    if d.is_nan() {
        0.0
    } else if d >= 0.0 {
        1.0
    } else {
        d.exp()
    }
}

/// `α_n` for swapping the states of chains `n` and `n + 1`.
pub fn swap_accept_prob(path: &AnnealingPath, sched: &AnnealingSchedule, x_n: &[f64], x_np1: &[f64], n: usize) -> f64 {
    let b = sched.betas();
    swap_accept_from_terms(path, b[n], b[n + 1], &path.log_terms(x_n), &path.log_terms(x_np1))
}

/// Whether edge `n` is proposed at iteration `t` (1-based).
#[inline]
pub fn edge_proposed(t: u64, n: usize) -> bool {
    (n as u64) % 2 == t % 2
}

/// Direction flag of a machine sitting on chain `n` after iteration `t`:
/// +1 when its next proposal is to the chain above.
#[inline]
pub fn deo_direction(t: u64, n: usize) -> i8 {
    if edge_proposed(t + 1, n) {
        1
    } else {
        -1
    }
}

pub struct NrptOutput {
    pub state: EnsembleState,
    pub stats: RejectionStats,
    pub index: IndexTrace,
    /// Target-chain state after every iteration.
    pub target_trace: Vec<Vec<f64>>,
    /// `[chain][iteration]` endpoint terms, when requested.
    pub ensemble: Option<Vec<Vec<LogTerms>>>,
}

/// Chain index at which the path passes through the target.
pub fn target_chain(path: &AnnealingPath, sched: &AnnealingSchedule) -> Result<usize> {
    sched.position(path.target_beta()).ok_or_else(|| {
        Error::Contract(format!(
            "schedule has no grid point at the target (beta = {})",
            path.target_beta()
        ))
    })
}

fn step_chain(path: &AnnealingPath, beta: f64, x: &mut Vec<f64>, cfg: &NrptConfig, rng: &mut Rng) -> Result<LogTerms> {
    match path.endpoint_reference(beta) {
        Some(q) if cfg.iid_reference_draws => *x = q.sample_iid(rng),
        _ => {
            explore(path, beta, x, &cfg.slice, rng)?;
        }
    }
    Ok(path.log_terms(x))
}

/// Run `iterations` NRPT iterations from `x0`.
///
/// `seq` addresses the random streams of this run: chain `n` explores with
/// stream `(EXPLORE, n)`, swaps use stream `(SWAP)`.
pub fn nrpt_run(
    x0: EnsembleState,
    sched: &AnnealingSchedule,
    iterations: u64,
    path: &AnnealingPath,
    cfg: &NrptConfig,
    seq: &SeedSequence,
) -> Result<NrptOutput> {
    let betas = sched.betas();
    let m = betas.len();
    if x0.n_chains() != m {
        return Err(Error::Contract(format!(
            "ensemble has {} chains but the schedule has {m} grid points",
            x0.n_chains()
        )));
    }
    if iterations == 0 {
        return Err(Error::Contract("nrpt needs at least one iteration".into()));
    }
    let target = target_chain(path, sched)?;
    for (n, x) in x0.states.iter().enumerate() {
        if x.len() != path.dim() || !path.log_anneal(betas[n], x).is_finite() {
            return Err(Error::Contract(format!(
                "chain {n} starts outside the support of its distribution"
            )));
        }
    }

    let EnsembleState {
        mut states,
        mut machine_of_chain,
    } = x0;
    let mut rngs: Vec<Rng> = (0..m)
        .map(|n| seq.derive(&[purpose::EXPLORE, n as u64]).rng())
        .collect();
    let mut swap_rng = seq.derive(&[purpose::SWAP]).rng();
    let mut chain_of_machine = invert(&machine_of_chain);

    let n_edges = m - 1;
    let inv_t = 1.0 / iterations as f64;
    let mut rejection = vec![0.0; n_edges];
    let mut proposals = vec![0u64; n_edges];
    let mut index = IndexTrace::with_capacity(m, iterations as usize);
    let mut target_trace = Vec::with_capacity(iterations as usize);
    let mut ensemble = cfg
        .record_ensemble
        .then(|| vec![Vec::with_capacity(iterations as usize); m]);
    let mut terms = vec![
        LogTerms {
            reference: 0.0,
            target: 0.0,
            fixed: 0.0
        };
        m
    ];
    let mut directions = vec![0i8; m];
    let mut positions = vec![0u32; m];

    for t in 1..=iterations {
        if cfg.parallel {
            states
                .par_iter_mut()
                .zip(rngs.par_iter_mut())
                .zip(terms.par_iter_mut())
                .zip(betas.par_iter())
                .try_for_each(|(((x, rng), tm), &b)| -> Result<()> {
                    *tm = step_chain(path, b, x, cfg, rng)?;
                    Ok(())
                })?;
        } else {
            for n in 0..m {
                terms[n] = step_chain(path, betas[n], &mut states[n], cfg, &mut rngs[n])?;
            }
        }
        if let Some(ens) = ensemble.as_mut() {
            for (rec, tm) in ens.iter_mut().zip(&terms) {
                rec.push(*tm);
            }
        }

        for n in 0..n_edges {
            let alpha = swap_accept_from_terms(path, betas[n], betas[n + 1], &terms[n], &terms[n + 1]);
            rejection[n] += (1.0 - alpha) * inv_t;
            if edge_proposed(t, n) {
                proposals[n] += 1;
                if alpha >= 1.0 || swap_rng.random::<f64>() < alpha {
                    states.swap(n, n + 1);
                    terms.swap(n, n + 1);
                    machine_of_chain.swap(n, n + 1);
                    chain_of_machine[machine_of_chain[n]] = n;
                    chain_of_machine[machine_of_chain[n + 1]] = n + 1;
                }
            }
        }

        for (j, &c) in chain_of_machine.iter().enumerate() {
            positions[j] = c as u32;
            directions[j] = deo_direction(t, c);
        }
        index.push(&positions, &directions);
        target_trace.push(states[target].clone());
    }

    Ok(NrptOutput {
        state: EnsembleState {
            states,
            machine_of_chain,
        },
        stats: RejectionStats {
            r: rejection,
            proposals,
        },
        index,
        target_trace,
        ensemble,
    })
}
