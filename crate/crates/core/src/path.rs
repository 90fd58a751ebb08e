//! Annealing schedules and paths.
//!
//! A linear path interpolates geometrically between a reference and the target,
//! `log π_β = (1 − β) log q + β log π₁`. The concatenated path runs from a
//! variational reference to the target over β ∈ [0, ½] and on to a fixed
//! reference over β ∈ [½, 1], so the target sits in the middle.

use crate::model::TargetModel;
use crate::reference::Reference;
use crate::{Error, Result};

/// Sorted grid `0 = β₀ < β₁ < … < β_N = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnealingSchedule {
    betas: Vec<f64>,
}

impl AnnealingSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::Config("a schedule needs at least two grid points".into()));
        }
        if betas[0] != 0.0 || *betas.last().unwrap() != 1.0 {
            return Err(Error::Config(format!(
                "schedule must start at 0 and end at 1, got {} .. {}",
                betas[0],
                betas.last().unwrap()
            )));
        }
        if let Some(w) = betas.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!(
                "schedule not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { betas })
    }

    /// `(0, 1/n, 2/n, …, 1)`.
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1, "a schedule needs at least one edge");
        let mut betas: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        betas[n] = 1.0;
        Self { betas }
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Number of adjacent pairs N (the grid has N + 1 points).
    pub fn n_edges(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn n_chains(&self) -> usize {
        self.betas.len()
    }

    /// Largest gap between consecutive grid points.
    pub fn mesh(&self) -> f64 {
        self.betas.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of the grid point equal to `beta`, if any.
    pub fn position(&self, beta: f64) -> Option<usize> {
        self.betas.iter().position(|&b| b == beta)
    }
}

/// Join a variational-leg schedule and a fixed-leg schedule.
///
/// Grid points `n ≤ N_φ` are `½ β_φ,n`; grid points `n ≥ N_φ` are
/// `1 − ½ β_{N̄−n}`. Index `N_φ` is exactly ½.
pub fn concat_schedule(var: &AnnealingSchedule, fixed: &AnnealingSchedule) -> AnnealingSchedule {
    let n_var = var.n_edges();
    let n_bar = n_var + fixed.n_edges();
    let mut betas = Vec::with_capacity(n_bar + 1);
    betas.extend(var.betas.iter().map(|b| 0.5 * b));
    betas.extend((n_var + 1..=n_bar).map(|n| 1.0 - 0.5 * fixed.betas[n_bar - n]));
    AnnealingSchedule { betas }
}

/// Which side of the target a chain lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Leg {
    Variational,
    Fixed,
}

impl Leg {
    pub fn as_str(&self) -> &'static str {
        match self {
            Leg::Variational => "variational",
            Leg::Fixed => "fixed",
        }
    }
}

/// Log densities of the path endpoints at one point.
///
/// `fixed` is unused (zero) on a linear path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogTerms {
    pub reference: f64,
    pub target: f64,
    pub fixed: f64,
}

/// `w_a a + w_b b` with the convention `0 · (−∞) = 0`.
#[inline]
fn geometric_mix(w_a: f64, a: f64, w_b: f64, b: f64) -> f64 {
    let ta = if w_a == 0.0 { 0.0 } else { w_a * a };
    let tb = if w_b == 0.0 { 0.0 } else { w_b * b };
    ta + tb
}

#[derive(Clone, Debug)]
pub enum AnnealingPath {
    Linear {
        reference: Reference,
        target: TargetModel,
    },
    Concatenated {
        variational: Reference,
        fixed: Reference,
        target: TargetModel,
    },
}

impl AnnealingPath {
    pub fn linear(reference: Reference, target: TargetModel) -> Result<Self> {
        if reference.dim() != target.dim() {
            return Err(Error::Config(format!(
                "reference dimension {} does not match target dimension {}",
                reference.dim(),
                target.dim()
            )));
        }
        Ok(Self::Linear { reference, target })
    }

    /// Join `q_φ → π₁` and `π₀ → π₁` into `q_φ → π₁ → π₀`.
    pub fn concat(var_path: &AnnealingPath, fixed_path: &AnnealingPath) -> Result<Self> {
        match (var_path, fixed_path) {
            (
                AnnealingPath::Linear {
                    reference: q,
                    target: t1,
                },
                AnnealingPath::Linear {
                    reference: p0,
                    target: t2,
                },
            ) => {
                if t1.name() != t2.name() || t1.dim() != t2.dim() {
                    return Err(Error::Config(format!(
                        "cannot concatenate paths with different targets `{}` and `{}`",
                        t1.name(),
                        t2.name()
                    )));
                }
                Ok(Self::Concatenated {
                    variational: q.clone(),
                    fixed: p0.clone(),
                    target: t1.clone(),
                })
            }
            _ => Err(Error::Config("only two linear paths can be concatenated".into())),
        }
    }

    pub fn target(&self) -> &TargetModel {
        match self {
            AnnealingPath::Linear { target, .. } | AnnealingPath::Concatenated { target, .. } => target,
        }
    }

    pub fn dim(&self) -> usize {
        self.target().dim()
    }

    pub fn is_concatenated(&self) -> bool {
        matches!(self, AnnealingPath::Concatenated { .. })
    }

    /// Global β at which the path passes through the target.
    pub fn target_beta(&self) -> f64 {
        match self {
            AnnealingPath::Linear { .. } => 1.0,
            AnnealingPath::Concatenated { .. } => 0.5,
        }
    }

    /// Reference sitting at global β (0 or, for a concatenated path, 1).
    pub fn endpoint_reference(&self, beta: f64) -> Option<&Reference> {
        match self {
            AnnealingPath::Linear { reference, .. } if beta == 0.0 => Some(reference),
            AnnealingPath::Concatenated { variational, .. } if beta == 0.0 => Some(variational),
            AnnealingPath::Concatenated { fixed, .. } if beta == 1.0 => Some(fixed),
            _ => None,
        }
    }

    pub fn log_terms(&self, x: &[f64]) -> LogTerms {
        match self {
            AnnealingPath::Linear { reference, target } => LogTerms {
                reference: reference.log_density(x),
                target: target.log_density(x),
                fixed: 0.0,
            },
            AnnealingPath::Concatenated {
                variational,
                fixed,
                target,
            } => LogTerms {
                reference: variational.log_density(x),
                target: target.log_density(x),
                fixed: fixed.log_density(x),
            },
        }
    }

    /// Annealed log density from precomputed endpoint terms.
    #[inline]
    pub fn combine(&self, beta: f64, t: &LogTerms) -> f64 {
        match self {
            AnnealingPath::Linear { .. } => geometric_mix(1.0 - beta, t.reference, beta, t.target),
            AnnealingPath::Concatenated { .. } => {
                if beta <= 0.5 {
                    let local = 2.0 * beta;
                    geometric_mix(1.0 - local, t.reference, local, t.target)
                } else {
                    let local = 2.0 - 2.0 * beta;
                    geometric_mix(1.0 - local, t.fixed, local, t.target)
                }
            }
        }
    }

    /// `log π_β(x)` up to an additive constant.
    ///
    /// Only the endpoints that carry weight are evaluated, so β = 0 never
    /// touches the target and the target chain never touches a reference.
    pub fn log_anneal(&self, beta: f64, x: &[f64]) -> f64 {
        debug_assert!((0.0..=1.0).contains(&beta));
        let (leg, local) = self.leg_of(beta);
        let (reference, target) = match (self, leg) {
            (AnnealingPath::Linear { reference, target }, _) => (reference, target),
            (
                AnnealingPath::Concatenated {
                    variational, target, ..
                },
                Leg::Variational,
            ) => (variational, target),
            (AnnealingPath::Concatenated { fixed, target, .. }, Leg::Fixed) => (fixed, target),
        };
        let r = if local == 1.0 { 0.0 } else { reference.log_density(x) };
        if r == f64::NEG_INFINITY {
            return r;
        }
        let t = if local == 0.0 { 0.0 } else { target.log_density(x) };
        geometric_mix(1.0 - local, r, local, t)
    }

    /// Leg and local β ∈ [0, 1] for a global β. A linear path is reported as
    /// a single variational-side leg; the caller decides what kind of
    /// reference that is. The target point of a concatenated path belongs to
    /// the variational leg.
    pub fn leg_of(&self, beta: f64) -> (Leg, f64) {
        match self {
            AnnealingPath::Linear { .. } => (Leg::Variational, beta),
            AnnealingPath::Concatenated { .. } => {
                if beta <= 0.5 {
                    (Leg::Variational, 2.0 * beta)
                } else {
                    (Leg::Fixed, 2.0 - 2.0 * beta)
                }
            }
        }
    }

    /// `ℓ(x) = log π₁(x) − log q(x)` for the leg containing global β.
    pub fn log_ratio(&self, leg: Leg, t: &LogTerms) -> f64 {
        match (self, leg) {
            (AnnealingPath::Concatenated { .. }, Leg::Fixed) => t.target - t.fixed,
            _ => t.target - t.reference,
        }
    }
}
