//! Local exploration: univariate slice sampling with the doubling procedure
//! and shrinkage, applied one coordinate at a time.

use rand::Rng as _;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::path::AnnealingPath;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SliceConfig {
    /// Initial interval width `w`.
    pub initial_width: f64,
    /// Maximum number of doublings `p`.
    pub max_doublings: u32,
    /// Full coordinate sweeps per call to [`explore`].
    pub sweeps_per_exploration: u32,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            initial_width: 1.0,
            max_doublings: 20,
            sweeps_per_exploration: 1,
        }
    }
}

impl SliceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_width.is_finite() && self.initial_width > 0.0) {
            return Err(Error::Config(format!(
                "slice initial_width must be finite and positive, got {}",
                self.initial_width
            )));
        }
        if self.max_doublings > 60 {
            return Err(Error::Config("slice max_doublings must be at most 60".into()));
        }
        if self.sweeps_per_exploration == 0 {
            return Err(Error::Config("slice sweeps_per_exploration must be at least 1".into()));
        }
        Ok(())
    }
}

/// One slice update of coordinate `coord` of `x`, in place.
///
/// `current` must be `logpdf(x)` and finite. Returns the log density at the
/// new point. Intervals are grown by doubling and the candidate is accepted
/// only if it passes the doubling acceptance test, which keeps the update
/// reversible with respect to `logpdf`.
pub fn slice_update_coord<F>(
    logpdf: &mut F,
    x: &mut [f64],
    coord: usize,
    current: f64,
    cfg: &SliceConfig,
    rng: &mut Rng,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !current.is_finite() {
        return Err(Error::Contract(format!(
            "slice update started from a point with log density {current}"
        )));
    }
    let x0 = x[coord];
    let w = cfg.initial_width;
    let e: f64 = rng.sample(Exp1);
    let level = current - e;

    let mut eval = |x: &mut [f64], v: f64| -> f64 {
        x[coord] = v;
        logpdf(x)
    };

    // doubling
    let mut left = x0 - w * rng.random::<f64>();
    let mut right = left + w;
    let mut f_left = eval(x, left);
    let mut f_right = eval(x, right);
    let mut k = cfg.max_doublings;
    while k > 0 && (level < f_left || level < f_right) {
        let width = right - left;
        if rng.random::<f64>() < 0.5 {
            left -= width;
            f_left = eval(x, left);
        } else {
            right += width;
            f_right = eval(x, right);
        }
        k -= 1;
    }

    // shrinkage
    let (mut lo, mut hi) = (left, right);
    loop {
        let x1 = lo + (hi - lo) * rng.random::<f64>();
        let f1 = eval(x, x1);
        if level < f1 && doubling_accepts(&mut eval, x, x0, x1, level, left, right, w) {
            x[coord] = x1;
            return Ok(f1);
        }
        if x1 < x0 {
            lo = x1;
        } else {
            hi = x1;
        }
        if !(hi - lo > f64::EPSILON * x0.abs().max(1.0)) {
            // interval collapsed onto the current point
            x[coord] = x0;
            return Ok(current);
        }
    }
}

/// Acceptance test for a candidate drawn from a doubled interval.
#[allow(clippy::too_many_arguments)]
fn doubling_accepts<E>(
    eval: &mut E,
    x: &mut [f64],
    x0: f64,
    x1: f64,
    level: f64,
    mut left: f64,
    mut right: f64,
    w: f64,
) -> bool
where
    E: FnMut(&mut [f64], f64) -> f64,
{
    let mut differ = false;
    while right - left > 1.1 * w {
        let mid = 0.5 * (left + right);
        if (x0 < mid) != (x1 < mid) {
            differ = true;
        }
        if x1 < mid {
            right = mid;
        } else {
            left = mid;
        }
        if differ && level >= eval(x, left) && level >= eval(x, right) {
            return false;
        }
    }
    true
}

/// One or more full sweeps of coordinate-wise slice updates targeting
/// `π_β`, coordinates visited in index order.
pub fn explore(path: &AnnealingPath, beta: f64, x: &mut [f64], cfg: &SliceConfig, rng: &mut Rng) -> Result<f64> {
    let mut logpdf = |y: &[f64]| path.log_anneal(beta, y);
    let mut current = logpdf(x);
    for _ in 0..cfg.sweeps_per_exploration {
        for coord in 0..x.len() {
            current = slice_update_coord(&mut logpdf, x, coord, current, cfg, rng)?;
        }
    }
    Ok(current)
}
