//! Reference distributions: i.i.d.-sampleable, pointwise-evaluable laws used
//! at the β = 0 end of an annealing path.
//!
//! Gaussian references are stored in mean parameterisation (mean vector plus
//! variances or covariance). Moment matching only ever produces moments, so
//! natural parameters are never formed.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

/// Lower bound applied to every fitted variance.
pub const VARIANCE_FLOOR: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    FixedClosedForm,
    GaussianDiag,
    GaussianFull,
}

impl ReferenceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReferenceKind::FixedClosedForm => "fixed-closed-form",
            ReferenceKind::GaussianDiag => "gaussian-diag",
            ReferenceKind::GaussianFull => "gaussian-full",
        }
    }
}

impl std::str::FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-closed-form" => Ok(Self::FixedClosedForm),
            "gaussian-diag" => Ok(Self::GaussianDiag),
            "gaussian-full" => Ok(Self::GaussianFull),
            other => Err(Error::Config(format!("unknown reference kind `{other}`"))),
        }
    }
}

/// A closed-form law with exact log density and an i.i.d. sampler.
pub trait IidDistribution: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
    fn sample(&self, rng: &mut Rng) -> Vec<f64>;
    /// Named parameters, for reporting.
    fn params(&self) -> Vec<(String, f64)>;
}

/// One coordinate of a [`ProductDistribution`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Univariate {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Univariate {
    pub fn log_density(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Univariate::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
            }
            Univariate::Uniform { lo, hi } => {
                if x > lo && x < hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            Univariate::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            Univariate::Uniform { lo, hi } => loop {
                let x = lo + (hi - lo) * rng.random::<f64>();
                // open interval
                if x > lo && x < hi {
                    break x;
                }
            },
        }
    }
}

/// Independent product of univariate laws (typical of a prior).
#[derive(Clone, Debug, PartialEq)]
pub struct ProductDistribution {
    pub components: Vec<Univariate>,
}

impl ProductDistribution {
    pub fn new(components: Vec<Univariate>) -> Self {
        Self { components }
    }
}

impl IidDistribution for ProductDistribution {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, &xi) in self.components.iter().zip(x) {
            acc += c.log_density(xi);
            if acc == f64::NEG_INFINITY {
                break;
            }
        }
        acc
    }

    fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.components.iter().map(|c| c.sample(rng)).collect()
    }

    fn params(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (i, c) in self.components.iter().enumerate() {
            match *c {
                Univariate::Normal { mean, sd } => {
                    out.push((format!("normal_mean[{i}]"), mean));
                    out.push((format!("normal_sd[{i}]"), sd));
                }
                Univariate::Uniform { lo, hi } => {
                    out.push((format!("uniform_lo[{i}]"), lo));
                    out.push((format!("uniform_hi[{i}]"), hi));
                }
            }
        }
        out
    }
}

/// Gaussian with diagonal covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl DiagGaussian {
    /// Variances below [`VARIANCE_FLOOR`] are clamped.
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != var.len() {
            return Err(Error::Domain(format!(
                "mean has length {} but variance has length {}",
                mean.len(),
                var.len()
            )));
        }
        if mean.iter().chain(&var).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite Gaussian parameter".into()));
        }
        let var = var.into_iter().map(|v| v.max(VARIANCE_FLOOR)).collect();
        Ok(Self { mean, var })
    }

    pub fn isotropic(dim: usize, mean: f64, var: f64) -> Result<Self> {
        Self::new(vec![mean; dim], vec![var; dim])
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&xi, &m), &v) in x.iter().zip(&self.mean).zip(&self.var) {
            if !xi.is_finite() {
                return f64::NEG_INFINITY;
            }
            let d = xi - m;
            acc -= 0.5 * (LN_2PI + v.ln() + d * d / v);
        }
        acc
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(&m, &v)| {
                let z: f64 = rng.sample(StandardNormal);
                m + v.sqrt() * z
            })
            .collect()
    }
}

/// Gaussian with dense covariance and a cached lower Cholesky factor.
#[derive(Clone, Debug, PartialEq)]
pub struct FullGaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl FullGaussian {
    /// Symmetrises `cov`; on Cholesky failure retries once with
    /// `1e-8 * trace / dim` added to the diagonal.
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Domain(format!(
                "covariance must be {d}x{d}, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite Gaussian parameter".into()));
        }
        let mut cov = (&cov + cov.transpose()) * 0.5;
        let chol = match cov.clone().cholesky() {
            Some(c) => c,
            None => {
                let jitter = 1e-8 * cov.trace().abs().max(VARIANCE_FLOOR) / d as f64;
                for i in 0..d {
                    cov[(i, i)] += jitter;
                }
                cov.clone()
                    .cholesky()
                    .ok_or_else(|| Error::Domain("covariance is not positive definite after jitter".into()))?
            }
        };
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean: DVector::from_vec(mean),
            cov,
            chol: l,
            log_det,
        })
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let d = self.mean.len();
        let diff = DVector::from_iterator(d, x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let z = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has positive diagonal");
        -0.5 * (d as f64 * LN_2PI + self.log_det + z.norm_squared())
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let d = self.mean.len();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (&self.mean + &self.chol * z).as_slice().to_vec()
    }
}

/// A reference distribution.
#[derive(Clone, Debug)]
pub enum Reference {
    Fixed(Arc<dyn IidDistribution>),
    GaussianDiag(DiagGaussian),
    GaussianFull(FullGaussian),
}

impl Reference {
    /// The default starting point for variational tuning: N(0, 100 I).
    pub fn initial_variational(kind: ReferenceKind, dim: usize) -> Result<Self> {
        match kind {
            ReferenceKind::GaussianDiag => Ok(Self::GaussianDiag(DiagGaussian::isotropic(dim, 0.0, 100.0)?)),
            ReferenceKind::GaussianFull => Ok(Self::GaussianFull(FullGaussian::new(
                vec![0.0; dim],
                DMatrix::identity(dim, dim) * 100.0,
            )?)),
            ReferenceKind::FixedClosedForm => Err(Error::Config(
                "a variational reference must be a Gaussian family".into(),
            )),
        }
    }

    pub fn kind(&self) -> ReferenceKind {
        match self {
            Reference::Fixed(_) => ReferenceKind::FixedClosedForm,
            Reference::GaussianDiag(_) => ReferenceKind::GaussianDiag,
            Reference::GaussianFull(_) => ReferenceKind::GaussianFull,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Reference::Fixed(d) => d.dim(),
            Reference::GaussianDiag(g) => g.mean.len(),
            Reference::GaussianFull(g) => g.mean.len(),
        }
    }

    /// Normalised log density; non-finite input maps to −∞.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            Reference::Fixed(d) => {
                if x.iter().any(|v| !v.is_finite()) {
                    f64::NEG_INFINITY
                } else {
                    d.log_density(x)
                }
            }
            Reference::GaussianDiag(g) => g.log_density(x),
            Reference::GaussianFull(g) => g.log_density(x),
        }
    }

    pub fn sample_iid(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            Reference::Fixed(d) => d.sample(rng),
            Reference::GaussianDiag(g) => g.sample(rng),
            Reference::GaussianFull(g) => g.sample(rng),
        }
    }

    /// Mean vector for Gaussian references.
    pub fn mean(&self) -> Option<&[f64]> {
        match self {
            Reference::Fixed(_) => None,
            Reference::GaussianDiag(g) => Some(g.mean()),
            Reference::GaussianFull(g) => Some(g.mean()),
        }
    }

    /// Marginal variances for Gaussian references.
    pub fn marginal_variances(&self) -> Option<Vec<f64>> {
        match self {
            Reference::Fixed(_) => None,
            Reference::GaussianDiag(g) => Some(g.var().to_vec()),
            Reference::GaussianFull(g) => Some(g.cov().diagonal().iter().copied().collect()),
        }
    }

    /// Flat `(name, value)` list used by the per-round parameter CSV.
    pub fn params(&self) -> Vec<(String, f64)> {
        match self {
            Reference::Fixed(d) => d.params(),
            Reference::GaussianDiag(g) => {
                let mut out: Vec<_> = g
                    .mean
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| (format!("mean[{i}]"), m))
                    .collect();
                out.extend(g.var.iter().enumerate().map(|(i, &v)| (format!("var[{i}]"), v)));
                out
            }
            Reference::GaussianFull(g) => {
                let d = g.mean.len();
                let mut out: Vec<_> = g
                    .mean
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| (format!("mean[{i}]"), m))
                    .collect();
                for i in 0..d {
                    for j in i..d {
                        out.push((format!("cov[{i},{j}]"), g.cov[(i, j)]));
                    }
                }
                out
            }
        }
    }
}

/// Exact running sums of the Gaussian sufficient statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentAccumulator {
    dim: usize,
    full: bool,
    count: u64,
    sum_x: Vec<f64>,
    /// `dim` entries (diag) or row-major `dim * dim` (full).
    sum_xx: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize, kind: ReferenceKind) -> Self {
        let full = kind == ReferenceKind::GaussianFull;
        Self {
            dim,
            full,
            count: 0,
            sum_x: vec![0.0; dim],
            sum_xx: vec![0.0; if full { dim * dim } else { dim }],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.count += 1;
        for (s, &xi) in self.sum_x.iter_mut().zip(x) {
            *s += xi;
        }
        if self.full {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    self.sum_xx[i * self.dim + j] += x[i] * x[j];
                }
            }
        } else {
            for (s, &xi) in self.sum_xx.iter_mut().zip(x) {
                *s += xi * xi;
            }
        }
    }

    /// Associative merge; callers merge in chain order for reproducibility.
    pub fn merge(&mut self, other: &MomentAccumulator) {
        assert_eq!(self.dim, other.dim);
        assert_eq!(self.full, other.full);
        self.count += other.count;
        for (a, b) in self.sum_x.iter_mut().zip(&other.sum_x) {
            *a += b;
        }
        for (a, b) in self.sum_xx.iter_mut().zip(&other.sum_xx) {
            *a += b;
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sum_x.iter().map(|s| s / n).collect()
    }

    /// Unbiased (divisor n − 1) variances.
    pub fn variances(&self) -> Vec<f64> {
        let n = self.count as f64;
        let mean = self.mean();
        (0..self.dim)
            .map(|i| {
                let sxx = if self.full {
                    self.sum_xx[i * self.dim + i]
                } else {
                    self.sum_xx[i]
                };
                (sxx - n * mean[i] * mean[i]) / (n - 1.0)
            })
            .collect()
    }

    /// Unbiased covariance; `None` for diagonal accumulators.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        if !self.full {
            return None;
        }
        let n = self.count as f64;
        let mean = self.mean();
        let d = self.dim;
        Some(DMatrix::from_fn(d, d, |i, j| {
            (self.sum_xx[i * d + j] - n * mean[i] * mean[j]) / (n - 1.0)
        }))
    }
}

/// Fit a Gaussian reference by matching the accumulated moments.
///
/// Returns `prev` unchanged when there are too few samples (fewer than 2 for
/// diagonal, fewer than `dim + 1` for full covariance) or when a full fit is
/// requested from a diagonal accumulator.
pub fn moment_match_update(acc: &MomentAccumulator, kind: ReferenceKind, prev: &Reference) -> Reference {
    match kind {
        ReferenceKind::GaussianDiag => {
            if acc.count < 2 {
                return prev.clone();
            }
            let var = acc.variances().into_iter().map(|v| v.max(VARIANCE_FLOOR)).collect();
            match DiagGaussian::new(acc.mean(), var) {
                Ok(g) => Reference::GaussianDiag(g),
                Err(_) => prev.clone(),
            }
        }
        ReferenceKind::GaussianFull => {
            if acc.count < acc.dim as u64 + 1 {
                return prev.clone();
            }
            let Some(mut cov) = acc.covariance() else {
                return prev.clone();
            };
            for i in 0..acc.dim {
                cov[(i, i)] = cov[(i, i)].max(VARIANCE_FLOOR);
            }
            match FullGaussian::new(acc.mean(), cov) {
                Ok(g) => Reference::GaussianFull(g),
                Err(_) => prev.clone(),
            }
        }
        ReferenceKind::FixedClosedForm => prev.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSequence;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn standard_normal_at_mode() {
        let r = Reference::GaussianDiag(DiagGaussian::isotropic(1, 0.0, 1.0).unwrap());
        assert!(close(r.log_density(&[0.0]), -0.5 * (2.0 * PI).ln(), 1e-14));
        assert!(close(r.log_density(&[0.0]), -0.918_938_533_204_672_7, 1e-12));
    }

    #[test]
    fn full_identity_closed_form() {
        let r = Reference::GaussianFull(FullGaussian::new(vec![0.0, 0.0], DMatrix::identity(2, 2)).unwrap());
        assert!(close(r.log_density(&[1.0, 1.0]), -(2.0 * PI).ln() - 1.0, 1e-12));
    }

    #[test]
    fn diag_variance_four() {
        let r = Reference::GaussianDiag(DiagGaussian::new(vec![1.5], vec![4.0]).unwrap());
        let expected = -0.5 * (2.0 * PI * 4.0).ln() - 0.5;
        assert!(close(r.log_density(&[3.5]), expected, 1e-12));
    }

    #[test]
    fn non_finite_input_is_neg_inf() {
        let r = Reference::GaussianDiag(DiagGaussian::isotropic(2, 0.0, 1.0).unwrap());
        assert_eq!(r.log_density(&[f64::NAN, 0.0]), f64::NEG_INFINITY);
        let f = Reference::GaussianFull(FullGaussian::new(vec![0.0], DMatrix::identity(1, 1)).unwrap());
        assert_eq!(f.log_density(&[f64::INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn two_point_fit_uses_unbiased_divisor() {
        let mut acc = MomentAccumulator::new(1, ReferenceKind::GaussianDiag);
        acc.push(&[-1.0]);
        acc.push(&[1.0]);
        let prev = Reference::initial_variational(ReferenceKind::GaussianDiag, 1).unwrap();
        let fit = moment_match_update(&acc, ReferenceKind::GaussianDiag, &prev);
        assert_eq!(fit.mean().unwrap(), &[0.0]);
        assert!(close(fit.marginal_variances().unwrap()[0], 2.0, 1e-15));
    }

    #[test]
    fn constant_samples_clamp_to_floor() {
        for kind in [ReferenceKind::GaussianDiag, ReferenceKind::GaussianFull] {
            let mut acc = MomentAccumulator::new(2, kind);
            for _ in 0..100 {
                acc.push(&[0.3, -2.0]);
            }
            let prev = Reference::initial_variational(kind, 2).unwrap();
            let fit = moment_match_update(&acc, kind, &prev);
            assert_eq!(fit.kind(), kind);
            for v in fit.marginal_variances().unwrap() {
                assert!((VARIANCE_FLOOR..1e-6).contains(&v), "{v}");
            }
            assert!(fit.log_density(&[0.3, -2.0]).is_finite());
        }
    }

    #[test]
    fn too_few_samples_keeps_previous() {
        let prev = Reference::initial_variational(ReferenceKind::GaussianFull, 3).unwrap();
        let mut acc = MomentAccumulator::new(3, ReferenceKind::GaussianFull);
        for i in 0..3 {
            acc.push(&[i as f64, 1.0, 2.0 * i as f64]);
        }
        let fit = moment_match_update(&acc, ReferenceKind::GaussianFull, &prev);
        assert_eq!(fit.mean().unwrap(), prev.mean().unwrap());

        let mut one = MomentAccumulator::new(1, ReferenceKind::GaussianDiag);
        one.push(&[5.0]);
        let p1 = Reference::initial_variational(ReferenceKind::GaussianDiag, 1).unwrap();
        assert_eq!(
            moment_match_update(&one, ReferenceKind::GaussianDiag, &p1)
                .mean()
                .unwrap(),
            &[0.0]
        );
    }

    #[test]
    fn sampling_is_deterministic() {
        let r = Reference::GaussianFull(
            FullGaussian::new(vec![1.0, 2.0], DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0])).unwrap(),
        );
        let s = SeedSequence::new(9);
        let mut a = s.rng();
        let mut b = s.rng();
        for _ in 0..50 {
            assert_eq!(r.sample_iid(&mut a), r.sample_iid(&mut b));
        }
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let r = Reference::GaussianDiag(DiagGaussian::isotropic(3, 0.0, 1.0).unwrap());
        let mut rng = SeedSequence::new(1).rng();
        let n = 100_000;
        let mut sum = [0.0; 3];
        for _ in 0..n {
            for (s, x) in sum.iter_mut().zip(r.sample_iid(&mut rng)) {
                *s += x;
            }
        }
        let bound = 4.0 / (n as f64).sqrt();
        for s in sum {
            assert!((s / n as f64).abs() < bound);
        }
    }

    #[test]
    fn full_covariance_correlation() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let r = Reference::GaussianFull(FullGaussian::new(vec![0.0, 0.0], cov).unwrap());
        let mut rng = SeedSequence::new(2).rng();
        let mut acc = MomentAccumulator::new(2, ReferenceKind::GaussianFull);
        for _ in 0..100_000 {
            acc.push(&r.sample_iid(&mut rng));
        }
        let c = acc.covariance().unwrap();
        let corr = c[(0, 1)] / (c[(0, 0)] * c[(1, 1)]).sqrt();
        assert!((corr - 0.9).abs() < 0.02, "{corr}");
    }

    #[test]
    fn fit_recovers_wide_gaussian() {
        let truth = Reference::GaussianDiag(DiagGaussian::new(vec![3.0], vec![25.0]).unwrap());
        let mut rng = SeedSequence::new(3).rng();
        let mut acc = MomentAccumulator::new(1, ReferenceKind::GaussianDiag);
        for _ in 0..100_000 {
            acc.push(&truth.sample_iid(&mut rng));
        }
        let prev = Reference::initial_variational(ReferenceKind::GaussianDiag, 1).unwrap();
        let fit = moment_match_update(&acc, ReferenceKind::GaussianDiag, &prev);
        assert!((fit.mean().unwrap()[0] - 3.0).abs() < 0.1);
        assert!((fit.marginal_variances().unwrap()[0].sqrt() - 5.0).abs() < 0.1);
    }

    #[test]
    fn jitter_rescues_singular_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = FullGaussian::new(vec![0.0, 0.0], cov).unwrap();
        assert!(g.log_density(&[0.1, 0.1]).is_finite());
        assert!(g.cov()[(0, 0)] > 1.0);
    }

    #[test]
    fn product_prior_support() {
        let p = ProductDistribution::new(vec![
            Univariate::Normal { mean: 0.0, sd: 2.0 },
            Univariate::Uniform { lo: 0.0, hi: 1.0 },
        ]);
        assert!(p.log_density(&[0.0, 0.5]).is_finite());
        assert_eq!(p.log_density(&[0.0, 1.5]), f64::NEG_INFINITY);
        let mut rng = SeedSequence::new(4).rng();
        for _ in 0..1000 {
            let x = p.sample(&mut rng);
            assert!(p.log_density(&x).is_finite());
        }
    }
}
