//! Target distributions and the built-in problems.
//!
//! A target is a log density on ℝ^d known up to an additive constant. Points
//! outside the support evaluate to −∞; no normaliser is ever computed.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::reference::{DiagGaussian, FullGaussian, ProductDistribution, Reference, Univariate};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

const CHALLENGER_CSV: &str = include_str!("../data/challenger.csv");
const SIMPLE_MIX_CSV: &str = include_str!("../data/simple_mix.csv");

/// Unnormalised log density with an explicit support predicate.
pub trait LogDensity: Send + Sync {
    /// Evaluated only at points where [`LogDensity::in_support`] holds.
    fn log_density(&self, x: &[f64]) -> f64;

    fn in_support(&self, _x: &[f64]) -> bool {
        true
    }
}

struct FnDensity<S, L> {
    support: S,
    logpdf: L,
}

impl<S, L> LogDensity for FnDensity<S, L>
where
    S: Fn(&[f64]) -> bool + Send + Sync,
    L: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn log_density(&self, x: &[f64]) -> f64 {
        (self.logpdf)(x)
    }

    fn in_support(&self, x: &[f64]) -> bool {
        (self.support)(x)
    }
}

/// An immutable target distribution.
#[derive(Clone)]
pub struct TargetModel {
    name: String,
    param_names: Vec<String>,
    density: Arc<dyn LogDensity>,
}

impl fmt::Debug for TargetModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetModel")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .finish()
    }
}

impl TargetModel {
    pub fn new(name: impl Into<String>, param_names: Vec<String>, density: Arc<dyn LogDensity>) -> Self {
        assert!(!param_names.is_empty(), "a target needs at least one coordinate");
        Self {
            name: name.into(),
            param_names,
            density,
        }
    }

    /// Build a target from closures, naming coordinates `x[0]`, `x[1]`, ...
    pub fn from_fn<S, L>(name: impl Into<String>, dim: usize, support: S, logpdf: L) -> Self
    where
        S: Fn(&[f64]) -> bool + Send + Sync + 'static,
        L: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let names = (0..dim).map(|i| format!("x[{i}]")).collect();
        Self::new(name, names, Arc::new(FnDensity { support, logpdf }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn support_check(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().all(|v| v.is_finite()) && self.density.in_support(x)
    }

    /// −∞ exactly when `support_check` fails.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        if !self.support_check(x) {
            return f64::NEG_INFINITY;
        }
        let v = self.density.log_density(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Same target under a different name (used to tag derived problems).
    pub fn renamed(&self, name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..self.clone()
        }
    }
}

/// `log(eᵃ + eᵇ)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Independent normal with common standard deviation `sd` and the given mean.
pub fn make_gaussian_target(mean: Vec<f64>, sd: f64) -> TargetModel {
    let var = sd * sd;
    let dim = mean.len();
    TargetModel::from_fn(
        "gaussian",
        dim,
        |_| true,
        move |x| x.iter().zip(&mean).map(|(&xi, &m)| normal_logpdf(xi, m, var)).sum(),
    )
}

/// Unit-variance normal with mean `mu` in one dimension.
pub fn make_gaussian_shift_target(mu: f64) -> TargetModel {
    make_gaussian_target(vec![mu], 1.0).renamed("gaussian-shift")
}

/// Bivariate N(0, [[1, ρ], [ρ, 1]]).
pub fn make_correlated_gaussian_target(rho: f64) -> Result<TargetModel> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::Domain(format!("correlation {rho} outside (-1, 1)")));
    }
    let det = 1.0 - rho * rho;
    let log_norm = -LN_2PI - 0.5 * det.ln();
    Ok(TargetModel::from_fn(
        "correlated-gaussian",
        2,
        |_| true,
        move |x| {
            let q = (x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1]) / det;
            log_norm - 0.5 * q
        },
    ))
}

/// Equal-weight mixture 0.5 N(−r, var) + 0.5 N(r, var) in one dimension.
pub fn make_normal_mixture_target(r: f64, var: f64) -> TargetModel {
    TargetModel::from_fn(
        "normal-mixture",
        1,
        |_| true,
        move |x| log_add_exp(normal_logpdf(x[0], -r, var), normal_logpdf(x[0], r, var)) - std::f64::consts::LN_2,
    )
}

/// Two narrow modes at ±r with component variance 0.01.
pub fn make_toy_mix_target(r: f64) -> TargetModel {
    make_normal_mixture_target(r, 0.01).renamed("toy-mix")
}

/// Posterior of a success probability under a uniform prior after
/// `successes` out of `m` Bernoulli trials, i.e. Beta(s + 1, m − s + 1).
pub fn make_beta_bernoulli_target(m: u64, successes: u64) -> Result<TargetModel> {
    if successes > m {
        return Err(Error::Domain(format!("{successes} successes out of {m} trials")));
    }
    let s = successes as f64;
    let f = (m - successes) as f64;
    Ok(TargetModel::from_fn(
        "beta-bernoulli",
        1,
        |x| x[0] > 0.0 && x[0] < 1.0,
        move |x| s * x[0].ln() + f * (-x[0]).ln_1p(),
    )
    .renamed(format!("beta-bernoulli-{m}")))
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct ChallengerRow {
    temperature: f64,
    incident: u8,
}

/// The 23 (temperature, incident) pairs of the shuttle O-ring data.
pub fn challenger_data() -> Result<Vec<(f64, bool)>> {
    let mut rdr = csv::Reader::from_reader(CHALLENGER_CSV.as_bytes());
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: ChallengerRow = row?;
        if row.incident > 1 {
            return Err(Error::Dataset {
                name: "challenger".into(),
                msg: format!("incident must be 0 or 1, got {}", row.incident),
            });
        }
        out.push((row.temperature, row.incident == 1));
    }
    Ok(out)
}

/// Logistic regression posterior on (intercept, slope) with independent
/// N(0, 100) priors.
pub fn make_challenger_target() -> Result<TargetModel> {
    let data = challenger_data()?;
    let density = FnDensity {
        support: |_: &[f64]| true,
        logpdf: move |x: &[f64]| {
            let prior = normal_logpdf(x[0], 0.0, 100.0) + normal_logpdf(x[1], 0.0, 100.0);
            let lik: f64 = data
                .iter()
                .map(|&(t, y)| {
                    let eta = x[0] + x[1] * t;
                    // log σ(η) = −softplus(−η), log(1 − σ(η)) = −softplus(η)
                    if y {
                        -softplus(-eta)
                    } else {
                        -softplus(eta)
                    }
                })
                .sum();
            prior + lik
        },
    };
    Ok(TargetModel::new(
        "challenger",
        vec!["intercept".into(), "slope".into()],
        Arc::new(density),
    ))
}

/// Observations of the two-component mixture problem.
pub fn simple_mix_data() -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(SIMPLE_MIX_CSV.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v: f64 = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Dataset {
            name: "simple-mix".into(),
            msg: format!("unparseable row {:?}", rec.position().map(|p| p.line())),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Simple-mix prior: μ₁, μ₂ ~ N(150, 100²), σ₁, σ₂ ~ U(0, 100), weight ~ U(0, 1).
pub fn simple_mix_prior() -> ProductDistribution {
    ProductDistribution::new(vec![
        Univariate::Normal { mean: 150.0, sd: 100.0 },
        Univariate::Normal { mean: 150.0, sd: 100.0 },
        Univariate::Uniform { lo: 0.0, hi: 100.0 },
        Univariate::Uniform { lo: 0.0, hi: 100.0 },
        Univariate::Uniform { lo: 0.0, hi: 1.0 },
    ])
}

/// Two-component normal mixture with the indicators summed out.
/// Coordinates: (μ₁, μ₂, σ₁, σ₂, weight).
pub fn make_simple_mix_target() -> Result<TargetModel> {
    use crate::reference::IidDistribution;
    let data = simple_mix_data()?;
    let prior = simple_mix_prior();
    let density = FnDensity {
        support: |x: &[f64]| x[2] > 0.0 && x[2] < 100.0 && x[3] > 0.0 && x[3] < 100.0 && x[4] > 0.0 && x[4] < 1.0,
        logpdf: move |x: &[f64]| {
            let (m1, m2, s1, s2, w) = (x[0], x[1], x[2], x[3], x[4]);
            let (lw1, lw2) = (w.ln(), (-w).ln_1p());
            let (c1, c2) = (lw1 - s1.ln() - 0.5 * LN_2PI, lw2 - s2.ln() - 0.5 * LN_2PI);
            let (h1, h2) = (0.5 / (s1 * s1), 0.5 / (s2 * s2));
            let lik: f64 = data
                .iter()
                .map(|&y| {
                    let a = c1 - h1 * (y - m1) * (y - m1);
                    let b = c2 - h2 * (y - m2) * (y - m2);
                    log_add_exp(a, b)
                })
                .sum();
            prior.log_density(x) + lik
        },
    };
    Ok(TargetModel::new(
        "simple-mix",
        ["mu1", "mu2", "sigma1", "sigma2", "weight"].map(String::from).to_vec(),
        Arc::new(density),
    ))
}

/// Parameters selecting one of the built-in problems.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    /// N(μ, 1) with fixed reference N(0, 1).
    GaussianShift {
        mu: f64,
    },
    /// N(mean, sd²) with fixed reference N(0, prior_sd²).
    Gaussian {
        mean: f64,
        sd: f64,
        prior_sd: f64,
    },
    /// Bivariate N(0, [[1, ρ], [ρ, 1]]) with fixed reference N(0, 10² I).
    CorrelatedGaussian {
        rho: f64,
    },
    /// 0.5 N(−μ, 1) + 0.5 N(μ, 1) with fixed reference N(0, (2μ)²).
    NormalMixture {
        mu: f64,
    },
    /// Narrow two-mode mixture at ±r with fixed reference N(0, 12²).
    ToyMix {
        r: f64,
    },
    Challenger,
    /// Uniform fixed reference on (0, 1).
    BetaBernoulli {
        m: u64,
        successes: u64,
    },
    SimpleMix,
}

impl ModelSpec {
    pub const NAMES: [&'static str; 8] = [
        "gaussian-shift",
        "gaussian",
        "correlated-gaussian",
        "normal-mixture",
        "toy-mix",
        "challenger",
        "beta-bernoulli",
        "simple-mix",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::GaussianShift { .. } => "gaussian-shift",
            ModelSpec::Gaussian { .. } => "gaussian",
            ModelSpec::CorrelatedGaussian { .. } => "correlated-gaussian",
            ModelSpec::NormalMixture { .. } => "normal-mixture",
            ModelSpec::ToyMix { .. } => "toy-mix",
            ModelSpec::Challenger => "challenger",
            ModelSpec::BetaBernoulli { .. } => "beta-bernoulli",
            ModelSpec::SimpleMix => "simple-mix",
        }
    }

    /// Every built-in problem with its default parameters.
    pub fn defaults() -> Vec<ModelSpec> {
        vec![
            ModelSpec::GaussianShift { mu: 2.0 },
            ModelSpec::Gaussian {
                mean: 3.0,
                sd: 2.0,
                prior_sd: 10.0,
            },
            ModelSpec::CorrelatedGaussian { rho: 0.9 },
            ModelSpec::NormalMixture { mu: 5.0 },
            ModelSpec::ToyMix { r: 10.0 },
            ModelSpec::Challenger,
            ModelSpec::BetaBernoulli { m: 100, successes: 50 },
            ModelSpec::SimpleMix,
        ]
    }
}

/// A target paired with its fixed reference (usually the prior).
#[derive(Clone, Debug)]
pub struct Problem {
    pub target: TargetModel,
    pub fixed_reference: Reference,
}

fn diag_prior(dim: usize, sd: f64) -> Result<Reference> {
    Ok(Reference::GaussianDiag(DiagGaussian::isotropic(dim, 0.0, sd * sd)?))
}

impl Problem {
    pub fn new(target: TargetModel, fixed_reference: Reference) -> Result<Self> {
        if target.dim() != fixed_reference.dim() {
            return Err(Error::Config(format!(
                "target `{}` has dimension {} but the fixed reference has {}",
                target.name(),
                target.dim(),
                fixed_reference.dim()
            )));
        }
        Ok(Self {
            target,
            fixed_reference,
        })
    }

    pub fn builtin(spec: &ModelSpec) -> Result<Self> {
        match *spec {
            ModelSpec::GaussianShift { mu } => {
                if !mu.is_finite() {
                    return Err(Error::Domain("mu must be finite".into()));
                }
                Self::new(make_gaussian_shift_target(mu), diag_prior(1, 1.0)?)
            }
            ModelSpec::Gaussian { mean, sd, prior_sd } => {
                if !(sd > 0.0 && prior_sd > 0.0 && mean.is_finite()) {
                    return Err(Error::Domain("gaussian needs finite mean and positive scales".into()));
                }
                Self::new(make_gaussian_target(vec![mean], sd), diag_prior(1, prior_sd)?)
            }
            ModelSpec::CorrelatedGaussian { rho } => {
                if !(0.0..1.0).contains(&rho) {
                    return Err(Error::Domain(format!("rho {rho} outside [0, 1)")));
                }
                Self::new(make_correlated_gaussian_target(rho)?, diag_prior(2, 10.0)?)
            }
            ModelSpec::NormalMixture { mu } => {
                if !(mu > 0.0 && mu.is_finite()) {
                    return Err(Error::Domain("mixture offset must be positive".into()));
                }
                Self::new(make_normal_mixture_target(mu, 1.0), diag_prior(1, 2.0 * mu)?)
            }
            ModelSpec::ToyMix { r } => {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(Error::Domain("toy-mix offset must be positive".into()));
                }
                Self::new(make_toy_mix_target(r), diag_prior(1, 12.0)?)
            }
            ModelSpec::Challenger => Self::new(make_challenger_target()?, diag_prior(2, 10.0)?),
            ModelSpec::BetaBernoulli { m, successes } => Self::new(
                make_beta_bernoulli_target(m, successes)?,
                Reference::Fixed(Arc::new(ProductDistribution::new(vec![Univariate::Uniform {
                    lo: 0.0,
                    hi: 1.0,
                }]))),
            ),
            ModelSpec::SimpleMix => Self::new(
                make_simple_mix_target()?,
                Reference::Fixed(Arc::new(simple_mix_prior())),
            ),
        }
    }
}

/// Analytic Gaussian target as a reference, handy for tests and oracles.
pub fn gaussian_reference(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Reference> {
    Ok(Reference::GaussianFull(FullGaussian::new(mean, cov)?))
}
