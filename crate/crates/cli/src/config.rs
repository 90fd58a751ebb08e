//! Configuration files.
//!
//! A config is TOML with the sections `[model]`, `[run]`, `[sampler]`,
//! `[compare]`, `[idealized]` and `[bounds]`; every key is optional and has a
//! default. [`Resolved`] is the fully defaulted form, which is what the
//! manifest echoes, so a manifest can be fed back in as a config.

use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::Spanned;
use vpt::adapt::{AdaptConfig, Topology};
use vpt::explore::SliceConfig;
use vpt::idealized::IdealizedSpec;
use vpt::model::ModelSpec;
use vpt::nrpt::NrptConfig;
use vpt::reference::ReferenceKind;

/// A config problem, located in the source where possible.
#[derive(Debug)]
pub struct ConfigError {
    pub file: String,
    /// 1-based line and column.
    pub at: Option<(usize, usize)>,
    pub field: Option<String>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file)?;
        if let Some((line, col)) = self.at {
            write!(f, ":{line}:{col}")?;
        }
        write!(f, ": ")?;
        if let Some(field) = &self.field {
            write!(f, "field `{field}`: ")?;
        }
        write!(f, "{}", self.msg)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    run: Option<RawRun>,
    sampler: Option<RawSampler>,
    compare: Option<RawCompare>,
    idealized: Option<RawIdealized>,
    bounds: Option<RawBounds>,
    /// Written by the manifest; ignored on input.
    #[allow(dead_code)]
    provenance: Option<toml::Table>,
}

type S<T> = Option<Spanned<T>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: Spanned<String>,
    mu: S<f64>,
    mean: S<f64>,
    sd: S<f64>,
    prior_sd: S<f64>,
    rho: S<f64>,
    r: S<f64>,
    m: S<u64>,
    successes: S<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    topology: S<String>,
    reference_kind: S<String>,
    chains_per_leg: S<i64>,
    rounds: S<i64>,
    seed: Option<u64>,
    replicates: S<i64>,
    output_dir: Option<PathBuf>,
    burn_in_rounds: S<i64>,
    trace_all_rounds: Option<bool>,
    record_barrier: Option<bool>,
    initial_variance: S<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampler {
    initial_width: S<f64>,
    max_doublings: S<i64>,
    sweeps_per_exploration: S<i64>,
    iid_reference_draws: Option<bool>,
    parallel_chains: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompare {
    topologies: S<Vec<Spanned<String>>>,
    reference_extra_rounds: S<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIdealized {
    iterations: S<i64>,
    rates: S<Vec<f64>>,
    variational_rates: S<Vec<f64>>,
    fixed_rates: S<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    rhos: S<Vec<f64>>,
    mus: S<Vec<f64>>,
    n_samples: S<i64>,
    measure: Option<bool>,
}

/// Built-in model with every parameter filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSection {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub successes: Option<u64>,
}

impl ModelSection {
    pub fn spec(&self) -> ModelSpec {
        let f = |v: Option<f64>| v.expect("filled in by resolve");
        match self.name.as_str() {
            "gaussian-shift" => ModelSpec::GaussianShift { mu: f(self.mu) },
            "gaussian" => ModelSpec::Gaussian {
                mean: f(self.mean),
                sd: f(self.sd),
                prior_sd: f(self.prior_sd),
            },
            "correlated-gaussian" => ModelSpec::CorrelatedGaussian { rho: f(self.rho) },
            "normal-mixture" => ModelSpec::NormalMixture { mu: f(self.mu) },
            "toy-mix" => ModelSpec::ToyMix { r: f(self.r) },
            "challenger" => ModelSpec::Challenger,
            "beta-bernoulli" => ModelSpec::BetaBernoulli {
                m: self.m.unwrap(),
                successes: self.successes.unwrap(),
            },
            "simple-mix" => ModelSpec::SimpleMix,
            other => unreachable!("model `{other}` passed validation"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSection {
    /// A sampler topology or `idealized`.
    pub topology: String,
    pub reference_kind: ReferenceKind,
    pub chains_per_leg: usize,
    pub rounds: u32,
    pub seed: u64,
    pub replicates: u64,
    pub output_dir: PathBuf,
    pub burn_in_rounds: u32,
    pub trace_all_rounds: bool,
    pub record_barrier: bool,
    pub initial_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplerSection {
    pub initial_width: f64,
    pub max_doublings: u32,
    pub sweeps_per_exploration: u32,
    pub iid_reference_draws: bool,
    pub parallel_chains: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareSection {
    pub topologies: Vec<Topology>,
    /// The KS reference run uses `rounds + reference_extra_rounds` rounds.
    pub reference_extra_rounds: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdealizedSection {
    pub iterations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variational_rates: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_rates: Option<Vec<f64>>,
}

impl IdealizedSection {
    /// Explicit rates, if the config gives any.
    pub fn explicit_spec(&self) -> Option<IdealizedSpec> {
        if let Some(r) = &self.rates {
            return Some(IdealizedSpec::single(r.clone(), self.iterations));
        }
        match (&self.variational_rates, &self.fixed_rates) {
            (Some(v), Some(f)) => Some(IdealizedSpec::two(v.clone(), f.clone(), self.iterations)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsSection {
    pub rhos: Vec<f64>,
    pub mus: Vec<f64>,
    pub n_samples: u64,
    /// Also run a stabilized sampler on each example and report its GCB.
    pub measure: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    pub run: RunSection,
    pub sampler: SamplerSection,
    pub compare: CompareSection,
    pub idealized: IdealizedSection,
    pub bounds: BoundsSection,
}

impl Resolved {
    pub fn topology(&self) -> Option<Topology> {
        self.run.topology.parse().ok()
    }

    /// Sampler settings for one topology.
    pub fn adapt(&self, topology: Topology) -> AdaptConfig {
        AdaptConfig {
            topology,
            reference_kind: self.run.reference_kind,
            variational_edges: self.run.chains_per_leg,
            fixed_edges: self.run.chains_per_leg,
            rounds: self.run.rounds,
            burn_in_rounds: self.run.burn_in_rounds,
            trace_all_rounds: self.run.trace_all_rounds,
            record_barrier: self.run.record_barrier,
            initial_variance: self.run.initial_variance,
            nrpt: NrptConfig {
                slice: SliceConfig {
                    initial_width: self.sampler.initial_width,
                    max_doublings: self.sampler.max_doublings,
                    sweeps_per_exploration: self.sampler.sweeps_per_exploration,
                },
                iid_reference_draws: self.sampler.iid_reference_draws,
                parallel: self.sampler.parallel_chains,
                record_ensemble: self.run.record_barrier,
            },
        }
    }
}

/// Parser state: source text for locating errors.
struct Ctx<'a> {
    file: &'a str,
    src: &'a str,
}

impl Ctx<'_> {
    fn line_col(&self, offset: usize) -> (usize, usize) {
        let before = &self.src[..offset.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
        (line, col)
    }

    /// `section.key` of the assignment covering `offset`.
    fn field_at(&self, offset: usize) -> Option<String> {
        let (line, _) = self.line_col(offset);
        let lines: Vec<&str> = self.src.lines().collect();
        let text = lines.get(line - 1)?;
        let key = text.split_once('=')?.0.trim();
        if key.is_empty() || key.starts_with('[') {
            return None;
        }
        let section = lines[..line - 1]
            .iter()
            .rev()
            .map(|l| l.trim())
            .find(|l| l.starts_with('[') && !l.starts_with("[["))
            .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
        Some(match section {
            Some(s) => format!("{s}.{key}"),
            None => key.to_string(),
        })
    }

    fn err(&self, span: Option<Range<usize>>, field: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError {
            file: self.file.to_string(),
            at: span.map(|s| self.line_col(s.start)),
            field: Some(field.to_string()),
            msg: msg.into(),
        }
    }

    fn int<T: TryFrom<i64>>(&self, v: &S<i64>, field: &str, min: i64, max: i64, default: T) -> Result<T, ConfigError> {
        match v {
            None => Ok(default),
            Some(s) => {
                let x = *s.get_ref();
                if x < min || x > max {
                    return Err(self.err(Some(s.span()), field, format!("{x} is outside [{min}, {max}]")));
                }
                T::try_from(x).map_err(|_| self.err(Some(s.span()), field, format!("{x} does not fit")))
            }
        }
    }

    fn rates(&self, v: &S<Vec<f64>>, field: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(s) = v else { return Ok(None) };
        let r = s.get_ref();
        if r.is_empty() {
            return Err(self.err(Some(s.span()), field, "needs at least one rate"));
        }
        if let Some(bad) = r.iter().find(|x| !(0.0..1.0).contains(*x)) {
            return Err(self.err(Some(s.span()), field, format!("rate {bad} is outside [0, 1)")));
        }
        Ok(Some(r.clone()))
    }
}

const MODEL_PARAMS: [(&str, &[&str]); 8] = [
    ("gaussian-shift", &["mu"]),
    ("gaussian", &["mean", "sd", "prior_sd"]),
    ("correlated-gaussian", &["rho"]),
    ("normal-mixture", &["mu"]),
    ("toy-mix", &["r"]),
    ("challenger", &[]),
    ("beta-bernoulli", &["m", "successes"]),
    ("simple-mix", &[]),
];

fn resolve_model(cx: &Ctx, raw: &RawModel) -> Result<ModelSection, ConfigError> {
    let name = raw.name.get_ref().as_str();
    let Some((_, allowed)) = MODEL_PARAMS.iter().find(|(n, _)| *n == name) else {
        return Err(cx.err(
            Some(raw.name.span()),
            "model.name",
            format!(
                "unknown model `{name}` (expected one of {})",
                ModelSpec::NAMES.join(", ")
            ),
        ));
    };
    let given: [(&str, Option<Range<usize>>); 8] = [
        ("mu", raw.mu.as_ref().map(|s| s.span())),
        ("mean", raw.mean.as_ref().map(|s| s.span())),
        ("sd", raw.sd.as_ref().map(|s| s.span())),
        ("prior_sd", raw.prior_sd.as_ref().map(|s| s.span())),
        ("rho", raw.rho.as_ref().map(|s| s.span())),
        ("r", raw.r.as_ref().map(|s| s.span())),
        ("m", raw.m.as_ref().map(|s| s.span())),
        ("successes", raw.successes.as_ref().map(|s| s.span())),
    ];
    for (key, span) in given {
        if span.is_some() && !allowed.contains(&key) {
            return Err(cx.err(
                span,
                &format!("model.{key}"),
                format!("model `{name}` has no parameter `{key}`"),
            ));
        }
    }
    let val = |v: &S<f64>| v.as_ref().map(|s| *s.get_ref());
    let span = |v: &S<f64>| v.as_ref().map(|s| s.span());
    let positive = |v: &S<f64>, key: &str, default: f64| -> Result<Option<f64>, ConfigError> {
        let x = val(v).unwrap_or(default);
        if !(x.is_finite() && x > 0.0) {
            return Err(cx.err(span(v), &format!("model.{key}"), format!("must be positive, got {x}")));
        }
        Ok(Some(x))
    };
    let mut out = ModelSection {
        name: name.to_string(),
        mu: None,
        mean: None,
        sd: None,
        prior_sd: None,
        rho: None,
        r: None,
        m: None,
        successes: None,
    };
    match name {
        "gaussian-shift" => {
            let mu = val(&raw.mu).unwrap_or(2.0);
            if !mu.is_finite() {
                return Err(cx.err(span(&raw.mu), "model.mu", "must be finite"));
            }
            out.mu = Some(mu);
        }
        "gaussian" => {
            let mean = val(&raw.mean).unwrap_or(3.0);
            if !mean.is_finite() {
                return Err(cx.err(span(&raw.mean), "model.mean", "must be finite"));
            }
            out.mean = Some(mean);
            out.sd = positive(&raw.sd, "sd", 2.0)?;
            out.prior_sd = positive(&raw.prior_sd, "prior_sd", 10.0)?;
        }
        "correlated-gaussian" => {
            let rho = val(&raw.rho).unwrap_or(0.9);
            if !(0.0..1.0).contains(&rho) {
                return Err(cx.err(span(&raw.rho), "model.rho", format!("{rho} is outside [0, 1)")));
            }
            out.rho = Some(rho);
        }
        "normal-mixture" => out.mu = positive(&raw.mu, "mu", 5.0)?,
        "toy-mix" => out.r = positive(&raw.r, "r", 10.0)?,
        "beta-bernoulli" => {
            let m = raw.m.as_ref().map_or(100, |s| *s.get_ref());
            if m == 0 {
                return Err(cx.err(raw.m.as_ref().map(|s| s.span()), "model.m", "must be at least 1"));
            }
            let k = raw.successes.as_ref().map_or(m / 2, |s| *s.get_ref());
            if k > m {
                return Err(cx.err(
                    raw.successes.as_ref().map(|s| s.span()),
                    "model.successes",
                    format!("{k} exceeds m = {m}"),
                ));
            }
            out.m = Some(m);
            out.successes = Some(k);
        }
        _ => {}
    }
    Ok(out)
}

const TOPOLOGY_NAMES: &str = "fixed-only, variational-only, stabilized, idealized";

fn resolve(cx: &Ctx, raw: RawConfig) -> Result<Resolved, ConfigError> {
    let model = raw.model.as_ref().map(|m| resolve_model(cx, m)).transpose()?;

    let run = raw.run.unwrap_or_default();
    let topology = match &run.topology {
        None => "stabilized".to_string(),
        Some(s) => {
            let t = s.get_ref();
            if t != "idealized" && t.parse::<Topology>().is_err() {
                return Err(cx.err(
                    Some(s.span()),
                    "run.topology",
                    format!("unknown topology `{t}` (expected one of {TOPOLOGY_NAMES})"),
                ));
            }
            t.clone()
        }
    };
    let reference_kind = match &run.reference_kind {
        None => ReferenceKind::GaussianDiag,
        Some(s) => match s.get_ref().parse() {
            Ok(k @ (ReferenceKind::GaussianDiag | ReferenceKind::GaussianFull)) => k,
            _ => {
                return Err(cx.err(
                    Some(s.span()),
                    "run.reference_kind",
                    format!(
                        "unknown reference kind `{}` (expected gaussian-diag or gaussian-full)",
                        s.get_ref()
                    ),
                ))
            }
        },
    };
    let rounds: u32 = cx.int(&run.rounds, "run.rounds", 1, 30, 10)?;
    let burn_in_rounds: u32 = cx.int(&run.burn_in_rounds, "run.burn_in_rounds", 0, 30, 2)?;
    let initial_variance = run.initial_variance.as_ref().map_or(100.0, |s| *s.get_ref());
    if !(initial_variance.is_finite() && initial_variance > 0.0) {
        return Err(cx.err(
            run.initial_variance.as_ref().map(|s| s.span()),
            "run.initial_variance",
            "must be positive",
        ));
    }
    let run_section = RunSection {
        topology,
        reference_kind,
        chains_per_leg: cx.int(&run.chains_per_leg, "run.chains_per_leg", 1, 10_000, 10)?,
        rounds,
        seed: run.seed.unwrap_or(1),
        replicates: cx.int(&run.replicates, "run.replicates", 1, 1_000_000, 1)?,
        output_dir: run.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        burn_in_rounds,
        trace_all_rounds: run.trace_all_rounds.unwrap_or(false),
        record_barrier: run.record_barrier.unwrap_or(false),
        initial_variance,
    };

    let sampler = raw.sampler.unwrap_or_default();
    let initial_width = sampler.initial_width.as_ref().map_or(1.0, |s| *s.get_ref());
    if !(initial_width.is_finite() && initial_width > 0.0) {
        return Err(cx.err(
            sampler.initial_width.as_ref().map(|s| s.span()),
            "sampler.initial_width",
            "must be positive",
        ));
    }
    let sampler_section = SamplerSection {
        initial_width,
        max_doublings: cx.int(&sampler.max_doublings, "sampler.max_doublings", 0, 64, 20)?,
        sweeps_per_exploration: cx.int(
            &sampler.sweeps_per_exploration,
            "sampler.sweeps_per_exploration",
            1,
            1000,
            1,
        )?,
        iid_reference_draws: sampler.iid_reference_draws.unwrap_or(true),
        parallel_chains: sampler.parallel_chains.unwrap_or(false),
    };

    let compare = raw.compare.unwrap_or_default();
    let topologies = match &compare.topologies {
        None => Topology::ALL.to_vec(),
        Some(list) => {
            let mut out = Vec::new();
            for s in list.get_ref() {
                let t: Topology = s.get_ref().parse().map_err(|_| {
                    cx.err(
                        Some(s.span()),
                        "compare.topologies",
                        format!(
                            "unknown topology `{}` (expected fixed-only, variational-only or stabilized)",
                            s.get_ref()
                        ),
                    )
                })?;
                if out.contains(&t) {
                    return Err(cx.err(Some(s.span()), "compare.topologies", format!("`{t}` is listed twice")));
                }
                out.push(t);
            }
            if out.len() < 2 {
                return Err(cx.err(Some(list.span()), "compare.topologies", "needs at least two topologies"));
            }
            out
        }
    };
    let compare_section = CompareSection {
        topologies,
        reference_extra_rounds: cx.int(
            &compare.reference_extra_rounds,
            "compare.reference_extra_rounds",
            4,
            10,
            4,
        )?,
    };

    let ideal = raw.idealized.unwrap_or_default();
    let idealized = IdealizedSection {
        iterations: cx.int(&ideal.iterations, "idealized.iterations", 1, 1 << 40, 100_000)?,
        rates: cx.rates(&ideal.rates, "idealized.rates")?,
        variational_rates: cx.rates(&ideal.variational_rates, "idealized.variational_rates")?,
        fixed_rates: cx.rates(&ideal.fixed_rates, "idealized.fixed_rates")?,
    };
    if idealized.rates.is_some() && (idealized.variational_rates.is_some() || idealized.fixed_rates.is_some()) {
        return Err(cx.err(
            ideal.rates.as_ref().map(|s| s.span()),
            "idealized.rates",
            "give either `rates` or `variational_rates` with `fixed_rates`, not both",
        ));
    }
    if idealized.variational_rates.is_some() != idealized.fixed_rates.is_some() {
        let (field, span) = match &ideal.variational_rates {
            Some(s) => ("idealized.variational_rates", s.span()),
            None => ("idealized.fixed_rates", ideal.fixed_rates.as_ref().unwrap().span()),
        };
        return Err(cx.err(
            Some(span),
            field,
            "two-leg rates need both `variational_rates` and `fixed_rates`",
        ));
    }

    let bounds = raw.bounds.unwrap_or_default();
    let rhos = bounds
        .rhos
        .as_ref()
        .map_or(vec![0.9, 0.95, 0.99], |s| s.get_ref().clone());
    if let Some(bad) = rhos.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(cx.err(
            bounds.rhos.as_ref().map(|s| s.span()),
            "bounds.rhos",
            format!("{bad} is outside [0, 1)"),
        ));
    }
    let mus = bounds.mus.as_ref().map_or(vec![5.0, 10.0], |s| s.get_ref().clone());
    if let Some(bad) = mus.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
        return Err(cx.err(
            bounds.mus.as_ref().map(|s| s.span()),
            "bounds.mus",
            format!("{bad} is not positive"),
        ));
    }
    let bounds_section = BoundsSection {
        rhos,
        mus,
        n_samples: cx.int(&bounds.n_samples, "bounds.n_samples", 100_000, 1 << 32, 1_000_000)?,
        measure: bounds.measure.unwrap_or(true),
    };

    Ok(Resolved {
        model,
        run: run_section,
        sampler: sampler_section,
        compare: compare_section,
        idealized,
        bounds: bounds_section,
    })
}

/// Parse and validate config text. `file` names the source in messages.
pub fn parse(file: &str, src: &str) -> Result<Resolved, ConfigError> {
    let cx = Ctx { file, src };
    let raw: RawConfig = toml::from_str(src).map_err(|e| {
        let span = e.span();
        ConfigError {
            file: file.to_string(),
            at: span.as_ref().map(|s| cx.line_col(s.start)),
            field: span.and_then(|s| cx.field_at(s.start)),
            msg: e.message().trim().to_string(),
        }
    })?;
    resolve(&cx, raw)
}

/// Defaults for commands run without `--config`.
pub fn defaults() -> Resolved {
    parse("<defaults>", "").expect("the empty config is valid")
}
