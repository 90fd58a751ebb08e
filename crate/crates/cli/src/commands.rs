use std::fs;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vpt::adapt::{variational_pt_run, RunReport, Topology};
use vpt::analysis::{corr_gaussian_bound, mixture_bound_mc};
use vpt::diagnostics::{ks_distance, ks_flag, MAX_REJECTION};
use vpt::idealized::{simulate_restarts, IdealizedSpec};
use vpt::model::{ModelSpec, Problem};
use vpt::output::{write_csv, BoundRow, IdealizedRow, ReportTables, SummaryRow};
use vpt::path::Leg;
use vpt::reference::ReferenceKind;
use vpt::rng::SeedSequence;

use crate::config::{ConfigError, ModelSection, Resolved};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<vpt::Error> for Failure {
    fn from(e: vpt::Error) -> Self {
        match e {
            vpt::Error::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub type Outcome = Result<(), Failure>;

/// Stream for the long fixed-only run that KS distances are measured against.
const KS_REFERENCE_STREAM: u64 = u64::MAX;

/// One line per replicate of `run`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: u64,
    pub seed: u64,
    pub topology: String,
    pub restarts: u64,
    pub gcb_hat_variational: Option<f64>,
    pub gcb_hat_fixed: Option<f64>,
    pub tau_hat: f64,
}

/// Rejection rates behind an idealized run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub replicate: u64,
    pub leg: String,
    pub edge: usize,
    pub rate: f64,
}

#[derive(Serialize)]
struct Provenance {
    command: String,
    git_describe: String,
    started_unix: u64,
    wall_clock_seconds: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    #[serde(flatten)]
    config: &'a Resolved,
    provenance: Provenance,
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn write_manifest(cfg: &Resolved, command: &str, started: SystemTime, clock: Instant) -> Outcome {
    let manifest = Manifest {
        config: cfg,
        provenance: Provenance {
            command: command.into(),
            git_describe: git_describe(),
            started_unix: started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_clock_seconds: clock.elapsed().as_secs_f64(),
        },
    };
    let text = toml::to_string(&manifest).map_err(|e| Failure::Runtime(format!("cannot write manifest: {e}")))?;
    fs::write(cfg.run.output_dir.join("manifest.toml"), text)?;
    Ok(())
}

fn require_model<'a>(cfg: &'a Resolved, why: &str) -> Result<&'a ModelSection, Failure> {
    cfg.model
        .as_ref()
        .ok_or_else(|| Failure::Config(format!("field `model.name`: a model is required {why}")))
}

fn replicate_seed(cfg: &Resolved, r: u64) -> u64 {
    cfg.run.seed.wrapping_add(r)
}

fn run_one(cfg: &Resolved, spec: &ModelSpec, topology: Topology, seq: &SeedSequence) -> Result<RunReport, Failure> {
    let problem = Problem::builtin(spec)?;
    Ok(variational_pt_run(&cfg.adapt(topology), &problem, seq)?)
}

fn leg_gcb(report: &RunReport, leg: Leg) -> Option<f64> {
    report.last_round().leg(leg).map(|l| l.gcb_hat)
}

fn first_coordinate(report: &RunReport) -> Vec<f64> {
    report.trace.iter().map(|x| x[0]).collect()
}

pub fn run(cfg: &Resolved) -> Outcome {
    let Some(topology) = cfg.topology() else {
        return idealized(cfg, "run");
    };
    let (started, clock) = (SystemTime::now(), Instant::now());
    let spec = require_model(cfg, "for `run`")?.spec();
    let out = &cfg.run.output_dir;
    fs::create_dir_all(out)?;

    let reports: Vec<RunReport> = (0..cfg.run.replicates)
        .into_par_iter()
        .map(|r| run_one(cfg, &spec, topology, &SeedSequence::new(replicate_seed(cfg, r))))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (r, report) in reports.iter().enumerate() {
        let r = r as u64;
        ReportTables::from_report(report).write(&out.join(format!("replicate-{r:03}")))?;
        let tau_hat = report.last_round().legs.iter().map(|l| l.tau_hat).sum();
        rows.push(ReplicateRow {
            replicate: r,
            seed: replicate_seed(cfg, r),
            topology: topology.to_string(),
            restarts: report.restarts.total(),
            gcb_hat_variational: leg_gcb(report, Leg::Variational),
            gcb_hat_fixed: leg_gcb(report, Leg::Fixed),
            tau_hat,
        });
    }
    write_csv(&out.join("replicates.csv"), &rows)?;
    write_manifest(cfg, "run", started, clock)
}

pub fn compare_topologies(cfg: &Resolved) -> Outcome {
    let (started, clock) = (SystemTime::now(), Instant::now());
    let spec = require_model(cfg, "for `compare-topologies`")?.spec();
    let out = &cfg.run.output_dir;
    fs::create_dir_all(out)?;

    let mut reference_cfg = cfg.clone();
    reference_cfg.run.rounds += cfg.compare.reference_extra_rounds;
    let reference = run_one(
        &reference_cfg,
        &spec,
        Topology::FixedOnly,
        &SeedSequence::new(cfg.run.seed).derive(&[KS_REFERENCE_STREAM]),
    )?;
    let reference = first_coordinate(&reference);

    let jobs: Vec<(Topology, u64)> = cfg
        .compare
        .topologies
        .iter()
        .flat_map(|&t| (0..cfg.run.replicates).map(move |r| (t, r)))
        .collect();
    let rows: Vec<SummaryRow> = jobs
        .par_iter()
        .map(|&(topology, r)| {
            let seed = replicate_seed(cfg, r);
            let report = run_one(cfg, &spec, topology, &SeedSequence::new(seed))?;
            let ks = ks_distance(&first_coordinate(&report), &reference);
            Ok(SummaryRow {
                model: spec.name().into(),
                topology: topology.to_string(),
                seed,
                restarts: report.restarts.total(),
                gcb_hat_variational: leg_gcb(&report, Leg::Variational),
                gcb_hat_fixed: leg_gcb(&report, Leg::Fixed),
                ks_distance: ks,
                ks_flag: ks_flag(ks),
            })
        })
        .collect::<Result<_, Failure>>()?;
    write_csv(&out.join("summary.csv"), &rows)?;

    println!("topology,runs,ks_flagged,mean_restarts");
    for &t in &cfg.compare.topologies {
        let of_t: Vec<&SummaryRow> = rows.iter().filter(|s| s.topology == t.as_str()).collect();
        let flagged = of_t.iter().filter(|s| s.ks_flag).count();
        let mean = of_t.iter().map(|s| s.restarts as f64).sum::<f64>() / of_t.len() as f64;
        println!("{t},{},{flagged},{mean}", of_t.len());
    }
    write_manifest(cfg, "compare-topologies", started, clock)
}

pub fn bounds(cfg: &Resolved) -> Outcome {
    let (started, clock) = (SystemTime::now(), Instant::now());
    let out = &cfg.run.output_dir;
    fs::create_dir_all(out)?;
    let seq = SeedSequence::new(cfg.run.seed);

    let mut jobs: Vec<(ModelSpec, f64)> = Vec::new();
    jobs.extend(
        cfg.bounds
            .rhos
            .iter()
            .map(|&rho| (ModelSpec::CorrelatedGaussian { rho }, rho)),
    );
    jobs.extend(cfg.bounds.mus.iter().map(|&mu| (ModelSpec::NormalMixture { mu }, mu)));
    let rows: Vec<BoundRow> = jobs
        .par_iter()
        .map(|(spec, p)| {
            let bound = match spec {
                ModelSpec::CorrelatedGaussian { rho } => corr_gaussian_bound(*rho)?,
                ModelSpec::NormalMixture { mu } => mixture_bound_mc(*mu, cfg.bounds.n_samples, &seq)?,
                _ => unreachable!(),
            };
            let measured_gcb = if cfg.bounds.measure {
                // the bounds are stated for the diagonal moment match
                let mut c = cfg.clone();
                c.run.reference_kind = ReferenceKind::GaussianDiag;
                let report = run_one(&c, spec, Topology::Stabilized, &seq)?;
                leg_gcb(&report, Leg::Variational)
            } else {
                None
            };
            Ok(BoundRow {
                example: spec.name().into(),
                parameter: *p,
                bound: bound.bound_value,
                measured_gcb,
            })
        })
        .collect::<Result<_, Failure>>()?;

    let path = out.join("bounds.csv");
    write_csv(&path, &rows)?;
    print!("{}", fs::read_to_string(&path)?);
    write_manifest(cfg, "bounds", started, clock)
}

fn pilot_spec(cfg: &Resolved, spec: &ModelSpec, seq: &SeedSequence) -> Result<IdealizedSpec, Failure> {
    let report = run_one(cfg, spec, Topology::Stabilized, seq)?;
    let last = report.last_round();
    let clamp = |r: &[f64]| r.iter().map(|x| x.clamp(0.0, MAX_REJECTION)).collect::<Vec<_>>();
    let var = last.leg(Leg::Variational).expect("stabilized has both legs");
    let fix = last.leg(Leg::Fixed).expect("stabilized has both legs");
    Ok(IdealizedSpec::two(
        clamp(&var.rejection),
        clamp(&fix.rejection),
        cfg.idealized.iterations,
    ))
}

fn rate_rows(replicate: u64, spec: &IdealizedSpec) -> Vec<RateRow> {
    use vpt::idealized::IdealizedRates;
    let legs: Vec<(&str, &Vec<f64>)> = match &spec.rates {
        IdealizedRates::Single { rates } => vec![("single", rates)],
        IdealizedRates::Two { variational, fixed } => vec![("variational", variational), ("fixed", fixed)],
    };
    legs.into_iter()
        .flat_map(|(leg, rates)| {
            rates.iter().enumerate().map(move |(edge, &rate)| RateRow {
                replicate,
                leg: leg.into(),
                edge,
                rate,
            })
        })
        .collect()
}

/// Simulate the index process, from explicit rates or from the rates a
/// stabilized pilot run of the configured model ends with.
pub fn idealized(cfg: &Resolved, command: &str) -> Outcome {
    let (started, clock) = (SystemTime::now(), Instant::now());
    let explicit = cfg.idealized.explicit_spec();
    let model = match &explicit {
        Some(_) => None,
        None => Some(require_model(cfg, "when `[idealized]` gives no rates")?.spec()),
    };
    let out = &cfg.run.output_dir;
    fs::create_dir_all(out)?;

    let results: Vec<(IdealizedSpec, IdealizedRow)> = (0..cfg.run.replicates)
        .into_par_iter()
        .map(|r| {
            let seq = SeedSequence::new(replicate_seed(cfg, r));
            let spec = match (&explicit, &model) {
                (Some(s), _) => s.clone(),
                (None, Some(m)) => pilot_spec(cfg, m, &seq.derive(&[0]))?,
                (None, None) => unreachable!(),
            };
            let res = simulate_restarts(&spec, &seq.derive(&[1]))?;
            let row = IdealizedRow {
                replicate: r,
                iterations: spec.iterations,
                restarts_lower: res.counts.lower,
                restarts_upper: res.counts.upper,
                tau_hat: res.tau_hat,
                tau_theory: res.tau_theory,
            };
            Ok((spec, row))
        })
        .collect::<Result<_, Failure>>()?;

    let rates: Vec<RateRow> = results
        .iter()
        .flat_map(|(s, row)| rate_rows(row.replicate, s))
        .collect();
    let rows: Vec<IdealizedRow> = results.into_iter().map(|(_, row)| row).collect();
    write_csv(&out.join("idealized.csv"), &rows)?;
    write_csv(&out.join("idealized_rates.csv"), &rates)?;
    write_manifest(cfg, command, started, clock)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse;

    fn in_tmp(src: &str) -> (tempfile::TempDir, Resolved) {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = parse("t", src).unwrap();
        cfg.run.output_dir = dir.path().join("out");
        (dir, cfg)
    }

    #[test]
    fn run_writes_replicate_tables() {
        let (_d, cfg) =
            in_tmp("[model]\nname = \"gaussian-shift\"\n[run]\nrounds = 4\nchains_per_leg = 2\nreplicates = 2\n");
        run(&cfg).unwrap();
        let out = &cfg.run.output_dir;
        for f in [
            "rounds.csv",
            "trace.csv",
            "schedule.csv",
            "restarts.csv",
            "gcb.csv",
            "reference.csv",
        ] {
            assert!(out.join("replicate-001").join(f).exists(), "{f}");
        }
        let rows: Vec<ReplicateRow> = vpt::output::read_csv(&out.join("replicates.csv")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].seed, cfg.run.seed + 1);
        assert!(out.join("manifest.toml").exists());
    }

    #[test]
    fn missing_model_is_a_config_failure() {
        let (_d, cfg) = in_tmp("");
        assert!(matches!(run(&cfg), Err(Failure::Config(_))));
        assert!(matches!(idealized(&cfg, "idealized"), Err(Failure::Config(_))));
    }

    #[test]
    fn idealized_from_pilot_run() {
        let (_d, cfg) =
            in_tmp("[model]\nname = \"gaussian-shift\"\n[run]\ntopology = \"idealized\"\nrounds = 6\nchains_per_leg = 3\n[idealized]\niterations = 20000\n");
        run(&cfg).unwrap();
        let rows: Vec<IdealizedRow> = vpt::output::read_csv(&cfg.run.output_dir.join("idealized.csv")).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].tau_hat / rows[0].tau_theory - 1.0).abs() < 0.1, "{rows:?}");
        let rates: Vec<RateRow> = vpt::output::read_csv(&cfg.run.output_dir.join("idealized_rates.csv")).unwrap();
        assert_eq!(rates.len(), 6);
    }

    #[test]
    fn manifest_reproduces_the_config() {
        let (_d, cfg) = in_tmp("[run]\ntopology = \"idealized\"\n[idealized]\nrates = [0.2, 0.4]\niterations = 1000\n");
        run(&cfg).unwrap();
        let text = fs::read_to_string(cfg.run.output_dir.join("manifest.toml")).unwrap();
        assert!(text.contains("[provenance]") && text.contains("git_describe"));
        assert_eq!(parse("manifest", &text).unwrap(), cfg);
    }
}
