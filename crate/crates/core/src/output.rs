//! CSV records and writers.
//!
//! Floats are written in shortest round-trip form, so reading a file and
//! writing it back reproduces it byte for byte.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::adapt::RunReport;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: u32,
    pub leg: String,
    pub gcb_hat: f64,
    pub restarts: u64,
    pub tau_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub round: u32,
    pub param_name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub round: u32,
    pub leg: String,
    pub chain_index: usize,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: u64,
    pub chain: usize,
    pub coordinate: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartRow {
    pub round: u32,
    pub leg: String,
    pub count: u64,
    pub tau_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierRow {
    pub beta: f64,
    pub lambda_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcbRow {
    pub round: u32,
    pub leg: String,
    pub gcb_hat: f64,
}

/// One line of the topology comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub topology: String,
    pub seed: u64,
    pub restarts: u64,
    pub gcb_hat_variational: Option<f64>,
    pub gcb_hat_fixed: Option<f64>,
    pub ks_distance: f64,
    pub ks_flag: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub example: String,
    pub parameter: f64,
    pub bound: f64,
    pub measured_gcb: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealizedRow {
    pub replicate: u64,
    pub iterations: u64,
    pub restarts_lower: u64,
    pub restarts_upper: u64,
    pub tau_hat: f64,
    pub tau_theory: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

/// All per-replicate tables of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportTables {
    pub rounds: Vec<RoundRow>,
    pub reference: Vec<ReferenceRow>,
    pub schedule: Vec<ScheduleRow>,
    pub trace: Vec<TraceRow>,
    pub restarts: Vec<RestartRow>,
    pub barrier: Vec<BarrierRow>,
    pub gcb: Vec<GcbRow>,
}

impl ReportTables {
    pub fn from_report(report: &RunReport) -> Self {
        let mut t = ReportTables::default();
        for r in &report.rounds {
            for leg in &r.legs {
                let name = leg.leg.as_str().to_string();
                t.rounds.push(RoundRow {
                    round: r.round,
                    leg: name.clone(),
                    gcb_hat: leg.gcb_hat,
                    restarts: leg.restarts,
                    tau_hat: leg.tau_hat,
                });
                t.restarts.push(RestartRow {
                    round: r.round,
                    leg: name.clone(),
                    count: leg.restarts,
                    tau_hat: leg.tau_hat,
                });
                t.gcb.push(GcbRow {
                    round: r.round,
                    leg: name.clone(),
                    gcb_hat: leg.gcb_hat,
                });
                for (i, &b) in leg.schedule.iter().enumerate() {
                    t.schedule.push(ScheduleRow {
                        round: r.round,
                        leg: name.clone(),
                        chain_index: i,
                        beta: b,
                    });
                }
            }
            for (name, value) in &r.reference_params {
                t.reference.push(ReferenceRow {
                    round: r.round,
                    param_name: name.clone(),
                    value: *value,
                });
            }
        }
        for (k, x) in report.trace.iter().enumerate() {
            for (c, &v) in x.iter().enumerate() {
                t.trace.push(TraceRow {
                    iteration: report.trace_start + k as u64,
                    chain: report.target_chain,
                    coordinate: c,
                    value: v,
                });
            }
        }
        t.barrier = report
            .barrier
            .iter()
            .map(|&(beta, lambda_hat)| BarrierRow { beta, lambda_hat })
            .collect();
        t
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_csv(&dir.join("rounds.csv"), &self.rounds)?;
        write_csv(&dir.join("reference.csv"), &self.reference)?;
        write_csv(&dir.join("schedule.csv"), &self.schedule)?;
        write_csv(&dir.join("trace.csv"), &self.trace)?;
        write_csv(&dir.join("restarts.csv"), &self.restarts)?;
        write_csv(&dir.join("barrier.csv"), &self.barrier)?;
        write_csv(&dir.join("gcb.csv"), &self.gcb)?;
        Ok(())
    }
}
