//! CSV and JSON writers. Floats use Rust's shortest round-trip formatting,
//! so output is byte-stable for identical inputs.

use std::io::Write;

use banditlab_core::analysis::{DiagnosticReport, Outcome, RateMode};
use banditlab_core::{RegimeReport, Trajectory};
use serde::Serialize;

use crate::montecarlo::{ReplicateRecord, SCHEMA_VERSION};

pub const TRAJECTORY_HEADER: [&str; 6] = ["n", "gamma", "x", "d", "branch", "deltaM"];
pub const REPLICATE_HEADER: [&str; 6] = [
    "replicate",
    "outcome",
    "final_x",
    "beta_hat",
    "stderr",
    "mode",
];

pub fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::ToZero => "to_zero",
        Outcome::ToOne => "to_one",
        Outcome::Undecided => "undecided",
    }
}

pub fn mode_name(m: RateMode) -> &'static str {
    match m {
        RateMode::Fast => "fast",
        RateMode::Slow => "slow",
        RateMode::Undecided => "undecided",
    }
}

/// One row per recorded checkpoint. The start row has an empty branch.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for c in &traj.checkpoints {
        w.write_record([
            c.n.to_string(),
            c.gamma.to_string(),
            c.state.x.to_string(),
            c.state.d.to_string(),
            c.branch.map_or("", |b| b.as_str()).to_string(),
            c.delta_m.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Missing fits and modes are written as empty fields.
pub fn write_replicates_csv<W: Write>(records: &[ReplicateRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPLICATE_HEADER)?;
    for r in records {
        w.write_record([
            r.replicate.to_string(),
            outcome_name(r.outcome).to_string(),
            r.final_x.to_string(),
            r.fit.map_or(String::new(), |f| f.beta_hat.to_string()),
            r.fit.map_or(String::new(), |f| f.stderr.to_string()),
            r.mode.map_or("", mode_name).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ClassifyDocument<'a> {
    pub schema_version: u32,
    pub pa: f64,
    pub pb: f64,
    pub schedule: String,
    pub summary: String,
    pub report: &'a RegimeReport,
}

#[derive(Debug, Serialize)]
pub struct DiagnoseDocument<'a> {
    pub schema_version: u32,
    pub passed: bool,
    pub report: &'a DiagnosticReport,
}

impl<'a> DiagnoseDocument<'a> {
    pub fn new(report: &'a DiagnosticReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            passed: report.passed(),
            report,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}
