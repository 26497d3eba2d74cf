//! Command-line front end.
//!
//! Exit status: 0 on success, 1 when arguments or configuration are
//! invalid, 2 when a run fails (including failed `diagnose` checks).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use banditlab_core::analysis::{
    classify_outcome, companion_identity_check, martingale_diagnostics, martingale_grid_check,
    verify_tail_product, z_submartingale_check, AnalysisError, DiagnosticCheck, DiagnosticReport,
    Outcome, TailSide,
};
use banditlab_core::dynamics::{simulate, RecordingPlan};
use banditlab_core::{RegimeReport, StreamKey};
use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, Settings};
use crate::io::{self, ClassifyDocument, DiagnoseDocument};
use crate::montecarlo::{attached_regime, run_experiment, ExperimentError, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
pub const SEED_ENV: &str = "BANDITLAB_SEED";
/// `diagnose` keeps the full branch log up to this horizon.
pub const DIAGNOSE_FULL_LOG_LIMIT: u64 = 200_000;

#[derive(Debug, Parser)]
#[command(
    name = "banditlab",
    version,
    about = "Two-armed bandit LRI simulation and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Predict fallibility and convergence rates for a schedule.
    Classify(Common),
    /// Simulate one trajectory and write it as CSV.
    Simulate(Common),
    /// Run replicated trajectories; write summary JSON and replicate CSV.
    Experiment(Common),
    /// Check martingale, companion and tail-product identities on one run.
    Diagnose(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pa: Option<String>,
    #[arg(long)]
    pb: Option<String>,
    /// constant:<gamma> | power:<C>,<C'>,<alpha> | custom:<path>
    #[arg(long)]
    schedule: Option<String>,
    /// Starting state (default 0.5).
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    /// Master seed; falls back to the config file, then BANDITLAB_SEED, then 0.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    /// Checkpoint count, or `every`.
    #[arg(long)]
    checkpoints: Option<String>,
    /// Record every step and verify terminal tail products.
    #[arg(long)]
    verify_tail: bool,
    /// Output file (classify, simulate) or directory (experiment).
    #[arg(long)]
    out: Option<String>,
    /// Print JSON on stdout instead of text.
    #[arg(long)]
    json: bool,
}

impl Common {
    fn settings(&self) -> Result<Settings, crate::config::ConfigError> {
        let mut s = match &self.config {
            Some(path) => Settings::read(path)?,
            None => Settings::default(),
        };
        let flags = [
            ("pa", &self.pa),
            ("pb", &self.pb),
            ("schedule", &self.schedule),
            ("x0", &self.x0),
            ("horizon", &self.horizon),
            ("replicates", &self.replicates),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("checkpoints", &self.checkpoints),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.set_flag(key, v.clone());
            }
        }
        if self.verify_tail {
            s.set_flag("verify_tail", "true");
        }
        Ok(s)
    }
}

type CommandFn = fn(&Common, &RunConfig, &mut dyn Write) -> Result<(), Failure>;

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn invalid(op: &str, e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_INVALID,
            message: format!("{op}: {e}"),
        }
    }

    fn runtime(op: &str, e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: format!("{op}: {e}"),
        }
    }
}

/// Runs the CLI on `args` (including the program name), reading the seed
/// fallback from the process environment.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_seed = std::env::var(SEED_ENV).ok();
    run_cli_with_env(args, env_seed.as_deref(), stdout, stderr)
}

pub fn run_cli_with_env<I, T>(
    args: I,
    env_seed: Option<&str>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let (common, run): (&Common, CommandFn) = match &cli.command {
        Command::Classify(c) => (c, classify),
        Command::Simulate(c) => (c, simulate_cmd),
        Command::Experiment(c) => (c, experiment),
        Command::Diagnose(c) => (c, diagnose),
    };
    let result = common
        .settings()
        .and_then(|s| s.resolve(env_seed))
        .map_err(|e| Failure::invalid("config.parse_config", e))
        .and_then(|config| run(common, &config, stdout));
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| Failure::runtime("io.write", format!("{}: {e}", path.display())))
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<(), Failure> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Failure::runtime("io.stdout", e))
}

fn regime_text(report: &RegimeReport) -> String {
    let mut s = format!("{}\n", report.summary());
    for e in &report.evidence {
        s.push_str(&format!(
            "  {}: {} ({}) {}\n",
            e.condition, e.verdict, e.method, e.detail
        ));
    }
    s
}

fn classify(common: &Common, config: &RunConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let report = attached_regime(&config.schedule, &config.params).ok_or_else(|| {
        Failure::invalid("regimes.classify_power_family", "schedule not classifiable")
    })?;
    let doc = io::to_json(&ClassifyDocument {
        schema_version: SCHEMA_VERSION,
        pa: config.params.pa(),
        pb: config.params.pb(),
        schedule: config.schedule.describe(),
        summary: report.summary(),
        report: &report,
    });
    if let Some(path) = &config.out {
        write_file(path, doc.as_bytes())?;
    }
    if common.json {
        emit(stdout, &doc)
    } else {
        emit(stdout, &regime_text(&report))
    }
}

fn simulate_cmd(_: &Common, config: &RunConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let traj = simulate(
        &config.params,
        &config.schedule,
        config.x0,
        config.horizon,
        StreamKey::new(config.seed, 0),
        config.plan,
    )
    .map_err(|e| Failure::runtime("dynamics.simulate", e))?;
    let mut buf = Vec::new();
    io::write_trajectory_csv(&traj, &mut buf)
        .map_err(|e| Failure::runtime("io.write_trajectory_csv", e))?;
    match &config.out {
        Some(path) => write_file(path, &buf),
        None => stdout
            .write_all(&buf)
            .map_err(|e| Failure::runtime("io.stdout", e)),
    }
}

fn experiment(common: &Common, config: &RunConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let exp = config.experiment();
    let output = run_experiment(&exp).map_err(|e| match e {
        ExperimentError::MeanRecursion(_) => Failure::runtime("montecarlo.run_experiment", e),
        _ => Failure::invalid("montecarlo.run_experiment", e),
    })?;
    let summary_json = io::to_json(&output.summary);
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::runtime("io.create_dir", format!("{}: {e}", dir.display())))?;
        write_file(&dir.join("summary.json"), summary_json.as_bytes())?;
        let mut csv = Vec::new();
        io::write_replicates_csv(&output.records, &mut csv)
            .map_err(|e| Failure::runtime("io.write_replicates_csv", e))?;
        write_file(&dir.join("replicates.csv"), &csv)?;
    }
    if common.json {
        return emit(stdout, &summary_json);
    }
    let s = &output.summary;
    let mut text = format!(
        "replicates {}: to_zero {}, to_one {}, undecided {}\n",
        exp.replicates, s.counts.to_zero, s.counts.to_one, s.counts.undecided
    );
    text.push_str(&format!(
        "p_zero {:.6} [{:.6}, {:.6}]\n",
        s.p_zero.p_hat, s.p_zero.lower, s.p_zero.upper
    ));
    let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    text.push_str(&format!(
        "median exponent: to_zero {}, to_one {}\n",
        fmt_opt(s.exponents.median_to_zero),
        fmt_opt(s.exponents.median_to_one)
    ));
    if let Some(h) = &s.to_one_histogram {
        let b = &h.bimodality;
        text.push_str(&format!(
            "to_one exponents: {:?}, clusters {:.3} ({:.1}%) and {:.3} ({:.1}%)\n",
            b.verdict,
            b.low.mean,
            100.0 * b.low.fraction,
            b.high.mean,
            100.0 * b.high.fraction
        ));
    }
    if let Some(r) = &s.regime {
        text.push_str(&format!("predicted: {}\n", r.summary()));
    }
    if !s.failures.is_empty() {
        text.push_str(&format!(
            "{} replicate failures recorded\n",
            s.failures.len()
        ));
    }
    emit(stdout, &text)
}

fn tail_check(traj: &banditlab_core::Trajectory, label: Outcome) -> Option<DiagnosticCheck> {
    let side = match label {
        Outcome::ToZero => TailSide::ZeroSide,
        Outcome::ToOne => TailSide::OneSide,
        Outcome::Undecided => return None,
    };
    let name = format!(
        "tail_product_{}",
        if side == TailSide::ZeroSide {
            "zero"
        } else {
            "one"
        }
    );
    Some(match verify_tail_product(traj, side) {
        Ok(r) => DiagnosticCheck {
            name,
            passed: r.max_relative_deviation <= 1e-9,
            gating: true,
            worst_deviation: r.max_relative_deviation,
            location: format!("n0 = {}", r.n0),
        },
        Err(e @ (AnalysisError::NoTailFound { .. } | AnalysisError::MissingBranchLog)) => {
            DiagnosticCheck {
                name,
                passed: false,
                gating: false,
                worst_deviation: 0.0,
                location: e.to_string(),
            }
        }
        Err(e) => DiagnosticCheck {
            name,
            passed: false,
            gating: true,
            worst_deviation: f64::NAN,
            location: e.to_string(),
        },
    })
}

pub fn diagnose_report(config: &RunConfig) -> Result<DiagnosticReport, String> {
    let plan = if config.horizon <= DIAGNOSE_FULL_LOG_LIMIT {
        RecordingPlan::Every
    } else {
        config.plan
    };
    let traj = simulate(
        &config.params,
        &config.schedule,
        config.x0,
        config.horizon,
        StreamKey::new(config.seed, 0),
        plan,
    )
    .map_err(|e| e.to_string())?;
    let grid: Vec<f64> = (1..=99).map(|i| i as f64 / 100.0).collect();
    let gamma = config
        .schedule
        .gamma_or_first(1)
        .map_err(|e| e.to_string())?;
    let mut report = martingale_diagnostics(&traj);
    report.push(martingale_grid_check(&grid, gamma, &config.params));
    report.push(companion_identity_check(&traj));
    report.push(z_submartingale_check(&traj));
    let label = classify_outcome(&traj, config.thresholds).map_err(|e| e.to_string())?;
    if let Some(c) = tail_check(&traj, label.label) {
        report.push(c);
    }
    Ok(report)
}

fn diagnose(common: &Common, config: &RunConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let report = diagnose_report(config)
        .map_err(|e| Failure::runtime("analysis.martingale_diagnostics", e))?;
    let doc = io::to_json(&DiagnoseDocument::new(&report));
    if let Some(path) = &config.out {
        write_file(path, doc.as_bytes())?;
    }
    if common.json {
        emit(stdout, &doc)?;
    } else {
        let mut text = String::new();
        for c in &report.checks {
            let status = match (c.passed, c.gating) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "INFO",
            };
            text.push_str(&format!(
                "{status} {} worst {:e} at {}\n",
                c.name, c.worst_deviation, c.location
            ));
        }
        text.push_str(if report.passed() {
            "diagnose: passed\n"
        } else {
            "diagnose: failed\n"
        });
        emit(stdout, &text)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::runtime(
            "analysis.martingale_diagnostics",
            "at least one check failed",
        ))
    }
}
