//! Replicated experiments: many seeded trajectories, run on worker threads
//! and reduced into one summary.
//!
//! Replicate `i` always uses stream `(master_seed, i)`. Replicates are cut
//! into fixed blocks of [`BLOCK_SIZE`]; each block is reduced on its own
//! and blocks are merged in index order, so the summary does not depend on
//! the number of workers.

use std::ops::RangeInclusive;
use std::thread;

use banditlab_core::analysis::{
    self, default_fit_window, detect_rate_mode, fit_exponent, verify_tail_product, AnalysisError,
    CompanionPoint, ExponentFit, FitDomain, FitTarget, Outcome, RateMode, TailSide, Thresholds,
};
use banditlab_core::dynamics::{mean_recursion, simulate, RecordingPlan, Trajectory};
use banditlab_core::regimes::{classify_power_family, classify_schedule, RegimeReport};
use banditlab_core::schedule::DEFAULT_SERIES_BUDGET;
use banditlab_core::{BanditParams, StepSchedule, StreamKey};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const BLOCK_SIZE: u64 = 64;
pub const MIN_HORIZON: u64 = 100;
pub const WILSON_Z: f64 = 1.959964;
/// Minimum number of samples for a bimodality verdict.
pub const MIN_BIMODALITY_SAMPLES: usize = 20;
const HISTOGRAM_BINS: usize = 40;
/// A run has Cauchy tails when `Σ(1 − X_n)` grows by less than this
/// fraction of its total over the last decade.
pub const CAUCHY_TAIL_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("replicates must be at least 1")]
    NoReplicates,
    #[error("horizon must be at least {MIN_HORIZON}, got {0}")]
    HorizonTooShort(u64),
    #[error("x0 must lie in (0,1), got {0}")]
    InvalidStart(f64),
    #[error("workers must be at least 1")]
    NoWorkers,
    #[error("fit window {0}..={1} must lie inside 1..=horizon")]
    InvalidFitWindow(u64, u64),
    #[error(transparent)]
    Thresholds(#[from] AnalysisError),
    #[error("mean recursion failed: {0}")]
    MeanRecursion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitSettings {
    /// Defaults to [`FitDomain::natural_for`] the schedule.
    pub domain: Option<FitDomain>,
    /// Defaults to the last decade `[N/10, N]`.
    pub window: Option<(u64, u64)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub params: BanditParams,
    pub schedule: StepSchedule,
    pub x0: f64,
    pub horizon: u64,
    pub replicates: u64,
    pub master_seed: u64,
    pub thresholds: Thresholds,
    pub fit: FitSettings,
    pub workers: usize,
    /// Checkpoints per trajectory for the log-uniform plan.
    pub checkpoints: usize,
    /// Record every step and check the terminal tail product of each
    /// decided run.
    pub verify_tail: bool,
}

impl ExperimentConfig {
    pub fn new(
        params: BanditParams,
        schedule: StepSchedule,
        horizon: u64,
        replicates: u64,
    ) -> Self {
        Self {
            params,
            schedule,
            x0: 0.5,
            horizon,
            replicates,
            master_seed: 0,
            thresholds: Thresholds::default(),
            fit: FitSettings::default(),
            workers: 1,
            checkpoints: 512,
            verify_tail: false,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.replicates == 0 {
            return Err(ExperimentError::NoReplicates);
        }
        if self.horizon < MIN_HORIZON {
            return Err(ExperimentError::HorizonTooShort(self.horizon));
        }
        if !(self.x0 > 0.0 && self.x0 < 1.0) {
            return Err(ExperimentError::InvalidStart(self.x0));
        }
        if self.workers == 0 {
            return Err(ExperimentError::NoWorkers);
        }
        if let Some((a, b)) = self.fit.window {
            if a == 0 || a > b || b > self.horizon {
                return Err(ExperimentError::InvalidFitWindow(a, b));
            }
        }
        self.thresholds.validate()?;
        Ok(())
    }

    pub fn fit_domain(&self) -> FitDomain {
        self.fit
            .domain
            .unwrap_or_else(|| FitDomain::natural_for(&self.schedule))
    }

    pub fn fit_window(&self) -> RangeInclusive<u64> {
        match self.fit.window {
            Some((a, b)) => a..=b,
            None => default_fit_window(self.horizon),
        }
    }

    fn plan(&self) -> RecordingPlan {
        if self.verify_tail {
            RecordingPlan::Every
        } else {
            RecordingPlan::LogUniform {
                count: self.checkpoints,
            }
        }
    }

    /// Indices at which cross-replicate statistics are kept.
    pub fn summary_grid(&self) -> Vec<u64> {
        RecordingPlan::LogUniform {
            count: self.checkpoints,
        }
        .indices(self.horizon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub p_hat: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ProbabilityEstimate {
    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ProbabilityError {
    #[error("trials must be at least 1")]
    ZeroTrials,
    #[error("successes ({successes}) exceed trials ({trials})")]
    TooManySuccesses { successes: u64, trials: u64 },
}

/// Point estimate and 95% Wilson score interval.
pub fn estimate_probability(
    successes: u64,
    trials: u64,
) -> Result<ProbabilityEstimate, ProbabilityError> {
    if trials == 0 {
        return Err(ProbabilityError::ZeroTrials);
    }
    if successes > trials {
        return Err(ProbabilityError::TooManySuccesses { successes, trials });
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lower = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let upper = if successes == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    Ok(ProbabilityEstimate {
        p_hat: p,
        lower,
        upper,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(samples: &[f64], bins: usize) -> Option<Self> {
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || bins == 0 {
            return None;
        }
        let width = if hi > lo {
            (hi - lo) / bins as f64
        } else {
            1.0
        };
        let mut counts = vec![0u64; bins];
        for &s in samples {
            let k = (((s - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Some(Self {
            lo,
            hi,
            bin_width: width,
            counts,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Bimodal,
    Unimodal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub mean: f64,
    pub fraction: f64,
    pub count: usize,
}

/// Best two-cluster split of the samples. This is a heuristic detector:
/// `Bimodal` means the cluster means are more than three pooled standard
/// deviations apart and each cluster holds at least 5% of the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalityReport {
    pub verdict: Modality,
    pub low: Cluster,
    pub high: Cluster,
    pub pooled_sd: f64,
    /// `(high.mean − low.mean) / pooled_sd`
    pub separation: f64,
    /// Cluster-mean offsets from supplied `(slow, fast)` exponents.
    pub deviation_from_expected: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentHistogram {
    pub histogram: Histogram,
    pub bimodality: BimodalityReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum HistogramError {
    #[error("bimodality analysis needs at least {MIN_BIMODALITY_SAMPLES} samples, got {0}")]
    InsufficientSamples(usize),
}

pub fn exponent_histogram(
    samples: &[f64],
    expected: Option<(f64, f64)>,
) -> Result<ExponentHistogram, HistogramError> {
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|s| s.is_finite()).collect();
    if sorted.len() < MIN_BIMODALITY_SAMPLES {
        return Err(HistogramError::InsufficientSamples(sorted.len()));
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Prefix sums make every contiguous split O(1); the optimal two-means
    // partition of sorted 1-D data is always contiguous.
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, v) in sorted.iter().enumerate() {
        s1[i + 1] = s1[i] + v;
        s2[i + 1] = s2[i] + v * v;
    }
    let ss = |a: usize, b: usize| {
        let m = (b - a) as f64;
        let sum = s1[b] - s1[a];
        (s2[b] - s2[a] - sum * sum / m).max(0.0)
    };
    let best = (1..n)
        .min_by(|&a, &b| (ss(0, a) + ss(a, n)).total_cmp(&(ss(0, b) + ss(b, n))))
        .expect("n >= 2");
    let cluster = |a: usize, b: usize| Cluster {
        mean: (s1[b] - s1[a]) / (b - a) as f64,
        fraction: (b - a) as f64 / n as f64,
        count: b - a,
    };
    let (low, high) = (cluster(0, best), cluster(best, n));
    let pooled_sd = ((ss(0, best) + ss(best, n)) / (n - 2) as f64).sqrt();
    let gap = high.mean - low.mean;
    let separation = if pooled_sd > 0.0 {
        gap / pooled_sd
    } else {
        f64::INFINITY
    };
    let verdict = if separation > 3.0 && low.fraction >= 0.05 && high.fraction >= 0.05 {
        Modality::Bimodal
    } else {
        Modality::Unimodal
    };
    Ok(ExponentHistogram {
        histogram: Histogram::build(&sorted, HISTOGRAM_BINS).expect("non-empty"),
        bimodality: BimodalityReport {
            verdict,
            low,
            high,
            pooled_sd,
            separation,
            deviation_from_expected: expected.map(|(s, f)| (low.mean - s, high.mean - f)),
        },
    })
}

/// One replicate, as written to the replicate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub outcome: Outcome,
    pub final_x: f64,
    pub final_d: f64,
    pub fit: Option<ExponentFit>,
    pub mode: Option<RateMode>,
    /// Only for ToOne runs: last-decade growth of `Σ(1 − X_n)` relative to
    /// its total.
    pub tail_growth: Option<f64>,
    pub tail_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replicate: u64,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub to_zero: u64,
    pub to_one: u64,
    pub undecided: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModeCounts {
    pub fast: u64,
    pub slow: u64,
    pub undecided: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentSamples {
    pub to_zero: Vec<f64>,
    pub to_one: Vec<f64>,
    pub median_to_zero: Option<f64>,
    pub median_to_one: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub n: u64,
    pub mean_x: f64,
    pub se_x: f64,
    pub mean_y: f64,
    pub se_y: f64,
    pub mean_recursion_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanDomination {
    pub passed: bool,
    /// Largest `mean_x − mean_recursion_x − 3·se_x` over the grid.
    pub worst_excess: f64,
    pub worst_n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyTails {
    pub to_one_runs: u64,
    pub satisfied: u64,
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub verified: u64,
    pub max_relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub pa: f64,
    pub pb: f64,
    pub schedule: String,
    pub x0: f64,
    pub horizon: u64,
    pub replicates: u64,
    pub master_seed: u64,
    pub thresholds: Thresholds,
    pub fit_domain: FitDomain,
    pub fit_window: (u64, u64),
    pub verify_tail: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub steps_simulated: u64,
    pub summary_checkpoints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema_version: u32,
    pub config: ConfigEcho,
    pub counts: OutcomeCounts,
    pub p_zero: ProbabilityEstimate,
    pub p_one: ProbabilityEstimate,
    pub exponents: ExponentSamples,
    pub to_one_histogram: Option<ExponentHistogram>,
    pub modes: ModeCounts,
    pub cauchy_tails: CauchyTails,
    pub tail_check: Option<TailCheck>,
    pub checkpoints: Vec<CheckpointStats>,
    pub mean_domination: MeanDomination,
    pub regime: Option<RegimeReport>,
    pub failures: Vec<FailureRecord>,
    pub runtime: RunMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    pub records: Vec<ReplicateRecord>,
}

/// Regime prediction attached to summaries.
pub fn attached_regime(schedule: &StepSchedule, params: &BanditParams) -> Option<RegimeReport> {
    match schedule {
        StepSchedule::Power { c, alpha, .. } => classify_power_family(*alpha, *c, params).ok(),
        _ => Some(classify_schedule(schedule, params, DEFAULT_SERIES_BUDGET)),
    }
}

/// Per-block partial reduction. Sums over the summary grid are kept in
/// replicate order within the block.
struct Block {
    records: Vec<ReplicateRecord>,
    failures: Vec<FailureRecord>,
    sum_x: Vec<f64>,
    sum_x2: Vec<f64>,
    sum_y: Vec<f64>,
    sum_y2: Vec<f64>,
}

impl Block {
    fn new(grid_len: usize) -> Self {
        Self {
            records: Vec::new(),
            failures: Vec::new(),
            sum_x: vec![0.0; grid_len],
            sum_x2: vec![0.0; grid_len],
            sum_y: vec![0.0; grid_len],
            sum_y2: vec![0.0; grid_len],
        }
    }
}

fn run_replicate(
    config: &ExperimentConfig,
    regime: Option<&RegimeReport>,
    grid: &[u64],
    replicate: u64,
    block: &mut Block,
) {
    let key = StreamKey::new(config.master_seed, replicate);
    let fail = |block: &mut Block, stage: &str, message: String| {
        block.failures.push(FailureRecord {
            replicate,
            stage: stage.to_string(),
            message,
        })
    };
    let traj = match simulate(
        &config.params,
        &config.schedule,
        config.x0,
        config.horizon,
        key,
        config.plan(),
    ) {
        Ok(t) => t,
        Err(e) => {
            fail(block, "simulate", e.to_string());
            block.records.push(ReplicateRecord {
                replicate,
                outcome: Outcome::Undecided,
                final_x: f64::NAN,
                final_d: f64::NAN,
                fit: None,
                mode: None,
                tail_growth: None,
                tail_deviation: None,
            });
            return;
        }
    };
    accumulate_grid(&traj, grid, block);

    let label = analysis::classify_outcome(&traj, config.thresholds).expect("validated thresholds");
    let (target, side) = match label.label {
        Outcome::ToZero => (Some(FitTarget::DistanceToZero), Some(TailSide::ZeroSide)),
        Outcome::ToOne => (Some(FitTarget::DistanceToOne), Some(TailSide::OneSide)),
        Outcome::Undecided => (None, None),
    };
    let fit = target.and_then(|t| {
        match fit_exponent(&traj, t, config.fit_domain(), config.fit_window()) {
            Ok(f) => Some(f),
            Err(e) => {
                fail(block, "fit_exponent", e.to_string());
                None
            }
        }
    });
    let mode = match (label.label, &fit, regime) {
        (Outcome::ToOne, Some(f), Some(r)) => Some(detect_rate_mode(f, r)),
        _ => None,
    };
    let tail_growth = (label.label == Outcome::ToOne).then(|| last_decade_growth(&traj));
    let tail_deviation = match side {
        Some(side) if config.verify_tail => match verify_tail_product(&traj, side) {
            Ok(r) => Some(r.max_relative_deviation),
            Err(e) => {
                fail(block, "verify_tail_product", e.to_string());
                None
            }
        },
        _ => None,
    };
    block.records.push(ReplicateRecord {
        replicate,
        outcome: label.label,
        final_x: label.final_x,
        final_d: label.final_d,
        fit,
        mode,
        tail_growth,
        tail_deviation,
    });
}

fn accumulate_grid(traj: &Trajectory, grid: &[u64], block: &mut Block) {
    for (k, &n) in grid.iter().enumerate() {
        let cp = traj
            .checkpoint(n)
            .expect("summary grid is a subset of the plan");
        let y = CompanionPoint::from_checkpoint(cp).y;
        block.sum_x[k] += cp.state.x;
        block.sum_x2[k] += cp.state.x * cp.state.x;
        block.sum_y[k] += y;
        block.sum_y2[k] += y * y;
    }
}

/// `(S_N − S_{N/10}) / S_N` for `S_n = Σ_{k≤n}(1 − X_k)`, using the last
/// checkpoint at or before `N/10`.
fn last_decade_growth(traj: &Trajectory) -> f64 {
    let last = traj.final_checkpoint();
    let cut = traj.horizon / 10;
    let start = traj
        .checkpoints
        .iter()
        .rev()
        .find(|c| c.n <= cut)
        .map_or(0.0, |c| c.sum_d);
    if last.sum_d > 0.0 {
        (last.sum_d - start) / last.sum_d
    } else {
        0.0
    }
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    })
}

fn run_blocks(
    config: &ExperimentConfig,
    regime: Option<&RegimeReport>,
    grid: &[u64],
) -> Vec<Block> {
    let n_blocks = config.replicates.div_ceil(BLOCK_SIZE);
    let run_block = |b: u64| {
        let mut block = Block::new(grid.len());
        let end = ((b + 1) * BLOCK_SIZE).min(config.replicates);
        for r in b * BLOCK_SIZE..end {
            run_replicate(config, regime, grid, r, &mut block);
        }
        block
    };
    let workers = (config.workers as u64).min(n_blocks).max(1);
    if workers == 1 {
        return (0..n_blocks).map(run_block).collect();
    }
    // Worker w owns blocks w, w + W, w + 2W, ...
    let mut per_worker: Vec<Vec<(u64, Block)>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let run_block = &run_block;
                scope.spawn(move || {
                    (w..n_blocks)
                        .step_by(workers as usize)
                        .map(|b| (b, run_block(b)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut blocks: Vec<(u64, Block)> = per_worker.iter_mut().flat_map(|v| v.drain(..)).collect();
    blocks.sort_by_key(|(b, _)| *b);
    blocks.into_iter().map(|(_, b)| b).collect()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let regime = attached_regime(&config.schedule, &config.params);
    let grid = config.summary_grid();
    let mean_path = mean_recursion(&config.params, &config.schedule, config.x0, config.horizon)
        .map_err(|e| ExperimentError::MeanRecursion(e.to_string()))?;

    let blocks = run_blocks(config, regime.as_ref(), &grid);

    let g = grid.len();
    let (mut sx, mut sx2, mut sy, mut sy2) =
        (vec![0.0; g], vec![0.0; g], vec![0.0; g], vec![0.0; g]);
    let mut records = Vec::with_capacity(config.replicates as usize);
    let mut failures = Vec::new();
    for b in blocks {
        for k in 0..g {
            sx[k] += b.sum_x[k];
            sx2[k] += b.sum_x2[k];
            sy[k] += b.sum_y[k];
            sy2[k] += b.sum_y2[k];
        }
        records.extend(b.records);
        failures.extend(b.failures);
    }

    let r = config.replicates as f64;
    let mean_se = |s: f64, s2: f64| {
        let mean = s / r;
        let var = if r > 1.0 {
            ((s2 - s * mean) / (r - 1.0)).max(0.0)
        } else {
            0.0
        };
        (mean, (var / r).sqrt())
    };
    let checkpoints: Vec<CheckpointStats> = (0..g)
        .map(|k| {
            let (mean_x, se_x) = mean_se(sx[k], sx2[k]);
            let (mean_y, se_y) = mean_se(sy[k], sy2[k]);
            CheckpointStats {
                n: grid[k],
                mean_x,
                se_x,
                mean_y,
                se_y,
                mean_recursion_x: mean_path[grid[k] as usize].x,
            }
        })
        .collect();
    let mean_domination = mean_domination(&checkpoints);

    let mut counts = OutcomeCounts::default();
    let mut modes = ModeCounts::default();
    let (mut to_zero, mut to_one) = (Vec::new(), Vec::new());
    let mut cauchy = CauchyTails {
        to_one_runs: 0,
        satisfied: 0,
        fraction: None,
    };
    let mut tail = TailCheck {
        verified: 0,
        max_relative_deviation: 0.0,
    };
    for rec in &records {
        match rec.outcome {
            Outcome::ToZero => counts.to_zero += 1,
            Outcome::ToOne => counts.to_one += 1,
            Outcome::Undecided => counts.undecided += 1,
        }
        if let Some(f) = &rec.fit {
            match rec.outcome {
                Outcome::ToZero => to_zero.push(f.beta_hat),
                Outcome::ToOne => to_one.push(f.beta_hat),
                Outcome::Undecided => {}
            }
        }
        match rec.mode {
            Some(RateMode::Fast) => modes.fast += 1,
            Some(RateMode::Slow) => modes.slow += 1,
            Some(RateMode::Undecided) => modes.undecided += 1,
            None => {}
        }
        if let Some(growth) = rec.tail_growth {
            cauchy.to_one_runs += 1;
            if growth < CAUCHY_TAIL_FRACTION {
                cauchy.satisfied += 1;
            }
        }
        if let Some(dev) = rec.tail_deviation {
            tail.verified += 1;
            tail.max_relative_deviation = tail.max_relative_deviation.max(dev);
        }
    }
    cauchy.fraction =
        (cauchy.to_one_runs > 0).then(|| cauchy.satisfied as f64 / cauchy.to_one_runs as f64);

    let expected = regime.as_ref().and_then(RegimeReport::coexisting_exponents);
    let summary = ExperimentSummary {
        schema_version: SCHEMA_VERSION,
        config: ConfigEcho {
            pa: config.params.pa(),
            pb: config.params.pb(),
            schedule: config.schedule.describe(),
            x0: config.x0,
            horizon: config.horizon,
            replicates: config.replicates,
            master_seed: config.master_seed,
            thresholds: config.thresholds,
            fit_domain: config.fit_domain(),
            fit_window: (*config.fit_window().start(), *config.fit_window().end()),
            verify_tail: config.verify_tail,
        },
        p_zero: estimate_probability(counts.to_zero, config.replicates).expect("R >= 1"),
        p_one: estimate_probability(counts.to_one, config.replicates).expect("R >= 1"),
        counts,
        to_one_histogram: exponent_histogram(&to_one, expected).ok(),
        exponents: ExponentSamples {
            median_to_zero: median(&to_zero),
            median_to_one: median(&to_one),
            to_zero,
            to_one,
        },
        modes,
        cauchy_tails: cauchy,
        tail_check: config.verify_tail.then_some(tail),
        checkpoints,
        mean_domination,
        regime,
        failures,
        runtime: RunMetadata {
            steps_simulated: config.horizon * config.replicates,
            summary_checkpoints: g,
        },
    };
    Ok(ExperimentOutput { summary, records })
}

fn mean_domination(stats: &[CheckpointStats]) -> MeanDomination {
    let mut worst = f64::NEG_INFINITY;
    let mut worst_n = 0;
    // n = 0 holds with equality by construction.
    for s in stats.iter().filter(|s| s.n > 0) {
        let excess = s.mean_x - s.mean_recursion_x - 3.0 * s.se_x;
        if excess > worst {
            worst = excess;
            worst_n = s.n;
        }
    }
    MeanDomination {
        // Rounding slack for grid points where all replicates agree.
        passed: worst <= 1e-12,
        worst_excess: worst,
        worst_n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_examples() {
        let e = estimate_probability(0, 1000).unwrap();
        assert_eq!((e.p_hat, e.lower), (0.0, 0.0));
        assert!((e.upper - 0.003827).abs() < 5e-6, "{}", e.upper);
        let e = estimate_probability(500, 1000).unwrap();
        assert!((0.5 * (e.upper - e.lower) - 0.031).abs() < 5e-4);
        let e = estimate_probability(1000, 1000).unwrap();
        assert_eq!(e.upper, 1.0);
        assert!((e.lower - 0.99617).abs() < 5e-6, "{}", e.lower);
        assert_eq!(
            estimate_probability(1, 0),
            Err(ProbabilityError::ZeroTrials)
        );
        assert!(estimate_probability(3, 2).is_err());
    }

    fn normal_samples(mean: f64, sd: f64, n: usize, seed: u64) -> Vec<f64> {
        let s = StreamKey::new(seed, 0).stream();
        (0..n as u64)
            .map(|k| {
                let (u, v) = s.pair(k + 1);
                mean + sd * (-2.0 * u.max(1e-300).ln()).sqrt() * (std::f64::consts::TAU * v).cos()
            })
            .collect()
    }

    #[test]
    fn bimodality_examples() {
        let mut v = normal_samples(0.9, 0.05, 500, 1);
        v.extend(normal_samples(1.8, 0.05, 500, 2));
        let h = exponent_histogram(&v, Some((0.9, 1.8))).unwrap();
        let b = &h.bimodality;
        assert_eq!(b.verdict, Modality::Bimodal);
        assert!((b.low.mean - 0.9).abs() < 0.01 && (b.high.mean - 1.8).abs() < 0.01);
        assert!((b.low.fraction - 0.5).abs() < 0.01);
        let (dl, dh) = b.deviation_from_expected.unwrap();
        assert!(dl.abs() < 0.01 && dh.abs() < 0.01);
        assert_eq!(h.histogram.counts.iter().sum::<u64>(), 1000);

        let u = exponent_histogram(&normal_samples(0.4, 0.05, 1000, 3), None).unwrap();
        assert_eq!(u.bimodality.verdict, Modality::Unimodal);
        assert_eq!(
            exponent_histogram(&[1.0; 5], None),
            Err(HistogramError::InsufficientSamples(5))
        );
    }

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(
            BanditParams::new(0.6, 0.2).unwrap(),
            StepSchedule::harmonic(1.0).unwrap(),
            2000,
            150,
        );
        c.master_seed = 17;
        c.checkpoints = 64;
        c
    }

    #[test]
    fn summary_does_not_depend_on_workers() {
        let mut c = small_config();
        let one = run_experiment(&c).unwrap();
        c.workers = 3;
        let three = run_experiment(&c).unwrap();
        assert_eq!(
            serde_json::to_string(&one.summary).unwrap(),
            serde_json::to_string(&three.summary).unwrap()
        );
        assert_eq!(one.records, three.records);
    }

    #[test]
    fn counts_and_samples_are_consistent() {
        let out = run_experiment(&small_config()).unwrap();
        let s = &out.summary;
        assert_eq!(s.counts.to_zero + s.counts.to_one + s.counts.undecided, 150);
        assert!(s.exponents.to_one.len() as u64 <= s.counts.to_one);
        assert!(s.exponents.to_zero.len() as u64 <= s.counts.to_zero);
        assert!(s.mean_domination.passed);
        assert!(s.regime.is_some());
        assert_eq!(out.records.len(), 150);
        assert!(out
            .records
            .windows(2)
            .all(|w| w[0].replicate + 1 == w[1].replicate));
        for p in [s.p_zero, s.p_one] {
            assert!(0.0 <= p.lower && p.lower <= p.p_hat && p.p_hat <= p.upper && p.upper <= 1.0);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = small_config();
        c.replicates = 0;
        assert_eq!(
            run_experiment(&c).unwrap_err(),
            ExperimentError::NoReplicates
        );
        let mut c = small_config();
        c.horizon = 50;
        assert_eq!(
            run_experiment(&c).unwrap_err(),
            ExperimentError::HorizonTooShort(50)
        );
        let mut c = small_config();
        c.fit.window = Some((10, 5000));
        assert!(matches!(
            run_experiment(&c),
            Err(ExperimentError::InvalidFitWindow(..))
        ));
    }

    #[test]
    fn schedule_shorter_than_horizon_is_a_config_error() {
        let mut c = small_config();
        c.schedule = StepSchedule::custom_from_values("short", vec![0.1; 500]).unwrap();
        c.replicates = 4;
        let out = run_experiment(&c);
        assert!(matches!(out, Err(ExperimentError::MeanRecursion(_))));
    }
}
