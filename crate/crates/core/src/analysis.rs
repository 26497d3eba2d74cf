//! Diagnostics on completed trajectories: companion processes, outcome
//! labels, decay-exponent fits, terminal tail products and conditional
//! moment checks by branch enumeration.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    branch_outcomes, conditional_variance, BanditParams, Branch, Checkpoint, RecordingPlan,
    StatePair, Trajectory,
};
use crate::math::{self, LineAccumulator};
use crate::regimes::{RateClass, RateDescriptor, RegimeReport};
use crate::schedule::StepSchedule;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("trajectory has no intermediate checkpoints")]
    NoIntermediateStates,
    #[error("outcome thresholds must lie in (0, 0.1), got ({0}, {1})")]
    InvalidThresholds(f64, f64),
    #[error("distance is not positive at checkpoint n = {n}; shrink the window")]
    DistanceNotPositive { n: u64 },
    #[error("fit window {start}..={end} is too short: {reason}")]
    WindowTooShort {
        start: u64,
        end: u64,
        reason: &'static str,
    },
    #[error("fit window holds {found} checkpoints, at least {required} needed")]
    TooFewPoints { found: usize, required: usize },
    #[error("tail product verification needs the full branch log")]
    MissingBranchLog,
    #[error("no terminal tail: last opposing branch at step {last} of {horizon}")]
    NoTailFound { last: u64, horizon: u64 },
}

/// `θ_n`, `Y_n = (1 − X_n)/θ_n` and `Z_n = (1 − X_n)/γ_n` at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompanionPoint {
    pub n: u64,
    pub log_theta: f64,
    pub theta: f64,
    pub y: f64,
    pub z: f64,
}

impl CompanionPoint {
    pub fn from_checkpoint(c: &Checkpoint) -> Self {
        Self {
            n: c.n,
            log_theta: c.log_theta,
            theta: math::exp(c.log_theta),
            y: c.state.d * math::exp(-c.log_theta),
            z: c.state.d / c.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanionSeries {
    pub points: Vec<CompanionPoint>,
}

impl CompanionSeries {
    pub fn last(&self) -> &CompanionPoint {
        self.points.last().expect("non-empty series")
    }
}

pub fn companion_processes(traj: &Trajectory) -> Result<CompanionSeries, AnalysisError> {
    if traj.checkpoints.len() <= 2 && traj.horizon > 1 {
        return Err(AnalysisError::NoIntermediateStates);
    }
    Ok(CompanionSeries {
        points: traj
            .checkpoints
            .iter()
            .map(CompanionPoint::from_checkpoint)
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ToZero,
    ToOne,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Label `ToZero` when `x_N < delta_zero`.
    pub delta_zero: f64,
    /// Label `ToOne` when `1 − x_N < delta_one`.
    pub delta_one: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            delta_zero: 1e-3,
            delta_one: 1e-3,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let ok = |t: f64| t > 0.0 && t < 0.1;
        if ok(self.delta_zero) && ok(self.delta_one) {
            Ok(())
        } else {
            Err(AnalysisError::InvalidThresholds(
                self.delta_zero,
                self.delta_one,
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub label: Outcome,
    pub final_x: f64,
    pub final_d: f64,
    pub thresholds: Thresholds,
}

pub fn classify_state(
    state: StatePair,
    thresholds: Thresholds,
) -> Result<OutcomeLabel, AnalysisError> {
    thresholds.validate()?;
    let label = if state.x < thresholds.delta_zero {
        Outcome::ToZero
    } else if state.d < thresholds.delta_one {
        Outcome::ToOne
    } else {
        Outcome::Undecided
    };
    Ok(OutcomeLabel {
        label,
        final_x: state.x,
        final_d: state.d,
        thresholds,
    })
}

/// Finite-horizon proxy for the limit of a trajectory.
pub fn classify_outcome(
    traj: &Trajectory,
    thresholds: Thresholds,
) -> Result<OutcomeLabel, AnalysisError> {
    classify_state(traj.final_state(), thresholds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitTarget {
    DistanceToOne,
    DistanceToZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitDomain {
    /// `ln(distance) ≈ c − β ln n`
    LogN,
    /// `ln(distance) ≈ c − β Γ_n`
    GammaDomain,
}

impl FitDomain {
    /// `LogN` for `C/(C'+n)`, where rates are polynomial in `n`; `Γ_n`
    /// otherwise.
    pub fn natural_for(schedule: &StepSchedule) -> Self {
        match schedule {
            StepSchedule::Power { alpha, .. } if *alpha == 1.0 => Self::LogN,
            _ => Self::GammaDomain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub beta_hat: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub domain: FitDomain,
    pub window: (u64, u64),
    pub n_points: usize,
}

pub const MIN_FIT_POINTS: usize = 8;
const MIN_GAMMA_SPAN: f64 = 2.0;

/// Default window: the last decade `[N/10, N]`.
pub fn default_fit_window(horizon: u64) -> RangeInclusive<u64> {
    (horizon / 10).max(1)..=horizon
}

/// One sample of a decaying sequence: `(n, Γ_n, distance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySample {
    pub n: u64,
    pub gamma_sum: f64,
    pub distance: f64,
}

/// Least-squares decay exponent of samples inside `window`.
pub fn fit_decay(
    samples: impl IntoIterator<Item = DecaySample>,
    domain: FitDomain,
    window: RangeInclusive<u64>,
) -> Result<ExponentFit, AnalysisError> {
    let (start, end) = (*window.start(), *window.end());
    if domain == FitDomain::LogN && (start == 0 || end < start.saturating_mul(10)) {
        return Err(AnalysisError::WindowTooShort {
            start,
            end,
            reason: "less than one decade in n",
        });
    }
    let mut acc = LineAccumulator::default();
    let mut gamma_range = (f64::INFINITY, f64::NEG_INFINITY);
    for s in samples.into_iter().filter(|s| window.contains(&s.n)) {
        if !(s.distance > 0.0) {
            return Err(AnalysisError::DistanceNotPositive { n: s.n });
        }
        let abscissa = match domain {
            FitDomain::LogN => -math::log(s.n as f64),
            FitDomain::GammaDomain => -s.gamma_sum,
        };
        gamma_range = (
            gamma_range.0.min(s.gamma_sum),
            gamma_range.1.max(s.gamma_sum),
        );
        acc.push(abscissa, math::log(s.distance));
    }
    if acc.len() < MIN_FIT_POINTS {
        return Err(AnalysisError::TooFewPoints {
            found: acc.len(),
            required: MIN_FIT_POINTS,
        });
    }
    if domain == FitDomain::GammaDomain && gamma_range.1 - gamma_range.0 < MIN_GAMMA_SPAN {
        return Err(AnalysisError::WindowTooShort {
            start,
            end,
            reason: "Gamma_n spans less than 2",
        });
    }
    let fit = acc.fit().ok_or(AnalysisError::TooFewPoints {
        found: acc.len(),
        required: MIN_FIT_POINTS,
    })?;
    Ok(ExponentFit {
        beta_hat: fit.slope,
        stderr: fit.slope_stderr,
        intercept: fit.intercept,
        domain,
        window: (start, end),
        n_points: fit.n_points,
    })
}

/// Decay exponent of `1 − X_n` or `X_n` over the checkpoints in `window`.
pub fn fit_exponent(
    traj: &Trajectory,
    target: FitTarget,
    domain: FitDomain,
    window: RangeInclusive<u64>,
) -> Result<ExponentFit, AnalysisError> {
    fit_decay(
        traj.checkpoints.iter().map(|c| DecaySample {
            n: c.n,
            gamma_sum: c.gamma_sum,
            distance: match target {
                FitTarget::DistanceToOne => c.state.d,
                FitTarget::DistanceToZero => c.state.x,
            },
        }),
        domain,
        window,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSide {
    /// After the last reward, `X_n = X_{n₀} Π (1 − 1{B_k} γ_k)`.
    ZeroSide,
    /// After the last penalty, `1 − X_n = (1 − X_{n₀}) Π (1 − 1{A_k} γ_k)`.
    OneSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProductReport {
    pub side: TailSide,
    /// Last step taking the opposing branch (0 if there was none).
    pub n0: u64,
    pub checked_steps: u64,
    pub max_relative_deviation: f64,
}

/// Minimum number of terminal steps without the opposing branch.
pub const MIN_TAIL: u64 = 8;

/// Recomputes the terminal product from the branch log and compares it with
/// the recorded path over `(n₀, N]`.
pub fn verify_tail_product(
    traj: &Trajectory,
    side: TailSide,
) -> Result<TailProductReport, AnalysisError> {
    if traj.plan != RecordingPlan::Every {
        return Err(AnalysisError::MissingBranchLog);
    }
    let (opposing, shrinking) = match side {
        TailSide::ZeroSide => (Branch::RewardA, Branch::PenaltyB),
        TailSide::OneSide => (Branch::PenaltyB, Branch::RewardA),
    };
    let cps = &traj.checkpoints;
    let n0 = cps
        .iter()
        .rev()
        .find(|c| c.branch == Some(opposing))
        .map_or(0, |c| c.n);
    let horizon = traj.horizon;
    let pick = |s: &StatePair| match side {
        TailSide::ZeroSide => s.x,
        TailSide::OneSide => s.d,
    };
    // A path ending on the far half is not in this side's terminal phase,
    // however long its final run of shrinking steps.
    let far_side = pick(&traj.final_state()) > 0.5;
    if far_side || horizon - n0 < MIN_TAIL.min(horizon.saturating_sub(1)) {
        return Err(AnalysisError::NoTailFound { last: n0, horizon });
    }
    let mut value = pick(&cps[n0 as usize].state);
    let mut worst: f64 = 0.0;
    for c in &cps[n0 as usize + 1..] {
        if c.branch == Some(shrinking) {
            value *= 1.0 - c.gamma;
        }
        let recorded = pick(&c.state);
        let dev = if recorded == value {
            0.0
        } else {
            libm::fabs(value - recorded) / libm::fabs(recorded).max(f64::MIN_POSITIVE)
        };
        worst = worst.max(dev);
    }
    Ok(TailProductReport {
        side,
        n0,
        checked_steps: horizon - n0,
        max_relative_deviation: worst,
    })
}

/// Conditional moments at one state, by enumerating the three branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateMoments {
    pub x: f64,
    pub gamma: f64,
    /// `E[ΔM | x]`, zero for a martingale.
    pub mean_delta_m: f64,
    /// `E[X' − x | x]`.
    pub drift: f64,
    /// `γ π x (1 − x)`.
    pub drift_expected: f64,
    /// `E[ΔM² | x]` by enumeration.
    pub variance: f64,
    /// The closed form `x(1−x)(p_A(1−x) + p_B x − π² x(1−x))`.
    pub variance_closed_form: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl StateMoments {
    /// Largest violation among the four identities/bounds.
    pub fn worst_deviation(&self) -> f64 {
        let below = (self.lower_bound - self.variance).max(0.0);
        let above = (self.variance - self.upper_bound).max(0.0);
        libm::fabs(self.mean_delta_m)
            .max(libm::fabs(self.drift - self.drift_expected))
            .max(libm::fabs(self.variance - self.variance_closed_form))
            .max(below)
            .max(above)
    }
}

pub fn state_moments(state: StatePair, gamma: f64, params: &BanditParams) -> StateMoments {
    let outcomes = branch_outcomes(state, gamma, params);
    let mut mean = 0.0;
    let mut drift = 0.0;
    let mut var = 0.0;
    for (w, o) in &outcomes {
        mean += w * o.delta_m;
        drift += w * (o.next.x - state.x);
        var += w * o.delta_m * o.delta_m;
    }
    let xd = state.x * state.d;
    StateMoments {
        x: state.x,
        gamma,
        mean_delta_m: mean,
        drift,
        drift_expected: gamma * params.pi() * xd,
        variance: var,
        variance_closed_form: conditional_variance(state, params),
        lower_bound: params.pb() * xd,
        upper_bound: params.pa() * xd,
    }
}

/// `E[Z_{n+1} − Z_n | X_n]` with `Z_n = (1 − X_n)/γ_n`, by enumeration.
pub fn z_drift(state: StatePair, gamma_n: f64, gamma_next: f64, params: &BanditParams) -> f64 {
    branch_outcomes(state, gamma_next, params)
        .iter()
        .map(|(w, o)| w * o.next.d / gamma_next)
        .sum::<f64>()
        - state.d / gamma_n
}

/// One named check of a diagnostic report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticCheck {
    pub name: String,
    pub passed: bool,
    /// Informational checks never fail a report.
    pub gating: bool,
    pub worst_deviation: f64,
    pub location: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub checks: Vec<DiagnosticCheck>,
}

impl DiagnosticReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.gating)
    }

    pub fn push(&mut self, check: DiagnosticCheck) {
        self.checks.push(check);
    }
}

pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// Martingale, drift and variance identities over a grid of states.
pub fn martingale_grid_check(grid: &[f64], gamma: f64, params: &BanditParams) -> DiagnosticCheck {
    let mut worst = 0.0;
    let mut location = String::from("-");
    for &x in grid {
        let m = state_moments(StatePair::new(x), gamma, params);
        let dev = m.worst_deviation();
        if dev > worst {
            worst = dev;
            location = alloc::format!("x = {x}");
        }
    }
    DiagnosticCheck {
        name: "branch_enumeration_identities".to_string(),
        passed: worst <= IDENTITY_TOLERANCE,
        gating: true,
        worst_deviation: worst,
        location,
    }
}

/// Martingale diagnostics along a trajectory: enumeration identities at
/// every checkpoint state, plus the ratio of realized quadratic variation
/// to the summed conditional variances (informational).
pub fn martingale_diagnostics(traj: &Trajectory) -> DiagnosticReport {
    let params = &traj.params;
    let mut report = DiagnosticReport::default();
    let mut worst = 0.0;
    let mut location = String::from("-");
    for c in &traj.checkpoints {
        let m = state_moments(
            c.state,
            traj.schedule.gamma_or_first(c.n + 1).unwrap_or(c.gamma),
            params,
        );
        let dev = m.worst_deviation();
        if dev > worst {
            worst = dev;
            location = alloc::format!("n = {}", c.n);
        }
    }
    report.push(DiagnosticCheck {
        name: "checkpoint_enumeration_identities".to_string(),
        passed: worst <= IDENTITY_TOLERANCE,
        gating: true,
        worst_deviation: worst,
        location,
    });
    let last = traj.final_checkpoint();
    let ratio = if last.conditional_variance > 0.0 {
        last.quadratic_variation / last.conditional_variance
    } else {
        f64::NAN
    };
    report.push(DiagnosticCheck {
        name: "quadratic_variation_ratio".to_string(),
        passed: ratio.is_finite(),
        gating: false,
        worst_deviation: libm::fabs(ratio - 1.0),
        location: alloc::format!("ratio = {ratio}"),
    });
    report
}

/// `(1 − X_n) = θ_n Y_n`, `θ_n` positive and nonincreasing, `Y_n ≥ 0`.
pub fn companion_identity_check(traj: &Trajectory) -> DiagnosticCheck {
    let mut worst: f64 = 0.0;
    let mut location = String::from("-");
    let mut ok = true;
    let mut prev_log_theta = 0.0;
    for p in traj.checkpoints.iter().map(CompanionPoint::from_checkpoint) {
        let d = traj.checkpoint(p.n).map_or(0.0, |c| c.state.d);
        let rebuilt = p.theta * p.y;
        let dev = if d == 0.0 {
            libm::fabs(rebuilt)
        } else {
            libm::fabs(rebuilt - d) / d
        };
        if dev > worst {
            worst = dev;
            location = alloc::format!("n = {}", p.n);
        }
        if !(p.theta > 0.0) || p.log_theta > prev_log_theta || p.y < 0.0 {
            ok = false;
            location = alloc::format!("n = {} (monotonicity/sign)", p.n);
        }
        prev_log_theta = p.log_theta;
    }
    DiagnosticCheck {
        name: "companion_identity".to_string(),
        passed: ok && worst <= 1e-9,
        gating: true,
        worst_deviation: worst,
        location,
    }
}

/// Where `ε_n ≥ 0`, `Z_n` is a submartingale: its enumerated drift at every
/// checkpoint must be nonnegative up to rounding.
pub fn z_submartingale_check(traj: &Trajectory) -> DiagnosticCheck {
    let params = &traj.params;
    let mut worst: f64 = 0.0;
    let mut location = String::from("-");
    for c in &traj.checkpoints {
        let n = c.n.max(1);
        let (Ok(g_n), Ok(g_next), Ok(eps)) = (
            traj.schedule.gamma_at(n),
            traj.schedule.gamma_at(n + 1),
            traj.schedule.epsilon_at(n, params),
        ) else {
            continue;
        };
        if eps < 0.0 || c.n == 0 {
            continue;
        }
        let z = c.state.d / g_n;
        let drift = z_drift(c.state, g_n, g_next, params);
        let violation = (-drift / z.max(1.0)).max(0.0);
        if violation > worst {
            worst = violation;
            location = alloc::format!("n = {}", c.n);
        }
    }
    DiagnosticCheck {
        name: "z_submartingale".to_string(),
        passed: worst <= IDENTITY_TOLERANCE,
        gating: true,
        worst_deviation: worst,
        location,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    Fast,
    Slow,
    Undecided,
}

fn exponent_in_domain(rate: &RateDescriptor, domain: FitDomain) -> Option<f64> {
    match (rate, domain) {
        (RateDescriptor::Power { exponent }, FitDomain::LogN) => Some(*exponent),
        (RateDescriptor::GammaExponential { coefficient }, FitDomain::GammaDomain) => {
            Some(*coefficient)
        }
        _ => None,
    }
}

/// Assigns a fitted distance-to-one exponent to the slow or fast rate.
///
/// With two coexisting rates the fit is compared with their midpoint
/// (undecided within one standard error of it). With a single rate, that
/// rate is returned only if the fit lies within three standard errors.
pub fn detect_rate_mode(fit: &ExponentFit, regime: &RegimeReport) -> RateMode {
    let slow = regime
        .rate_to_one(RateClass::Slow)
        .and_then(|r| exponent_in_domain(&r.rate, fit.domain));
    let fast = regime
        .rate_to_one(RateClass::Fast)
        .and_then(|r| exponent_in_domain(&r.rate, fit.domain));
    match (slow, fast) {
        (Some(s), Some(f)) if regime.coexistence => {
            let mid = 0.5 * (s + f);
            if libm::fabs(fit.beta_hat - mid) <= fit.stderr {
                RateMode::Undecided
            } else if (fit.beta_hat > mid) == (f > s) {
                RateMode::Fast
            } else {
                RateMode::Slow
            }
        }
        (Some(e), None) | (None, Some(e)) => {
            if libm::fabs(fit.beta_hat - e) <= 3.0 * fit.stderr {
                if slow.is_some() {
                    RateMode::Slow
                } else {
                    RateMode::Fast
                }
            } else {
                RateMode::Undecided
            }
        }
        _ => RateMode::Undecided,
    }
}
