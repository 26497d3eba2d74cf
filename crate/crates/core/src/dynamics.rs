//! The LRI recursion, its deterministic mean recursion and the mean ODE.
//!
//! The state is carried as a pair `(x, d)` with `d = 1 − x` updated by its
//! own formula, so both distances to the absorbing boundaries keep full
//! relative precision.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng::StreamKey;
use crate::schedule::{ScheduleError, StepSchedule};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamsError {
    #[error("requires 0 < pb < pa < 1 (got pa = {pa}, pb = {pb})")]
    Ordering { pa: f64, pb: f64 },
}

/// Success probabilities of the two arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditParams {
    pa: f64,
    pb: f64,
    pi: f64,
}

impl BanditParams {
    pub fn new(pa: f64, pb: f64) -> Result<Self, ParamsError> {
        if !(0.0 < pb && pb < pa && pa < 1.0) {
            return Err(ParamsError::Ordering { pa, pb });
        }
        Ok(Self {
            pa,
            pb,
            pi: pa - pb,
        })
    }

    pub fn pa(&self) -> f64 {
        self.pa
    }

    pub fn pb(&self) -> f64 {
        self.pb
    }

    /// `π = p_A − p_B`.
    pub fn pi(&self) -> f64 {
        self.pi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePair {
    pub x: f64,
    pub d: f64,
}

impl StatePair {
    pub fn new(x: f64) -> Self {
        Self { x, d: 1.0 - x }
    }

    pub fn is_absorbed(&self) -> bool {
        self.x == 0.0 || self.d == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    RewardA,
    PenaltyB,
    NoChange,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RewardA => "reward_a",
            Self::PenaltyB => "penalty_b",
            Self::NoChange => "no_change",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub branch: Branch,
    /// `ΔM_{n+1} = 1{A}(1 − X_n) − 1{B} X_n − π X_n (1 − X_n)`.
    pub delta_m: f64,
    pub next: StatePair,
}

/// Applies `branch` to `state` unconditionally.
#[inline]
pub fn apply_branch(
    state: StatePair,
    gamma: f64,
    branch: Branch,
    params: &BanditParams,
) -> StepOutcome {
    let StatePair { x, d } = state;
    let drift = params.pi * x * d;
    let (next, delta_m) = match branch {
        Branch::RewardA => (
            StatePair {
                x: x + gamma * d,
                d: d * (1.0 - gamma),
            },
            d - drift,
        ),
        Branch::PenaltyB => (
            StatePair {
                x: x * (1.0 - gamma),
                d: d + gamma * x,
            },
            -x - drift,
        ),
        Branch::NoChange => (state, -drift),
    };
    StepOutcome {
        branch,
        delta_m,
        next,
    }
}

/// One step of the recursion driven by the uniforms `u` (which arm is
/// evaluated) and `v` (whether it succeeds).
///
/// Arm A is evaluated iff `u ≤ x`; for `x > 1/2` this is tested as
/// `1 − u ≥ d` so that the small quantity is the one compared. Absorbed
/// states never move.
#[inline]
pub fn lri_step(
    state: StatePair,
    gamma: f64,
    u: f64,
    v: f64,
    params: &BanditParams,
) -> StepOutcome {
    if state.is_absorbed() {
        return StepOutcome {
            branch: Branch::NoChange,
            delta_m: 0.0,
            next: state,
        };
    }
    let evaluates_a = if state.x <= 0.5 {
        u <= state.x
    } else {
        1.0 - u >= state.d
    };
    let branch = match (
        evaluates_a,
        evaluates_a && v <= params.pa || !evaluates_a && v <= params.pb,
    ) {
        (true, true) => Branch::RewardA,
        (false, true) => Branch::PenaltyB,
        (_, false) => Branch::NoChange,
    };
    apply_branch(state, gamma, branch, params)
}

/// The three branches from `state` with their conditional probabilities.
pub fn branch_outcomes(
    state: StatePair,
    gamma: f64,
    params: &BanditParams,
) -> [(f64, StepOutcome); 3] {
    let p_reward = state.x * params.pa;
    let p_penalty = state.d * params.pb;
    [
        (
            p_reward,
            apply_branch(state, gamma, Branch::RewardA, params),
        ),
        (
            p_penalty,
            apply_branch(state, gamma, Branch::PenaltyB, params),
        ),
        (
            1.0 - p_reward - p_penalty,
            apply_branch(state, gamma, Branch::NoChange, params),
        ),
    ]
}

/// `E[ΔM²_{n+1} | X_n = x] = x(1−x)(p_A(1−x) + p_B x − π² x(1−x))`.
#[inline]
pub fn conditional_variance(state: StatePair, params: &BanditParams) -> f64 {
    let xd = state.x * state.d;
    xd * (params.pa * state.d + params.pb * state.x - params.pi * params.pi * xd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordingPlan {
    /// `n = 0`, `n = N` and about `count` log-uniformly spaced steps.
    LogUniform { count: usize },
    /// Every step, which also keeps the full branch log.
    Every,
}

impl Default for RecordingPlan {
    fn default() -> Self {
        Self::LogUniform { count: 512 }
    }
}

impl RecordingPlan {
    /// Sorted, distinct checkpoint indices in `[0, horizon]`.
    pub fn indices(&self, horizon: u64) -> Vec<u64> {
        match *self {
            Self::Every => (0..=horizon).collect(),
            Self::LogUniform { count } => {
                if horizon < count as u64 {
                    return (0..=horizon).collect();
                }
                // Rounding merges points at small n; densify until `count`
                // distinct indices remain.
                let log_n = math::log(horizon as f64);
                let mut grid = count.max(2);
                loop {
                    let mut out = Vec::with_capacity(grid + 2);
                    out.push(0);
                    for i in 0..grid {
                        let t = i as f64 / (grid - 1) as f64;
                        let n = libm::round(math::exp(log_n * t)) as u64;
                        out.push(n.clamp(1, horizon));
                    }
                    out.push(horizon);
                    out.sort_unstable();
                    out.dedup();
                    if out.len() > count {
                        return out;
                    }
                    grid += grid / 4 + 1;
                }
            }
        }
    }
}

/// Trajectory state at a recorded step `n` (after `n` updates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    /// `γ_n`, with `γ_0 = γ_1`.
    pub gamma: f64,
    /// `Γ_n`.
    pub gamma_sum: f64,
    pub state: StatePair,
    /// Branch taken by step `n`; `None` at `n = 0`.
    pub branch: Option<Branch>,
    /// `ΔM_n` (0 at `n = 0`).
    pub delta_m: f64,
    /// `ln θ_n` with `θ_n = Π_{k≤n} (1 − γ_k π X_{k−1})`.
    pub log_theta: f64,
    /// `Σ_{k=1}^n X_k`.
    pub sum_x: f64,
    /// `Σ_{k=1}^n (1 − X_k)`.
    pub sum_d: f64,
    /// `Σ_{k=1}^n ΔM_k²`.
    pub quadratic_variation: f64,
    /// `Σ_{k=1}^n E[ΔM_k² | F_{k−1}]`.
    pub conditional_variance: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: BanditParams,
    pub schedule: StepSchedule,
    pub x0: f64,
    pub key: StreamKey,
    pub horizon: u64,
    pub plan: RecordingPlan,
    pub checkpoints: Vec<Checkpoint>,
}

impl Trajectory {
    pub fn final_checkpoint(&self) -> &Checkpoint {
        self.checkpoints.last().expect("trajectory has checkpoints")
    }

    pub fn final_state(&self) -> StatePair {
        self.final_checkpoint().state
    }

    /// Branch log `branch_1 … branch_N`, only available with
    /// [`RecordingPlan::Every`].
    pub fn branch_log(&self) -> Option<Vec<Branch>> {
        if self.plan != RecordingPlan::Every {
            return None;
        }
        Some(
            self.checkpoints[1..]
                .iter()
                .filter_map(|c| c.branch)
                .collect(),
        )
    }

    pub fn checkpoint(&self, n: u64) -> Option<&Checkpoint> {
        self.checkpoints
            .binary_search_by_key(&n, |c| c.n)
            .ok()
            .map(|i| &self.checkpoints[i])
    }

    /// Re-runs the simulation from the stored inputs.
    pub fn replay(&self) -> Result<Self, SimulationError> {
        simulate(
            &self.params,
            &self.schedule,
            self.x0,
            self.horizon,
            self.key,
            self.plan,
        )
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error("initial state must lie in (0,1), got {0}")]
    InvalidStart(f64),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("schedule failed at step {step}: {source}")]
    Schedule { step: u64, source: ScheduleError },
}

/// Rescaling threshold for the running product `θ_n`.
const THETA_RESCALE: f64 = 1.0 / (1u128 << 100) as f64;

/// Runs `horizon` steps from `x0`, drawing `(u, v)` for step `n` from the
/// counter-based stream of `key` and using `γ_n` from `schedule`.
pub fn simulate(
    params: &BanditParams,
    schedule: &StepSchedule,
    x0: f64,
    horizon: u64,
    key: StreamKey,
    plan: RecordingPlan,
) -> Result<Trajectory, SimulationError> {
    let stream = key.stream();
    drive(
        params,
        schedule,
        x0,
        horizon,
        key,
        plan,
        |n, state, gamma| {
            let (u, v) = stream.pair(n);
            lri_step(state, gamma, u, v, params)
        },
    )
}

/// Builds the trajectory that follows a prescribed branch sequence
/// (`branches[0]` is step 1), recorded at every step. Absorbed states stay
/// put whatever the branch.
pub fn trajectory_from_branches(
    params: &BanditParams,
    schedule: &StepSchedule,
    x0: f64,
    branches: &[Branch],
) -> Result<Trajectory, SimulationError> {
    drive(
        params,
        schedule,
        x0,
        branches.len() as u64,
        StreamKey::new(0, 0),
        RecordingPlan::Every,
        |n, state, gamma| {
            if state.is_absorbed() {
                return StepOutcome {
                    branch: Branch::NoChange,
                    delta_m: 0.0,
                    next: state,
                };
            }
            apply_branch(state, gamma, branches[(n - 1) as usize], params)
        },
    )
}

fn drive(
    params: &BanditParams,
    schedule: &StepSchedule,
    x0: f64,
    horizon: u64,
    key: StreamKey,
    plan: RecordingPlan,
    mut step: impl FnMut(u64, StatePair, f64) -> StepOutcome,
) -> Result<Trajectory, SimulationError> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(SimulationError::InvalidStart(x0));
    }
    if horizon == 0 {
        return Err(SimulationError::ZeroHorizon);
    }
    let schedule_err = |step| move |source| SimulationError::Schedule { step, source };
    let indices = plan.indices(horizon);
    let mut checkpoints = Vec::with_capacity(indices.len());

    let mut state = StatePair::new(x0);
    let mut cp = Checkpoint {
        n: 0,
        gamma: schedule.gamma_or_first(0).map_err(schedule_err(1))?,
        gamma_sum: 0.0,
        state,
        branch: None,
        delta_m: 0.0,
        log_theta: 0.0,
        sum_x: 0.0,
        sum_d: 0.0,
        quadratic_variation: 0.0,
        conditional_variance: 0.0,
    };
    checkpoints.push(cp);
    let mut next_index = indices.iter().skip(1);
    let mut next_record = next_index.next().copied();

    let (mut theta_mantissa, mut theta_shift) = (1.0f64, 0i64);
    let pi = params.pi;
    for n in 1..=horizon {
        let gamma = schedule.gamma_at(n).map_err(schedule_err(n))?;
        cp.conditional_variance += conditional_variance(state, params);
        theta_mantissa *= 1.0 - gamma * pi * state.x;
        if theta_mantissa < THETA_RESCALE {
            theta_mantissa /= THETA_RESCALE;
            theta_shift += 1;
        }
        let out = step(n, state, gamma);
        state = out.next;
        cp.gamma_sum += gamma;
        cp.sum_x += state.x;
        cp.sum_d += state.d;
        cp.quadratic_variation += out.delta_m * out.delta_m;
        if next_record == Some(n) {
            cp.n = n;
            cp.gamma = gamma;
            cp.state = state;
            cp.branch = Some(out.branch);
            cp.delta_m = out.delta_m;
            cp.log_theta =
                math::log(theta_mantissa) + theta_shift as f64 * math::log(THETA_RESCALE);
            checkpoints.push(cp);
            next_record = next_index.next().copied();
        }
    }
    Ok(Trajectory {
        params: *params,
        schedule: schedule.clone(),
        x0,
        key,
        horizon,
        plan,
        checkpoints,
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeanRecursionError {
    #[error("initial state must lie in [0,1], got {0}")]
    InvalidStart(f64),
    #[error("schedule failed at step {step}: {source}")]
    Schedule { step: u64, source: ScheduleError },
}

/// `x_{n+1} = x_n + γ_{n+1} π x_n (1 − x_n)` for `n < horizon`, returned as
/// `horizon + 1` state pairs starting with `x0`.
pub fn mean_recursion(
    params: &BanditParams,
    schedule: &StepSchedule,
    x0: f64,
    horizon: u64,
) -> Result<Vec<StatePair>, MeanRecursionError> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(MeanRecursionError::InvalidStart(x0));
    }
    let mut out = Vec::with_capacity(horizon as usize + 1);
    let mut s = StatePair::new(x0);
    out.push(s);
    for n in 1..=horizon {
        let gamma = schedule
            .gamma_at(n)
            .map_err(|source| MeanRecursionError::Schedule { step: n, source })?;
        let step = gamma * params.pi * s.x * s.d;
        s = StatePair {
            x: s.x + step,
            d: s.d * (1.0 - gamma * params.pi * s.x),
        };
        out.push(s);
    }
    Ok(out)
}

/// Solution of `ẋ = π x (1 − x)` with `x(0) = x0`.
pub fn ode_solution(pi: f64, x0: f64, t: f64) -> f64 {
    if x0 <= 0.0 {
        return 0.0;
    }
    x0 / (x0 + (1.0 - x0) * math::exp(-pi * t))
}
