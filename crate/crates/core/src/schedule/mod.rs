//! Step-size ("reward") sequences `γ_n` and their derived series.
//!
//! Indices are 1-based: `γ_1` is the step used to go from `X_0` to `X_1`.
//! Where a formula needs `γ_0` we use `γ_0 = γ_1`.

mod series;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::dynamics::BanditParams;
use crate::math;

pub use series::{
    numeric_verdict, partial_sum, series_verdict, Convergence, PartialSumTrace, SeriesError,
    SeriesEvidence, SeriesKind, SeriesMethod, SeriesVerdict, DEFAULT_SERIES_BUDGET,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("constant step must lie in (0,1), got {0}")]
    InvalidConstant(f64),
    #[error("power schedule requires C > 0 and C' > 0, got C = {c}, C' = {c_prime}")]
    InvalidPowerConstants { c: f64, c_prime: f64 },
    #[error("alpha must lie in (0,1], got {0}")]
    InvalidAlpha(f64),
    #[error("custom schedule has no terms")]
    EmptyCustom,
    #[error("step index must be at least 1")]
    ZeroIndex,
    #[error("gamma_{n} = {value} is outside (0,1)")]
    OutOfUnitInterval { n: u64, value: f64 },
    #[error("custom schedule has {len} terms, gamma_{n} requested")]
    BeyondEnd { n: u64, len: u64 },
}

type TermFn = dyn Fn(u64) -> f64 + Send + Sync;

/// A user supplied sequence, either a closure or a finite table.
#[derive(Clone)]
pub struct CustomSchedule {
    label: String,
    len: Option<u64>,
    term: Arc<TermFn>,
}

impl fmt::Debug for CustomSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSchedule")
            .field("label", &self.label)
            .field("len", &self.len)
            .finish_non_exhaustive()
    }
}

/// Two custom schedules are equal only if they share the same term function.
impl PartialEq for CustomSchedule {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label && self.len == other.len && Arc::ptr_eq(&self.term, &other.term)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    Constant {
        gamma: f64,
    },
    /// `γ_n = (C / (C' + n))^α`.
    Power {
        c: f64,
        c_prime: f64,
        alpha: f64,
    },
    Custom(CustomSchedule),
}

/// One row of derived schedule quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDerived {
    pub n: u64,
    pub gamma: f64,
    /// `Γ_n = Σ_{k≤n} γ_k`.
    pub gamma_sum: f64,
    /// `Γ⁽²⁾_n = Σ_{k≤n} γ_k²`.
    pub gamma_sq_sum: f64,
    /// `ε_n = 1/γ_{n+1} − 1/γ_n − π`, when parameters were supplied and
    /// `γ_{n+1}` exists.
    pub eps: Option<f64>,
}

impl StepSchedule {
    pub fn constant(gamma: f64) -> Result<Self, ScheduleError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(ScheduleError::InvalidConstant(gamma));
        }
        Ok(Self::Constant { gamma })
    }

    pub fn power(c: f64, c_prime: f64, alpha: f64) -> Result<Self, ScheduleError> {
        if !(c > 0.0 && c_prime > 0.0 && c.is_finite() && c_prime.is_finite()) {
            return Err(ScheduleError::InvalidPowerConstants { c, c_prime });
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(ScheduleError::InvalidAlpha(alpha));
        }
        Ok(Self::Power { c, c_prime, alpha })
    }

    /// `γ_n = C / (C + n)`.
    pub fn harmonic(c: f64) -> Result<Self, ScheduleError> {
        Self::power(c, c, 1.0)
    }

    pub fn custom(
        label: impl Into<String>,
        term: impl Fn(u64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::Custom(CustomSchedule {
            label: label.into(),
            len: None,
            term: Arc::new(term),
        })
    }

    /// A finite table; `values[0]` is `γ_1`.
    pub fn custom_from_values(
        label: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<Self, ScheduleError> {
        if values.is_empty() {
            return Err(ScheduleError::EmptyCustom);
        }
        if let Some((i, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0 && v < 1.0))
        {
            return Err(ScheduleError::OutOfUnitInterval {
                n: i as u64 + 1,
                value: v,
            });
        }
        let len = values.len() as u64;
        let values: Arc<[f64]> = values.into();
        Ok(Self::Custom(CustomSchedule {
            label: label.into(),
            len: Some(len),
            term: Arc::new(move |n| values[(n - 1) as usize]),
        }))
    }

    /// Number of available terms (`None` for infinite sequences).
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> Option<u64> {
        match self {
            Self::Custom(c) => c.len,
            _ => None,
        }
    }

    /// Whether the family is known to be nonincreasing in `n`.
    pub fn is_nonincreasing(&self) -> bool {
        !matches!(self, Self::Custom(_))
    }

    pub fn gamma_at(&self, n: u64) -> Result<f64, ScheduleError> {
        if n == 0 {
            return Err(ScheduleError::ZeroIndex);
        }
        let value = match self {
            Self::Constant { gamma } => *gamma,
            Self::Power { c, c_prime, alpha } => {
                let base = c / (c_prime + n as f64);
                if *alpha == 1.0 {
                    base
                } else {
                    math::pow(base, *alpha)
                }
            }
            Self::Custom(custom) => {
                if let Some(len) = custom.len {
                    if n > len {
                        return Err(ScheduleError::BeyondEnd { n, len });
                    }
                }
                (custom.term)(n)
            }
        };
        if !(value > 0.0 && value < 1.0) {
            return Err(ScheduleError::OutOfUnitInterval { n, value });
        }
        Ok(value)
    }

    /// `γ_n` with the convention `γ_0 = γ_1`.
    pub fn gamma_or_first(&self, n: u64) -> Result<f64, ScheduleError> {
        self.gamma_at(n.max(1))
    }

    /// `(Γ_n, Γ⁽²⁾_n)` by direct summation; both are 0 at `n = 0`.
    pub fn cumulative(&self, n: u64) -> Result<(f64, f64), ScheduleError> {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for k in 1..=n {
            let g = self.gamma_at(k)?;
            sum += g;
            sum_sq += g * g;
        }
        Ok((sum, sum_sq))
    }

    /// `1/γ_{n+1} − 1/γ_n`.
    pub fn reciprocal_increment(&self, n: u64) -> Result<f64, ScheduleError> {
        match self {
            Self::Constant { .. } => {
                self.gamma_at(n)?;
                Ok(0.0)
            }
            Self::Power { c, c_prime, alpha } => {
                self.gamma_at(n)?;
                self.gamma_at(n + 1)?;
                if *alpha == 1.0 {
                    Ok(1.0 / c)
                } else {
                    // b^α (e^{α ln(1 + 1/(C'+n))} − 1) avoids cancellation.
                    let shifted = c_prime + n as f64;
                    let base = shifted / c;
                    Ok(math::pow(base, *alpha) * math::expm1(alpha * math::log1p(1.0 / shifted)))
                }
            }
            Self::Custom(_) => Ok(1.0 / self.gamma_at(n + 1)? - 1.0 / self.gamma_at(n)?),
        }
    }

    /// `ε_n = 1/γ_{n+1} − 1/γ_n − π`. For `γ_n = C/(C'+n)` this is
    /// `1/C − π` for every `n`.
    pub fn epsilon_at(&self, n: u64, params: &BanditParams) -> Result<f64, ScheduleError> {
        if n == 0 {
            return Err(ScheduleError::ZeroIndex);
        }
        Ok(self.reciprocal_increment(n)? - params.pi())
    }

    /// Running derived quantities for `n = 1, 2, …`; the iterator ends at
    /// the last term of a finite custom table or at the first invalid term.
    pub fn derived<'a>(&'a self, params: Option<&'a BanditParams>) -> DerivedIter<'a> {
        DerivedIter {
            schedule: self,
            params,
            n: 0,
            gamma_sum: 0.0,
            gamma_sq_sum: 0.0,
            next_gamma: None,
            done: false,
        }
    }

    /// Text form used by config files and the CLI (`constant:<γ>`,
    /// `power:<C>,<C'>,<α>`, `custom:<label>`).
    pub fn describe(&self) -> String {
        match self {
            Self::Constant { gamma } => alloc::format!("constant:{gamma}"),
            Self::Power { c, c_prime, alpha } => alloc::format!("power:{c},{c_prime},{alpha}"),
            Self::Custom(custom) => alloc::format!("custom:{}", custom.label),
        }
    }
}

pub struct DerivedIter<'a> {
    schedule: &'a StepSchedule,
    params: Option<&'a BanditParams>,
    n: u64,
    gamma_sum: f64,
    gamma_sq_sum: f64,
    next_gamma: Option<f64>,
    done: bool,
}

impl Iterator for DerivedIter<'_> {
    type Item = ScheduleDerived;

    fn next(&mut self) -> Option<ScheduleDerived> {
        if self.done {
            return None;
        }
        self.n += 1;
        let gamma = match self.next_gamma.take() {
            Some(g) => g,
            None => match self.schedule.gamma_at(self.n) {
                Ok(g) => g,
                Err(_) => {
                    self.done = true;
                    return None;
                }
            },
        };
        self.gamma_sum += gamma;
        self.gamma_sq_sum += gamma * gamma;
        self.next_gamma = self.schedule.gamma_at(self.n + 1).ok();
        let eps = match (self.params, self.next_gamma) {
            (Some(p), Some(_)) => self.schedule.epsilon_at(self.n, p).ok(),
            _ => None,
        };
        Some(ScheduleDerived {
            n: self.n,
            gamma,
            gamma_sum: self.gamma_sum,
            gamma_sq_sum: self.gamma_sq_sum,
            eps,
        })
    }
}

/// Outcome of a deterministic condition check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionOutcome {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiminfCheck {
    pub outcome: ConditionOutcome,
    /// Infimum of `1/γ_{n+1} − 1/γ_n` over the inspected window, when
    /// computed numerically.
    pub infimum: Option<f64>,
    pub rule: String,
}

/// Absolute tolerance of the windowed liminf comparisons.
pub const LIMINF_TOLERANCE: f64 = 1e-12;

/// `liminf (1/γ_{n+1} − 1/γ_n) > −π`, the condition under which the trap
/// can only be reached with a summable error series. It always holds for a
/// nonincreasing sequence; custom sequences are inspected over `window`.
pub fn check_liminf_condition(
    schedule: &StepSchedule,
    params: &BanditParams,
    window: RangeInclusive<u64>,
) -> LiminfCheck {
    if schedule.is_nonincreasing() {
        return LiminfCheck {
            outcome: ConditionOutcome::Holds,
            infimum: None,
            rule: String::from("nonincreasing family"),
        };
    }
    let start = (*window.start()).max(1);
    let mut end = *window.end();
    if let Some(len) = schedule.len() {
        end = end.min(len.saturating_sub(1));
    }
    let mut infimum = f64::INFINITY;
    for n in start..=end {
        match schedule.reciprocal_increment(n) {
            Ok(v) => infimum = infimum.min(v),
            Err(_) => break,
        }
    }
    if !infimum.is_finite() {
        return LiminfCheck {
            outcome: ConditionOutcome::Inconclusive,
            infimum: None,
            rule: String::from("empty window"),
        };
    }
    let threshold = -params.pi();
    let outcome = if infimum > threshold + LIMINF_TOLERANCE {
        ConditionOutcome::Holds
    } else if infimum < threshold - LIMINF_TOLERANCE {
        ConditionOutcome::Fails
    } else {
        ConditionOutcome::Inconclusive
    };
    LiminfCheck {
        outcome,
        infimum: Some(infimum),
        rule: alloc::format!("window infimum over [{start}, {end}]"),
    }
}
