//! Fallibility and convergence-rate classification of step schedules.
//!
//! Two routes reach a [`RegimeReport`]:
//!
//! * [`classify_power_family`] applies the threshold table for
//!   `γ_n = (C/(C'+n))^α` directly;
//! * [`classify_schedule`] composes the general condition checkers
//!   ([`check_fallibility`], [`check_fast_rate_possible`],
//!   [`check_fast_rate_almost_sure`], [`check_two_rate_dichotomy`]) and
//!   works for any schedule, answering `Unknown` where no tractable
//!   condition decides.
//!
//! Ties on a threshold (`C p_B = 1`, `C π = 1`, `C p_A = 1`) go to the closed
//! side of the inequalities: `C p_B ≤ 1` is infallible, `C π ≥ 1` is fast
//! almost surely, `C p_A ≤ 1` is slow only.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::BanditParams;
use crate::math::{ge_tie, gt_tie};
use crate::schedule::{
    check_liminf_condition, series_verdict, ConditionOutcome, Convergence, SeriesEvidence,
    SeriesKind, SeriesMethod, SeriesVerdict, StepSchedule, LIMINF_TOLERANCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallibility {
    Fallible,
    Infallible,
    Unknown,
}

/// A decay rate, either polynomial in `n` or exponential in `Γ_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RateDescriptor {
    /// `n^{−exponent}`
    Power {
        exponent: f64,
    },
    /// `e^{−coefficient · Γ_n}`
    GammaExponential {
        coefficient: f64,
    },
    NotApplicable,
}

impl RateDescriptor {
    /// The exponent in the natural fitting domain (`ln n` or `Γ_n`).
    pub fn exponent(&self) -> Option<f64> {
        match *self {
            Self::Power { exponent } => Some(exponent),
            Self::GammaExponential { coefficient } => Some(coefficient),
            Self::NotApplicable => None,
        }
    }
}

impl fmt::Display for RateDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Power { exponent } => write!(f, "n^-{exponent:.2}"),
            Self::GammaExponential { coefficient } => write!(f, "exp(-{coefficient:.2} Gamma_n)"),
            Self::NotApplicable => f.write_str("n/a"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateClass {
    /// `e^{−πΓ_n}`, the rate of the mean recursion.
    Slow,
    /// `e^{−p_A Γ_n}`, with a summable error series.
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occurrence {
    AlmostSure,
    PositiveProbability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateToOne {
    pub class: RateClass,
    pub rate: RateDescriptor,
    pub occurrence: Occurrence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEntry {
    pub condition: String,
    pub verdict: String,
    pub method: String,
    pub detail: String,
}

impl EvidenceEntry {
    fn note(condition: &str, verdict: &str, detail: impl Into<String>) -> Self {
        Self {
            condition: condition.to_string(),
            verdict: verdict.to_string(),
            method: "rule".to_string(),
            detail: detail.into(),
        }
    }
}

impl From<&SeriesVerdict> for EvidenceEntry {
    fn from(v: &SeriesVerdict) -> Self {
        let detail = match &v.evidence {
            SeriesEvidence::Rule { rule } => rule.clone(),
            SeriesEvidence::PartialSums {
                terms,
                log_partial_sum,
                decay_order,
                ..
            } => match decay_order {
                Some(q) => alloc::format!("{terms} terms, ln S = {log_partial_sum:.4}, q = {q:.4}"),
                None => alloc::format!("{terms} terms, ln S = {log_partial_sum:.4}"),
            },
        };
        Self {
            condition: v.kind.name().to_string(),
            verdict: convergence_str(v.verdict).to_string(),
            method: match v.method {
                SeriesMethod::ClosedForm => "closed_form",
                SeriesMethod::NumericPartialSum => "numeric_partial_sum",
            }
            .to_string(),
            detail,
        }
    }
}

fn convergence_str(c: Convergence) -> &'static str {
    match c {
        Convergence::Converges => "converges",
        Convergence::Diverges => "diverges",
        Convergence::Inconclusive => "inconclusive",
    }
}

fn outcome_str(c: ConditionOutcome) -> &'static str {
    match c {
        ConditionOutcome::Holds => "holds",
        ConditionOutcome::Fails => "fails",
        ConditionOutcome::Inconclusive => "inconclusive",
    }
}

/// Named regimes of the power family, ordered by increasing `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    SlowOnly,
    Coexistence,
    FastAlmostSure,
    FallibleCoexistence,
    FallibleFast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub fallibility: Fallibility,
    pub rate_to_zero: RateDescriptor,
    pub rates_to_one: Vec<RateToOne>,
    pub coexistence: bool,
    pub evidence: Vec<EvidenceEntry>,
}

impl RegimeReport {
    pub fn rate_to_one(&self, class: RateClass) -> Option<&RateToOne> {
        self.rates_to_one.iter().find(|r| r.class == class)
    }

    /// `(slow, fast)` exponents when both rates may occur.
    pub fn coexisting_exponents(&self) -> Option<(f64, f64)> {
        if !self.coexistence {
            return None;
        }
        Some((
            self.rate_to_one(RateClass::Slow)?.rate.exponent()?,
            self.rate_to_one(RateClass::Fast)?.rate.exponent()?,
        ))
    }

    pub fn label(&self) -> Option<RegimeLabel> {
        let fast_only = matches!(
            self.rates_to_one.as_slice(),
            [RateToOne {
                class: RateClass::Fast,
                occurrence: Occurrence::AlmostSure,
                ..
            }]
        );
        let slow_only = matches!(
            self.rates_to_one.as_slice(),
            [RateToOne {
                class: RateClass::Slow,
                occurrence: Occurrence::AlmostSure,
                ..
            }]
        );
        match (self.fallibility, self.coexistence, fast_only, slow_only) {
            (Fallibility::Infallible, false, false, true) => Some(RegimeLabel::SlowOnly),
            (Fallibility::Infallible, true, _, _) => Some(RegimeLabel::Coexistence),
            (Fallibility::Infallible, false, true, _) => Some(RegimeLabel::FastAlmostSure),
            (Fallibility::Fallible, true, _, _) => Some(RegimeLabel::FallibleCoexistence),
            (Fallibility::Fallible, false, true, _) => Some(RegimeLabel::FallibleFast),
            _ => None,
        }
    }

    /// One-line human-readable summary.
    pub fn summary(&self) -> String {
        let head = match self.fallibility {
            Fallibility::Fallible => alloc::format!("fallible; rate to 0: {}", self.rate_to_zero),
            Fallibility::Infallible => String::from("infallible"),
            Fallibility::Unknown => String::from("fallibility unknown"),
        };
        let qualifier = if self.fallibility == Fallibility::Infallible {
            ""
        } else {
            " (conditional on non-failure)"
        };
        let slow = self.rate_to_one(RateClass::Slow);
        let fast = self.rate_to_one(RateClass::Fast);
        let tail = match (slow, fast) {
            (Some(s), Some(f)) if self.coexistence => alloc::format!(
                "rates to 1{qualifier}: slow {} and fast {} coexist",
                s.rate,
                f.rate
            ),
            (Some(s), None) => alloc::format!("rate to 1{qualifier}: slow {} only", s.rate),
            (None, Some(f)) => {
                alloc::format!("rate to 1{qualifier}: fast {} almost surely", f.rate)
            }
            _ => alloc::format!("rate to 1{qualifier}: undetermined"),
        };
        alloc::format!("{head}; {tail}")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError {
    #[error("alpha must lie in (0,1], got {0}")]
    InvalidAlpha(f64),
    #[error("C must be positive, got {0}")]
    InvalidC(f64),
}

fn closed_series(
    kind: SeriesKind,
    schedule: &StepSchedule,
    params: &BanditParams,
) -> SeriesVerdict {
    series_verdict(kind, schedule, params, 0).expect("series kinds used here are always valid")
}

/// The threshold table for `γ_n = (C/(C'+n))^α`.
pub fn classify_power_family(
    alpha: f64,
    c: f64,
    params: &BanditParams,
) -> Result<RegimeReport, ClassifyError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ClassifyError::InvalidAlpha(alpha));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(ClassifyError::InvalidC(c));
    }
    let (pa, pb, pi) = (params.pa(), params.pb(), params.pi());
    let schedule = StepSchedule::harmonic(c)
        .and_then(|h| {
            if alpha == 1.0 {
                Ok(h)
            } else {
                StepSchedule::power(c, c, alpha)
            }
        })
        .map_err(|_| ClassifyError::InvalidC(c))?;
    let mut evidence = Vec::new();
    evidence.push(EvidenceEntry::note(
        "power_family",
        "applies",
        alloc::format!("alpha = {alpha}, C = {c}; C' does not enter the table"),
    ));
    let zero_series = closed_series(SeriesKind::SumProdOneMinusPbGamma, &schedule, params);

    if alpha < 1.0 {
        evidence.push((&zero_series).into());
        evidence.push(EvidenceEntry::note(
            "fast_rate_almost_sure",
            "holds",
            "alpha < 1: sum gamma_n eps_n+ < inf; conditional on non-failure",
        ));
        return Ok(RegimeReport {
            fallibility: Fallibility::Fallible,
            rate_to_zero: RateDescriptor::GammaExponential { coefficient: pb },
            rates_to_one: alloc::vec![RateToOne {
                class: RateClass::Fast,
                rate: RateDescriptor::GammaExponential { coefficient: pa },
                occurrence: Occurrence::AlmostSure,
            }],
            coexistence: false,
            evidence,
        });
    }

    let fallible = gt_tie(c * pb, 1.0);
    evidence.push(EvidenceEntry::note(
        "trap_threshold",
        if fallible { "C*pB > 1" } else { "C*pB <= 1" },
        alloc::format!("C*pB = {}", c * pb),
    ));
    evidence.push((&zero_series).into());
    let slow = RateDescriptor::Power { exponent: c * pi };
    let fast = RateDescriptor::Power { exponent: c * pa };
    let conditional = if fallible {
        "; conditional on non-failure"
    } else {
        ""
    };
    let (rates_to_one, coexistence) = if ge_tie(c * pi, 1.0) {
        evidence.push(EvidenceEntry::note(
            "fast_threshold",
            "C*pi >= 1",
            alloc::format!("C*pi = {}{conditional}", c * pi),
        ));
        (
            alloc::vec![RateToOne {
                class: RateClass::Fast,
                rate: fast,
                occurrence: Occurrence::AlmostSure,
            }],
            false,
        )
    } else if gt_tie(c * pa, 1.0) {
        evidence.push(EvidenceEntry::note(
            "coexistence_threshold",
            "1/pA < C < 1/pi",
            alloc::format!("C*pA = {}, C*pi = {}{conditional}", c * pa, c * pi),
        ));
        (
            alloc::vec![
                RateToOne {
                    class: RateClass::Slow,
                    rate: slow,
                    occurrence: Occurrence::PositiveProbability,
                },
                RateToOne {
                    class: RateClass::Fast,
                    rate: fast,
                    occurrence: Occurrence::PositiveProbability,
                },
            ],
            true,
        )
    } else {
        evidence.push(EvidenceEntry::note(
            "slow_threshold",
            "C*pA <= 1",
            alloc::format!("C*pA = {}{conditional}", c * pa),
        ));
        (
            alloc::vec![RateToOne {
                class: RateClass::Slow,
                rate: slow,
                occurrence: Occurrence::AlmostSure,
            }],
            false,
        )
    };
    Ok(RegimeReport {
        fallibility: if fallible {
            Fallibility::Fallible
        } else {
            Fallibility::Infallible
        },
        rate_to_zero: if fallible {
            RateDescriptor::Power { exponent: c * pb }
        } else {
            RateDescriptor::NotApplicable
        },
        rates_to_one,
        coexistence,
        evidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult<V> {
    pub verdict: V,
    pub evidence: Vec<EvidenceEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FastRatePossibility {
    Possible,
    NotPossible,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DichotomyVerdict {
    /// `liminf ε_n > 0`: on `{Y∞ = 0}` the rate is fast, on `{Y∞ > 0}`
    /// slow. `coexistence` is set when the fast rate is also possible.
    Dichotomy {
        coexistence: bool,
    },
    /// `liminf ε_n ≤ 0`; no two-rate claim is made.
    NoDichotomy,
    Unknown,
}

fn window_for(budget: u64) -> core::ops::RangeInclusive<u64> {
    1..=budget.max(1)
}

/// Decides whether the trap is reached with positive probability.
///
/// Requires the liminf condition; then `Σγ² < ∞` makes the product series
/// `Σ Π(1 − p_B γ_k)` an exact criterion. Without it, convergence of the
/// product series or of the weak series with `ρ = p_B(1−p_B)/4` is
/// sufficient; otherwise the answer is `Unknown`.
pub fn check_fallibility(
    schedule: &StepSchedule,
    params: &BanditParams,
    budget: u64,
) -> CheckResult<Fallibility> {
    let mut evidence = Vec::new();
    let liminf = check_liminf_condition(schedule, params, window_for(budget));
    evidence.push(EvidenceEntry {
        condition: "liminf_condition".to_string(),
        verdict: outcome_str(liminf.outcome).to_string(),
        method: if liminf.infimum.is_some() {
            "numeric_window"
        } else {
            "rule"
        }
        .to_string(),
        detail: liminf.rule.clone(),
    });
    if liminf.outcome != ConditionOutcome::Holds {
        evidence.push(EvidenceEntry::note(
            "fallibility",
            "unknown",
            "liminf condition not established",
        ));
        return CheckResult {
            verdict: Fallibility::Unknown,
            evidence,
        };
    }
    let mut verdict_of = |kind| {
        let v = series_verdict(kind, schedule, params, budget).expect("valid series kind");
        evidence.push((&v).into());
        v.verdict
    };
    let sq = verdict_of(SeriesKind::SumGammaSq);
    let product = verdict_of(SeriesKind::SumProdOneMinusPbGamma);
    let verdict = match (sq, product) {
        (_, Convergence::Converges) => Fallibility::Fallible,
        (Convergence::Converges, Convergence::Diverges) => Fallibility::Infallible,
        (Convergence::Converges, Convergence::Inconclusive) => Fallibility::Unknown,
        _ => match verdict_of(SeriesKind::weak_fallible_default(params)) {
            Convergence::Converges => Fallibility::Fallible,
            _ => Fallibility::Unknown,
        },
    };
    CheckResult { verdict, evidence }
}

/// Whether the fast rate occurs with positive probability: with `Σγ² < ∞`
/// iff `Σ e^{−p_A Γ_n} < ∞`; otherwise `Σ Π(1 − p_A γ_k) < ∞` suffices.
pub fn check_fast_rate_possible(
    schedule: &StepSchedule,
    params: &BanditParams,
    budget: u64,
) -> CheckResult<FastRatePossibility> {
    let mut evidence = Vec::new();
    let mut verdict_of = |kind| {
        let v = series_verdict(kind, schedule, params, budget).expect("valid series kind");
        evidence.push((&v).into());
        v.verdict
    };
    let verdict = match verdict_of(SeriesKind::SumGammaSq) {
        Convergence::Converges => match verdict_of(SeriesKind::SumExpMinusPaGamma) {
            Convergence::Converges => FastRatePossibility::Possible,
            Convergence::Diverges => FastRatePossibility::NotPossible,
            Convergence::Inconclusive => FastRatePossibility::Unknown,
        },
        _ => match verdict_of(SeriesKind::SumProdOneMinusPaGamma) {
            Convergence::Converges => FastRatePossibility::Possible,
            _ => FastRatePossibility::Unknown,
        },
    };
    CheckResult { verdict, evidence }
}

/// `Σ γ_n ε_n⁺ < ∞` implies the fast rate almost surely on `{X∞ = 1}`.
/// Known sufficient cases: constant steps, `λ n^{−α}` with `α < 1`, and
/// `C/(C+n)` with `π C ≥ 1`.
pub fn check_fast_rate_almost_sure(
    schedule: &StepSchedule,
    params: &BanditParams,
    budget: u64,
) -> CheckResult<ConditionOutcome> {
    let v = series_verdict(SeriesKind::SumGammaEpsPlus, schedule, params, budget)
        .expect("valid series kind");
    let verdict = match v.verdict {
        Convergence::Converges => ConditionOutcome::Holds,
        Convergence::Diverges => ConditionOutcome::Fails,
        Convergence::Inconclusive => ConditionOutcome::Inconclusive,
    };
    CheckResult {
        verdict,
        evidence: alloc::vec![(&v).into()],
    }
}

/// Whether `liminf ε_n > 0`, in which case at most the slow and the fast
/// rate occur, split by `{Y∞ > 0}` and `{Y∞ = 0}`.
pub fn check_two_rate_dichotomy(
    schedule: &StepSchedule,
    params: &BanditParams,
    budget: u64,
) -> CheckResult<DichotomyVerdict> {
    let mut evidence = Vec::new();
    let liminf_positive = match *schedule {
        StepSchedule::Constant { .. } => {
            evidence.push(EvidenceEntry::note(
                "liminf_eps_positive",
                "fails",
                "eps_n = -pi",
            ));
            ConditionOutcome::Fails
        }
        StepSchedule::Power { c, alpha: 1.0, .. } => {
            let holds = !ge_tie(c * params.pi(), 1.0);
            evidence.push(EvidenceEntry::note(
                "liminf_eps_positive",
                if holds { "holds" } else { "fails" },
                alloc::format!("eps_n = 1/C - pi = {}", 1.0 / c - params.pi()),
            ));
            if holds {
                ConditionOutcome::Holds
            } else {
                ConditionOutcome::Fails
            }
        }
        StepSchedule::Power { .. } => {
            evidence.push(EvidenceEntry::note(
                "liminf_eps_positive",
                "fails",
                "alpha < 1: eps_n -> -pi",
            ));
            ConditionOutcome::Fails
        }
        StepSchedule::Custom(_) => {
            let end = match schedule.len() {
                Some(len) => budget.min(len.saturating_sub(1)),
                None => budget,
            };
            let start = (end / 2).max(1);
            let infimum = (start..=end)
                .map_while(|n| schedule.epsilon_at(n, params).ok())
                .fold(f64::INFINITY, f64::min);
            let outcome = if !infimum.is_finite() {
                ConditionOutcome::Inconclusive
            } else if infimum > LIMINF_TOLERANCE {
                ConditionOutcome::Holds
            } else if infimum < -LIMINF_TOLERANCE {
                ConditionOutcome::Fails
            } else {
                ConditionOutcome::Inconclusive
            };
            evidence.push(EvidenceEntry {
                condition: "liminf_eps_positive".to_string(),
                verdict: outcome_str(outcome).to_string(),
                method: "numeric_window".to_string(),
                detail: alloc::format!("inf eps_n over [{start}, {end}] = {infimum}"),
            });
            outcome
        }
    };
    let verdict = match liminf_positive {
        ConditionOutcome::Holds => {
            let fast = check_fast_rate_possible(schedule, params, budget);
            evidence.extend(fast.evidence);
            match fast.verdict {
                FastRatePossibility::Possible => DichotomyVerdict::Dichotomy { coexistence: true },
                FastRatePossibility::NotPossible => {
                    DichotomyVerdict::Dichotomy { coexistence: false }
                }
                FastRatePossibility::Unknown => DichotomyVerdict::Unknown,
            }
        }
        ConditionOutcome::Fails => DichotomyVerdict::NoDichotomy,
        ConditionOutcome::Inconclusive => DichotomyVerdict::Unknown,
    };
    CheckResult { verdict, evidence }
}

/// Rate `e^{−coef · Γ_n}` expressed in the schedule's natural domain.
fn rate_for(schedule: &StepSchedule, coefficient: f64) -> RateDescriptor {
    match *schedule {
        StepSchedule::Power { c, alpha: 1.0, .. } => RateDescriptor::Power {
            exponent: c * coefficient,
        },
        _ => RateDescriptor::GammaExponential { coefficient },
    }
}

/// Classifies any schedule by composing the general checkers.
pub fn classify_schedule(
    schedule: &StepSchedule,
    params: &BanditParams,
    budget: u64,
) -> RegimeReport {
    let (pa, pb, pi) = (params.pa(), params.pb(), params.pi());
    let fallibility = check_fallibility(schedule, params, budget);
    let fast_as = check_fast_rate_almost_sure(schedule, params, budget);
    let possible = check_fast_rate_possible(schedule, params, budget);
    let dichotomy = check_two_rate_dichotomy(schedule, params, budget);

    let mut evidence = fallibility.evidence;
    evidence.extend(fast_as.evidence);
    evidence.extend(possible.evidence);
    evidence.extend(dichotomy.evidence);
    if fallibility.verdict != Fallibility::Infallible {
        evidence.push(EvidenceEntry::note(
            "rates_to_one",
            "conditional",
            "conditional on non-failure",
        ));
    }

    let slow = rate_for(schedule, pi);
    let fast = rate_for(schedule, pa);
    let (rates_to_one, coexistence) = if fast_as.verdict == ConditionOutcome::Holds {
        (
            alloc::vec![RateToOne {
                class: RateClass::Fast,
                rate: fast,
                occurrence: Occurrence::AlmostSure
            }],
            false,
        )
    } else if possible.verdict == FastRatePossibility::NotPossible {
        (
            alloc::vec![RateToOne {
                class: RateClass::Slow,
                rate: slow,
                occurrence: Occurrence::AlmostSure
            }],
            false,
        )
    } else if dichotomy.verdict == (DichotomyVerdict::Dichotomy { coexistence: true }) {
        (
            alloc::vec![
                RateToOne {
                    class: RateClass::Slow,
                    rate: slow,
                    occurrence: Occurrence::PositiveProbability
                },
                RateToOne {
                    class: RateClass::Fast,
                    rate: fast,
                    occurrence: Occurrence::PositiveProbability
                },
            ],
            true,
        )
    } else {
        (Vec::new(), false)
    };
    RegimeReport {
        fallibility: fallibility.verdict,
        rate_to_zero: if fallibility.verdict == Fallibility::Fallible {
            rate_for(schedule, pb)
        } else {
            RateDescriptor::NotApplicable
        },
        rates_to_one,
        coexistence,
        evidence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUDGET: u64 = 100_000;

    fn p(pa: f64, pb: f64) -> BanditParams {
        BanditParams::new(pa, pb).unwrap()
    }

    #[test]
    fn table_examples() {
        let r = classify_power_family(1.0, 4.0, &p(0.6, 0.3)).unwrap();
        assert_eq!(r.fallibility, Fallibility::Fallible);
        assert!((r.rate_to_zero.exponent().unwrap() - 1.2).abs() < 1e-12);

        let r = classify_power_family(1.0, 1.0, &p(0.6, 0.2)).unwrap();
        assert_eq!(r.label(), Some(RegimeLabel::SlowOnly));
        assert!((r.rates_to_one[0].rate.exponent().unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(r.summary(), "infallible; rate to 1: slow n^-0.40 only");

        let r = classify_power_family(1.0, 2.0, &p(0.9, 0.45)).unwrap();
        assert_eq!(r.label(), Some(RegimeLabel::Coexistence));
        let (s, f) = r.coexisting_exponents().unwrap();
        assert!((s - 0.9).abs() < 1e-12 && (f - 1.8).abs() < 1e-12);
        assert_eq!(
            r.summary(),
            "infallible; rates to 1: slow n^-0.90 and fast n^-1.80 coexist"
        );

        let r = classify_power_family(1.0, 2.5, &p(0.6, 0.2)).unwrap();
        assert_eq!(r.label(), Some(RegimeLabel::FastAlmostSure));
        assert!((r.rates_to_one[0].rate.exponent().unwrap() - 1.5).abs() < 1e-12);

        for c in [0.1, 1.0, 10.0] {
            let r = classify_power_family(0.5, c, &p(0.6, 0.2)).unwrap();
            assert_eq!(r.fallibility, Fallibility::Fallible);
        }
        assert!(classify_power_family(1.5, 1.0, &p(0.6, 0.2)).is_err());
        assert!(classify_power_family(1.0, 0.0, &p(0.6, 0.2)).is_err());
    }

    #[test]
    fn fallibility_examples() {
        let params = p(0.6, 0.2);
        let c = StepSchedule::constant(0.1).unwrap();
        assert_eq!(
            check_fallibility(&c, &params, BUDGET).verdict,
            Fallibility::Fallible
        );
        let h = StepSchedule::harmonic(1.0).unwrap();
        assert_eq!(
            check_fallibility(&h, &params, BUDGET).verdict,
            Fallibility::Infallible
        );
        let sq = StepSchedule::power(1.0, 1.0, 0.5).unwrap();
        assert_eq!(
            check_fallibility(&sq, &params, BUDGET).verdict,
            Fallibility::Fallible
        );
        // Same sequence through the numeric route: Γ_n ~ 2 sqrt(n), so the
        // product series decays like e^{-0.4 sqrt(n)}.
        let sq_custom = StepSchedule::custom("sqrt", |n| libm::sqrt(1.0 / (1.0 + n as f64)));
        let r = check_fallibility(&sq_custom, &params, BUDGET);
        assert_eq!(r.verdict, Fallibility::Fallible);
        assert!(r
            .evidence
            .iter()
            .any(|e| e.method == "numeric_partial_sum" && e.verdict == "converges"));
    }

    #[test]
    fn numeric_fallibility_on_custom_harmonic() {
        let params = p(0.6, 0.2);
        let h = |c: f64| StepSchedule::custom("h", move |n| c / (c + n as f64));
        assert_eq!(
            check_fallibility(&h(1.0), &params, BUDGET).verdict,
            Fallibility::Infallible
        );
        let r = check_fallibility(&h(8.0), &params, BUDGET);
        assert_eq!(r.verdict, Fallibility::Fallible);
        assert!(r
            .evidence
            .iter()
            .any(|e| e.condition == "sum_prod_one_minus_pb_gamma"
                && e.verdict == "converges"
                && e.method == "numeric_partial_sum"));
        // Oscillating steps break the liminf prerequisite.
        let alt = StepSchedule::custom("alt", |n| if n % 2 == 0 { 0.1 } else { 0.9 });
        assert_eq!(
            check_fallibility(&alt, &params, 1000).verdict,
            Fallibility::Unknown
        );
    }

    #[test]
    fn fast_rate_checks() {
        let params = p(0.6, 0.2);
        let h = |c| StepSchedule::harmonic(c).unwrap();
        assert_eq!(
            check_fast_rate_possible(&h(2.0), &params, BUDGET).verdict,
            FastRatePossibility::Possible
        );
        assert_eq!(
            check_fast_rate_possible(&h(1.5), &params, BUDGET).verdict,
            FastRatePossibility::NotPossible
        );
        let c = StepSchedule::constant(0.1).unwrap();
        assert_eq!(
            check_fast_rate_possible(&c, &params, BUDGET).verdict,
            FastRatePossibility::Possible
        );
        assert_eq!(
            check_fast_rate_almost_sure(&c, &params, BUDGET).verdict,
            ConditionOutcome::Holds
        );
        assert_eq!(
            check_fast_rate_almost_sure(&h(2.5), &params, BUDGET).verdict,
            ConditionOutcome::Holds
        );
        assert_eq!(
            check_fast_rate_almost_sure(&h(3.0), &params, BUDGET).verdict,
            ConditionOutcome::Holds
        );
        assert_eq!(
            check_fast_rate_almost_sure(&h(2.0), &params, BUDGET).verdict,
            ConditionOutcome::Fails
        );
        let sq = StepSchedule::power(3.0, 3.0, 0.7).unwrap();
        assert_eq!(
            check_fast_rate_almost_sure(&sq, &params, BUDGET).verdict,
            ConditionOutcome::Holds
        );
    }

    #[test]
    fn dichotomy_checks() {
        let r =
            check_two_rate_dichotomy(&StepSchedule::harmonic(2.0).unwrap(), &p(0.9, 0.45), BUDGET);
        assert_eq!(r.verdict, DichotomyVerdict::Dichotomy { coexistence: true });
        let r =
            check_two_rate_dichotomy(&StepSchedule::harmonic(1.0).unwrap(), &p(0.6, 0.2), BUDGET);
        assert_eq!(
            r.verdict,
            DichotomyVerdict::Dichotomy { coexistence: false }
        );
        let r =
            check_two_rate_dichotomy(&StepSchedule::constant(0.1).unwrap(), &p(0.6, 0.2), BUDGET);
        assert_eq!(r.verdict, DichotomyVerdict::NoDichotomy);
        let custom = StepSchedule::custom("h", |n| 2.0 / (2.0 + n as f64));
        let r = check_two_rate_dichotomy(&custom, &p(0.9, 0.45), BUDGET);
        assert_eq!(r.verdict, DichotomyVerdict::Dichotomy { coexistence: true });
    }

    #[test]
    fn composed_route_matches_table_on_examples() {
        for (alpha, c, pa, pb) in [
            (1.0, 4.0, 0.6, 0.3),
            (1.0, 1.0, 0.6, 0.2),
            (1.0, 2.0, 0.9, 0.45),
            (1.0, 2.5, 0.6, 0.2),
            (0.5, 1.0, 0.6, 0.2),
            (0.8, 3.0, 0.7, 0.1),
        ] {
            let params = p(pa, pb);
            let table = classify_power_family(alpha, c, &params).unwrap();
            let schedule = StepSchedule::power(c, c, alpha).unwrap();
            let composed = classify_schedule(&schedule, &params, BUDGET);
            assert_eq!(table.fallibility, composed.fallibility, "{alpha} {c}");
            assert_eq!(table.rates_to_one, composed.rates_to_one, "{alpha} {c}");
            assert_eq!(table.coexistence, composed.coexistence);
            assert_eq!(table.rate_to_zero, composed.rate_to_zero);
        }
    }

    #[test]
    fn fallible_reports_carry_convergent_evidence() {
        let r = classify_power_family(1.0, 4.0, &p(0.6, 0.3)).unwrap();
        assert!(r
            .evidence
            .iter()
            .any(|e| e.condition == "sum_prod_one_minus_pb_gamma" && e.verdict == "converges"));
        assert!(r
            .summary()
            .starts_with("fallible; rate to 0: n^-1.20; rate to 1 (conditional"));
    }
}
