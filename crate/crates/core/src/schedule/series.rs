//! Convergence verdicts for the series that decide fallibility and rates.
//!
//! `Constant` and `Power` schedules get exact verdicts from symbolic rules:
//! with `α = 1` every series below is comparable to a p-series, with
//! `α < 1` to a stretched exponential. Custom schedules are summed
//! numerically (all terms in log domain) and judged by the local decay
//! order `q` in `a_{n+1}/a_n ≈ 1 − q/n`, estimated as minus the slope of
//! `ln a_n` against `ln n` over the last decade of the budget:
//!
//! * `q > 1.2`: converges;
//! * `q < 0.8`, or the partial sum exceeds `e^690`: diverges;
//! * every term of the last decade exactly zero: converges (finite sum);
//! * otherwise, or with fewer than 8 usable terms: inconclusive.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::StepSchedule;
use crate::dynamics::BanditParams;
use crate::math::{self, gt_tie, LineAccumulator};

pub const DEFAULT_SERIES_BUDGET: u64 = 1_000_000;

const CONVERGE_ORDER: f64 = 1.2;
const DIVERGE_ORDER: f64 = 0.8;
const OVERFLOW_LOG: f64 = 690.0;
const MIN_FIT_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "series", rename_all = "snake_case")]
pub enum SeriesKind {
    /// `Σ γ_n²`
    SumGammaSq,
    /// `Σ γ_n² e^{πΓ_n}`
    SumGammaSqExpPiGamma,
    /// `Σ e^{−p_A Γ_n}`
    SumExpMinusPaGamma,
    /// `Σ_n Π_{k≤n} (1 − p_B γ_k)`
    SumProdOneMinusPbGamma,
    /// `Σ_n Π_{k≤n} (1 − p_A γ_k)`
    SumProdOneMinusPaGamma,
    /// `Σ γ_n ε_n⁺`
    SumGammaEpsPlus,
    /// `Σ_n e^{−ρΓ⁽²⁾_n} Π_{k≤n} (1 − p_B γ_k)` with `ρ ∈ (0, p_B(1−p_B)/2)`.
    WeakFallible { rho: f64 },
}

impl SeriesKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SumGammaSq => "sum_gamma_sq",
            Self::SumGammaSqExpPiGamma => "sum_gamma_sq_exp_pi_gamma",
            Self::SumExpMinusPaGamma => "sum_exp_minus_pa_gamma",
            Self::SumProdOneMinusPbGamma => "sum_prod_one_minus_pb_gamma",
            Self::SumProdOneMinusPaGamma => "sum_prod_one_minus_pa_gamma",
            Self::SumGammaEpsPlus => "sum_gamma_eps_plus",
            Self::WeakFallible { .. } => "weak_fallible",
        }
    }

    /// The weak fallibility series at the midpoint `ρ = p_B(1−p_B)/4`.
    pub fn weak_fallible_default(params: &BanditParams) -> Self {
        Self::WeakFallible {
            rho: params.pb() * (1.0 - params.pb()) / 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converges,
    Diverges,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesMethod {
    ClosedForm,
    NumericPartialSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SeriesEvidence {
    Rule {
        rule: String,
    },
    PartialSums {
        terms: u64,
        log_partial_sum: f64,
        /// Fitted `q`, absent when the tail could not be fitted.
        decay_order: Option<f64>,
        /// `(n, ln S_n)` at powers of ten and at the last term.
        trace: Vec<(u64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesVerdict {
    pub kind: SeriesKind,
    pub verdict: Convergence,
    pub method: SeriesMethod,
    pub evidence: SeriesEvidence,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SeriesError {
    #[error("rho must lie in (0, {max}), got {rho}")]
    InvalidRho { rho: f64, max: f64 },
}

fn validate(kind: &SeriesKind, params: &BanditParams) -> Result<(), SeriesError> {
    if let SeriesKind::WeakFallible { rho } = *kind {
        let max = params.pb() * (1.0 - params.pb()) / 2.0;
        if !(rho > 0.0 && rho < max) {
            return Err(SeriesError::InvalidRho { rho, max });
        }
    }
    Ok(())
}

/// Verdict for `kind`: symbolic for `Constant`/`Power`, numeric (with at
/// most `budget` terms) otherwise. Never definitive without evidence.
pub fn series_verdict(
    kind: SeriesKind,
    schedule: &StepSchedule,
    params: &BanditParams,
    budget: u64,
) -> Result<SeriesVerdict, SeriesError> {
    validate(&kind, params)?;
    if let Some(v) = closed_form(kind, schedule, params) {
        return Ok(v);
    }
    Ok(numeric_verdict_unchecked(kind, schedule, params, budget))
}

/// The numeric route for any schedule, bypassing the symbolic rules.
pub fn numeric_verdict(
    kind: SeriesKind,
    schedule: &StepSchedule,
    params: &BanditParams,
    budget: u64,
) -> Result<SeriesVerdict, SeriesError> {
    validate(&kind, params)?;
    Ok(numeric_verdict_unchecked(kind, schedule, params, budget))
}

fn rule(kind: SeriesKind, verdict: Convergence, text: String) -> SeriesVerdict {
    SeriesVerdict {
        kind,
        verdict,
        method: SeriesMethod::ClosedForm,
        evidence: SeriesEvidence::Rule { rule: text },
    }
}

fn p_series(exponent: f64) -> Convergence {
    if gt_tie(exponent, 1.0) {
        Convergence::Converges
    } else {
        Convergence::Diverges
    }
}

fn closed_form(
    kind: SeriesKind,
    schedule: &StepSchedule,
    params: &BanditParams,
) -> Option<SeriesVerdict> {
    use Convergence::*;
    use SeriesKind::*;
    let (pa, pb, pi) = (params.pa(), params.pb(), params.pi());
    match *schedule {
        StepSchedule::Constant { gamma } => {
            let (verdict, text) = match kind {
                SumGammaSq => (Diverges, String::from("constant terms gamma^2 > 0")),
                SumGammaSqExpPiGamma => (Diverges, String::from("terms grow like e^{pi gamma n}")),
                SumExpMinusPaGamma => (
                    Converges,
                    alloc::format!("geometric with ratio e^-{}", pa * gamma),
                ),
                SumProdOneMinusPbGamma => (
                    Converges,
                    alloc::format!("geometric with ratio {}", 1.0 - pb * gamma),
                ),
                SumProdOneMinusPaGamma => (
                    Converges,
                    alloc::format!("geometric with ratio {}", 1.0 - pa * gamma),
                ),
                SumGammaEpsPlus => (Converges, String::from("eps_n = -pi < 0: every term is 0")),
                WeakFallible { .. } => (
                    Converges,
                    String::from("dominated by the geometric product series"),
                ),
            };
            Some(rule(kind, verdict, text))
        }
        StepSchedule::Power { c, alpha: 1.0, .. } => {
            let note = "gamma_n ~ C/n; C' does not affect the verdict";
            let (verdict, text) = match kind {
                SumGammaSq => (
                    Converges,
                    alloc::format!("p-series with exponent 2; {note}"),
                ),
                SumGammaSqExpPiGamma => {
                    let s = 2.0 - c * pi;
                    (
                        p_series(s),
                        alloc::format!("p-series with exponent 2 - C*pi = {s}; {note}"),
                    )
                }
                SumExpMinusPaGamma => {
                    let s = c * pa;
                    (
                        p_series(s),
                        alloc::format!("p-series with exponent C*pA = {s}; {note}"),
                    )
                }
                SumProdOneMinusPbGamma => {
                    let s = c * pb;
                    (
                        p_series(s),
                        alloc::format!("p-series with exponent C*pB = {s}; {note}"),
                    )
                }
                SumProdOneMinusPaGamma => {
                    let s = c * pa;
                    (
                        p_series(s),
                        alloc::format!("p-series with exponent C*pA = {s}; {note}"),
                    )
                }
                SumGammaEpsPlus => {
                    let eps = 1.0 / c - pi;
                    if math::ge_tie(c * pi, 1.0) {
                        (
                            Converges,
                            alloc::format!("eps_n = 1/C - pi = {eps} <= 0; {note}"),
                        )
                    } else {
                        (
                            Diverges,
                            alloc::format!(
                                "eps_n = 1/C - pi = {eps} > 0 and sum gamma_n = inf; {note}"
                            ),
                        )
                    }
                }
                WeakFallible { .. } => {
                    let s = c * pb;
                    (
                        p_series(s),
                        alloc::format!(
                            "Gamma2 converges; p-series with exponent C*pB = {s}; {note}"
                        ),
                    )
                }
            };
            Some(rule(kind, verdict, text))
        }
        StepSchedule::Power { alpha, .. } => {
            let (verdict, text) = match kind {
                SumGammaSq => {
                    let s = 2.0 * alpha;
                    (
                        p_series(s),
                        alloc::format!("p-series with exponent 2*alpha = {s}"),
                    )
                }
                SumGammaSqExpPiGamma => (
                    Diverges,
                    String::from("alpha < 1: e^{pi Gamma_n} grows like a stretched exponential"),
                ),
                SumExpMinusPaGamma | SumProdOneMinusPbGamma | SumProdOneMinusPaGamma => (
                    Converges,
                    String::from("alpha < 1: terms decay like e^{-c n^(1-alpha)}"),
                ),
                SumGammaEpsPlus => (
                    Converges,
                    String::from("alpha < 1: eps_n -> -pi, so eps_n+ = 0 eventually"),
                ),
                WeakFallible { .. } => (
                    Converges,
                    String::from("alpha < 1: dominated by a stretched exponential"),
                ),
            };
            Some(rule(kind, verdict, text))
        }
        StepSchedule::Custom(_) => None,
    }
}

/// Log partial sums `ln S_n` of a series computed term by term.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSumTrace {
    /// Number of terms actually summed.
    pub terms: u64,
    pub log_sum: f64,
    /// `ln a_n` of the last summed term.
    pub log_last_term: f64,
    /// `(n, ln S_n)` at powers of ten and at the last term.
    pub trace: Vec<(u64, f64)>,
    decade_fit: LineAccumulator,
    decade_len: u64,
    decade_zeros: u64,
}

impl PartialSumTrace {
    pub fn sum(&self) -> f64 {
        math::exp(self.log_sum)
    }
}

/// Sums up to `terms` terms of `kind` in log domain. Stops early at the end
/// of a finite schedule.
pub fn partial_sum(
    kind: SeriesKind,
    schedule: &StepSchedule,
    params: &BanditParams,
    terms: u64,
) -> PartialSumTrace {
    let (pa, pb, pi) = (params.pa(), params.pb(), params.pi());
    let decade_start = (terms / 10).max(1);
    let mut log_sum = f64::NEG_INFINITY;
    let mut log_prod_b = 0.0;
    let mut log_prod_a = 0.0;
    let mut log_last_term = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut next_mark = 1u64;
    let mut fit = LineAccumulator::default();
    let mut decade_len = 0;
    let mut decade_zeros = 0;
    let mut summed = 0;
    for row in schedule.derived(Some(params)) {
        if row.n > terms {
            break;
        }
        log_prod_b += math::log1p(-pb * row.gamma);
        log_prod_a += math::log1p(-pa * row.gamma);
        let log_term = match kind {
            SeriesKind::SumGammaSq => 2.0 * math::log(row.gamma),
            SeriesKind::SumGammaSqExpPiGamma => 2.0 * math::log(row.gamma) + pi * row.gamma_sum,
            SeriesKind::SumExpMinusPaGamma => -pa * row.gamma_sum,
            SeriesKind::SumProdOneMinusPbGamma => log_prod_b,
            SeriesKind::SumProdOneMinusPaGamma => log_prod_a,
            SeriesKind::SumGammaEpsPlus => match row.eps {
                Some(e) if e > 0.0 => math::log(row.gamma * e),
                Some(_) => f64::NEG_INFINITY,
                None => break,
            },
            SeriesKind::WeakFallible { rho } => -rho * row.gamma_sq_sum + log_prod_b,
        };
        summed = row.n;
        log_sum = math::log_add_exp(log_sum, log_term);
        log_last_term = log_term;
        if row.n >= decade_start {
            decade_len += 1;
            if log_term.is_finite() {
                fit.push(math::log(row.n as f64), log_term);
            } else {
                decade_zeros += 1;
            }
        }
        if row.n == next_mark {
            trace.push((row.n, log_sum));
            next_mark = next_mark.saturating_mul(10);
        }
    }
    if trace.last().map(|&(n, _)| n) != Some(summed) && summed > 0 {
        trace.push((summed, log_sum));
    }
    PartialSumTrace {
        terms: summed,
        log_sum,
        log_last_term,
        trace,
        decade_fit: fit,
        decade_len,
        decade_zeros,
    }
}

fn numeric_verdict_unchecked(
    kind: SeriesKind,
    schedule: &StepSchedule,
    params: &BanditParams,
    budget: u64,
) -> SeriesVerdict {
    let ps = partial_sum(kind, schedule, params, budget);
    let order = ps.decade_fit.fit().map(|f| -f.slope);
    let verdict = if ps.log_sum > OVERFLOW_LOG {
        Convergence::Diverges
    } else if ps.decade_fit.len() < MIN_FIT_POINTS {
        if ps.decade_len >= MIN_FIT_POINTS as u64 && ps.decade_zeros == ps.decade_len {
            Convergence::Converges
        } else {
            Convergence::Inconclusive
        }
    } else {
        match order {
            Some(q) if q > CONVERGE_ORDER => Convergence::Converges,
            Some(q) if q < DIVERGE_ORDER => Convergence::Diverges,
            _ => Convergence::Inconclusive,
        }
    };
    SeriesVerdict {
        kind,
        verdict,
        method: SeriesMethod::NumericPartialSum,
        evidence: SeriesEvidence::PartialSums {
            terms: ps.terms,
            log_partial_sum: ps.log_sum,
            decay_order: order,
            trace: ps.trace,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Convergence::*;
    use SeriesKind::*;

    fn p(pa: f64, pb: f64) -> BanditParams {
        BanditParams::new(pa, pb).unwrap()
    }

    fn verdict(kind: SeriesKind, s: &StepSchedule, params: &BanditParams) -> Convergence {
        series_verdict(kind, s, params, 100_000).unwrap().verdict
    }

    #[test]
    fn closed_form_examples() {
        // C·π = 0.8 with C = 2, π = 0.4.
        let h2 = StepSchedule::harmonic(2.0).unwrap();
        assert_eq!(verdict(SumGammaSqExpPiGamma, &h2, &p(0.6, 0.2)), Converges);
        assert_eq!(verdict(SumExpMinusPaGamma, &h2, &p(0.6, 0.2)), Converges);
        let h15 = StepSchedule::harmonic(1.5).unwrap();
        assert_eq!(verdict(SumExpMinusPaGamma, &h15, &p(0.6, 0.2)), Diverges);
        let c = StepSchedule::constant(0.1).unwrap();
        assert_eq!(verdict(SumProdOneMinusPbGamma, &c, &p(0.6, 0.2)), Converges);
        for g in [0.01, 0.5, 0.99] {
            let c = StepSchedule::constant(g).unwrap();
            assert_eq!(verdict(SumGammaEpsPlus, &c, &p(0.6, 0.2)), Converges);
        }
        let v = series_verdict(SumGammaSq, &h2, &p(0.6, 0.2), 10).unwrap();
        assert_eq!(v.method, SeriesMethod::ClosedForm);
    }

    #[test]
    fn threshold_ties_take_the_closed_side() {
        // C·p_B = 1 exactly: the product series is the harmonic series.
        let h = StepSchedule::harmonic(5.0).unwrap();
        assert_eq!(verdict(SumProdOneMinusPbGamma, &h, &p(0.6, 0.2)), Diverges);
        // C·π = 1 up to rounding of π = 0.6 − 0.2.
        let h = StepSchedule::harmonic(2.5).unwrap();
        assert_eq!(verdict(SumGammaEpsPlus, &h, &p(0.6, 0.2)), Converges);
        assert_eq!(verdict(SumGammaSqExpPiGamma, &h, &p(0.6, 0.2)), Diverges);
    }

    #[test]
    fn rho_range_is_enforced() {
        let h = StepSchedule::harmonic(1.0).unwrap();
        let params = p(0.6, 0.2);
        let max = 0.2 * 0.8 / 2.0;
        assert!(series_verdict(WeakFallible { rho: max }, &h, &params, 10).is_err());
        assert!(series_verdict(WeakFallible { rho: 0.0 }, &h, &params, 10).is_err());
        assert!(series_verdict(WeakFallible { rho: max / 2.0 }, &h, &params, 10).is_ok());
        assert_eq!(
            SeriesKind::weak_fallible_default(&params),
            WeakFallible { rho: max / 2.0 }
        );
    }

    #[test]
    fn numeric_route_on_custom_schedules() {
        let params = p(0.6, 0.2);
        let harmonic = |c: f64| StepSchedule::custom("h", move |n| c / (c + n as f64));
        let v = series_verdict(SumProdOneMinusPbGamma, &harmonic(8.0), &params, 100_000).unwrap();
        assert_eq!(v.method, SeriesMethod::NumericPartialSum);
        assert_eq!(v.verdict, Converges);
        let v = series_verdict(SumProdOneMinusPbGamma, &harmonic(2.0), &params, 100_000).unwrap();
        assert_eq!(v.verdict, Diverges);
        // Exponent C·p_B = 1 falls in the safety band.
        let v = series_verdict(SumProdOneMinusPbGamma, &harmonic(5.0), &params, 100_000).unwrap();
        assert_eq!(v.verdict, Inconclusive);
        let constant = StepSchedule::custom("c", |_| 0.1);
        assert_eq!(
            series_verdict(SumGammaEpsPlus, &constant, &params, 1000)
                .unwrap()
                .verdict,
            Converges
        );
        assert_eq!(
            series_verdict(SumGammaSq, &constant, &params, 1000)
                .unwrap()
                .verdict,
            Diverges
        );
        assert_eq!(
            series_verdict(SumGammaSq, &constant, &params, 5)
                .unwrap()
                .verdict,
            Inconclusive
        );
        let alt = StepSchedule::custom("alt", |n| if n % 2 == 0 { 0.1 } else { 0.9 });
        assert_eq!(
            series_verdict(SumGammaEpsPlus, &alt, &params, 1000)
                .unwrap()
                .verdict,
            Diverges
        );
    }

    #[test]
    fn partial_sum_matches_direct_sum() {
        let params = p(0.6, 0.2);
        let h = StepSchedule::harmonic(1.0).unwrap();
        let ps = partial_sum(SumGammaSq, &h, &params, 3);
        assert!((ps.sum() - (0.25 + 1.0 / 9.0 + 1.0 / 16.0)).abs() < 1e-12);
        let ps = partial_sum(SumProdOneMinusPbGamma, &h, &params, 2);
        let direct = 0.9 + 0.9 * (1.0 - 0.2 / 3.0);
        assert!((ps.sum() - direct).abs() < 1e-12);
    }
}
