use banditlab_core::analysis::{
    classify_outcome, companion_identity_check, verify_tail_product, z_submartingale_check,
    Outcome, TailSide, Thresholds,
};
use banditlab_core::dynamics::{simulate, RecordingPlan};
use banditlab_core::regimes::{classify_power_family, classify_schedule, Fallibility};
use banditlab_core::schedule::partial_sum;
use banditlab_core::{BanditParams, Convergence, SeriesKind, StepSchedule, StreamKey};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = BanditParams> {
    (0.01f64..0.98, 0.01f64..0.98)
        .prop_filter("distinct", |(a, b)| (a - b).abs() > 1e-3)
        .prop_map(|(a, b)| BanditParams::new(a.max(b), a.min(b)).unwrap())
}

fn schedule() -> impl Strategy<Value = StepSchedule> {
    prop_oneof![
        (0.001f64..0.999).prop_map(|g| StepSchedule::constant(g).unwrap()),
        (0.1f64..10.0, 0.5f64..10.0, 0.1f64..=1.0)
            .prop_filter("gamma_1 < 1", |(c, cp, _)| c < &(cp + 1.0))
            .prop_map(|(c, cp, a)| StepSchedule::power(c, cp, a).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cumulative_sums_step_by_gamma(s in schedule(), n in 2u64..200_000) {
        let g = s.gamma_at(n).unwrap();
        prop_assert!(g > 0.0 && g < 1.0);
        let (a1, b1) = s.cumulative(n - 1).unwrap();
        let (a2, b2) = s.cumulative(n).unwrap();
        prop_assert!(a2 >= a1 && b2 >= b1);
        prop_assert!(((a2 - a1) - g).abs() <= 1e-12 * a2.max(1.0));
        prop_assert!(((b2 - b1) - g * g).abs() <= 1e-12 * b2.max(1.0));
    }

    #[test]
    fn harmonic_epsilon_is_exact(c in 0.1f64..20.0, p in params(), n in 1u64..=1_000_000) {
        let s = StepSchedule::harmonic(c).unwrap();
        prop_assert_eq!(s.epsilon_at(n, &p).unwrap(), 1.0 / c - p.pi());
    }

    #[test]
    fn fallible_always_cites_a_converging_series(
        p in params(),
        c in 0.2f64..30.0,
        alpha in prop_oneof![Just(1.0), 0.2f64..1.0],
    ) {
        let table = classify_power_family(alpha, c, &p).unwrap();
        let composed = classify_schedule(&StepSchedule::power(c, c, alpha).unwrap(), &p, 10_000);
        for r in [table, composed] {
            if r.fallibility == Fallibility::Fallible {
                prop_assert!(r.evidence.iter().any(|e| e.verdict == "converges"), "{:?}", r.evidence);
            }
        }
    }
}

fn exponent(kind: SeriesKind, c: f64, p: &BanditParams) -> f64 {
    match kind {
        SeriesKind::SumGammaSq => 2.0,
        SeriesKind::SumGammaSqExpPiGamma => 2.0 - c * p.pi(),
        SeriesKind::SumExpMinusPaGamma | SeriesKind::SumProdOneMinusPaGamma => c * p.pa(),
        SeriesKind::SumProdOneMinusPbGamma => c * p.pb(),
        _ => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Closed-form verdicts agree with partial sums at 10⁶ terms whenever the
    /// p-series exponent is clearly away from 1.
    #[test]
    fn closed_form_matches_partial_sums(
        p in params(),
        c in 0.3f64..8.0,
        k in 0usize..5,
    ) {
        let kind = [
            SeriesKind::SumGammaSq,
            SeriesKind::SumGammaSqExpPiGamma,
            SeriesKind::SumExpMinusPaGamma,
            SeriesKind::SumProdOneMinusPbGamma,
            SeriesKind::SumProdOneMinusPaGamma,
        ][k];
        let s = StepSchedule::harmonic(c).unwrap();
        prop_assume!(s.gamma_at(1).is_ok());
        let q = exponent(kind, c, &p);
        prop_assume!(q <= 0.5 || q >= 1.1);
        let verdict = banditlab_core::schedule::series_verdict(kind, &s, &p, 1_000_000).unwrap();
        let trace = partial_sum(kind, &s, &p, 1_000_000);
        if q <= 0.5 {
            prop_assert_eq!(verdict.verdict, Convergence::Diverges);
            prop_assert!(trace.log_sum > 1e3f64.ln(), "q = {q}, ln S = {}", trace.log_sum);
        } else {
            prop_assert_eq!(verdict.verdict, Convergence::Converges);
            prop_assert!(trace.log_last_term - trace.log_sum < 1e-4f64.ln());
        }
    }

    #[test]
    fn companion_identity_and_z_drift(seed in any::<u64>(), c in 0.5f64..3.0) {
        let p = BanditParams::new(0.6, 0.2).unwrap();
        let s = StepSchedule::harmonic(c).unwrap();
        let t = simulate(&p, &s, 0.5, 50_000, StreamKey::new(seed, 0), RecordingPlan::default()).unwrap();
        prop_assert!(companion_identity_check(&t).passed);
        prop_assert!(z_submartingale_check(&t).passed);
    }

    #[test]
    fn zero_side_tail_product_is_exact(seed in any::<u64>(), gamma in 0.2f64..0.5) {
        let p = BanditParams::new(0.6, 0.2).unwrap();
        let s = StepSchedule::constant(gamma).unwrap();
        let t = simulate(&p, &s, 0.2, 2000, StreamKey::new(seed, 1), RecordingPlan::Every).unwrap();
        if classify_outcome(&t, Thresholds::default()).unwrap().label == Outcome::ToZero {
            let r = verify_tail_product(&t, TailSide::ZeroSide).unwrap();
            prop_assert!(r.max_relative_deviation <= 1e-9);
        }
    }
}

#[test]
fn dual_track_consistency_over_long_runs() {
    let p = BanditParams::new(0.6, 0.2).unwrap();
    let s = StepSchedule::harmonic(1.0).unwrap();
    for seed in 0..100 {
        let t = simulate(
            &p,
            &s,
            0.5,
            1_000_000,
            StreamKey::new(seed, 0),
            RecordingPlan::default(),
        )
        .unwrap();
        for c in &t.checkpoints {
            assert!(
                (c.state.x + c.state.d - 1.0).abs() <= 1e-12,
                "seed {seed} n {}",
                c.n
            );
        }
    }
}
