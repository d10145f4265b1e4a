use adascale_core::analysis::{
    bound_adascale, bound_linear, bound_single_batch, product_bound_curve,
    verify_bound_empirically, BoundKind, MeanCi, TheoryParams, Z95,
};
use adascale_core::engine::{run, RunSpec, Sequential, TrainConfig};
use adascale_core::gain::gain_from_moments;
use adascale_core::objectives::{NoisyQuadratic, QuadraticSpec, StochasticObjective};
use adascale_core::schedules::{LrSchedule, ScalingRule};
use adascale_core::{Error, Matrix, ParamVector};

fn constant(eta0: f64) -> LrSchedule {
    LrSchedule::Constant { eta0 }
}

#[test]
fn noiseless_isotropic_quadratic_meets_the_single_batch_bound_exactly() {
    // A = αI = βI and V = 0: every step multiplies F by (1 − ηa)² = 1 − γ
    let spec = QuadraticSpec::isotropic(3, 0.8, 0.0, 1.5);
    let q = spec.build().unwrap();
    let w0 = spec.start(&q);
    let p = TheoryParams::for_quadratic(&q, 0.3).unwrap();
    let cfg = TrainConfig::new(
        RunSpec::scaled_sgd(ScalingRule::Identity, 1, 60),
        constant(0.3),
    );
    let report = verify_bound_empirically(&q, &w0, &cfg, &p, &[1, 2, 3], 1, &Sequential).unwrap();
    assert_eq!(report.kind, BoundKind::SingleBatch);
    assert_eq!(report.points.len(), 61);
    for pt in &report.points {
        assert!(pt.suboptimality.half_width < 1e-12 * pt.bound);
        let rel = (pt.suboptimality.mean - pt.bound).abs() / pt.bound;
        assert!(rel < 1e-9, "t = {}: {rel}", pt.t);
    }
}

#[test]
fn noiseless_linear_scaling_stays_under_its_bound() {
    // one scale-S step at rate Sη contracts F by (1 − Sηa)², at least as much
    // as S single-batch contractions by 1 − γ/ξ(S) = 1 − ηa(2 − Sηa)
    let spec = QuadraticSpec::isotropic(2, 1.0, 0.0, 1.0);
    let q = spec.build().unwrap();
    let eta = 0.05;
    let p = TheoryParams::for_quadratic(&q, eta).unwrap();
    for s in [1usize, 4] {
        let cfg = TrainConfig::new(
            RunSpec::scaled_sgd(ScalingRule::Linear, s, 80),
            constant(eta),
        );
        let report =
            verify_bound_empirically(&q, &spec.start(&q), &cfg, &p, &[7], 1, &Sequential).unwrap();
        assert_eq!(report.kind, BoundKind::Linear { scale: s });
        assert_eq!(report.points.len(), 80 / s + 1);
        for pt in &report.points {
            let m = pt.suboptimality.mean;
            if s == 1 {
                assert!((m - pt.bound).abs() <= 1e-9 * pt.bound, "t = {}", pt.t);
            } else {
                assert!(m <= pt.bound * (1.0 + 1e-12), "t = {}", pt.t);
            }
        }
    }
}

#[test]
fn one_step_recursion_is_an_equality_at_the_true_gain() {
    // isotropic curvature a, noise trace V: one step with rate rη and S
    // workers takes F to (1 − rηa)²F + r²η²aV/(2S) in expectation
    let (a, v, eta) = (1.3, 0.7, 0.2);
    let p = TheoryParams::new(a, a, v, eta).unwrap();
    for s in [1usize, 2, 3, 5] {
        for f in [0.0, 1e-3, 0.4, 10.0] {
            let r = gain_from_moments(v, 2.0 * a * f, s);
            let exact =
                (1.0 - r * eta * a).powi(2) * f + (r * eta).powi(2) * a * v / (2.0 * s as f64);
            let recursion = (1.0 - r * p.gamma()) * f + r * p.gamma() * p.delta();
            assert!((exact - recursion).abs() < 1e-14, "S = {s}, F = {f}");
        }
    }
}

#[test]
fn single_batch_expectation_sits_delta_times_contraction_below_the_bound() {
    // E F_t = (1 − γ)^t (F_0 − Δ) + Δ = bound_t − Δ(1 − γ)^t
    let spec = QuadraticSpec::isotropic(2, 1.0, 0.05, 0.6);
    let q = spec.build().unwrap();
    let w0 = spec.start(&q);
    let eta = 0.1;
    let p = TheoryParams::for_quadratic(&q, eta).unwrap();
    let gap0 = q.objective_value(&w0);
    let horizon = 40;
    let cfg = TrainConfig::new(
        RunSpec::scaled_sgd(ScalingRule::Identity, 1, horizon),
        constant(eta),
    );
    let seeds: Vec<u64> = (1..=2000).collect();
    let traces: Vec<_> = seeds
        .iter()
        .map(|&s| run(&q, w0.clone(), &cfg.clone().with_seed(s), &Sequential).unwrap())
        .collect();
    for t in [0u64, 5, 10, 20, 39] {
        let values: Vec<f64> = traces
            .iter()
            .map(|tr| tr.records[t as usize].objective)
            .collect();
        let ci = MeanCi::of(&values);
        let bound = bound_single_batch(&p, gap0, t).unwrap();
        let expected = bound - p.delta() * (1.0 - p.gamma()).powi(t as i32);
        let se = ci.half_width / Z95;
        assert!(
            (ci.mean - expected).abs() <= 4.0 * se + 1e-15,
            "t = {t}: {} vs {expected}",
            ci.mean
        );
        assert!(expected < bound);
    }
}

#[test]
fn product_bound_with_unit_gains_is_the_single_batch_bound() {
    let p = TheoryParams::new(0.5, 2.0, 3.0, 0.1).unwrap();
    let gains = vec![1.0; 25];
    let (product, average) = bound_adascale(&p, 4.0, &gains, 4).unwrap();
    let single = bound_single_batch(&p, 4.0, 25).unwrap();
    assert!((product - single).abs() < 1e-12);
    assert!((average - single).abs() < 1e-12);
    let curve = product_bound_curve(&p, 4.0, &gains, 4).unwrap();
    assert_eq!(curve.len(), 26);
    assert!((curve[25] - product).abs() < 1e-15);
}

#[test]
fn theory_parameter_domains() {
    assert!(matches!(
        TheoryParams::new(2.0, 1.0, 0.0, 0.1),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        TheoryParams::new(1.0, 1.0, -1.0, 0.1),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        TheoryParams::new(1.0, 1.0, 0.0, 2.0),
        Err(Error::Domain(_))
    ));
    let p = TheoryParams::new(1.0, 1.0, 1.0, 0.1).unwrap();
    // 1/γ = 5.26
    assert!(bound_adascale(&p, 1.0, &[1.0], 5).is_ok());
    assert!(matches!(
        bound_adascale(&p, 1.0, &[1.0], 6),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        bound_adascale(&p, 1.0, &[4.5], 4),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        bound_adascale(&p, 1.0, &[0.5], 4),
        Err(Error::Domain(_))
    ));
    // ξ has its asymptote at S = 2/(ηβ) = 20
    assert!(p.xi(19.9).is_ok());
    assert!(matches!(p.xi(20.0), Err(Error::Domain(_))));
    assert!(matches!(
        bound_linear(&p, 1.0, 20, 5),
        Err(Error::Domain(_))
    ));
}

#[test]
fn linear_scaling_plateau_grows_with_scale() {
    let p = TheoryParams::new(1.0, 1.0, 1.0, 0.02).unwrap();
    let plateau = |s: usize| bound_linear(&p, 1.0, s, 1_000_000).unwrap();
    let mut last = plateau(1);
    assert!((last - p.delta()).abs() < 1e-15);
    for s in [2, 10, 50, 99] {
        let now = plateau(s);
        assert!(now > last);
        assert!((now - p.xi(s as f64).unwrap() * p.delta()).abs() < 1e-15);
        last = now;
    }
}

#[test]
fn bound_checks_reject_unsupported_setups() {
    let q = NoisyQuadratic::new(
        Matrix::identity(2),
        Matrix::identity(2),
        ParamVector::zeros(2),
    )
    .unwrap();
    let w0 = ParamVector::from_vec(vec![1.0, 1.0]);
    let p = TheoryParams::for_quadratic(&q, 0.1).unwrap();
    let decaying = LrSchedule::ExponentialDecay {
        eta0: 0.1,
        d: 0.5,
        t_s1: 10,
    };
    let cfg = TrainConfig::new(RunSpec::scaled_sgd(ScalingRule::Identity, 1, 10), decaying);
    assert!(verify_bound_empirically(&q, &w0, &cfg, &p, &[1], 1, &Sequential).is_err());
    let cfg = TrainConfig::new(
        RunSpec::scaled_sgd(ScalingRule::Identity, 1, 10),
        constant(0.2),
    );
    assert!(verify_bound_empirically(&q, &w0, &cfg, &p, &[1], 1, &Sequential).is_err());
    let cfg = TrainConfig::new(RunSpec::scaled_sgd(ScalingRule::Lsw, 2, 10), constant(0.1));
    assert!(verify_bound_empirically(&q, &w0, &cfg, &p, &[1], 1, &Sequential).is_err());
}
