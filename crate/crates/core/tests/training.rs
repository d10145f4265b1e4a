use adascale_core::engine::{
    run, run_adascale, run_elastic, run_observed, run_scaled_sgd, ElasticStage, RunSpec,
    Sequential, TrainConfig,
};
use adascale_core::gain::{GainConfig, GainVariant};
use adascale_core::objectives::{
    ClassifierSpec, GeneratedClassifier, QuadraticSpec, StochasticObjective,
};
use adascale_core::schedules::{LrSchedule, ScalingRule};
use adascale_core::ParamVector;

fn noisy() -> (adascale_core::objectives::NoisyQuadratic, ParamVector) {
    let spec = QuadraticSpec::isotropic(8, 1.0, 0.2, 1.0);
    let q = spec.build().unwrap();
    let w0 = spec.start(&q);
    (q, w0)
}

fn constant(eta0: f64) -> LrSchedule {
    LrSchedule::Constant { eta0 }
}

#[test]
fn same_seed_gives_bitwise_identical_traces() {
    let (q, w0) = noisy();
    let cfg = TrainConfig::new(RunSpec::adascale(4, 200), constant(0.05)).with_seed(3);
    let a = run(&q, w0.clone(), &cfg, &Sequential).unwrap();
    let b = run(&q, w0.clone(), &cfg, &Sequential).unwrap();
    assert_eq!(a, b);
    let c = run(&q, w0, &cfg.clone().with_seed(4), &Sequential).unwrap();
    assert_ne!(a.final_w, c.final_w);
}

#[test]
fn adascale_iteration_count_contract() {
    let (q, w0) = noisy();
    for scale in [1, 2, 7, 32] {
        for variant in [GainVariant::Recommended, GainVariant::Separated] {
            let t_si = 300;
            let cfg = TrainConfig::new(RunSpec::adascale(scale, t_si), constant(0.05))
                .with_gain(GainConfig {
                    variant,
                    ..GainConfig::default()
                })
                .with_seed(scale as u64);
            let tr = run_adascale(&q, w0.clone(), &cfg, &Sequential).unwrap();
            let t = tr.iterations();
            assert!(
                t >= t_si.div_ceil(scale as u64) && t <= t_si,
                "S = {scale}: T = {t}"
            );
            assert!(tr.final_tau >= t_si as f64);
            assert!(tr.records.last().unwrap().tau < t_si as f64);
            let mut tau = 0.0;
            for r in &tr.records {
                assert_eq!(r.tau, tau);
                assert!((1.0..=scale as f64).contains(&r.gain));
                assert_eq!(r.lr, r.gain * 0.05);
                tau += r.gain;
            }
            assert_eq!(tau, tr.final_tau);
        }
    }
}

#[test]
fn learning_rate_follows_the_floor_of_tau() {
    let (q, w0) = noisy();
    let schedule = LrSchedule::StepDecay {
        eta0: 0.1,
        d: 0.5,
        milestones: vec![30, 60],
    };
    let cfg = TrainConfig::new(RunSpec::adascale(8, 100), schedule.clone()).with_seed(1);
    let tr = run(&q, w0, &cfg, &Sequential).unwrap();
    for r in &tr.records {
        assert_eq!(r.lr, r.gain * schedule.eval(r.tau.floor() as u64));
    }
}

#[test]
fn single_worker_adascale_is_plain_sgd() {
    let (q, w0) = noisy();
    let schedule = LrSchedule::ExponentialDecay {
        eta0: 0.1,
        d: 0.1,
        t_s1: 150,
    };
    let ada = TrainConfig::new(RunSpec::adascale(1, 150), schedule.clone()).with_seed(9);
    let sgd =
        TrainConfig::new(RunSpec::scaled_sgd(ScalingRule::Identity, 1, 150), schedule).with_seed(9);
    let a = run(&q, w0.clone(), &ada, &Sequential).unwrap();
    let b = run(&q, w0, &sgd, &Sequential).unwrap();
    assert_eq!(a.iterations(), 150);
    assert!(a.records.iter().all(|r| r.gain == 1.0));
    assert_eq!(a.final_w, b.final_w);
    let fa: Vec<f64> = a.records.iter().map(|r| r.objective).collect();
    let fb: Vec<f64> = b.records.iter().map(|r| r.objective).collect();
    assert_eq!(fa, fb);
}

#[test]
fn identity_rule_on_a_deterministic_objective_ignores_scale() {
    let spec = QuadraticSpec {
        a_diag: Some(vec![0.5, 1.0, 2.0]),
        w0: Some(vec![1.0, -2.0, 3.0]),
        ..Default::default()
    };
    let q = spec.build().unwrap();
    assert!(q.is_deterministic());
    let base = run_scaled_sgd(
        &q,
        spec.start(&q),
        &TrainConfig::new(
            RunSpec::scaled_sgd(ScalingRule::Identity, 1, 120),
            constant(0.3),
        ),
        &Sequential,
    )
    .unwrap();
    for s in [4, 16] {
        let cfg = TrainConfig::new(
            RunSpec::scaled_sgd(ScalingRule::Identity, s, 120),
            constant(0.3),
        );
        let tr = run_scaled_sgd(&q, spec.start(&q), &cfg, &Sequential).unwrap();
        assert_eq!(tr.final_w, base.final_w);
        assert_eq!(tr.iterations(), 120);
    }
}

#[test]
fn adascale_on_a_deterministic_objective_keeps_unit_gain() {
    let spec = QuadraticSpec::isotropic(4, 1.0, 0.0, 2.0);
    let q = spec.build().unwrap();
    let cfg = TrainConfig::new(RunSpec::adascale(16, 80), constant(0.1));
    let tr = run(&q, spec.start(&q), &cfg, &Sequential).unwrap();
    assert_eq!(tr.iterations(), 80);
    assert!(tr.records.iter().all(|r| r.gain == 1.0));

    // the separated variant clamps σ̂² at ε, so it stays at 1 only while
    // ‖g‖² dominates ε
    let sep = cfg.with_gain(GainConfig {
        variant: GainVariant::Separated,
        ..GainConfig::default()
    });
    let tr = run(&q, spec.start(&q), &sep, &Sequential).unwrap();
    for r in tr.records.iter().filter(|r| r.grad_agg_sq > 1e-2) {
        assert!(r.gain - 1.0 < 1e-3, "t = {}: {}", r.t, r.gain);
    }
}

#[test]
fn elastic_switch_raises_the_gain() {
    let spec = QuadraticSpec::isotropic(16, 1.0, 1.0, 0.5);
    let q = spec.build().unwrap();
    let t_si = 2000;
    let stages = vec![
        ElasticStage {
            start_tau: 0.0,
            scale: 2,
        },
        ElasticStage {
            start_tau: 1000.0,
            scale: 8,
        },
    ];
    let cfg = TrainConfig::new(RunSpec::elastic(stages, t_si), constant(0.01)).with_seed(5);
    let tr = run_elastic(&q, spec.start(&q), &cfg, &Sequential).unwrap();
    assert!(tr.final_tau >= t_si as f64);
    let switch = tr.records.iter().position(|r| r.scale == 8).unwrap();
    assert!(tr.records[..switch]
        .iter()
        .all(|r| r.scale == 2 && r.tau < 1000.0));
    assert!(tr.records[switch..].iter().all(|r| r.scale == 8));
    let mean = |rs: &[adascale_core::engine::TraceRecord]| {
        rs.iter().map(|r| r.gain).sum::<f64>() / rs.len() as f64
    };
    let before = mean(&tr.records[switch - 50..switch]);
    let after = mean(&tr.records[tr.records.len() - 50..]);
    assert!(after > 2.0 * before, "{before} -> {after}");
    // the fixed-scale schedule rejects an elastic runner
    let fixed = TrainConfig::new(RunSpec::adascale(2, t_si), constant(0.01));
    assert!(run_elastic(&q, spec.start(&q), &fixed, &Sequential).is_err());
}

#[test]
fn observer_sees_every_record_before_its_step() {
    let (q, w0) = noisy();
    let cfg = TrainConfig::new(RunSpec::adascale(4, 60), constant(0.05)).with_seed(2);
    let mut seen = Vec::new();
    let tr = run_observed(&q, w0, &cfg, &Sequential, &mut |rec, w| {
        assert_eq!(rec.objective, q.objective_value(w));
        seen.push(*rec);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, tr.records);
}

#[test]
fn momentum_runs_are_reproducible_and_converge() {
    let c = GeneratedClassifier::generate(&ClassifierSpec::default()).unwrap();
    let w0 = c.default_start();
    let cfg =
        TrainConfig::new(RunSpec::adascale(4, 400).with_momentum(0.9), constant(0.01)).with_seed(8);
    let a = run(&c, w0.clone(), &cfg, &Sequential).unwrap();
    let b = run(&c, w0.clone(), &cfg, &Sequential).unwrap();
    assert_eq!(a, b);
    assert!(!a.diverged);
    assert!(a.final_objective < c.objective_value(&w0));
}

#[test]
fn runaway_learning_rate_is_reported_as_divergence() {
    let (q, w0) = noisy();
    let cfg = TrainConfig::new(
        RunSpec::scaled_sgd(ScalingRule::Linear, 8, 4000),
        constant(0.5),
    );
    let tr = run(&q, w0, &cfg, &Sequential).unwrap();
    assert!(tr.diverged);
    assert!(tr.iterations() < 500);
}

#[test]
fn invalid_configurations_are_rejected() {
    let (q, w0) = noisy();
    let mut both = RunSpec::adascale(2, 100);
    both.iterations = Some(100);
    assert!(run(
        &q,
        w0.clone(),
        &TrainConfig::new(both, constant(0.1)),
        &Sequential
    )
    .is_err());
    let cfg = TrainConfig::new(RunSpec::adascale(2, 100).with_momentum(1.0), constant(0.1));
    assert!(run(&q, w0.clone(), &cfg, &Sequential).is_err());
    let cfg = TrainConfig::new(RunSpec::adascale(2, 100), constant(0.1));
    assert!(run(&q, ParamVector::zeros(3), &cfg, &Sequential).is_err());
}
