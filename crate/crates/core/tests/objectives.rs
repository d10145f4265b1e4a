use adascale_core::engine::{compute_gradient, Sequential};
use adascale_core::objectives::{
    sample_batch, sample_batches, Batch, BatchPayload, ClassifierModel, ClassifierSpec,
    GeneratedClassifier, NoisyQuadratic, StochasticObjective,
};
use adascale_core::rng::{Purpose, StreamKey};
use adascale_core::{Matrix, ParamVector};
use rand::Rng;

fn central_difference<O: StochasticObjective>(obj: &O, w: &ParamVector, h: f64) -> Vec<f64> {
    (0..w.dim())
        .map(|j| {
            let mut plus = w.clone();
            let mut minus = w.clone();
            plus.as_mut_slice()[j] += h;
            minus.as_mut_slice()[j] -= h;
            (obj.objective_value(&plus) - obj.objective_value(&minus)) / (2.0 * h)
        })
        .collect()
}

fn random_point(dim: usize, seed: u64, spread: f64) -> ParamVector {
    let key = StreamKey::new(seed, Purpose::Auxiliary);
    let mut rng = key.iteration(0).worker(0);
    ParamVector::from_vec(
        (0..dim)
            .map(|_| spread * (2.0 * rng.gen::<f64>() - 1.0))
            .collect(),
    )
}

fn assert_fd_agrees<O: StochasticObjective>(obj: &O, seeds: std::ops::Range<u64>, spread: f64) {
    for seed in seeds {
        let w = random_point(obj.dim(), seed, spread);
        let g = obj.true_gradient(&w).unwrap();
        let fd = central_difference(obj, &w, 1e-5);
        let err: f64 = g
            .as_slice()
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = g.norm_sq().sqrt().max(1e-3);
        assert!(
            err / scale < 1e-6,
            "seed {seed}: relative error {}",
            err / scale
        );
    }
}

fn quad(a: &[f64], sigma: &[f64]) -> NoisyQuadratic {
    NoisyQuadratic::new(
        Matrix::diag(a),
        Matrix::diag(sigma),
        ParamVector::zeros(a.len()),
    )
    .unwrap()
}

#[test]
fn hand_evaluated_quadratic() {
    let q = quad(&[1.0, 2.0], &[0.0, 0.0]);
    let w = ParamVector::from_vec(vec![1.0, 1.0]);
    assert_eq!(q.true_gradient(&w).unwrap().as_slice(), &[1.0, 2.0]);

    let iso = quad(&[1.0, 1.0], &[1.0, 1.0]);
    assert_eq!(
        iso.objective_value(&ParamVector::from_vec(vec![3.0, 4.0])),
        12.5
    );
    assert_eq!(iso.objective_value(&ParamVector::zeros(2)), 0.0);
    assert_eq!(
        iso.analytic_moments(&ParamVector::from_vec(vec![1.0, 0.0]))
            .unwrap(),
        (1.0, 2.0)
    );
}

#[test]
fn noiseless_gradient_at_minimizer_is_zero() {
    let w_star = ParamVector::from_vec(vec![0.5, -2.0, 3.0]);
    let q = NoisyQuadratic::deterministic(Matrix::diag(&[1.0, 2.0, 3.0]), w_star.clone()).unwrap();
    let key = StreamKey::new(9, Purpose::Batches);
    let b = sample_batch(&q, 0, &key.iteration(0));
    assert_eq!(
        q.stochastic_gradient(&w_star, &b).unwrap().as_slice(),
        &[0.0; 3]
    );
    assert_eq!(q.analytic_moments(&w_star).unwrap().1, 0.0);
}

#[test]
fn quadratic_gradient_matches_finite_differences() {
    let a = Matrix::from_rows(&[
        vec![2.0, 0.5, 0.0],
        vec![0.5, 1.0, 0.2],
        vec![0.0, 0.2, 0.7],
    ])
    .unwrap();
    let q = NoisyQuadratic::new(
        a,
        Matrix::identity(3),
        ParamVector::from_vec(vec![1.0, -1.0, 0.5]),
    )
    .unwrap();
    assert_fd_agrees(&q, 0..10, 2.0);
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let c = GeneratedClassifier::generate(&ClassifierSpec {
        n_examples: 64,
        features: 5,
        ..Default::default()
    })
    .unwrap();
    assert_fd_agrees(&c, 0..10, 1.0);
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let spec = ClassifierSpec {
        model: ClassifierModel::Mlp { hidden: 6 },
        n_examples: 48,
        features: 4,
        ..Default::default()
    };
    let c = GeneratedClassifier::generate(&spec).unwrap();
    assert_fd_agrees(&c, 0..10, 1.0);
}

#[test]
fn full_dataset_batch_is_the_true_gradient() {
    for model in [
        ClassifierModel::Logistic,
        ClassifierModel::Mlp { hidden: 4 },
    ] {
        let c = GeneratedClassifier::generate(&ClassifierSpec {
            model,
            n_examples: 100,
            ..Default::default()
        })
        .unwrap();
        let w = random_point(c.dim(), 3, 0.5);
        let full = Batch {
            payload: BatchPayload::Indices((0..100).collect()),
            worker_index: 1,
        };
        assert_eq!(
            c.stochastic_gradient(&w, &full).unwrap(),
            c.true_gradient(&w).unwrap()
        );
    }
}

#[test]
fn classifier_value_is_mean_example_loss() {
    let c = GeneratedClassifier::generate(&ClassifierSpec {
        n_examples: 30,
        ..Default::default()
    })
    .unwrap();
    let w = random_point(c.dim(), 4, 1.0);
    let f = c.objective_value(&w);
    assert!(f.is_finite() && f >= 0.0);
    // each single-example batch gradient averages to the full gradient
    let singles: Vec<ParamVector> = (0..30)
        .map(|i| {
            c.stochastic_gradient(
                &w,
                &Batch {
                    payload: BatchPayload::Indices(vec![i]),
                    worker_index: 1,
                },
            )
            .unwrap()
        })
        .collect();
    let mut mean = ParamVector::zeros(c.dim());
    singles.iter().for_each(|g| mean.axpy(1.0 / 30.0, g));
    let diff = mean.sub(&c.true_gradient(&w).unwrap()).norm_sq().sqrt();
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn classifier_batches_have_the_configured_size() {
    let c = GeneratedClassifier::generate(&ClassifierSpec {
        n_examples: 100,
        batch_size: 10,
        ..Default::default()
    })
    .unwrap();
    let key = StreamKey::new(1, Purpose::Batches);
    let batches = sample_batches(&c, 2, &key.iteration(0)).unwrap();
    assert_eq!(batches.len(), 2);
    for (i, b) in batches.iter().enumerate() {
        assert_eq!(b.worker_index, i + 1);
        let BatchPayload::Indices(idx) = &b.payload else {
            panic!("expected indices")
        };
        assert_eq!(idx.len(), 10);
        assert!(idx.iter().all(|&j| j < 100));
    }
}

#[test]
fn sampling_is_deterministic_given_the_stream() {
    let q = quad(&[1.0; 4], &[1.0; 4]);
    let key = StreamKey::new(42, Purpose::Batches);
    let a = sample_batches(&q, 1, &key.iteration(17)).unwrap();
    let b = sample_batches(&q, 1, &key.iteration(17)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, sample_batches(&q, 1, &key.iteration(18)).unwrap());
}

const N_MC: u64 = 100_000;

#[test]
fn monte_carlo_gradient_mean_and_variance() {
    let q = quad(&[1.0, 1.0], &[1.0, 1.0]);
    let w = ParamVector::from_vec(vec![1.0, 0.0]);
    let key = StreamKey::new(5, Purpose::Auxiliary);
    let mut sum = [0.0; 2];
    let mut sq_dev = 0.0;
    for t in 0..N_MC {
        let g = q
            .stochastic_gradient(&w, &sample_batch(&q, 0, &key.iteration(t)))
            .unwrap();
        sum[0] += g.as_slice()[0];
        sum[1] += g.as_slice()[1];
        sq_dev += (g.as_slice()[0] - 1.0).powi(2) + g.as_slice()[1].powi(2);
    }
    let n = N_MC as f64;
    // 3σ band: σ/√N per coordinate, tighter than the ±3e-2 example
    assert!((sum[0] / n - 1.0).abs() < 3.0 / n.sqrt());
    assert!((sum[1] / n).abs() < 3.0 / n.sqrt());
    let (_, sigma_sq) = q.analytic_moments(&w).unwrap();
    assert!((sq_dev / n / sigma_sq - 1.0).abs() < 0.02, "{}", sq_dev / n);
}

#[test]
fn classifier_stochastic_gradient_is_unbiased() {
    let c = GeneratedClassifier::generate(&ClassifierSpec {
        n_examples: 64,
        features: 3,
        batch_size: 4,
        ..Default::default()
    })
    .unwrap();
    let w = random_point(c.dim(), 8, 0.5);
    let truth = c.true_gradient(&w).unwrap();
    let key = StreamKey::new(6, Purpose::Auxiliary);
    let n = 20_000;
    let grads: Vec<ParamVector> = (0..n)
        .map(|t| {
            c.stochastic_gradient(&w, &sample_batch(&c, 0, &key.iteration(t)))
                .unwrap()
        })
        .collect();
    for j in 0..c.dim() {
        let xs: Vec<f64> = grads.iter().map(|g| g.as_slice()[j]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - truth.as_slice()[j]).abs() <= 3.0 * se + 1e-12,
            "coordinate {j}"
        );
    }
}

#[test]
fn noise_variance_does_not_depend_on_w() {
    let q = NoisyQuadratic::new(
        Matrix::diag(&[1.0, 3.0, 0.5]),
        Matrix::from_rows(&[
            vec![1.0, 0.3, 0.0],
            vec![0.3, 2.0, 0.1],
            vec![0.0, 0.1, 0.5],
        ])
        .unwrap(),
        ParamVector::zeros(3),
    )
    .unwrap();
    for seed in 0..10 {
        let w = random_point(3, seed, 5.0);
        assert_eq!(q.analytic_moments(&w).unwrap().1, 3.5);
    }
}

#[test]
fn pl_inequality_holds_and_is_tight_for_isotropic_curvature() {
    let q = quad(&[0.5, 1.0, 4.0], &[0.0; 3]);
    let alpha = q.pl_constant();
    assert_eq!((alpha, q.smoothness()), (0.5, 4.0));
    for seed in 0..20 {
        let w = random_point(3, seed, 3.0);
        let (mu_sq, _) = q.analytic_moments(&w).unwrap();
        assert!(q.objective_value(&w) <= mu_sq / (2.0 * alpha) * (1.0 + 1e-12));
    }
    let iso = quad(&[2.0; 3], &[0.0; 3]);
    let w = random_point(3, 1, 3.0);
    let (mu_sq, _) = iso.analytic_moments(&w).unwrap();
    assert!((iso.objective_value(&w) - mu_sq / 4.0).abs() < 1e-12);
}

#[test]
fn workers_draw_independent_noise() {
    let q = quad(&[1.0; 2], &[1.0; 2]);
    let key = StreamKey::new(11, Purpose::Batches);
    let n = N_MC;
    let mut cross = [[0.0f64; 4]; 4];
    for t in 0..n {
        let b = sample_batches(&q, 4, &key.iteration(t)).unwrap();
        let z: Vec<f64> = b
            .iter()
            .map(|x| match &x.payload {
                BatchPayload::Noise(v) => v.as_slice()[0],
                BatchPayload::Indices(_) => unreachable!(),
            })
            .collect();
        for (row, zi) in cross.iter_mut().zip(&z) {
            for (c, zj) in row.iter_mut().zip(&z) {
                *c += zi * zj;
            }
        }
    }
    for (i, row) in cross.iter().enumerate() {
        for (j, sum) in row.iter().enumerate() {
            let c = sum / n as f64;
            if i == j {
                assert!((c - 1.0).abs() < 0.02);
            } else {
                // correlation standard error is 1/√N ≈ 3.2e-3
                assert!(c.abs() < 0.015, "workers {i},{j}: {c}");
            }
        }
    }
}

#[test]
fn averaging_sixteen_workers_divides_variance_by_sixteen() {
    let q = quad(&[1.0; 4], &[0.5, 1.0, 1.5, 2.0]);
    let w = ParamVector::from_vec(vec![1.0; 4]);
    let truth = q.true_gradient(&w).unwrap();
    let key = StreamKey::new(12, Purpose::Batches);
    let reps = 20_000;
    let mut total = 0.0;
    for t in 0..reps {
        let bundle = compute_gradient(&q, &w, 16, &key.iteration(t), &Sequential).unwrap();
        total += bundle.mean.sub(&truth).norm_sq();
    }
    let var = total / reps as f64;
    let expected = q.noise_variance() / 16.0;
    assert!((var / expected - 1.0).abs() < 0.1, "{var} vs {expected}");
}
