use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mobweigh::models::{
    Forest, ForestConfig, Kernel, Lstm, LstmConfig, LstmNetwork, ModelConfig, SequenceMode, Svr, SvrConfig,
};
use mobweigh::{Error, Matrix};

fn random_problem(seed: u64, n: usize, f: usize) -> (Matrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..f).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let y = rows
        .iter()
        .map(|r| r.iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * v * v).sum::<f64>() + rng.random_range(-0.1..0.1))
        .collect();
    (Matrix::from_rows(&rows).unwrap(), y)
}

#[test]
fn forest_prediction_is_mean_of_trees() {
    let (x, y) = random_problem(1, 60, 3);
    let f = Forest::fit(
        &x,
        &y,
        &ForestConfig {
            n_estimators: 2,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(f.trees().len(), 2);
    for row in x.iter_rows() {
        let by_hand = (f.trees()[0].predict_row(row) + f.trees()[1].predict_row(row)) / 2.0;
        assert!((f.predict_row(row) - by_hand).abs() < 1e-12);
    }
}

#[test]
fn forest_is_seed_deterministic() {
    let (x, y) = random_problem(2, 80, 4);
    let cfg = ForestConfig {
        n_estimators: 25,
        seed: 77,
        ..Default::default()
    };
    let a = Forest::fit(&x, &y, &cfg).unwrap();
    let b = Forest::fit(&x, &y, &cfg).unwrap();
    assert_eq!(a, b);
    let c = Forest::fit(&x, &y, &ForestConfig { seed: 78, ..cfg }).unwrap();
    assert_ne!(a.predict(&x), c.predict(&x));
}

#[test]
fn forest_needs_min_samples_split_rows() {
    let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
    let cfg = ForestConfig {
        min_samples_split: 3,
        ..Default::default()
    };
    assert!(Forest::fit(&x, &[1.0, 2.0], &cfg).is_err());
}

#[test]
fn forest_depth_limit_respected() {
    let (x, y) = random_problem(3, 100, 3);
    let f = Forest::fit(
        &x,
        &y,
        &ForestConfig {
            n_estimators: 5,
            max_depth: Some(3),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(f.trees().iter().all(|t| t.depth() <= 3));
}

#[test]
fn svr_constant_target_has_no_support() {
    let (x, _) = random_problem(4, 30, 2);
    for kernel in [
        Kernel::Linear,
        Kernel::Polynomial { degree: 3 },
        Kernel::Rbf { gamma: 1.0 },
    ] {
        let cfg = SvrConfig {
            kernel,
            ..Default::default()
        };
        let m = Svr::fit(&x, &[4.5; 30], &cfg).unwrap();
        assert!(m.coefficients().iter().all(|b| *b == 0.0), "{kernel:?}");
        assert!(m.predict(&x).iter().all(|p| (p - 4.5).abs() < 1e-12));
        assert!((m.bias() - 4.5).abs() < 1e-12);
    }
}

#[test]
fn svr_single_point_lies_in_tube() {
    let x = Matrix::from_rows(&[[0.3, 0.8]]).unwrap();
    let cfg = SvrConfig {
        epsilon: 0.05,
        kernel: Kernel::Rbf { gamma: 0.7 },
        ..Default::default()
    };
    let m = Svr::fit(&x, &[2.0], &cfg).unwrap();
    assert!((m.predict_row(&[0.3, 0.8]) - 2.0).abs() <= 0.05 + 1e-12);
}

#[test]
fn svr_kkt_holds_on_nonlinear_data() {
    let (x, y) = random_problem(5, 120, 3);
    for (c, eps, kernel) in [
        (1.0, 0.05, Kernel::Rbf { gamma: 1.0 }),
        (50.0, 0.02, Kernel::Rbf { gamma: 3.0 }),
        (5.0, 0.1, Kernel::Polynomial { degree: 2 }),
        (0.5, 0.01, Kernel::Linear),
    ] {
        let cfg = SvrConfig {
            c,
            epsilon: eps,
            kernel,
            ..Default::default()
        };
        let m = Svr::fit(&x, &y, &cfg).unwrap();
        assert!(m.converged, "{cfg:?}");
        let audit = m.kkt_audit(&x, &y, &cfg);
        assert!(audit.max_violation <= 1e-9, "{cfg:?}: {audit:?}");
        assert!(m.coefficients().iter().all(|b| b.abs() <= c * (1.0 + 1e-12)));
    }
}

#[test]
fn svr_rejects_non_finite_kernel() {
    let x = Matrix::from_rows(&[[1e200], [2e200]]).unwrap();
    let err = Svr::fit(
        &x,
        &[1.0, 2.0],
        &SvrConfig {
            kernel: Kernel::Linear,
            ..Default::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::Numeric(_)), "{err}");
}

#[test]
fn lstm_constant_target_loss_never_rises() {
    let (x, _) = random_problem(6, 48, 4);
    let cfg = LstmConfig {
        epochs: 80,
        batch_size: 48,
        learning_rate: 0.2,
        ..Default::default()
    };
    let fit = Lstm::fit(&x, &[0.3; 48], &cfg).unwrap();
    for w in fit.loss_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "loss rose from {} to {}", w[0], w[1]);
    }
    assert!(*fit.loss_history.last().unwrap() < 1e-3);
}

#[test]
fn lstm_is_seed_deterministic() {
    let (x, y) = random_problem(7, 40, 3);
    for mode in [SequenceMode::FeatureAsSequence, SequenceMode::SingleStep] {
        let cfg = LstmConfig {
            epochs: 5,
            batch_size: 8,
            sequence_mode: mode,
            ..Default::default()
        };
        let a = Lstm::fit(&x, &y, &cfg).unwrap();
        let b = Lstm::fit(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn lstm_divergence_names_epoch() {
    let (x, _) = random_problem(8, 20, 3);
    let y: Vec<f64> = (0..20).map(|i| 1e150 * i as f64).collect();
    let cfg = LstmConfig {
        epochs: 5,
        batch_size: 4,
        learning_rate: 1e3,
        ..Default::default()
    };
    match Lstm::fit(&x, &y, &cfg) {
        Err(Error::Diverged { epoch, .. }) => assert!(epoch < 5),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn lstm_needs_a_full_batch() {
    let (x, y) = random_problem(9, 5, 2);
    let cfg = LstmConfig {
        batch_size: 6,
        ..Default::default()
    };
    assert!(matches!(Lstm::fit(&x, &y, &cfg).unwrap_err(), Error::Precondition(_)));
}

#[test]
fn fitted_models_check_columns() {
    let (x, y) = random_problem(10, 30, 2);
    let cols = vec!["a".to_string(), "b".to_string()];
    let m = ModelConfig::Forest(ForestConfig {
        n_estimators: 3,
        ..Default::default()
    })
    .fit(&x, &y, &cols)
    .unwrap();
    assert!(m.predict(&x, &["a".to_string()]).is_err());
    assert!(m
        .predict(&Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap(), &cols)
        .is_err());
    let back = mobweigh::models::FittedModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(back.predict(&x, &cols).unwrap(), m.predict(&x, &cols).unwrap());
}

#[test]
fn partial_config_json_uses_defaults() {
    let cfg: ModelConfig = serde_json::from_str(r#"{"kind": "forest", "n_estimators": 7}"#).unwrap();
    assert_eq!(
        cfg,
        ModelConfig::Forest(ForestConfig {
            n_estimators: 7,
            ..Default::default()
        })
    );
    let cfg: ModelConfig = serde_json::from_str(r#"{"kind": "svr", "kernel": {"type": "rbf", "gamma": 0.5}}"#).unwrap();
    assert_eq!(
        cfg,
        ModelConfig::Svr(SvrConfig {
            kernel: Kernel::Rbf { gamma: 0.5 },
            ..Default::default()
        })
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forest_predictions_bounded(seed in 0u64..1000, n in 5usize..60) {
        let (x, y) = random_problem(seed, n, 3);
        let f = Forest::fit(&x, &y, &ForestConfig { n_estimators: 8, seed, ..Default::default() }).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let (q, _) = random_problem(seed + 1, 30, 3);
        let mut probes = f.predict(&x);
        probes.extend(f.predict(&q));
        for p in probes {
            prop_assert!(p >= lo && p <= hi);
        }
    }

    #[test]
    fn lstm_activations_in_range(seed in 0u64..1000, scale in 0.1f64..5.0) {
        let cfg = LstmConfig { hidden_units: 4, num_layers: 2, seed, ..Default::default() };
        let mut net = LstmNetwork::initialised(5, &cfg);
        let p: Vec<f64> = net.params().iter().map(|v| v * scale).collect();
        net.set_params(&p);
        let (x, _) = random_problem(seed, 1, 5);
        let trace = net.forward(x.row(0));
        for layer in &trace.layers {
            for s in layer {
                for g in s.input_gate.iter().chain(&s.forget_gate).chain(&s.output_gate) {
                    prop_assert!(*g > 0.0 && *g < 1.0);
                }
                for c in &s.candidate {
                    prop_assert!(*c > -1.0 && *c < 1.0);
                }
            }
        }
    }
}
