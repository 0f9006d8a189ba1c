use gad_core::experiments::{synthetic, SyntheticKind};
use gad_core::experts::{
    train, train_least_squares, train_logistic, train_linear_svm, ExpertKind, LinearExpert, TrainConfig,
};
use gad_core::LossSpec;
use nalgebra::DMatrix;

fn penalized_objective(e: &LinearExpert, x: &DMatrix<f64>, y: &[f64], spec: LossSpec<f64>, l2: f64) -> f64 {
    let scores = e.predict_all(x).unwrap();
    let mean = scores
        .iter()
        .zip(y)
        .map(|(&s, &t)| spec.value(t, s).unwrap())
        .sum::<f64>()
        / y.len() as f64;
    mean + 0.5 * l2 * e.coefficients.iter().map(|w| w * w).sum::<f64>()
}

#[test]
fn iterative_trainers_are_monotone() {
    let ds = synthetic(SyntheticKind::PimaLike, 4);
    let base = TrainConfig::default();
    let svm_spec = LossSpec::smooth_hinge(base.epsilon).unwrap();
    let mut last_log = f64::INFINITY;
    let mut last_svm = f64::INFINITY;
    for iterations in 1..40 {
        let config = TrainConfig {
            max_iterations: iterations,
            ..base.clone()
        };
        let log = train_logistic(&ds.features, &ds.targets, &config).unwrap();
        let svm = train_linear_svm(&ds.features, &ds.targets, &config).unwrap();
        let v_log = penalized_objective(&log, &ds.features, &ds.targets, LossSpec::logistic(), base.l2_penalty);
        let v_svm = penalized_objective(&svm, &ds.features, &ds.targets, svm_spec, base.l2_penalty);
        assert!(v_log <= last_log + 1e-15, "logistic objective rose at {iterations}");
        assert!(v_svm <= last_svm + 1e-15, "svm objective rose at {iterations}");
        last_log = v_log;
        last_svm = v_svm;
    }
}

#[test]
fn converged_trainers_are_stationary() {
    let ds = synthetic(SyntheticKind::PimaLike, 5);
    let config = TrainConfig::default();
    for kind in [ExpertKind::Logistic, ExpertKind::SvmSmoothHinge] {
        let e = train(kind, &ds.features, &ds.targets, &config).unwrap();
        assert!(e.diagnostics.converged, "{kind:?} did not converge");
        assert!(e.diagnostics.gradient_norm < config.tolerance);
    }
}

#[test]
fn least_squares_scales_with_targets() {
    let ds = synthetic(SyntheticKind::AbaloneLikeRegression, 6);
    let base = train_least_squares(&ds.features, &ds.targets).unwrap();
    let c = -2.5;
    let scaled: Vec<f64> = ds.targets.iter().map(|t| c * t).collect();
    let e = train_least_squares(&ds.features, &scaled).unwrap();
    for (a, b) in e.coefficients.iter().zip(&base.coefficients) {
        assert!((a - c * b).abs() <= 1e-9 * b.abs().max(1.0));
    }
    assert!((e.intercept - c * base.intercept).abs() <= 1e-9 * base.intercept.abs().max(1.0));
}

#[test]
fn every_kind_is_deterministic() {
    let class = synthetic(SyntheticKind::PimaLike, 7);
    let reg = synthetic(SyntheticKind::AbaloneLikeRegression, 7);
    let config = TrainConfig::default();
    for kind in [ExpertKind::Logistic, ExpertKind::SvmSmoothHinge, ExpertKind::Lda] {
        let a = train(kind, &class.features, &class.targets, &config).unwrap();
        let b = train(kind, &class.features, &class.targets, &config).unwrap();
        assert_eq!(a, b);
    }
    for kind in [ExpertKind::LeastSquares, ExpertKind::Lad, ExpertKind::Huber] {
        let a = train(kind, &reg.features, &reg.targets, &config).unwrap();
        let b = train(kind, &reg.features, &reg.targets, &config).unwrap();
        assert_eq!(a, b);
    }
}
