use std::fs;

use gad_core::experiments::{
    load_csv, load_with_schema, render_report, run_experiment, synthetic, DatasetSchema,
    ExperimentConfig, Protocol, ReportFormat, SyntheticKind, TargetColumn, Task,
};
use gad_core::{LossFamily, LossSpec};

#[test]
fn synthetic_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pima.csv");
    let ds = synthetic(SyntheticKind::PimaLike, 3);
    ds.write_csv(&path).unwrap();
    let back = load_csv(&path, TargetColumn::Name("target".into()), Task::BinaryClassification).unwrap();
    assert_eq!(back.len(), ds.len());
    assert_eq!(back.targets, ds.targets);
    for (a, b) in back.features.iter().zip(ds.features.iter()) {
        assert_eq!(a, b);
    }
}

#[test]
fn semicolon_file_with_schema() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("wine.csv");
    fs::write(
        &data,
        "\"alcohol\";\"acidity\";\"quality\"\n9.4;0.7;5\n9.8;0.88;5\n9.8;;6\n10.2;0.3;7\n",
    )
    .unwrap();
    let schema = dir.path().join("wine.toml");
    fs::write(&schema, "name = \"wine\"\ntask = \"regression\"\ntarget = \"quality\"\n").unwrap();
    let schema = DatasetSchema::from_file(&schema).unwrap();
    let ds = load_with_schema(&data, &schema).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.dropped_rows, 1);
    assert_eq!(ds.targets, vec![5.0, 5.0, 7.0]);
}

#[test]
fn reports_are_deterministic_and_ordered() {
    let ds = synthetic(SyntheticKind::PimaLike, 8);
    let losses = ExperimentConfig::default_losses(Task::BinaryClassification);
    for protocol in [Protocol::Heterogeneous, Protocol::Bagged] {
        let config = ExperimentConfig::new(protocol, losses.clone());
        let a = run_experiment(&ds, &config).unwrap();
        let b = run_experiment(&ds, &config).unwrap();
        assert_eq!(a, b);
        let families: Vec<LossFamily> = a.rows.iter().map(|r| r.loss.family).collect();
        assert_eq!(families, vec![LossFamily::Logistic, LossFamily::Exponential, LossFamily::SmoothHinge]);
        for row in &a.rows {
            assert_eq!(row.bound_violations, 0, "{protocol:?} {}", row.loss.family);
            assert_eq!(row.n_instances, ds.len());
        }
        assert_eq!(
            render_report(&a, ReportFormat::Csv),
            render_report(&b, ReportFormat::Csv)
        );
    }
}

#[test]
fn regression_report_squared_rows_are_exact() {
    let ds = synthetic(SyntheticKind::AbaloneLikeRegression, 9);
    for protocol in [Protocol::Heterogeneous, Protocol::Bagged] {
        let config = ExperimentConfig::new(protocol, vec![LossSpec::squared(), LossSpec::abs_sqrt(0.5).unwrap()]);
        let report = run_experiment(&ds, &config).unwrap();
        assert!(report.rows[0].e_gad <= 1e-10);
        assert!(report.rows.iter().all(|r| r.bound_violations == 0));
    }
}
