mod common;

use common::{shapes, tiny_bundle};
use dlgan::eval::{
    color_sweep, evaluate, markdown_report, monotone_within, pairs, shapes_oracle, train_extractor, EvalConfig,
    ExtractorOracle, Metric, SWEEP_POINTS, SWEEP_TOLERANCE,
};
use dlgan_core::infer::Manipulator;
use dlgan_core::metrics::{attribute_accuracy, LabelOracle};

fn small_cfg() -> EvalConfig {
    EvalConfig { kid_subsets: 5, kid_subset_size: 8, extractor_steps: 20, extractor_batch: 8, sweeps: 4, ..Default::default() }
}

#[test]
fn monotone_allows_one_small_drop() {
    assert!(monotone_within(&[0.0, 0.2, 0.5, 1.0], SWEEP_TOLERANCE));
    assert!(monotone_within(&[0.0, 0.3, 0.27, 1.0], SWEEP_TOLERANCE));
    assert!(!monotone_within(&[0.0, 0.3, 0.2, 1.0], SWEEP_TOLERANCE));
    assert!(!monotone_within(&[0.0, 0.3, 0.28, 0.5, 0.48, 1.0], SWEEP_TOLERANCE));
    assert!(monotone_within(&[], SWEEP_TOLERANCE));
    assert!(monotone_within(&[0.4, 0.4, 0.4], 0.0));
}

#[test]
fn rule_oracle_reads_real_images_exactly() {
    let data = shapes(32, 60, 3);
    let oracle = shapes_oracle(32, 32);
    let all = data.batch(&(0..data.len()).collect::<Vec<_>>()).unwrap();
    let acc = attribute_accuracy(&oracle, &all.images, &all.labels).unwrap();
    assert_eq!(acc, vec![1.0, 1.0, 1.0]);
}

#[test]
fn pairs_split_halves() {
    let data = shapes(16, 9, 0);
    let (x, r) = pairs(&data).unwrap();
    assert_eq!(x.len(), 4);
    assert_eq!(r.len(), 4);
    assert_eq!(x.labels[0], data.records[0].label);
    assert_eq!(r.labels[0], data.records[4].label);
    assert!(pairs(&shapes(16, 1, 0)).is_err());
}

#[test]
fn extractor_oracle_checks_size() {
    let data = shapes(16, 32, 0);
    let ex = train_extractor(&data, &small_cfg()).unwrap();
    let oracle = ExtractorOracle(&ex);
    assert_eq!(oracle.schema(), &data.schema);
    assert!(oracle.read_label(&vec![0.0; 3 * 16 * 16]).is_ok());
    assert!(oracle.read_label(&vec![0.0; 3 * 16 * 15]).is_err());
}

#[test]
fn evaluate_reports_every_metric_deterministically() {
    let data = shapes(16, 24, 5);
    let bundle = tiny_bundle(16, 2);
    let cfg = small_cfg();
    let ex = train_extractor(&data, &cfg).unwrap();
    let oracle = shapes_oracle(16, 16);
    let a = evaluate(&bundle, &data, &ex, &oracle, &cfg).unwrap();
    let b = evaluate(&bundle, &data, &ex, &oracle, &cfg).unwrap();
    assert_eq!(a, b);

    let names: Vec<String> = a.iter().map(|m| m.metric.clone()).collect();
    let mut want = vec!["fid".to_string(), "kid".to_string()];
    for p in ["change_accuracy", "priority_accuracy", "transfer_accuracy"] {
        for g in ["color", "size", "shape"] {
            want.push(format!("{p}.{g}"));
        }
    }
    want.push("transfer_accuracy".into());
    want.push("identity_l1".into());
    assert_eq!(names, want);

    for m in &a {
        assert!(m.value.is_finite(), "{}", m.metric);
        if m.metric.contains("accuracy") {
            assert!((0.0..=1.0).contains(&m.value), "{}", m.metric);
            assert_eq!(m.n, 12);
        }
    }
    assert!(a[0].value >= 0.0);
    assert!(a[1].stddev.is_some());
    assert_eq!(a[0].extractor_id.as_deref(), Some(ex.id.as_str()));
}

#[test]
fn color_sweep_shape() {
    let data = shapes(16, 30, 1);
    let bundle = tiny_bundle(16, 0);
    let m = Manipulator::new(&bundle);
    let r = color_sweep(&m, &shapes_oracle(16, 16), &data, 4).unwrap();
    assert_eq!(r.sweeps, 4);
    assert_eq!(r.ts.len(), SWEEP_POINTS);
    assert_eq!(r.ts[0], 0.0);
    assert_eq!(r.ts[SWEEP_POINTS - 1], 1.0);
    assert_eq!(r.mean_curve.len(), SWEEP_POINTS);
    assert!(r.mean_curve.iter().all(|p| (0.0..=1.0).contains(p)));
    assert!((0.0..=1.0).contains(&r.monotone_fraction));
    assert_eq!(r.mean_monotone, monotone_within(&r.mean_curve, SWEEP_TOLERANCE));
}

#[test]
fn markdown_lists_each_metric() {
    let metrics = vec![
        Metric { metric: "kid".into(), value: 0.5, stddev: Some(0.25), extractor_id: Some("x-1".into()), n: 10 },
        Metric::new("identity_l1", 0.125, 4),
    ];
    let md = markdown_report("Run", &metrics);
    let lines: Vec<&str> = md.lines().collect();
    assert_eq!(lines[0], "# Run");
    assert_eq!(lines[4], "| kid | 0.500000 | 0.250000 | 10 | x-1 |");
    assert_eq!(lines[5], "| identity_l1 | 0.125000 |  | 4 |  |");
    assert_eq!(lines.len(), 6);
}
