use std::time::{Duration, Instant};

use hierground_core::gradsuite::{operations, run_suite, SuiteConfig};

#[test]
fn every_operation_matches_finite_differences_at_100_points() {
    let start = Instant::now();
    let report = run_suite(&SuiteConfig::default()).unwrap();
    let elapsed = start.elapsed();
    for op in &report.ops {
        println!(
            "{:<12} {:<28} points {:>3} checked {:>6} excluded {:>4} max rel err {:.2e}",
            op.module, op.op, op.points, op.checked, op.excluded, op.max_rel_error
        );
        assert_eq!(op.points, 100, "{}", op.op);
    }
    assert_eq!(report.ops.len(), operations().len());
    let failed: Vec<_> = report.failures().map(|o| o.op.clone()).collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
}

#[test]
fn a_sign_flip_is_flagged_for_that_operation_only() {
    let cfg = SuiteConfig {
        points: 5,
        flip: Some("giou_loss".into()),
        ..SuiteConfig::default()
    };
    let report = run_suite(&cfg).unwrap();
    let failed: Vec<_> = report.failures().map(|o| o.op.as_str()).collect();
    assert_eq!(failed, ["giou_loss"]);
}
