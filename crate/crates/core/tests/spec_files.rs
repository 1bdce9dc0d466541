use std::path::PathBuf;

use unseen_core::harness::{run_bias_curve, ExperimentSpec, Metric, Mode};

fn specs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

#[test]
fn every_shipped_spec_is_valid() {
    let mut modes = Vec::new();
    for entry in std::fs::read_dir(specs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let spec = ExperimentSpec::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(Some(spec.id.as_str()), path.file_stem().and_then(|s| s.to_str()));
            modes.push(spec.mode);
        }
    }
    for m in [Mode::BiasCurve, Mode::MseCompare, Mode::EvolveCompare, Mode::AdaptCompare, Mode::OracleAudit] {
        assert!(modes.contains(&m), "no spec for {m:?}");
    }
}

#[test]
fn bias_over_k_keeps_the_minimal_bias_estimator_ahead() {
    let spec = ExperimentSpec::read(&specs_dir().join("bias-vs-k.json")).unwrap();
    let rows = run_bias_curve(&spec).unwrap();
    let mut compared = 0;
    for b in rows.iter().filter(|r| r.estimator == "B" && r.metric == Metric::Bias) {
        let Some(gt) = rows.iter().find(|r| r.estimator == "GT" && r.k == b.k) else { continue };
        // GT is unbiased up to rounding at k = n/S
        if b.k == b.n / b.support {
            continue;
        }
        assert!(b.log10_magnitude < gt.log10_magnitude, "k={}", b.k);
        compared += 1;
    }
    assert!(compared > 70);
}
