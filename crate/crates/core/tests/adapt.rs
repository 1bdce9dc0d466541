use unseen_core::distributions::DistributionKind;
use unseen_core::harness::{adapt_cases, run_adapt_compare, ExperimentSpec, Metric};

fn skewed_spec() -> ExperimentSpec {
    let mut spec: ExperimentSpec = serde_json::from_str(
        r#"{"id":"adapt","mode":"adapt-compare","distributions":[],"support":20,"sample_sizes":[20],
            "replications":15,"master_seed":31,"adapt_factors":[2],"extension_replications":2000}"#,
    )
    .unwrap();
    spec.distributions = DistributionKind::benchmark_set(0)
        .into_iter()
        .filter(|k| matches!(k, DistributionKind::Zipf { .. } | DistributionKind::Dirichlet { .. }))
        .collect();
    spec
}

#[test]
fn adapted_estimator_holds_up_on_skewed_distributions() {
    let spec = skewed_spec();
    let cases = adapt_cases(&spec).unwrap();
    assert_eq!(cases.len(), 4 * 15);
    assert!(cases.iter().all(|c| c.valid && c.m == 40));
    for kind in &spec.distributions {
        let label = kind.label();
        let mine: Vec<_> = cases.iter().filter(|c| c.distribution == label).collect();
        let at_most_gt = mine.iter().filter(|c| c.adapted_sq_error <= c.good_turing_sq_error).count();
        assert!(at_most_gt * 2 > mine.len(), "{label}: ratio <= 1 in {at_most_gt}/{}", mine.len());
    }
    let rows = run_adapt_compare(&spec).unwrap();
    for r in rows.iter().filter(|r| r.metric == Metric::MseRatio) {
        assert!(r.value <= 1.0, "{} ratio {}", r.distribution, r.value);
    }
}
