use bumpy_core::fixtures;
use bumpy_core::geometry::CausalLabel;
use bumpy_core::harness::{
    bumpy_experiment, classify_la, classify_mab, ExperimentConfig, ExperimentKind,
    MembershipVerdict, WindingSpec,
};
use bumpy_core::solver::{build_record, GeodesicRecord, SolverOptions, Verdict};

fn axis_classes() -> WindingSpec {
    WindingSpec::Explicit {
        classes: vec![vec![1, 0], vec![-1, 0]],
    }
}

#[test]
fn membership_is_monotone_in_the_bounds() {
    let g = fixtures::hill(0.1);
    let mut cfg = ExperimentConfig::new(ExperimentKind::Mab, 0.6, 2.5, axis_classes());
    cfg.rng_seed = 2;
    let wide = classify_mab(&g, &cfg).unwrap();
    assert_eq!(wide.verdict, MembershipVerdict::MemberWithinBudget);
    for (a, b) in [(0.6, 0.6), (0.5, 2.0), (0.55, 0.55)] {
        cfg.a = a;
        cfg.b = Some(b);
        assert_eq!(
            classify_mab(&g, &cfg).unwrap().verdict,
            MembershipVerdict::MemberWithinBudget
        );
    }
}

#[test]
fn la_witness_reloads_and_recertifies() {
    let g = fixtures::flat_lorentz();
    let mut cfg = ExperimentConfig::new(
        ExperimentKind::La,
        1.1,
        1.1,
        WindingSpec::Cube { max_abs: 1 },
    );
    cfg.rng_seed = 9;
    cfg.seeds_per_class = 2;
    let report = classify_la(&g, &cfg).unwrap();
    assert_eq!(report.verdict, MembershipVerdict::NotMember);
    let text = report.to_json().unwrap();
    assert_eq!(text, classify_la(&g, &cfg).unwrap().to_json().unwrap());
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let w = value["witness"].as_u64().unwrap() as usize;
    let rec: GeodesicRecord = serde_json::from_value(value["records"][w].clone()).unwrap();
    let again = build_record(
        &g,
        rec.geodesic.clone(),
        Vec::new(),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(
        again.causal_label == CausalLabel::Lightlike || again.degeneracy == Verdict::Degenerate
    );
    assert!(again.energy < 1.1);
}

#[test]
fn hill_stays_bumpy_under_small_noise() {
    let g = fixtures::hill(0.1);
    let mut cfg = ExperimentConfig::new(ExperimentKind::BumpyExperiment, 0.6, 0.6, axis_classes());
    cfg.n_trials = Some(20);
    cfg.magnitude = Some(1e-3);
    cfg.seeds_per_class = 2;
    cfg.rng_seed = 1;
    let report = bumpy_experiment(&g, &cfg).unwrap();
    assert_eq!(report.trials.len(), 20);
    assert_eq!(report.fraction_member, 1.0);
    let seeds: std::collections::BTreeSet<u64> = report.trials.iter().map(|t| t.seed).collect();
    assert_eq!(seeds.len(), 20);
}

#[test]
fn random_perturbations_of_the_flat_torus_are_mostly_bumpy() {
    let g = fixtures::flat(2);
    let mut cfg = ExperimentConfig::new(
        ExperimentKind::BumpyExperiment,
        1.0,
        1.0,
        WindingSpec::Cube { max_abs: 1 },
    );
    cfg.n_trials = Some(50);
    cfg.magnitude = Some(1e-2);
    cfg.seeds_per_class = 2;
    cfg.n_samples = 32;
    cfg.rng_seed = 4;
    let report = bumpy_experiment(&g, &cfg).unwrap();
    println!(
        "fraction member {} ({} marginal records)",
        report.fraction_member, report.marginal_records
    );
    assert!(
        report.fraction_member >= 0.9,
        "{}",
        report.to_json().unwrap()
    );
}
