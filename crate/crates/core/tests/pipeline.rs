use bluegreen::scenario::{generate_synthetic_catchment, load_scenario, save_scenario};
use bluegreen::validation::{compare_discretizations, FrontMember, FrontSource};
use bluegreen::{enumerate_all, run_optimization, Evaluator, Front, GAConfig, Genome, Objectives, Scenario, SyntheticSpec};
use proptest::prelude::*;

fn small(zones: usize) -> Scenario {
    generate_synthetic_catchment(&SyntheticSpec { zone_count: zones, ..SyntheticSpec::default() }).unwrap()
}

#[test]
fn saved_scenario_evaluates_like_the_original() {
    let scenario = small(6);
    let tmp = tempfile::tempdir().unwrap();
    save_scenario(&scenario, tmp.path()).unwrap();
    let loaded: Scenario = load_scenario(tmp.path()).unwrap();
    let (a, b) = (scenario.evaluator().unwrap(), loaded.evaluator().unwrap());
    for i in 0..64 {
        let g = Genome::from_index(i, 6);
        assert_eq!(a.evaluate(&g).unwrap(), b.evaluate(&g).unwrap(), "genome {g}");
    }
}

#[test]
fn optimizer_front_never_beats_the_oracle() {
    let eval = small(8).evaluator().unwrap();
    let oracle = enumerate_all(&eval, 16, None).unwrap().front;
    assert!(oracle.audit());
    for seed in 0..4 {
        let result = run_optimization(&eval, &GAConfig::for_zones(8, seed)).unwrap();
        assert_eq!(result.repository.len(), result.repository.evaluated().count());
        for found in &result.front {
            let o = found.objectives;
            assert!(oracle.members.iter().all(|m| !o.dominates(&m.objectives)));
            assert!(oracle.members.iter().any(|m| m.objectives == o || m.objectives.dominates(&o)));
        }
    }
}

#[test]
fn subdivision_keeps_full_activation_unchanged() {
    let coarse = small(6);
    let fine = coarse.subdivide(2).unwrap();
    assert_eq!(fine.zone_count(), 12);
    let (c, f) = (coarse.evaluator().unwrap(), fine.evaluator().unwrap());
    for (cg, fg) in [(Genome::zeros(6), Genome::zeros(12)), (Genome::ones(6), Genome::ones(12))] {
        let (co, fo) = (c.evaluate(&cg).unwrap(), f.evaluate(&fg).unwrap());
        assert_eq!(co.risk, fo.risk);
        assert!((co.cost - fo.cost).abs() <= 1e-12 * co.cost.max(1.0));
    }
    let coarse_front = enumerate_all(&c, 16, None).unwrap().front;
    let fine_front = enumerate_all(&f, 16, None).unwrap().front;
    assert!(compare_discretizations(&coarse_front, &fine_front).holds());
}

#[test]
fn single_precision_catchment_runs() {
    let spec = SyntheticSpec::<f32> { zone_count: 4, ..SyntheticSpec::default() };
    let eval = generate_synthetic_catchment(&spec).unwrap().evaluator().unwrap();
    let front = enumerate_all(&eval, 16, None).unwrap().front;
    assert!(!front.is_empty() && front.audit());
}

proptest! {
    #[test]
    fn pareto_csv_round_trips(points in prop::collection::vec((0u64..256, 0u32..1_000_000, 0u32..40), 1..40)) {
        let members = points.iter().map(|&(idx, cost, risk)| FrontMember {
            genome: Genome::from_index(idx, 8),
            objectives: Objectives::new(f64::from(cost) / 8.0, risk),
            generation_found: None,
        });
        let front = Front::from_candidates(members, FrontSource::Oracle);
        let mut buf = Vec::new();
        front.write_csv(&mut buf).unwrap();
        let back = Front::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.objective_set(), front.objective_set());
        prop_assert!(back.audit());
    }
}
