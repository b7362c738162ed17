mod common;

use common::*;
use exposure_lab::exact::{estimator_moments, variance_estimator_expectation};
use exposure_lab::library::{Design, ExposureMap, OutcomeModel};
use exposure_lab::montecarlo::*;
use exposure_lab::*;

#[test]
fn spill_pair_replications_agree_with_exact_moments() {
    let s = spill_pair();
    let mask = all_units(2);
    let r = reference(&s, 1, 0, &mask).unwrap();
    let law = compute_exposure_law(&s).unwrap();
    let policy = OverridePolicy::Natural;
    let table = PairWeightTable::build(&law, 1, 0, &policy, &mask).unwrap();
    let cfg = McConfig { reps: 100_000, seed: 2024, workers: 2, level: 0.95 };
    let sm = run_replications(&s, &r.law, r.tau, &[EstimatorSpec::Ht], 1, 0, &mask, Some(&table), &cfg).unwrap();
    let ht = &sm.estimators[0];

    assert!(ht.bias.unwrap().abs() <= 4.0 * ht.mcse_bias.unwrap(), "{ht:?}");

    let exact = estimator_moments(&s, &law, &EstimatorSpec::Ht, 1, 0, &mask).unwrap();
    let ev = variance_estimator_expectation(&s, &law, 1, 0, &policy, &mask).unwrap();
    assert!((ht.mean_varest.unwrap() - ev).abs() <= 4.0 * ht.mcse_varest.unwrap(), "{ht:?} vs {ev}");
    assert!((ht.variance.unwrap() - exact.variance).abs() <= 4.0 * ht.mcse_variance.unwrap());
    assert!(ht.variance.unwrap() <= 18.25 + 4.0 * ht.mcse_variance.unwrap());
    assert!(ht.cov_chebyshev.unwrap() >= ht.cov_normal.unwrap());
}

#[test]
fn zero_error_family_converges_at_root_n() {
    let family = |n: usize| {
        ScenarioSpec::new(
            n,
            Design::Bernoulli { p: 0.5 },
            ExposureMap::OwnTreatment,
            OutcomeModel::GlobalDecay { beta: 1.0, c: 0.0 },
        )
        .build()
    };
    let cfg = McConfig { reps: 2000, seed: 5, workers: 1, level: 0.95 };
    let table = rate_experiment(family, &[16, 32, 64, 128, 256], 1, 0, &cfg).unwrap();
    assert!((table.slope + 0.5).abs() < 0.1, "slope {}", table.slope);
    for row in &table.rows {
        assert_eq!(row.d_a, 0.0);
        assert_eq!(row.d_b, 0.0);
    }
    // Only the smallest member is enumerated, and its error dependence vanishes.
    assert_eq!(table.rows[0].e, Some(0.0));
    assert!(table.rows[4].e.is_none());
}

#[test]
fn correctly_specified_ring_covers() {
    let s = ring_scenario(40, 1.0, 0.0);
    let mask = all_units(40);
    let r = reference(&s, 1, 0, &mask).unwrap();
    assert_eq!(r.source, TruthSource::ClosedForm);
    let cfg = McConfig { reps: 4000, seed: 17, workers: 1, level: 0.95 };
    let row = coverage_experiment(&s, &r, 1, 0, &mask, &OverridePolicy::Natural, &cfg).unwrap();
    assert!(row.cov_normal >= 0.945 - 3.0 * row.mcse_normal, "{row:?}");
    assert!(row.cov_chebyshev >= row.cov_normal);
}

#[test]
fn summaries_do_not_depend_on_workers() {
    let s = ring_scenario(12, 1.0, 0.5);
    let mask = all_units(12);
    let r = reference(&s, 1, 0, &mask).unwrap();
    let run = |workers: usize| {
        let cfg = McConfig { reps: 300, seed: 99, workers, level: 0.9 };
        let est = [EstimatorSpec::Ht, EstimatorSpec::Hajek];
        run_replications(&s, &r.law, r.tau, &est, 1, 0, &mask, None, &cfg).unwrap()
    };
    assert_eq!(run(1), run(3));
}
