mod common;

use common::*;
use exposure_lab::diagnostics::*;
use exposure_lab::estimators::{difference_estimate, ht_estimate};
use exposure_lab::exact::{estimator_moments, variance_estimator_expectation};
use exposure_lab::library::{make_predictor, Design, ExposureMap, GraphSpec, OutcomeModel, Predictor, PredictorSpec};
use exposure_lab::variance::{bias_decomposition, partial_interference_override, BiasDecomposition, OverridePolicy};
use exposure_lab::*;

fn close(x: f64, y: f64, tol: f64) {
    assert!((x - y).abs() <= tol, "{x} vs {y}");
}

struct Exact {
    law: ExposureLaw,
    truth: GroundTruth,
    moments: ErrorMoments,
}

fn exact(s: &Scenario) -> Exact {
    let law = compute_exposure_law(s).unwrap();
    let truth = compute_ground_truth(s, &law).unwrap();
    let moments = compute_error_moments(s, &law, &truth).unwrap();
    Exact { law, truth, moments }
}

fn own_z(n: usize) -> Scenario {
    let outcome = OutcomeModel::tabulate(n, 2, Some(1.0), |i, z| z[i] as f64).unwrap();
    ScenarioSpec::new(n, Design::Bernoulli { p: 0.5 }, ExposureMap::OwnTreatment, outcome).build().unwrap()
}

fn decomposition(s: &Scenario, policy: &OverridePolicy) -> (f64, f64, BiasDecomposition) {
    let ex = exact(s);
    let mask = all_units(s.n());
    let var = estimator_moments(s, &ex.law, &EstimatorSpec::Ht, 1, 0, &mask).unwrap().variance;
    let ev = variance_estimator_expectation(s, &ex.law, 1, 0, policy, &mask).unwrap();
    let bd = bias_decomposition(&ex.law, &ex.truth, &ex.moments, 1, 0, policy, &mask).unwrap();
    (var, ev, bd)
}

#[test]
fn design_dependence_examples() {
    let a = exact(&spill_pair());
    assert_eq!(design_dependence(&a.law, 1, 1.0).unwrap(), 0.0);
    let b = exact(&complete_pair());
    close(design_dependence(&b.law, 1, 1.0).unwrap(), 0.125, 1e-15);
    close(design_dependence(&b.law, 1, 2.0).unwrap(), (2.0 * 0.25f64.powi(2) / 4.0).sqrt(), 1e-15);
    close(design_dependence(&b.law, 1, 2.0).unwrap(), 0.17678, 1e-5);
}

#[test]
fn error_dependence_examples() {
    let a = exact(&spill_pair());
    close(explainable_error_dependence(&a.truth, 1), 0.03125, 1e-15);
    assert_eq!(unexplainable_error_dependence(&a.moments, 1), 0.0);
    close(total_error_dependence(&a.moments, 1), 0.0625, 1e-15);

    let d = exact(&triple_interaction());
    close(unexplainable_error_dependence(&d.moments, 1), 1.0 / 24.0, 1e-15);

    // One-way interference: unit 1 ignores unit 0, so every product vanishes.
    let outcome = OutcomeModel::tabulate(2, 2, None, |i, z| if i == 0 { z[0] as f64 + 0.5 * z[1] as f64 } else { z[1] as f64 })
        .unwrap();
    let s = ScenarioSpec::new(2, Design::Bernoulli { p: 0.5 }, ExposureMap::OwnTreatment, outcome).build().unwrap();
    assert_eq!(explainable_error_dependence(&exact(&s).truth, 1), 0.0);
}

#[test]
fn negative_cross_products_leave_only_the_diagonal() {
    // y_0 = z_0 + 0.5 z_1 and y_1 = z_1 - 0.5 z_0, so ε_0 ε_1 < 0 given both treated.
    let outcome = OutcomeModel::tabulate(2, 2, None, |i, z| {
        if i == 0 {
            z[0] as f64 + 0.5 * z[1] as f64
        } else {
            z[1] as f64 - 0.5 * z[0] as f64
        }
    })
    .unwrap();
    let s = ScenarioSpec::new(2, Design::Bernoulli { p: 0.5 }, ExposureMap::OwnTreatment, outcome).build().unwrap();
    let ex = exact(&s);
    assert!(ex.moments.cross(0, 1, 1, 1) < 0.0);
    let diagonal = (ex.moments.cross(0, 0, 1, 1) + ex.moments.cross(1, 1, 1, 1)) / 4.0;
    close(total_error_dependence(&ex.moments, 1), diagonal, 1e-15);
}

#[test]
fn positivity_examples() {
    let c = exact(&blocked_third(|i, z| z[i] as f64));
    close(zero_prob_share(&c.law, 1), 1.0 / 3.0, 1e-15);
    close(positivity_norm(&c.law, 1, 2.0).unwrap(), (8.0f64 / 3.0).sqrt(), 1e-12);
    close(positivity_norm(&c.law, 1, 2.0).unwrap(), 1.63299, 1e-5);
    let a = exact(&spill_pair());
    close(positivity_norm(&a.law, 1, 1.0).unwrap(), 2.0, 1e-15);
}

#[test]
fn variance_bound_examples() {
    let a = exact(&spill_pair());
    let report = DependenceReport::compute(&a.law, &a.truth, &a.moments, 1.0, 2.0).unwrap();
    assert_eq!(report.k2(1, 0).unwrap(), 2.0);
    close(variance_bound(&report, 1.5, 2.0, 1, 0).unwrap(), 18.25, 1e-12);

    let s = own_z(2);
    let ex = exact(&s);
    let report = DependenceReport::compute(&ex.law, &ex.truth, &ex.moments, 1.0, 2.0).unwrap();
    let bound = variance_bound(&report, 1.0, 2.0, 1, 0).unwrap();
    close(bound, 8.0, 1e-12);
    let var = estimator_moments(&s, &ex.law, &EstimatorSpec::Ht, 1, 0, &all_units(2)).unwrap().variance;
    close(var, 0.5, 1e-15);

    let zero = ScenarioSpec::new(
        3,
        Design::Bernoulli { p: 0.5 },
        ExposureMap::OwnTreatment,
        OutcomeModel::GlobalDecay { beta: 0.0, c: 0.0 },
    )
    .build()
    .unwrap();
    let ex = exact(&zero);
    let report = DependenceReport::compute(&ex.law, &ex.truth, &ex.moments, 1.0, 2.0).unwrap();
    assert_eq!(variance_bound(&report, ex.truth.k1(), 2.0, 1, 0).unwrap(), 0.0);
}

#[test]
fn positivity_violation_blocks_the_bound() {
    let c = exact(&blocked_third(|i, z| z[i] as f64));
    let report = DependenceReport::compute(&c.law, &c.truth, &c.moments, 1.0, 2.0).unwrap();
    assert_eq!(report.k2(1, 0), Err(Error::PositivityViolated { unit: 2, label: 1 }));
    assert!(variance_bound(&report, 1.0, f64::INFINITY, 1, 0).is_err());
}

#[test]
fn bias_terms_for_own_outcome() {
    let (var, ev, bd) = decomposition(&own_z(2), &OverridePolicy::Natural);
    close(ev, 1.0, 1e-15);
    close(var, 0.5, 1e-15);
    close(bd.b1, 0.5, 1e-15);
    for x in [bd.b2_ab, bd.b2_ba, bd.b3_ab, bd.b3_ba, bd.b4_ab, bd.b4_aa, bd.b4_bb] {
        assert_eq!(x, 0.0);
    }
    close(bd.total, ev - var, 1e-15);
}

#[test]
fn zero_outcomes_have_zero_variance_estimate() {
    let zero = ScenarioSpec::new(
        3,
        Design::Complete { m: 1 },
        ExposureMap::OwnTreatment,
        OutcomeModel::GlobalDecay { beta: 0.0, c: 0.0 },
    )
    .build()
    .unwrap();
    let law = compute_exposure_law(&zero).unwrap();
    assert_eq!(variance_estimator_expectation(&zero, &law, 1, 0, &OverridePolicy::Natural, &all_units(3)).unwrap(), 0.0);
}

#[test]
fn spill_pair_reconciles_with_the_direct_formula() {
    let s = spill_pair();
    let (var, ev, bd) = decomposition(&s, &OverridePolicy::Natural);
    close(ev, naive_varest_expectation(&s, 1, 0), 1e-12);
    close(ev - var, bd.total, 1e-9);
}

#[test]
fn pair_construction_is_anti_conservative() {
    // Each unit responds only to its partner. Var = 3/n and E[V̂] = 2/n without the override.
    let s = pairs_scenario(4, 0.0, 1.0);
    let (var, ev, bd) = decomposition(&s, &OverridePolicy::Natural);
    close(var, 0.75, 1e-12);
    close(ev, 0.5, 1e-12);
    close(ev, naive_varest_expectation(&s, 1, 0), 1e-12);
    assert!(bd.total < 0.0);
    close(bd.total, -0.25, 1e-12);

    let groups = s.groups().unwrap();
    let (_, ev_g, bd_g) = decomposition(&s, &partial_interference_override(&groups));
    assert!(ev_g >= var);
    for x in [bd_g.b4_ab, bd_g.b4_aa, bd_g.b4_bb] {
        assert_eq!(x, 0.0);
    }
}

#[test]
fn cross_group_independence_kills_b4() {
    // Interference inside two groups of three; the design is independent across groups.
    let s = ScenarioSpec::new(
        6,
        Design::Bernoulli { p: 0.4 },
        ExposureMap::OwnTreatment,
        OutcomeModel::LinearSpillover { beta: 1.0, gamma: -2.0 },
    )
    .graph(GraphSpec::Groups { sizes: vec![3, 3] })
    .build()
    .unwrap();
    let (var, ev, bd) = decomposition(&s, &partial_interference_override(&s.groups().unwrap()));
    for x in [bd.b4_ab, bd.b4_aa, bd.b4_bb] {
        assert!(x.abs() < 1e-15, "{x}");
    }
    close(ev - var, bd.total, 1e-9);
}

#[test]
fn override_monotonicity_on_correct_specification() {
    let cases = [
        own_z(4),
        ScenarioSpec::new(
            6,
            Design::Complete { m: 2 },
            ExposureMap::OwnTreatment,
            OutcomeModel::tabulate(6, 2, None, |i, z| (1.0 + i as f64) * z[i] as f64 - 0.5).unwrap(),
        )
        .build()
        .unwrap(),
    ];
    for s in &cases {
        assert!(is_correctly_specified(s, 0).unwrap());
        let n = s.n();
        let (var, natural, _) = decomposition(s, &OverridePolicy::Natural);
        let (_, pairs, _) = decomposition(s, &OverridePolicy::Groups((0..n).map(|i| i / 2).collect()));
        let (_, all, _) = decomposition(s, &OverridePolicy::AllPairs);
        assert!(natural >= var - 1e-12);
        assert!(pairs >= natural - 1e-12, "{pairs} < {natural}");
        assert!(all >= pairs - 1e-12, "{all} < {pairs}");
    }
}

#[test]
fn single_person_household_cannot_be_exposed() {
    let s = ScenarioSpec::new(
        3,
        Design::Bernoulli { p: 0.5 },
        ExposureMap::GroupCount { threshold: 2 },
        OutcomeModel::GlobalDecay { beta: 1.0, c: 0.0 },
    )
    .graph(GraphSpec::Groups { sizes: vec![1, 2] })
    .build()
    .unwrap();
    let ex = exact(&s);
    assert_eq!(ex.truth.ybar(0, 1), None);
    assert_eq!(ex.truth.effect(1, 0, &all_units(3)), Err(Error::UnrealizableExposure { unit: 0, label: 1 }));
    assert!(ex.truth.effect(1, 0, &[false, true, true]).is_ok());
}

#[test]
fn spillover_without_spill_is_correctly_specified() {
    let s = ScenarioSpec::new(
        6,
        Design::Bernoulli { p: 0.5 },
        ExposureMap::OwnTreatment,
        OutcomeModel::LinearSpillover { beta: 1.0, gamma: 0.0 },
    )
    .graph(GraphSpec::Ring { k: 1 })
    .build()
    .unwrap();
    assert!((0..6).all(|i| is_correctly_specified(&s, i).unwrap()));
    let ex = exact(&s);
    for d in 0..2 {
        assert_eq!(explainable_error_dependence(&ex.truth, d), 0.0);
        assert_eq!(unexplainable_error_dependence(&ex.moments, d), 0.0);
        assert_eq!(total_error_dependence(&ex.moments, d), 0.0);
    }
}

#[test]
fn global_decay_dependence_shrinks_with_n() {
    let e_at = |n: usize| {
        let s = ScenarioSpec::new(
            n,
            Design::Bernoulli { p: 0.5 },
            ExposureMap::OwnTreatment,
            OutcomeModel::GlobalDecay { beta: 1.0, c: 2.0 },
        )
        .build()
        .unwrap();
        let ex = exact(&s);
        explainable_error_dependence(&ex.truth, 0) + explainable_error_dependence(&ex.truth, 1)
    };
    let values: Vec<(usize, f64)> = [4, 8, 12, 16].iter().map(|&n| (n, e_at(n))).collect();
    for w in values.windows(2) {
        assert!(w[1].1 < w[0].1, "{values:?}");
    }
    // e_ij = c/n (d_j - p) exactly, so E(d) = (c/n)² (n - 1)/n · p(1 - p) summed over d.
    for &(n, e) in &values {
        let nf = n as f64;
        let expected = 2.0 * (2.0 / nf).powi(2) * (nf - 1.0) / nf * 0.25;
        close(e, expected, 1e-12);
    }
}

#[test]
fn equilibrium_switch_near_threshold_has_large_unexplained_dependence() {
    let u_at = |threshold: f64| {
        let s = ScenarioSpec::new(
            10,
            Design::Bernoulli { p: 0.5 },
            ExposureMap::OwnTreatment,
            OutcomeModel::EquilibriumSwitch { beta: 1.0, delta: 1.0, threshold },
        )
        .build()
        .unwrap();
        let ex = exact(&s);
        unexplainable_error_dependence(&ex.moments, 1)
    };
    let near = u_at(0.5);
    let far = u_at(0.95);
    assert!(near > 0.1, "{near}");
    assert!(near > 10.0 * far, "{near} vs {far}");
}

#[test]
fn oracle_predictor_reduces_variance_on_spill_pair() {
    let s = spill_pair();
    let ex = exact(&s);
    let mask = all_units(2);
    let oracle = make_predictor(&PredictorSpec::Oracle, &s, Some(&ex.truth)).unwrap();
    let diff = estimator_moments(&s, &ex.law, &EstimatorSpec::Difference(oracle), 1, 0, &mask).unwrap();
    let ht = estimator_moments(&s, &ex.law, &EstimatorSpec::Ht, 1, 0, &mask).unwrap();
    assert!(diff.variance <= ht.variance, "{} > {}", diff.variance, ht.variance);
    close(diff.mean, 1.0, 1e-15);
}

#[test]
fn perfect_predictor_on_spill_pair() {
    let s = spill_pair();
    let ex = exact(&s);
    let oracle = make_predictor(&PredictorSpec::Oracle, &s, Some(&ex.truth)).unwrap();
    let data = s.realize(&[1, 0]);
    let est = difference_estimate(&data, &ex.law, &oracle, None, 1, 0, &all_units(2));
    close(est, 1.0 + 0.5 * ((1.0 - 1.25) / 0.5 - (0.5 - 0.25) / 0.5), 1e-15);
    close(est, 0.5, 1e-15);
}

#[test]
fn predictor_reductions() {
    let s = ScenarioSpec::new(
        4,
        Design::Bernoulli { p: 0.3 },
        ExposureMap::OwnTreatment,
        OutcomeModel::GlobalDecay { beta: 1.0, c: 1.0 },
    )
    .covariates((0..4).map(|i| vec![1.0, i as f64]).collect())
    .build()
    .unwrap();
    let law = compute_exposure_law(&s).unwrap();
    let mask = all_units(4);
    let linear0 = make_predictor(&PredictorSpec::Linear { beta: vec![vec![0.0, 0.0]; 2] }, &s, None).unwrap();
    let zero = make_predictor(&PredictorSpec::Zero, &s, None).unwrap();
    let c = 0.7;
    let constant = Predictor::Constant(c);
    for z in naive_omega(&s) {
        let data = s.realize(&z);
        let x = s.covariates();
        let ht = ht_estimate(&data, &law, 1, 0, &mask);
        assert_eq!(difference_estimate(&data, &law, &zero, x, 1, 0, &mask), ht);
        assert_eq!(difference_estimate(&data, &law, &linear0, x, 1, 0, &mask), ht);
        // Constant contrast cancels; the residual shift is −c/n Σ (I_i(a)/π_i(a) − I_i(b)/π_i(b)).
        let shift: f64 = (0..4)
            .map(|i| {
                let ia = (data.exposures[i] == 1) as u8 as f64 / law.pi(i, 1);
                let ib = (data.exposures[i] == 0) as u8 as f64 / law.pi(i, 0);
                ia - ib
            })
            .sum::<f64>()
            * c
            / 4.0;
        close(difference_estimate(&data, &law, &constant, x, 1, 0, &mask), ht - shift, 1e-14);
    }
    assert_eq!(
        make_predictor(&PredictorSpec::Linear { beta: vec![vec![0.0]; 2] }, &spill_pair(), None),
        Err(Error::MissingCovariates)
    );
}
