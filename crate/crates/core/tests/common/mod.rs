//! Shared scenarios and brute-force reference computations for the integration tests.
//!
//! The `naive_*` helpers enumerate Ω directly and evaluate each pmf from its
//! definition, without touching the library's enumeration code.

#![allow(dead_code)]

use exposure_lab::library::{Design, ExposureMap, GraphSpec, OutcomeModel};
use exposure_lab::{Scenario, ScenarioSpec};

pub struct Case {
    pub name: &'static str,
    pub scenario: Scenario,
    pub a: usize,
    pub b: usize,
    /// Group label per unit used for the partial-interference override.
    pub groups: Vec<usize>,
}

fn pairs_of(n: usize) -> Vec<usize> {
    (0..n).map(|i| i / 2).collect()
}

fn blocks(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(g, &k)| vec![g; k]).collect()
}

fn case(name: &'static str, spec: ScenarioSpec, a: usize, b: usize, groups: Option<Vec<usize>>) -> Case {
    let scenario = spec.build().unwrap_or_else(|e| panic!("{name}: {e}"));
    let groups = groups.or_else(|| scenario.groups()).unwrap_or_else(|| pairs_of(scenario.n()));
    Case { name, scenario, a, b, groups }
}

fn tab(n: usize, f: impl Fn(usize, &[u32]) -> f64) -> OutcomeModel {
    OutcomeModel::tabulate(n, 2, None, f).unwrap()
}

fn bern(p: f64) -> Design {
    Design::Bernoulli { p }
}

pub fn spill_pair() -> Scenario {
    let outcome = OutcomeModel::tabulate(2, 2, Some(1.5), |i, z| z[i] as f64 + 0.5 * z[1 - i] as f64).unwrap();
    ScenarioSpec::new(2, bern(0.5), ExposureMap::OwnTreatment, outcome).build().unwrap()
}

pub fn complete_pair() -> Scenario {
    let outcome = OutcomeModel::tabulate(2, 2, Some(1.5), |i, z| z[i] as f64 + 0.5 * z[1 - i] as f64).unwrap();
    ScenarioSpec::new(2, Design::Complete { m: 1 }, ExposureMap::OwnTreatment, outcome).build().unwrap()
}

pub fn blocked_third(f: impl Fn(usize, &[u32]) -> f64) -> Scenario {
    let design = Design::Restricted { support: vec![vec![1, 0, 0], vec![0, 1, 0]], probs: vec![0.5, 0.5] };
    ScenarioSpec::new(3, design, ExposureMap::OwnTreatment, tab(3, f)).build().unwrap()
}

pub fn triple_interaction() -> Scenario {
    let outcome = tab(3, |i, z| z[i] as f64 + 0.5 * (z[(i + 1) % 3] * z[(i + 2) % 3]) as f64);
    ScenarioSpec::new(3, bern(0.5), ExposureMap::OwnTreatment, outcome).build().unwrap()
}

/// Units paired off; each unit's outcome is its partner's treatment scaled by `gamma`.
pub fn pairs_scenario(n: usize, beta: f64, gamma: f64) -> Scenario {
    ScenarioSpec::new(n, bern(0.5), ExposureMap::OwnTreatment, OutcomeModel::LinearSpillover { beta, gamma })
        .graph(GraphSpec::Groups { sizes: vec![2; n / 2] })
        .build()
        .unwrap()
}

pub fn ring_scenario(n: usize, beta: f64, gamma: f64) -> Scenario {
    ScenarioSpec::new(n, bern(0.5), ExposureMap::OwnTreatment, OutcomeModel::LinearSpillover { beta, gamma })
        .graph(GraphSpec::Ring { k: 2 })
        .build()
        .unwrap()
}

pub fn global_scenario(n: usize) -> Scenario {
    ScenarioSpec::new(
        n,
        bern(0.5),
        ExposureMap::GlobalFraction { cuts: vec![0.5] },
        OutcomeModel::GlobalDecay { beta: 1.0, c: 1.0 },
    )
    .build()
    .unwrap()
}

/// Deterministic irregular values in [-1, 1].
pub fn wiggle(i: usize, k: u64) -> f64 {
    ((i as f64 + 1.0) * 12.9898 + k as f64 * 78.233).sin()
}

fn index(z: &[u32]) -> u64 {
    z.iter().fold(0, |k, &t| 2 * k + t as u64)
}

fn covariates(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| vec![1.0, i as f64 / n as f64, wiggle(i, 3)]).collect()
}

/// Enumerable scenarios, all with positivity on their contrast.
pub fn suite() -> Vec<Case> {
    let ls = |beta, gamma| OutcomeModel::LinearSpillover { beta, gamma };
    let own = || ExposureMap::OwnTreatment;
    vec![
        case("spill_pair", ScenarioSpec::new(2, bern(0.5), own(), tab(2, |i, z| z[i] as f64 + 0.5 * z[1 - i] as f64)), 1, 0, None),
        case(
            "complete_pair",
            ScenarioSpec::new(2, Design::Complete { m: 1 }, own(), tab(2, |i, z| z[i] as f64 + 0.5 * z[1 - i] as f64)),
            1,
            0,
            None,
        ),
        case(
            "triple_interaction",
            ScenarioSpec::new(3, bern(0.5), own(), tab(3, |i, z| z[i] as f64 + 0.5 * (z[(i + 1) % 3] * z[(i + 2) % 3]) as f64)),
            1,
            0,
            Some(vec![0, 0, 0]),
        ),
        case("ring1_n6", ScenarioSpec::new(6, bern(0.5), own(), ls(1.0, 1.0)).graph(GraphSpec::Ring { k: 1 }), 1, 0, None),
        case(
            "ring2_n8_p03",
            ScenarioSpec::new(8, bern(0.3), own(), ls(2.0, -1.0)).graph(GraphSpec::Ring { k: 2 }).covariates(covariates(8)),
            1,
            0,
            None,
        ),
        case(
            "complete_decay",
            ScenarioSpec::new(7, Design::Complete { m: 3 }, own(), OutcomeModel::GlobalDecay { beta: 1.0, c: 2.0 }),
            1,
            0,
            None,
        ),
        case(
            "complete_ring",
            ScenarioSpec::new(8, Design::Complete { m: 4 }, own(), ls(0.5, 1.0)).graph(GraphSpec::Ring { k: 1 }),
            1,
            0,
            None,
        ),
        case(
            "group_complete",
            ScenarioSpec::new(10, Design::GroupComplete { sizes: vec![3, 3, 4], treated: vec![1, 2, 2] }, own(), ls(1.0, 1.5))
                .graph(GraphSpec::Groups { sizes: vec![3, 3, 4] }),
            1,
            0,
            None,
        ),
        case(
            "pairs",
            ScenarioSpec::new(8, bern(0.5), own(), ls(0.0, 1.0)).graph(GraphSpec::Groups { sizes: vec![2; 4] }),
            1,
            0,
            None,
        ),
        case(
            "grid_fraction",
            ScenarioSpec::new(9, bern(0.4), ExposureMap::NeighborFraction { cuts: vec![0.5] }, ls(1.0, 1.0))
                .graph(GraphSpec::Grid { width: 3, height: 3 }),
            1,
            0,
            Some(blocks(&[3, 3, 3])),
        ),
        case(
            "own_and_neighbours",
            ScenarioSpec::new(8, bern(0.5), ExposureMap::OwnAndNeighborFraction { cuts: vec![0.5] }, ls(1.0, 0.5))
                .graph(GraphSpec::Ring { k: 1 }),
            4,
            0,
            None,
        ),
        case(
            "household_count",
            ScenarioSpec::new(8, bern(0.5), ExposureMap::GroupCount { threshold: 2 }, ls(1.0, 1.0))
                .graph(GraphSpec::Groups { sizes: vec![2, 3, 3] }),
            1,
            0,
            None,
        ),
        case(
            "global_share",
            ScenarioSpec::new(8, bern(0.5), ExposureMap::GlobalFraction { cuts: vec![0.5] }, OutcomeModel::GlobalDecay { beta: 1.0, c: 1.0 }),
            1,
            0,
            None,
        ),
        case(
            "global_switch",
            ScenarioSpec::new(
                9,
                bern(0.4),
                ExposureMap::GlobalFraction { cuts: vec![0.5] },
                OutcomeModel::EquilibriumSwitch { beta: 1.0, delta: 2.0, threshold: 0.5 },
            ),
            1,
            0,
            None,
        ),
        case(
            "switch_own",
            ScenarioSpec::new(10, bern(0.5), own(), OutcomeModel::EquilibriumSwitch { beta: 1.0, delta: 1.5, threshold: 0.5 }),
            1,
            0,
            None,
        ),
        case(
            "iid_three",
            ScenarioSpec::new(5, Design::Iid { probs: vec![0.2, 0.5, 0.3] }, own(), OutcomeModel::GlobalDecay { beta: 1.0, c: 2.0 })
                .treatments(3),
            2,
            0,
            None,
        ),
        case(
            "erdos_renyi",
            ScenarioSpec::new(8, bern(0.5), own(), ls(1.0, 2.0)).graph(GraphSpec::ErdosRenyi { p: 0.4, seed: 3 }),
            1,
            0,
            None,
        ),
        case(
            "restricted_full",
            ScenarioSpec::new(
                3,
                Design::Restricted {
                    support: (0..8u32).map(|k| vec![k >> 2 & 1, k >> 1 & 1, k & 1]).collect(),
                    probs: vec![0.05, 0.1, 0.2, 0.15, 0.1, 0.2, 0.1, 0.1],
                },
                own(),
                tab(3, |i, z| wiggle(i, index(z))),
            )
            .covariates(covariates(3)),
            1,
            0,
            None,
        ),
        case(
            "tabular_mixed",
            ScenarioSpec::new(
                4,
                bern(0.6),
                own(),
                tab(4, |i, z| {
                    z[i] as f64 * (1.0 + 0.3 * i as f64) + 0.7 * (z[(i + 1) % 4] * z[(i + 2) % 4]) as f64
                        - 0.4 * z[(i + 3) % 4] as f64
                }),
            )
            .covariates(covariates(4)),
            1,
            0,
            None,
        ),
        case("ring1_n12", ScenarioSpec::new(12, bern(0.5), own(), ls(1.0, 1.0)).graph(GraphSpec::Ring { k: 1 }), 1, 0, None),
        case(
            "group_decay",
            ScenarioSpec::new(8, Design::GroupComplete { sizes: vec![4, 4], treated: vec![2, 2] }, own(), OutcomeModel::GlobalDecay { beta: 0.5, c: 3.0 }),
            1,
            0,
            Some(blocks(&[4, 4])),
        ),
        case(
            "correct_complete_switch",
            ScenarioSpec::new(10, Design::Complete { m: 5 }, own(), OutcomeModel::EquilibriumSwitch { beta: 1.0, delta: 1.0, threshold: 0.5 }),
            1,
            0,
            None,
        ),
        case(
            "correct_ring",
            ScenarioSpec::new(6, bern(0.3), own(), ls(2.0, 0.0)).graph(GraphSpec::Ring { k: 1 }).covariates(covariates(6)),
            1,
            0,
            None,
        ),
        case(
            "correct_tabular",
            ScenarioSpec::new(5, Design::Complete { m: 2 }, own(), tab(5, |i, z| (1.0 + i as f64 / 2.0) * z[i] as f64 - 0.3 * i as f64)),
            1,
            0,
            None,
        ),
        case(
            "negative_errors",
            ScenarioSpec::new(
                6,
                bern(0.5),
                own(),
                tab(6, |i, z| {
                    let partner = i ^ 1;
                    z[i] as f64 - 0.8 * z[partner] as f64 + 0.3 * z[(i + 2) % 6] as f64
                }),
            ),
            1,
            0,
            Some(pairs_of(6)),
        ),
    ]
}

/// Support of the design, with each pmf evaluated from its definition over Ω.
pub fn naive_support(s: &Scenario) -> Vec<(Vec<u32>, f64)> {
    let (n, t) = (s.n(), s.treatments() as u64);
    let total = t.pow(n as u32);
    let mut out = Vec::new();
    for k in 0..total {
        let mut z = vec![0u32; n];
        let mut r = k;
        for slot in z.iter_mut().rev() {
            *slot = (r % t) as u32;
            r /= t;
        }
        let p = naive_pmf(s.design(), &z);
        if p > 0.0 {
            out.push((z, p));
        }
    }
    out
}

fn choose(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn naive_pmf(design: &Design, z: &[u32]) -> f64 {
    match design {
        Design::Bernoulli { p } => z.iter().map(|&t| if t == 1 { *p } else { 1.0 - p }).product(),
        Design::Iid { probs } => z.iter().map(|&t| probs[t as usize]).product(),
        Design::Complete { m } => {
            let treated = z.iter().filter(|&&t| t == 1).count();
            if treated == *m {
                1.0 / choose(z.len(), *m)
            } else {
                0.0
            }
        }
        Design::GroupComplete { sizes, treated } => {
            let mut start = 0;
            let mut p = 1.0;
            for (&size, &m) in sizes.iter().zip(treated) {
                let count = z[start..start + size].iter().filter(|&&t| t == 1).count();
                p *= if count == m { 1.0 / choose(size, m) } else { 0.0 };
                start += size;
            }
            p
        }
        Design::Restricted { support, probs } => support
            .iter()
            .zip(probs)
            .filter(|(point, _)| point.as_slice() == z)
            .map(|(_, &p)| p)
            .sum(),
    }
}

/// Every point of Ω with weight one.
pub fn naive_omega(s: &Scenario) -> Vec<Vec<u32>> {
    let (n, t) = (s.n(), s.treatments() as u64);
    (0..t.pow(n as u32))
        .map(|k| {
            let mut z = vec![0u32; n];
            let mut r = k;
            for slot in z.iter_mut().rev() {
                *slot = (r % t) as u32;
                r /= t;
            }
            z
        })
        .collect()
}

/// π_i(d) as `[i][d]`.
pub fn naive_marginals(s: &Scenario, support: &[(Vec<u32>, f64)]) -> Vec<Vec<f64>> {
    let mut pi = vec![vec![0.0; s.labels()]; s.n()];
    for (z, p) in support {
        let data = s.realize(z);
        for i in 0..s.n() {
            pi[i][data.exposures[i]] += p;
        }
    }
    pi
}

/// ȳ_i(d) as `[i][d]`, falling back to the uniform mean over Ω.
pub fn naive_ybar(s: &Scenario, support: &[(Vec<u32>, f64)]) -> Vec<Vec<Option<f64>>> {
    let (n, l) = (s.n(), s.labels());
    let pi = naive_marginals(s, support);
    let mut sum = vec![vec![0.0; l]; n];
    for (z, p) in support {
        let data = s.realize(z);
        for i in 0..n {
            sum[i][data.exposures[i]] += p * data.y[i];
        }
    }
    let mut count = vec![vec![0usize; l]; n];
    let mut plain = vec![vec![0.0; l]; n];
    for z in naive_omega(s) {
        let data = s.realize(&z);
        for i in 0..n {
            count[i][data.exposures[i]] += 1;
            plain[i][data.exposures[i]] += data.y[i];
        }
    }
    (0..n)
        .map(|i| {
            (0..l)
                .map(|d| {
                    if pi[i][d] > 0.0 {
                        Some(sum[i][d] / pi[i][d])
                    } else if count[i][d] > 0 {
                        Some(plain[i][d] / count[i][d] as f64)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect()
}

/// Horvitz-Thompson estimate over all units with the 0/0 = 0 convention.
pub fn naive_ht(pi: &[Vec<f64>], exposures: &[usize], y: &[f64], a: usize, b: usize) -> f64 {
    let n = y.len() as f64;
    let mut est = 0.0;
    for i in 0..y.len() {
        if exposures[i] == a && pi[i][a] > 0.0 {
            est += y[i] / pi[i][a];
        }
        if exposures[i] == b && pi[i][b] > 0.0 {
            est -= y[i] / pi[i][b];
        }
    }
    est / n
}

/// Exact mean and variance of the HT estimator.
pub fn naive_ht_moments(s: &Scenario, a: usize, b: usize) -> (f64, f64) {
    let support = naive_support(s);
    let pi = naive_marginals(s, &support);
    let vals: Vec<(f64, f64)> = support
        .iter()
        .map(|(z, p)| {
            let data = s.realize(z);
            (naive_ht(&pi, &data.exposures, &data.y, a, b), *p)
        })
        .collect();
    let mean: f64 = vals.iter().map(|(v, p)| v * p).sum();
    let var: f64 = vals.iter().map(|(v, p)| p * (v - mean) * (v - mean)).sum();
    (mean, var)
}

/// E[V̂] for the displayed estimator with the natural zero-joint indicators.
pub fn naive_varest_expectation(s: &Scenario, a: usize, b: usize) -> f64 {
    let support = naive_support(s);
    let n = s.n();
    let pi = naive_marginals(s, &support);
    let mut pij = vec![vec![[[0.0; 2]; 2]; n]; n];
    let slot = |d: usize| if d == a { Some(0) } else if d == b { Some(1) } else { None };
    for (z, p) in &support {
        let data = s.realize(z);
        for i in 0..n {
            for j in 0..n {
                if let (Some(s1), Some(s2)) = (slot(data.exposures[i]), slot(data.exposures[j])) {
                    pij[i][j][s1][s2] += p;
                }
            }
        }
    }
    let labels = [a, b];
    let mut expectation = 0.0;
    for (z, p) in &support {
        let data = s.realize(z);
        let ind = |i: usize, d: usize| (data.exposures[i] == d) as u8 as f64;
        let mut v = 0.0;
        for i in 0..n {
            for j in 0..n {
                let sign = (ind(i, a) - ind(i, b)) * (ind(j, a) - ind(j, b));
                if sign != 0.0 {
                    let s1 = slot(data.exposures[i]).unwrap();
                    let s2 = slot(data.exposures[j]).unwrap();
                    let (p1, p2, pj) = (pi[i][labels[s1]], pi[j][labels[s2]], pij[i][j][s1][s2]);
                    let zflag = (pj == 0.0) as u8 as f64;
                    let w = (pj - p1 * p2) / (pj * p1 * p2 + zflag);
                    v += sign * w * data.y[i] * data.y[j];
                }
                if let Some(s1) = slot(data.exposures[i]) {
                    let weight = ind(i, a) / pi[i][a] + ind(i, b) / pi[i][b];
                    let zz = (pij[i][j][s1][0] == 0.0) as u8 as f64 + (pij[i][j][s1][1] == 0.0) as u8 as f64;
                    v += weight * zz * data.y[i] * data.y[i];
                }
            }
        }
        expectation += p * v / (n * n) as f64;
    }
    expectation
}
