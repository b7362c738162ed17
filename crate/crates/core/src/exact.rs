//! Exact computations by enumerating the design's support (or all of Ω).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::law::ExposureLaw;
use crate::numeric::{CompensatedSum, SumTable};
use crate::scenario::{exposure_classes, RealizedData, Scenario};
use crate::variance::{as_variance_estimate, OverridePolicy, PairWeightTable};

pub const DEFAULT_ENUM_CAP: u64 = 1 << 24;
pub const ENUM_CAP_VAR: &str = "EXPOSURE_LAB_ENUM_CAP";

const CHUNK: u64 = 1 << 12;
const BATCH: u64 = 64;

/// Largest |Z|^n that exact operations accept.
pub fn enumeration_cap() -> u64 {
    std::env::var(ENUM_CAP_VAR)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_ENUM_CAP)
}

/// |Z|^n, or `None` on overflow.
pub fn omega_len(n: usize, treatments: usize) -> Option<u64> {
    (treatments as u64).checked_pow(u32::try_from(n).ok()?)
}

/// Fails with `EnumerationInfeasible` unless Ω fits under the cap.
pub fn check_enumerable(s: &Scenario) -> Result<u64> {
    let cap = enumeration_cap();
    match omega_len(s.n(), s.treatments()) {
        Some(len) if len <= cap => Ok(len),
        _ => Err(Error::EnumerationInfeasible {
            treatments: s.treatments(),
            n: s.n(),
            cap,
        }),
    }
}

/// Which point set to enumerate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Space {
    /// Design support, weighted by Pr(z).
    Support,
    /// All of Ω, each point with weight one.
    Omega,
}

/// Folds `visit` over every point of `space`.
///
/// Points are cut into fixed-size chunks that are processed in parallel and
/// merged in chunk order, so the result does not depend on the worker count.
pub(crate) fn fold_space<A, I, V, M>(s: &Scenario, space: Space, init: I, visit: V, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, &RealizedData, f64) + Sync,
    M: Fn(&mut A, A),
{
    let omega = check_enumerable(s)?;
    let (n, t) = (s.n(), s.treatments());
    let len = match space {
        Space::Support => s.design().support_len(n, t) as u64,
        Space::Omega => omega,
    };
    let chunks = len.div_ceil(CHUNK);
    let mut acc = init();
    let mut start = 0;
    while start < chunks {
        let stop = (start + BATCH).min(chunks);
        let parts: Vec<A> = (start..stop)
            .into_par_iter()
            .map(|c| {
                let mut part = init();
                let mut data = RealizedData::empty(n);
                for k in c * CHUNK..((c + 1) * CHUNK).min(len) {
                    let p = match space {
                        Space::Support => s.design().support_point(n, t, k, &mut data.z),
                        Space::Omega => {
                            crate::library::design::digits(k, t as u64, &mut data.z);
                            1.0
                        }
                    };
                    if p == 0.0 {
                        continue;
                    }
                    data.refresh(s);
                    visit(&mut part, &data, p);
                }
                part
            })
            .collect();
        for part in parts {
            merge(&mut acc, part);
        }
        start = stop;
    }
    Ok(acc)
}

/// Marginal and joint exposure probabilities by one pass over the support.
pub fn compute_exposure_law(s: &Scenario) -> Result<ExposureLaw> {
    let (n, l) = (s.n(), s.labels());
    let (pi, pij) = fold_space(
        s,
        Space::Support,
        || (SumTable::zeros(n * l), SumTable::zeros(n * n * l * l)),
        |(pi, pij), data, p| {
            let d = &data.exposures;
            for i in 0..n {
                pi.add(i * l + d[i], p);
                let row = i * n;
                for j in 0..n {
                    pij.add(((row + j) * l + d[i]) * l + d[j], p);
                }
            }
        },
        |(pi, pij), (opi, opij)| {
            pi.merge(&opi);
            pij.merge(&opij);
        },
    )?;
    // Summation can overshoot one by an ulp.
    let unit = |v: Vec<f64>| v.into_iter().map(|x| x.clamp(0.0, 1.0)).collect();
    Ok(ExposureLaw::from_tables(n, l, unit(pi.values()), unit(pij.values())))
}

/// Conditional expected outcomes and the expected exposure effects.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroundTruth {
    n: usize,
    labels: usize,
    ybar: Vec<Option<f64>>,
    yrefined: Vec<f64>,
    k1: f64,
}

impl GroundTruth {
    pub fn units(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    /// ȳ_i(d); `None` when no assignment in Ω gives unit `i` exposure `d`.
    pub fn ybar(&self, i: usize, d: usize) -> Option<f64> {
        self.ybar[i * self.labels + d]
    }

    /// ȳ_ij(d1, d2); NaN when ȳ_i(d1) is undefined.
    pub fn yrefined(&self, i: usize, j: usize, d1: usize, d2: usize) -> f64 {
        let l = self.labels;
        self.yrefined[((i * self.n + j) * l + d1) * l + d2]
    }

    /// Explainable specification error e_ij(d1, d2) = ȳ_ij(d1, d2) − ȳ_i(d1).
    pub fn explainable(&self, i: usize, j: usize, d1: usize, d2: usize) -> f64 {
        match self.ybar(i, d1) {
            Some(y) => self.yrefined(i, j, d1, d2) - y,
            None => 0.0,
        }
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    /// τ(a, b) over the units selected by `mask`.
    pub fn effect(&self, a: usize, b: usize, mask: &[bool]) -> Result<f64> {
        let mut acc = CompensatedSum::new();
        let mut m = 0usize;
        for i in (0..self.n).filter(|&i| mask[i]) {
            let ya = self.ybar(i, a).ok_or(Error::UnrealizableExposure { unit: i, label: a })?;
            let yb = self.ybar(i, b).ok_or(Error::UnrealizableExposure { unit: i, label: b })?;
            acc.add(ya - yb);
            m += 1;
        }
        Ok(acc.value() / m as f64)
    }

    /// τ(a, b) over all units, when defined.
    pub fn tau(&self, a: usize, b: usize) -> Option<f64> {
        self.effect(a, b, &vec![true; self.n]).ok()
    }
}

/// Inclusion mask selecting every unit.
pub fn all_units(n: usize) -> Vec<bool> {
    vec![true; n]
}

/// ȳ_i(d) and ȳ_ij(d1, d2), with the uniform-over-Ω fallback for zero-probability events.
pub fn compute_ground_truth(s: &Scenario, law: &ExposureLaw) -> Result<GroundTruth> {
    let (n, l) = (s.n(), s.labels());
    let (sy, syy, range) = fold_space(
        s,
        Space::Support,
        || {
            (
                SumTable::zeros(n * l),
                SumTable::zeros(n * n * l * l),
                vec![(f64::INFINITY, f64::NEG_INFINITY); n * l],
            )
        },
        |(sy, syy, range), data, p| {
            let d = &data.exposures;
            for i in 0..n {
                let py = p * data.y[i];
                let k = i * l + d[i];
                sy.add(k, py);
                range[k].0 = range[k].0.min(data.y[i]);
                range[k].1 = range[k].1.max(data.y[i]);
                let row = i * n;
                for j in 0..n {
                    syy.add(((row + j) * l + d[i]) * l + d[j], py);
                }
            }
        },
        |(a, b, r), (oa, ob, or)| {
            a.merge(&oa);
            b.merge(&ob);
            for (x, y) in r.iter_mut().zip(or) {
                *x = (x.0.min(y.0), x.1.max(y.1));
            }
        },
    )?;
    let (sy, syy) = (sy.values(), syy.values());
    // Outcomes that are constant on a class are taken as is, so correctly
    // specified units get errors that are exactly zero.
    let constant = |k: usize| (range[k].0 == range[k].1).then_some(range[k].0);

    let mut ybar: Vec<Option<f64>> = (0..n * l)
        .map(|k| {
            let pi = law.pi(k / l, k % l);
            (pi > 0.0).then(|| constant(k).unwrap_or(sy[k] / pi))
        })
        .collect();
    if ybar.iter().any(Option::is_none) {
        let (count, total) = fold_space(
            s,
            Space::Omega,
            || (vec![0u64; n * l], SumTable::zeros(n * l)),
            |(count, total), data, _| {
                for i in 0..n {
                    let k = i * l + data.exposures[i];
                    count[k] += 1;
                    total.add(k, data.y[i]);
                }
            },
            |(c, t), (oc, ot)| {
                for (a, b) in c.iter_mut().zip(oc) {
                    *a += b;
                }
                t.merge(&ot);
            },
        )?;
        let total = total.values();
        for (k, slot) in ybar.iter_mut().enumerate() {
            if slot.is_none() && count[k] > 0 {
                *slot = Some(total[k] / count[k] as f64);
            }
        }
    }

    let mut yrefined = vec![f64::NAN; n * n * l * l];
    for i in 0..n {
        for j in 0..n {
            for d1 in 0..l {
                for d2 in 0..l {
                    let idx = ((i * n + j) * l + d1) * l + d2;
                    let pij = law.pij(i, j, d1, d2);
                    yrefined[idx] = if pij > 0.0 {
                        constant(i * l + d1).unwrap_or(syy[idx] / pij)
                    } else {
                        ybar[i * l + d1].unwrap_or(f64::NAN)
                    };
                }
            }
        }
    }
    Ok(GroundTruth {
        n,
        labels: l,
        ybar,
        yrefined,
        k1: s.k1(),
    })
}

/// Conditional second moments of the specification errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorMoments {
    n: usize,
    labels: usize,
    cond_var: Vec<f64>,
    cross: Vec<f64>,
    unexplained: Vec<f64>,
}

impl ErrorMoments {
    fn idx(&self, i: usize, j: usize, d1: usize, d2: usize) -> usize {
        ((i * self.n + j) * self.labels + d1) * self.labels + d2
    }

    /// Var(ε_i | D_i = d); zero when the event has probability zero.
    pub fn cond_var(&self, i: usize, d: usize) -> f64 {
        self.cond_var[i * self.labels + d]
    }

    /// E[ε_i ε_j | D_i = d1, D_j = d2]; zero when the event has probability zero.
    pub fn cross(&self, i: usize, j: usize, d1: usize, d2: usize) -> f64 {
        self.cross[self.idx(i, j, d1, d2)]
    }

    /// Cov(ε_ij, ε_ji | D_i = d1, D_j = d2); zero when the event has probability zero.
    pub fn unexplained_cov(&self, i: usize, j: usize, d1: usize, d2: usize) -> f64 {
        self.unexplained[self.idx(i, j, d1, d2)]
    }

    pub fn units(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> usize {
        self.labels
    }
}

pub fn compute_error_moments(s: &Scenario, law: &ExposureLaw, truth: &GroundTruth) -> Result<ErrorMoments> {
    let (n, l) = (s.n(), s.labels());
    let (var, cross, unexpl) = fold_space(
        s,
        Space::Support,
        || {
            (
                SumTable::zeros(n * l),
                SumTable::zeros(n * n * l * l),
                SumTable::zeros(n * n * l * l),
            )
        },
        |(var, cross, unexpl), data, p| {
            let d = &data.exposures;
            let eps: Vec<f64> = (0..n)
                .map(|i| data.y[i] - truth.ybar(i, d[i]).unwrap_or(f64::NAN))
                .collect();
            for i in 0..n {
                var.add(i * l + d[i], p * eps[i] * eps[i]);
                for j in 0..n {
                    let idx = ((i * n + j) * l + d[i]) * l + d[j];
                    cross.add(idx, p * eps[i] * eps[j]);
                    let ui = data.y[i] - truth.yrefined(i, j, d[i], d[j]);
                    let uj = data.y[j] - truth.yrefined(j, i, d[j], d[i]);
                    unexpl.add(idx, p * ui * uj);
                }
            }
        },
        |(a, b, c), (oa, ob, oc)| {
            a.merge(&oa);
            b.merge(&ob);
            c.merge(&oc);
        },
    )?;
    let cond = |v: f64, p: f64| if p > 0.0 { v / p } else { 0.0 };
    let var = var.values();
    let cross = cross.values();
    let unexpl = unexpl.values();
    let mut out = ErrorMoments {
        n,
        labels: l,
        cond_var: vec![0.0; n * l],
        cross: vec![0.0; n * n * l * l],
        unexplained: vec![0.0; n * n * l * l],
    };
    for i in 0..n {
        for d in 0..l {
            out.cond_var[i * l + d] = cond(var[i * l + d], law.pi(i, d));
        }
        for j in 0..n {
            for d1 in 0..l {
                for d2 in 0..l {
                    let idx = out.idx(i, j, d1, d2);
                    let p = law.pij(i, j, d1, d2);
                    out.cross[idx] = cond(cross[idx], p);
                    out.unexplained[idx] = cond(unexpl[idx], p);
                }
            }
        }
    }
    Ok(out)
}

/// τ̄(a, b) for a correctly specified exposure mapping.
pub fn conventional_effect(s: &Scenario, a: usize, b: usize, mask: &[bool]) -> Result<f64> {
    let (values, ok) = exposure_classes(s)?;
    let bad: Vec<usize> = (0..s.n()).filter(|&i| mask[i] && !ok[i]).collect();
    if !bad.is_empty() {
        return Err(Error::NotCorrectlySpecified { units: bad });
    }
    let l = s.labels();
    let mut acc = CompensatedSum::new();
    let mut m = 0usize;
    for i in (0..s.n()).filter(|&i| mask[i]) {
        let ya = values[i * l + a].ok_or(Error::UnrealizableExposure { unit: i, label: a })?;
        let yb = values[i * l + b].ok_or(Error::UnrealizableExposure { unit: i, label: b })?;
        acc.add(ya - yb);
        m += 1;
    }
    Ok(acc.value() / m as f64)
}

/// Exact design moments of an estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

pub fn estimator_moments(
    s: &Scenario,
    law: &ExposureLaw,
    estimator: &EstimatorSpec,
    a: usize,
    b: usize,
    mask: &[bool],
) -> Result<Moments> {
    let x = s.covariates();
    let eval = |data: &RealizedData| estimator.evaluate(data, law, x, a, b, mask).ok();
    let (first, undefined) = fold_space(
        s,
        Space::Support,
        || (CompensatedSum::new(), CompensatedSum::new()),
        |(sum, undefined), data, p| match eval(data) {
            Some(v) => sum.add(p * v),
            None => undefined.add(p),
        },
        |(a, b), (oa, ob)| {
            a.merge(&oa);
            b.merge(&ob);
        },
    )?;
    if undefined.value() > 0.0 {
        return Err(Error::UndefinedOnSupport { mass: undefined.value() });
    }
    let mean = first.value();
    let second = fold_space(
        s,
        Space::Support,
        CompensatedSum::new,
        |acc, data, p| {
            if let Some(v) = eval(data) {
                acc.add(p * (v - mean) * (v - mean));
            }
        },
        |a, b| a.merge(&b),
    )?;
    Ok(Moments {
        mean,
        variance: second.value(),
    })
}

/// E[V̂] under the given override policy.
pub fn variance_estimator_expectation(
    s: &Scenario,
    law: &ExposureLaw,
    a: usize,
    b: usize,
    policy: &OverridePolicy,
    mask: &[bool],
) -> Result<f64> {
    let table = PairWeightTable::build(law, a, b, policy, mask)?;
    let acc = fold_space(
        s,
        Space::Support,
        CompensatedSum::new,
        |acc, data, p| acc.add(p * as_variance_estimate(data, &table)),
        |a, b| a.merge(&b),
    )?;
    Ok(acc.value())
}

/// Specification errors at one assignment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpecificationErrors {
    n: usize,
    /// ε_i.
    pub eps: Vec<f64>,
    /// e_ij, row-major.
    pub e: Vec<f64>,
    /// ε_ij, row-major.
    pub eps_u: Vec<f64>,
}

impl SpecificationErrors {
    pub fn e(&self, i: usize, j: usize) -> f64 {
        self.e[i * self.n + j]
    }

    pub fn eps_u(&self, i: usize, j: usize) -> f64 {
        self.eps_u[i * self.n + j]
    }
}

pub fn specification_errors(s: &Scenario, truth: &GroundTruth, z: &[u32]) -> SpecificationErrors {
    let data = s.realize(z);
    let n = s.n();
    let d = &data.exposures;
    let ybar: Vec<f64> = (0..n).map(|i| truth.ybar(i, d[i]).unwrap_or(f64::NAN)).collect();
    let eps = (0..n).map(|i| data.y[i] - ybar[i]).collect();
    let mut e = vec![0.0; n * n];
    let mut eps_u = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let r = truth.yrefined(i, j, d[i], d[j]);
            e[i * n + j] = r - ybar[i];
            eps_u[i * n + j] = data.y[i] - r;
        }
    }
    SpecificationErrors { n, eps, e, eps_u }
}
