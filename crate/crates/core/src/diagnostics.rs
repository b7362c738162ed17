//! Dependence and positivity measures.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{ErrorMoments, GroundTruth};
use crate::law::ExposureProbabilities;
use crate::numeric::CompensatedSum;

/// ((1/n²) Σ_i Σ_{j≠i} |Cov(I_i(d), I_j(d))|^q)^{1/q}.
pub fn design_dependence(law: &dyn ExposureProbabilities, d: usize, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidParams(format!("exponent q={q} must be at least 1")));
    }
    let n = law.units();
    let mut acc = CompensatedSum::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let c = law.cov(i, j, d)?.abs();
            acc.add(if q == 1.0 { c } else { c.powf(q) });
        }
    }
    let mean = acc.value() / (n * n) as f64;
    Ok(if q == 1.0 { mean } else { mean.powf(1.0 / q) })
}

/// (1/n²) Σ_i Σ_{j≠i} e_ij(d, d) e_ji(d, d). Can be negative.
pub fn explainable_error_dependence(truth: &GroundTruth, d: usize) -> f64 {
    let n = truth.units();
    let mut acc = CompensatedSum::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            acc.add(truth.explainable(i, j, d, d) * truth.explainable(j, i, d, d));
        }
    }
    acc.value() / (n * n) as f64
}

/// (1/n²) Σ_i Σ_{j≠i} Cov(ε_ij, ε_ji | D_i = D_j = d). Can be negative.
pub fn unexplainable_error_dependence(moments: &ErrorMoments, d: usize) -> f64 {
    let n = moments.units();
    let mut acc = CompensatedSum::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            acc.add(moments.unexplained_cov(i, j, d, d));
        }
    }
    acc.value() / (n * n) as f64
}

/// (1/n²) Σ_i Σ_j max(0, E[ε_i ε_j | D_i = D_j = d]), diagonal included.
pub fn total_error_dependence(moments: &ErrorMoments, d: usize) -> f64 {
    let n = moments.units();
    let mut acc = CompensatedSum::new();
    for i in 0..n {
        for j in 0..n {
            acc.add(moments.cross(i, j, d, d).max(0.0));
        }
    }
    acc.value() / (n * n) as f64
}

/// Share of units with π_i(d) = 0.
pub fn zero_prob_share(law: &dyn ExposureProbabilities, d: usize) -> f64 {
    let n = law.units();
    (0..n).filter(|&i| law.marginal(i, d) == 0.0).count() as f64 / n as f64
}

/// ((1/n) Σ_i (1 − z̄_i(d)) / (π_i(d)^p + z̄_i(d)))^{1/p}.
pub fn positivity_norm(law: &dyn ExposureProbabilities, d: usize, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParams(format!("exponent p={p} must be at least 1")));
    }
    let n = law.units();
    let sum: CompensatedSum = (0..n)
        .map(|i| law.marginal(i, d))
        .filter(|&pi| pi > 0.0)
        .map(|pi| 1.0 / pi.powf(p))
        .collect();
    Ok((sum.value() / n as f64).powf(1.0 / p))
}

/// Smallest marginal probability over included units for each label, with the unit attaining it.
fn min_marginals(law: &dyn ExposureProbabilities, mask: &[bool]) -> Vec<(f64, usize)> {
    (0..law.labels())
        .map(|d| {
            (0..law.units())
                .filter(|&i| mask[i])
                .map(|i| (law.marginal(i, d), i))
                .fold((f64::INFINITY, 0), |best, x| if x.0 < best.0 { x } else { best })
        })
        .collect()
}

/// k2 = max over included units and d ∈ {a, b} of 1/π_i(d).
pub fn positivity_bound(law: &dyn ExposureProbabilities, a: usize, b: usize, mask: &[bool]) -> Result<f64> {
    let mins = min_marginals(law, mask);
    k2_from(&mins, a, b)
}

fn k2_from(mins: &[(f64, usize)], a: usize, b: usize) -> Result<f64> {
    let mut k2 = 0.0f64;
    for d in [a, b] {
        let (p, unit) = mins[d];
        if p <= 0.0 {
            return Err(Error::PositivityViolated { unit, label: d });
        }
        k2 = k2.max(1.0 / p);
    }
    Ok(k2)
}

/// Every measure per exposure label.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DependenceReport {
    pub n: usize,
    pub q: f64,
    pub p: f64,
    /// D(d).
    pub design: Vec<f64>,
    /// D(d, q).
    pub design_q: Vec<f64>,
    /// E(d).
    pub explainable: Vec<f64>,
    /// U(d).
    pub unexplainable: Vec<f64>,
    /// T(d).
    pub total: Vec<f64>,
    /// Z̄(d).
    pub zero_share: Vec<f64>,
    /// Π(d, p).
    pub positivity: Vec<f64>,
    /// P(d), when a predictor is attached.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<Vec<f64>>,
    #[serde(skip)]
    min_marginal: Vec<(f64, usize)>,
}

impl DependenceReport {
    pub fn compute(
        law: &dyn ExposureProbabilities,
        truth: &GroundTruth,
        moments: &ErrorMoments,
        q: f64,
        p: f64,
    ) -> Result<Self> {
        let labels = law.labels();
        let per = |f: &dyn Fn(usize) -> Result<f64>| (0..labels).map(f).collect::<Result<Vec<f64>>>();
        Ok(Self {
            n: law.units(),
            q,
            p,
            design: per(&|d| design_dependence(law, d, 1.0))?,
            design_q: per(&|d| design_dependence(law, d, q))?,
            explainable: per(&|d| Ok(explainable_error_dependence(truth, d)))?,
            unexplainable: per(&|d| Ok(unexplainable_error_dependence(moments, d)))?,
            total: per(&|d| Ok(total_error_dependence(moments, d)))?,
            zero_share: per(&|d| Ok(zero_prob_share(law, d)))?,
            positivity: per(&|d| positivity_norm(law, d, p))?,
            prediction: None,
            min_marginal: min_marginals(law, &vec![true; law.units()]),
        })
    }

    pub fn with_prediction(mut self, values: Vec<f64>) -> Self {
        self.prediction = Some(values);
        self
    }

    /// k2 over all units for the contrast (a, b).
    pub fn k2(&self, a: usize, b: usize) -> Result<f64> {
        k2_from(&self.min_marginal, a, b)
    }
}

/// 8k1²k2/n + 20k1²k2²(D(a)+D(b)) + 4 max(0, E(a)+E(b)+U(a)+U(b)), with
/// negative error dependences set to zero.
pub fn variance_bound(report: &DependenceReport, k1: f64, k2: f64, a: usize, b: usize) -> Result<f64> {
    if !k2.is_finite() {
        report.k2(a, b)?;
        return Err(Error::InvalidParams("k2 must be finite".into()));
    }
    let n = report.n as f64;
    let errors = [report.explainable[a], report.explainable[b], report.unexplainable[a], report.unexplainable[b]]
        .into_iter()
        .map(|x| x.max(0.0))
        .sum::<f64>();
    Ok(8.0 * k1 * k1 * k2 / n + 20.0 * k1 * k1 * k2 * k2 * (report.design[a] + report.design[b]) + 4.0 * errors)
}
