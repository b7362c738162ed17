//! Point estimators on a single realized dataset.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::law::ExposureProbabilities;
use crate::library::Predictor;
use crate::numeric::CompensatedSum;
use crate::scenario::RealizedData;

/// Point estimator selection.
#[derive(Clone, Debug, PartialEq)]
pub enum EstimatorSpec {
    Ht,
    Hajek,
    /// Difference estimator with an external predictor.
    Difference(Predictor),
    /// Generalized regression with coefficients refit per dataset.
    Greg { ridge: f64 },
}

impl EstimatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::Ht => "ht",
            EstimatorSpec::Hajek => "hajek",
            EstimatorSpec::Difference(_) => "difference",
            EstimatorSpec::Greg { .. } => "greg",
        }
    }

    /// Evaluates the estimator. GREG uses an intercept column when `covariates` is `None`.
    pub fn evaluate(
        &self,
        data: &RealizedData,
        probs: &dyn ExposureProbabilities,
        covariates: Option<&[Vec<f64>]>,
        a: usize,
        b: usize,
        mask: &[bool],
    ) -> Result<f64> {
        match self {
            EstimatorSpec::Ht => Ok(ht_estimate(data, probs, a, b, mask)),
            EstimatorSpec::Hajek => hajek_estimate(data, probs, a, b, mask),
            EstimatorSpec::Difference(pred) => Ok(difference_estimate(data, probs, pred, covariates, a, b, mask)),
            EstimatorSpec::Greg { ridge } => {
                let intercept;
                let x = match covariates {
                    Some(x) => x,
                    None => {
                        intercept = vec![vec![1.0]; data.n()];
                        &intercept
                    }
                };
                let fa = greg_fit(data, x, a, *ridge, mask)?;
                let fb = greg_fit(data, x, b, *ridge, mask)?;
                Ok(greg_estimate(data, probs, x, &fa.beta, &fb.beta, a, b, mask))
            }
        }
    }
}

fn included(mask: &[bool]) -> impl Iterator<Item = usize> + '_ {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
}

fn mask_size(mask: &[bool]) -> f64 {
    mask.iter().filter(|&&m| m).count() as f64
}

/// y / π with the 0/0 := 0 convention. The flag reports a realized zero-probability exposure.
#[inline]
fn weighted(y: f64, pi: f64) -> (f64, bool) {
    if pi > 0.0 {
        (y / pi, false)
    } else {
        (0.0, true)
    }
}

/// Horvitz–Thompson estimate of τ(a, b).
pub fn ht_estimate(data: &RealizedData, probs: &dyn ExposureProbabilities, a: usize, b: usize, mask: &[bool]) -> f64 {
    ht_estimate_flagged(data, probs, a, b, mask).0
}

/// Horvitz–Thompson estimate plus a flag set when a unit realized a contrast
/// exposure with zero marginal probability (inconsistent inputs).
pub fn ht_estimate_flagged(
    data: &RealizedData,
    probs: &dyn ExposureProbabilities,
    a: usize,
    b: usize,
    mask: &[bool],
) -> (f64, bool) {
    let mut acc = CompensatedSum::new();
    let mut flagged = false;
    for i in included(mask) {
        let d = data.exposures[i];
        let sign = if d == a {
            1.0
        } else if d == b {
            -1.0
        } else {
            continue;
        };
        let (v, bad) = weighted(data.y[i], probs.marginal(i, d));
        flagged |= bad;
        acc.add(sign * v);
    }
    (acc.value() / mask_size(mask), flagged)
}

/// Hájek (ratio) estimate of τ(a, b).
pub fn hajek_estimate(
    data: &RealizedData,
    probs: &dyn ExposureProbabilities,
    a: usize,
    b: usize,
    mask: &[bool],
) -> Result<f64> {
    let cell = |d: usize| -> Result<f64> {
        let mut num = CompensatedSum::new();
        let mut den = CompensatedSum::new();
        for i in included(mask).filter(|&i| data.exposures[i] == d) {
            let pi = probs.marginal(i, d);
            if pi > 0.0 {
                num.add(data.y[i] / pi);
                den.add(1.0 / pi);
            }
        }
        if den.value() > 0.0 {
            Ok(num.value() / den.value())
        } else {
            Err(Error::EmptyExposureCell(d))
        }
    };
    Ok(cell(a)? - cell(b)?)
}

/// Difference estimator with an external predictor.
pub fn difference_estimate(
    data: &RealizedData,
    probs: &dyn ExposureProbabilities,
    predictor: &Predictor,
    covariates: Option<&[Vec<f64>]>,
    a: usize,
    b: usize,
    mask: &[bool],
) -> f64 {
    let row = |i: usize| covariates.map(|x| x[i].as_slice());
    let mut pred = CompensatedSum::new();
    let mut resid = CompensatedSum::new();
    for i in included(mask) {
        let x = row(i);
        pred.add(predictor.predict(i, a, x) - predictor.predict(i, b, x));
        let d = data.exposures[i];
        let sign = if d == a {
            1.0
        } else if d == b {
            -1.0
        } else {
            continue;
        };
        let (v, _) = weighted(data.y[i] - predictor.predict(i, d, x), probs.marginal(i, d));
        resid.add(sign * v);
    }
    (pred.value() + resid.value()) / mask_size(mask)
}

/// Least-squares fit within one exposure cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GregFit {
    pub beta: Vec<f64>,
    /// Set when a ridge penalty was applied.
    pub regularized: bool,
}

/// Least-squares coefficients over masked units with exposure `d`.
///
/// A singular Gram matrix is solved with the penalty max(ridge, 1e-8·trace/p).
/// A positive `ridge` is always applied.
pub fn greg_fit(data: &RealizedData, covariates: &[Vec<f64>], d: usize, ridge: f64, mask: &[bool]) -> Result<GregFit> {
    let rows: Vec<usize> = included(mask).filter(|&i| data.exposures[i] == d).collect();
    if rows.is_empty() {
        return Err(Error::EmptyExposureCell(d));
    }
    let p = covariates.first().map_or(0, Vec::len);
    if p == 0 {
        return Ok(GregFit { beta: Vec::new(), regularized: false });
    }
    let x = DMatrix::from_fn(rows.len(), p, |r, c| covariates[rows[r]][c]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.y[i]));
    let gram = x.transpose() * &x;
    let rhs = x.transpose() * y;
    let eig = gram.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_eig = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let singular = max_eig == 0.0 || min_eig <= 1e-12 * max_eig;
    let lambda = if singular {
        let floor = 1e-8 * gram.trace() / p as f64;
        ridge.max(if floor > 0.0 { floor } else { 1e-8 })
    } else {
        ridge
    };
    let mut system = gram;
    for k in 0..p {
        system[(k, k)] += lambda;
    }
    let beta = match system.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidParams("regression system could not be solved".into()))?,
    };
    Ok(GregFit {
        beta: beta.iter().copied().collect(),
        regularized: lambda > 0.0,
    })
}

fn dot(x: &[f64], beta: &[f64]) -> f64 {
    x.iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// Generalized regression estimate given per-cell coefficients.
#[allow(clippy::too_many_arguments)]
pub fn greg_estimate(
    data: &RealizedData,
    probs: &dyn ExposureProbabilities,
    covariates: &[Vec<f64>],
    beta_a: &[f64],
    beta_b: &[f64],
    a: usize,
    b: usize,
    mask: &[bool],
) -> f64 {
    let mut pred = CompensatedSum::new();
    let mut resid = CompensatedSum::new();
    for i in included(mask) {
        let x = covariates.get(i).map_or(&[][..], Vec::as_slice);
        pred.add(dot(x, beta_a) - dot(x, beta_b));
        let d = data.exposures[i];
        let (sign, beta) = if d == a {
            (1.0, beta_a)
        } else if d == b {
            (-1.0, beta_b)
        } else {
            continue;
        };
        let (v, _) = weighted(data.y[i] - dot(x, beta), probs.marginal(i, d));
        resid.add(sign * v);
    }
    (pred.value() + resid.value()) / mask_size(mask)
}
