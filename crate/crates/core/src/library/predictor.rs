use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::GroundTruth;
use crate::numeric::CompensatedSum;
use crate::scenario::Scenario;

/// Serializable predictor choice for the difference estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorSpec {
    Zero,
    Constant { c: f64 },
    /// One coefficient vector per exposure label, applied to the covariates.
    Linear { beta: Vec<Vec<f64>> },
    /// The true conditional means ȳ_i(d).
    Oracle,
}

/// External predictor. Its inputs are a unit, an exposure label and fixed
/// covariates, so it cannot see realized outcomes.
#[derive(Clone, Debug, PartialEq)]
pub enum Predictor {
    Zero,
    Constant(f64),
    Linear(Vec<Vec<f64>>),
    /// Per-unit table indexed `[i][d]`.
    Table { labels: usize, values: Vec<f64> },
}

impl Predictor {
    pub fn predict(&self, unit: usize, label: usize, x: Option<&[f64]>) -> f64 {
        match self {
            Predictor::Zero => 0.0,
            Predictor::Constant(c) => *c,
            Predictor::Linear(beta) => {
                let x = x.expect("covariates checked at construction");
                x.iter().zip(&beta[label]).map(|(a, b)| a * b).sum()
            }
            Predictor::Table { labels, values } => values[unit * labels + label],
        }
    }
}

/// Resolves a predictor spec; the oracle needs the exact ground truth.
pub fn make_predictor(spec: &PredictorSpec, s: &Scenario, truth: Option<&GroundTruth>) -> Result<Predictor> {
    Ok(match spec {
        PredictorSpec::Zero => Predictor::Zero,
        PredictorSpec::Constant { c } => Predictor::Constant(*c),
        PredictorSpec::Linear { beta } => {
            let x = s.covariates().ok_or(Error::MissingCovariates)?;
            let p = x[0].len();
            if beta.len() != s.labels() || beta.iter().any(|b| b.len() != p) {
                return Err(Error::InvalidParams(format!(
                    "linear predictor needs {} coefficient vectors of width {p}",
                    s.labels()
                )));
            }
            Predictor::Linear(beta.clone())
        }
        PredictorSpec::Oracle => {
            let truth = truth.ok_or_else(|| {
                Error::InvalidParams("oracle predictor needs an enumerable scenario".into())
            })?;
            let labels = truth.labels();
            let values = (0..truth.units() * labels)
                .map(|k| truth.ybar(k / labels, k % labels).unwrap_or(0.0))
                .collect();
            Predictor::Table { labels, values }
        }
    })
}

/// Predictor with its own sampling law: a fixed base plus Gaussian noise that is
/// partly shared across units.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticPredictor {
    pub base: Predictor,
    pub shared_sd: f64,
    pub unit_sd: f64,
}

impl StochasticPredictor {
    pub fn deterministic(base: Predictor) -> Self {
        Self { base, shared_sd: 0.0, unit_sd: 0.0 }
    }
}

/// How to evaluate prediction covariances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PredictionMethod {
    Exact,
    MonteCarlo { draws: usize, seed: u64 },
}

/// (1/n²) Σ_i Σ_{j≠i} |Cov(ŷ_i(d), ŷ_j(d))|.
pub fn prediction_dependence(
    predictor: &StochasticPredictor,
    n: usize,
    d: usize,
    covariates: Option<&[Vec<f64>]>,
    method: PredictionMethod,
) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    match method {
        PredictionMethod::Exact => {
            let shared = predictor.shared_sd * predictor.shared_sd;
            nf * (nf - 1.0) * shared / (nf * nf)
        }
        PredictionMethod::MonteCarlo { draws, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base: Vec<f64> = (0..n)
                .map(|i| predictor.base.predict(i, d, covariates.map(|x| x[i].as_slice())))
                .collect();
            let mut samples = vec![vec![0.0; n]; draws];
            for row in samples.iter_mut() {
                let shared: f64 = StandardNormal.sample(&mut rng);
                for (i, v) in row.iter_mut().enumerate() {
                    let own: f64 = StandardNormal.sample(&mut rng);
                    *v = base[i] + predictor.shared_sd * shared + predictor.unit_sd * own;
                }
            }
            let mean: Vec<f64> = (0..n)
                .map(|i| samples.iter().map(|r| r[i]).sum::<f64>() / draws as f64)
                .collect();
            let mut acc = CompensatedSum::new();
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let cov = samples
                        .iter()
                        .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
                        .sum::<f64>()
                        / (draws as f64 - 1.0);
                    acc.add(cov.abs());
                }
            }
            acc.value() / (nf * nf)
        }
    }
}
