//! Seeded, parallel replication harness.
//!
//! Replication `r` draws its assignment from a ChaCha8 generator seeded with the
//! run seed and switched to stream `r`, so every replication is a pure function of
//! `(seed, r)` and summaries do not depend on the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{
    design_dependence, explainable_error_dependence, total_error_dependence, unexplainable_error_dependence,
};
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::exact::{
    check_enumerable, compute_error_moments, compute_exposure_law, compute_ground_truth, GroundTruth,
};
use crate::law::{ExposureLaw, ExposureProbabilities};
use crate::library::{analytic_law, closed_form_effect, AnalyticLaw};
use crate::numeric::{ols_slope, CompensatedSum};
use crate::scenario::{RealizedData, Scenario};
use crate::variance::{
    as_variance_estimate, confidence_interval, IntervalMethod, OverridePolicy, PairWeightTable,
};

/// Scenarios with at most this many assignments get their reference values by enumeration.
pub const SMALL_OMEGA: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSource {
    Exact,
    ClosedForm,
}

/// Exposure law behind the estimators, whichever way it was obtained.
#[derive(Clone, Debug)]
pub enum ReferenceLaw {
    Exact(ExposureLaw),
    Analytic(AnalyticLaw),
}

impl ExposureProbabilities for ReferenceLaw {
    fn units(&self) -> usize {
        match self {
            ReferenceLaw::Exact(l) => l.units(),
            ReferenceLaw::Analytic(l) => l.units(),
        }
    }

    fn labels(&self) -> usize {
        match self {
            ReferenceLaw::Exact(l) => l.labels(),
            ReferenceLaw::Analytic(l) => l.labels(),
        }
    }

    fn marginal(&self, i: usize, d: usize) -> f64 {
        match self {
            ReferenceLaw::Exact(l) => l.marginal(i, d),
            ReferenceLaw::Analytic(l) => l.marginal(i, d),
        }
    }

    fn joint(&self, i: usize, j: usize, d1: usize, d2: usize) -> Option<f64> {
        match self {
            ReferenceLaw::Exact(l) => l.joint(i, j, d1, d2),
            ReferenceLaw::Analytic(l) => l.joint(i, j, d1, d2),
        }
    }
}

/// Ground-truth effect and exposure law for a simulation.
#[derive(Clone, Debug)]
pub struct Reference {
    pub tau: f64,
    pub law: ReferenceLaw,
    pub source: TruthSource,
    /// Present when the reference was enumerated.
    pub truth: Option<GroundTruth>,
}

fn exact_reference(s: &Scenario, a: usize, b: usize, mask: &[bool]) -> Result<Reference> {
    let law = compute_exposure_law(s)?;
    let truth = compute_ground_truth(s, &law)?;
    Ok(Reference {
        tau: truth.effect(a, b, mask)?,
        law: ReferenceLaw::Exact(law),
        source: TruthSource::Exact,
        truth: Some(truth),
    })
}

/// Enumerates small scenarios and uses closed forms for large ones. Refuses when
/// neither is available rather than estimating the truth.
pub fn reference(s: &Scenario, a: usize, b: usize, mask: &[bool]) -> Result<Reference> {
    let omega = check_enumerable(s);
    if matches!(omega, Ok(len) if len <= SMALL_OMEGA) {
        return exact_reference(s, a, b, mask);
    }
    match closed_form_effect(s, a, b, mask) {
        Ok(tau) => Ok(Reference {
            tau,
            law: ReferenceLaw::Analytic(analytic_law(s)?),
            source: TruthSource::ClosedForm,
            truth: None,
        }),
        Err(e @ Error::NoClosedForm(_)) => match omega {
            Ok(_) => exact_reference(s, a, b, mask),
            Err(_) => Err(e),
        },
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub reps: usize,
    pub seed: u64,
    pub workers: usize,
    pub level: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { reps: 1000, seed: 0, workers: 1, level: 0.95 }
    }
}

/// Generator for replication `r`.
pub fn replication_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// Replication statistics for one estimator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub n: usize,
    pub reps: usize,
    pub undefined: usize,
    pub undefined_rate: f64,
    pub mean: Option<f64>,
    pub bias: Option<f64>,
    /// Divisor is the number of defined replications; undefined below two.
    pub variance: Option<f64>,
    pub rmse: Option<f64>,
    pub mean_varest: Option<f64>,
    pub cov_normal: Option<f64>,
    pub cov_chebyshev: Option<f64>,
    pub mcse_bias: Option<f64>,
    /// Standard error of the normal-interval coverage.
    pub mcse_cov: Option<f64>,
    pub mcse_cov_chebyshev: Option<f64>,
    pub mcse_variance: Option<f64>,
    pub mcse_varest: Option<f64>,
    /// Share of replications whose variance estimate was negative.
    pub negative_varest_rate: Option<f64>,
}

pub const CSV_HEADER: [&str; 13] = [
    "estimator",
    "n",
    "reps",
    "undefined_rate",
    "mean",
    "bias",
    "variance",
    "rmse",
    "mean_varest",
    "cov_normal",
    "cov_chebyshev",
    "mcse_bias",
    "mcse_cov",
];

impl EstimatorSummary {
    /// Numeric CSV cells after `estimator`, `n` and `reps`.
    pub fn csv_values(&self) -> [Option<f64>; 10] {
        [
            Some(self.undefined_rate),
            self.mean,
            self.bias,
            self.variance,
            self.rmse,
            self.mean_varest,
            self.cov_normal,
            self.cov_chebyshev,
            self.mcse_bias,
            self.mcse_cov,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McSummary {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub a: usize,
    pub b: usize,
    pub tau: f64,
    pub level: f64,
    pub estimators: Vec<EstimatorSummary>,
    pub warnings: Vec<String>,
}

struct Replication {
    estimates: Vec<Option<f64>>,
    varest: Option<f64>,
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<CompensatedSum>().value() / xs.len() as f64
}

fn proportion(hits: usize, k: usize) -> (f64, f64) {
    let c = hits as f64 / k as f64;
    (c, (c * (1.0 - c) / k as f64).sqrt())
}

fn summarize(
    name: &str,
    n: usize,
    reps: usize,
    tau: f64,
    values: &[f64],
    varest: Option<&[(f64, f64)]>,
    level: f64,
) -> EstimatorSummary {
    let k = values.len();
    let undefined = reps - k;
    let mut out = EstimatorSummary {
        estimator: name.to_string(),
        n,
        reps,
        undefined,
        undefined_rate: if reps == 0 { 0.0 } else { undefined as f64 / reps as f64 },
        mean: None,
        bias: None,
        variance: None,
        rmse: None,
        mean_varest: None,
        cov_normal: None,
        cov_chebyshev: None,
        mcse_bias: None,
        mcse_cov: None,
        mcse_cov_chebyshev: None,
        mcse_variance: None,
        mcse_varest: None,
        negative_varest_rate: None,
    };
    if k == 0 {
        return out;
    }
    let kf = k as f64;
    let mean = mean_of(values);
    out.mean = Some(mean);
    out.bias = Some(mean - tau);
    let sq: Vec<f64> = values.iter().map(|x| (x - tau) * (x - tau)).collect();
    out.rmse = Some(mean_of(&sq).sqrt());
    if k >= 2 {
        let dev2: Vec<f64> = values.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = mean_of(&dev2);
        let m4 = mean_of(&dev2.iter().map(|d| d * d).collect::<Vec<_>>());
        out.variance = Some(var);
        out.mcse_bias = Some((var / kf).sqrt());
        out.mcse_variance = Some(((m4 - var * var).max(0.0) / kf).sqrt());
    }
    if let Some(pairs) = varest {
        let vs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let mv = mean_of(&vs);
        out.mean_varest = Some(mv);
        if k >= 2 {
            let dv = mean_of(&vs.iter().map(|v| (v - mv) * (v - mv)).collect::<Vec<_>>());
            out.mcse_varest = Some((dv / kf).sqrt());
        }
        let mut normal = 0usize;
        let mut cheb = 0usize;
        let mut negative = 0usize;
        for &(point, v) in pairs {
            let ci = confidence_interval(point, v, IntervalMethod::Normal, level);
            normal += ci.contains(tau) as usize;
            negative += ci.floored as usize;
            cheb += confidence_interval(point, v, IntervalMethod::Chebyshev, level).contains(tau) as usize;
        }
        let (c, se) = proportion(normal, k);
        out.cov_normal = Some(c);
        out.mcse_cov = Some(se);
        let (c, se) = proportion(cheb, k);
        out.cov_chebyshev = Some(c);
        out.mcse_cov_chebyshev = Some(se);
        out.negative_varest_rate = Some(negative as f64 / kf);
    }
    out
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("cannot start worker pool: {e}")))
}

/// Runs `cfg.reps` replications. When `variance` is given, the HT estimate is
/// paired with V̂ for interval coverage.
#[allow(clippy::too_many_arguments)]
pub fn run_replications(
    s: &Scenario,
    probs: &dyn ExposureProbabilities,
    tau: f64,
    estimators: &[EstimatorSpec],
    a: usize,
    b: usize,
    mask: &[bool],
    variance: Option<&PairWeightTable>,
    cfg: &McConfig,
) -> Result<McSummary> {
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidParams(format!("level {} outside (0,1)", cfg.level)));
    }
    let n = s.n();
    let x = s.covariates();
    let ht = estimators.iter().position(|e| matches!(e, EstimatorSpec::Ht));
    let one = |r: usize| {
        let mut rng = replication_rng(cfg.seed, r as u64);
        let mut z = vec![0; n];
        s.design().sample(n, &mut rng, &mut z);
        let mut data = RealizedData::empty(n);
        data.fill(s, &z);
        Replication {
            estimates: estimators.iter().map(|e| e.evaluate(&data, probs, x, a, b, mask).ok()).collect(),
            varest: variance.map(|t| as_variance_estimate(&data, t)),
        }
    };
    let reps: Vec<Replication> = pool(cfg.workers)?.install(|| (0..cfg.reps).into_par_iter().map(one).collect());

    let mut warnings = Vec::new();
    if cfg.reps < 2 {
        warnings.push(format!("{} replication(s): empirical variance undefined", cfg.reps));
    }
    let summaries: Vec<EstimatorSummary> = estimators
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let values: Vec<f64> = reps.iter().filter_map(|r| r.estimates[k]).collect();
            let pairs: Option<Vec<(f64, f64)>> = (Some(k) == ht && variance.is_some()).then(|| {
                reps.iter()
                    .filter_map(|r| Some((r.estimates[k]?, r.varest?)))
                    .collect()
            });
            summarize(e.name(), n, cfg.reps, tau, &values, pairs.as_deref(), cfg.level)
        })
        .collect();
    for sm in &summaries {
        if sm.undefined > 0 {
            warnings.push(format!("{}: {} undefined replication(s) excluded", sm.estimator, sm.undefined));
        }
        if let Some(r) = sm.negative_varest_rate.filter(|&r| r > 0.0) {
            warnings.push(format!("{}: negative variance estimate in {:.4}% of replications", sm.estimator, 100.0 * r));
        }
    }
    Ok(McSummary {
        n,
        reps: cfg.reps,
        seed: cfg.seed,
        a,
        b,
        tau,
        level: cfg.level,
        estimators: summaries,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub reps: usize,
    pub rmse: f64,
    pub d_a: f64,
    pub d_b: f64,
    /// E(a) + E(b), when the scenario is small enough to enumerate.
    pub e: Option<f64>,
    /// U(a) + U(b).
    pub u: Option<f64>,
    /// T(a) + T(b).
    pub t: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of log RMSE against log n.
    pub slope: f64,
}

/// HT RMSE across a family of scenarios indexed by n.
pub fn rate_experiment<F>(family: F, ns: &[usize], a: usize, b: usize, cfg: &McConfig) -> Result<RateTable>
where
    F: Fn(usize) -> Result<Scenario>,
{
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let s = family(n)?;
        let mask = vec![true; s.n()];
        let r = reference(&s, a, b, &mask)?;
        let summary = run_replications(&s, &r.law, r.tau, &[EstimatorSpec::Ht], a, b, &mask, None, cfg)?;
        let rmse = summary.estimators[0].rmse.unwrap_or(f64::NAN);
        let (mut e, mut u, mut t) = (None, None, None);
        if let (Some(truth), ReferenceLaw::Exact(law)) = (&r.truth, &r.law) {
            let m = compute_error_moments(&s, law, truth)?;
            e = Some(explainable_error_dependence(truth, a) + explainable_error_dependence(truth, b));
            u = Some(unexplainable_error_dependence(&m, a) + unexplainable_error_dependence(&m, b));
            t = Some(total_error_dependence(&m, a) + total_error_dependence(&m, b));
        }
        rows.push(RateRow {
            n: s.n(),
            reps: cfg.reps,
            rmse,
            d_a: design_dependence(&r.law, a, 1.0)?,
            d_b: design_dependence(&r.law, b, 1.0)?,
            e,
            u,
            t,
        });
    }
    let lx: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.rmse.ln()).collect();
    let slope = if rows.len() >= 2 { ols_slope(&lx, &ly) } else { f64::NAN };
    Ok(RateTable { rows, slope })
}

/// Interval coverage of the HT estimator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageRow {
    pub n: usize,
    pub reps: usize,
    pub level: f64,
    pub tau: f64,
    pub variance: Option<f64>,
    pub mean_varest: f64,
    pub cov_normal: f64,
    pub cov_chebyshev: f64,
    pub mcse_normal: f64,
    pub mcse_chebyshev: f64,
    pub negative_varest_rate: f64,
}

pub fn coverage_experiment(
    s: &Scenario,
    reference: &Reference,
    a: usize,
    b: usize,
    mask: &[bool],
    policy: &OverridePolicy,
    cfg: &McConfig,
) -> Result<CoverageRow> {
    let table = PairWeightTable::build(&reference.law, a, b, policy, mask)?;
    let sm = run_replications(s, &reference.law, reference.tau, &[EstimatorSpec::Ht], a, b, mask, Some(&table), cfg)?;
    let e = &sm.estimators[0];
    let missing = || Error::InvalidParams("no replication produced an estimate".into());
    Ok(CoverageRow {
        n: s.n(),
        reps: cfg.reps,
        level: cfg.level,
        tau: reference.tau,
        variance: e.variance,
        mean_varest: e.mean_varest.ok_or_else(missing)?,
        cov_normal: e.cov_normal.ok_or_else(missing)?,
        cov_chebyshev: e.cov_chebyshev.ok_or_else(missing)?,
        mcse_normal: e.mcse_cov.ok_or_else(missing)?,
        mcse_chebyshev: e.mcse_cov_chebyshev.ok_or_else(missing)?,
        negative_varest_rate: e.negative_varest_rate.unwrap_or(0.0),
    })
}
