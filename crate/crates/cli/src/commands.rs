use exposure_lab::diagnostics::{variance_bound, DependenceReport};
use exposure_lab::estimators::ht_estimate_flagged;
use exposure_lab::exact::{estimator_moments, variance_estimator_expectation};
use exposure_lab::library::{make_predictor, Predictor, PredictorSpec};
use exposure_lab::montecarlo::{
    coverage_experiment, rate_experiment, reference, run_replications, McConfig, McSummary, TruthSource, CSV_HEADER,
};
use exposure_lab::scenario::{correct_specification, ValidationReport};
use exposure_lab::variance::{
    as_variance_estimate, bias_decomposition, confidence_interval, BiasDecomposition, ConfidenceInterval,
    IntervalMethod,
};
use exposure_lab::{
    compute_error_moments, compute_exposure_law, compute_ground_truth, validate_scenario, Error, EstimatorSpec,
    GroundTruth, PairWeightTable, Scenario,
};
use serde::Serialize;

use crate::config::{EstimatorConfig, RunConfig};
use crate::data;
use crate::error::CliError;
use crate::output::{cell, float, to_csv, to_json, Format};
use crate::Args;

type Out = Result<String, CliError>;

fn no_csv(cmd: &str) -> Out {
    Err(CliError::Config(format!("{cmd} has no csv output")))
}

fn validation_warnings(report: &ValidationReport, warnings: &mut Vec<String>) {
    for v in &report.violations {
        warnings.push(format!("scenario: {v}"));
    }
}

fn resolve_estimators(
    cfg: &RunConfig,
    s: Option<&Scenario>,
    covariates: Option<&[Vec<f64>]>,
    truth: Option<&GroundTruth>,
    default: &[EstimatorSpec],
) -> Result<Vec<EstimatorSpec>, CliError> {
    let Some(list) = &cfg.estimators else {
        return Ok(default.to_vec());
    };
    list.iter()
        .map(|e| {
            Ok(match e {
                EstimatorConfig::Ht => EstimatorSpec::Ht,
                EstimatorConfig::Hajek => EstimatorSpec::Hajek,
                EstimatorConfig::Greg { ridge } => EstimatorSpec::Greg { ridge: *ridge },
                EstimatorConfig::Difference { predictor } => EstimatorSpec::Difference(match s {
                    Some(s) => make_predictor(predictor, s, truth)?,
                    None => observed_predictor(predictor, covariates)?,
                }),
            })
        })
        .collect()
}

/// Predictor for a dataset read from disk, where no scenario is known.
fn observed_predictor(spec: &PredictorSpec, covariates: Option<&[Vec<f64>]>) -> Result<Predictor, CliError> {
    Ok(match spec {
        PredictorSpec::Zero => Predictor::Zero,
        PredictorSpec::Constant { c } => Predictor::Constant(*c),
        PredictorSpec::Linear { beta } => {
            let x = covariates.ok_or(Error::MissingCovariates)?;
            if beta.iter().any(|b| b.len() != x[0].len()) {
                return Err(CliError::Config(format!("linear predictor needs coefficient vectors of width {}", x[0].len())));
            }
            Predictor::Linear(beta.clone())
        }
        PredictorSpec::Oracle => return Err(CliError::Config("oracle predictor needs a scenario".into())),
    })
}

pub fn describe(cfg: &RunConfig, format: Format) -> Out {
    let s = cfg.build()?;
    for v in validate_scenario(&s).violations {
        eprintln!("warning: scenario: {v}");
    }
    match format {
        Format::Json => to_json(s.spec()),
        Format::Csv => no_csv("describe"),
    }
}

#[derive(Serialize)]
struct TruthReport {
    n: usize,
    labels: usize,
    a: usize,
    b: usize,
    tau: Option<f64>,
    k1: f64,
    ybar: Vec<Vec<Option<f64>>>,
    correctly_specified: Vec<bool>,
    validation: ValidationReport,
    warnings: Vec<String>,
}

pub fn truth(cfg: &RunConfig, format: Format) -> Out {
    let s = cfg.build()?;
    let mask = cfg.mask(s.n())?;
    let law = compute_exposure_law(&s)?;
    let truth = compute_ground_truth(&s, &law)?;
    let validation = validate_scenario(&s);
    let mut warnings = Vec::new();
    validation_warnings(&validation, &mut warnings);
    let tau = match truth.effect(cfg.a, cfg.b, &mask) {
        Ok(t) => Some(t),
        Err(e) => {
            warnings.push(format!("tau undefined: {e}"));
            None
        }
    };
    let ybar: Vec<Vec<Option<f64>>> =
        (0..s.n()).map(|i| (0..s.labels()).map(|d| truth.ybar(i, d)).collect()).collect();
    let correct = correct_specification(&s)?;
    match format {
        Format::Json => to_json(&TruthReport {
            n: s.n(),
            labels: s.labels(),
            a: cfg.a,
            b: cfg.b,
            tau,
            k1: truth.k1(),
            ybar,
            correctly_specified: correct,
            validation,
            warnings,
        }),
        Format::Csv => {
            let rows: Vec<Vec<String>> = (0..s.n())
                .flat_map(|i| {
                    let (ybar, correct) = (&ybar, &correct);
                    (0..s.labels()).map(move |d| vec![i.to_string(), d.to_string(), cell(ybar[i][d]), correct[i].to_string()])
                })
                .collect();
            to_csv(&["unit", "label", "ybar", "correctly_specified"], &rows)
        }
    }
}

#[derive(Serialize)]
struct DiagnoseReport {
    a: usize,
    b: usize,
    k1: f64,
    k2: Option<f64>,
    variance_bound: Option<f64>,
    report: DependenceReport,
    warnings: Vec<String>,
}

pub fn diagnose(cfg: &RunConfig, format: Format) -> Out {
    if !(cfg.q >= 1.0 && cfg.p >= 1.0) {
        return Err(CliError::Config(format!("exponents need q >= 1 and p >= 1, got q={} p={}", cfg.q, cfg.p)));
    }
    let s = cfg.build()?;
    let law = compute_exposure_law(&s)?;
    let truth = compute_ground_truth(&s, &law)?;
    let moments = compute_error_moments(&s, &law, &truth)?;
    let report = DependenceReport::compute(&law, &truth, &moments, cfg.q, cfg.p)?;
    let mut warnings = Vec::new();
    validation_warnings(&validate_scenario(&s), &mut warnings);
    let k1 = s.k1();
    let (k2, bound) = match report.k2(cfg.a, cfg.b) {
        Ok(k2) => (Some(k2), Some(variance_bound(&report, k1, k2, cfg.a, cfg.b)?)),
        Err(e) => {
            warnings.push(format!("no variance bound: {e}"));
            (None, None)
        }
    };
    match format {
        Format::Json => to_json(&DiagnoseReport { a: cfg.a, b: cfg.b, k1, k2, variance_bound: bound, report, warnings }),
        Format::Csv => {
            let mut header: Vec<String> = ["n", "q", "p", "a", "b", "k1", "k2", "variance_bound"].map(String::from).to_vec();
            let mut row = vec![
                report.n.to_string(),
                float(report.q),
                float(report.p),
                cfg.a.to_string(),
                cfg.b.to_string(),
                float(k1),
                cell(k2),
                cell(bound),
            ];
            let columns: [(&str, &Vec<f64>); 7] = [
                ("design", &report.design),
                ("design_q", &report.design_q),
                ("explainable", &report.explainable),
                ("unexplainable", &report.unexplainable),
                ("total", &report.total),
                ("zero_share", &report.zero_share),
                ("positivity", &report.positivity),
            ];
            for d in 0..s.labels() {
                for (name, values) in &columns {
                    header.push(format!("{name}_{d}"));
                    row.push(float(values[d]));
                }
            }
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            to_csv(&header, &[row])
        }
    }
}

#[derive(Serialize)]
struct Estimate {
    estimator: &'static str,
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct Intervals {
    normal: ConfidenceInterval,
    chebyshev: ConfidenceInterval,
}

#[derive(Serialize)]
struct EstimateReport {
    n: usize,
    a: usize,
    b: usize,
    level: f64,
    estimates: Vec<Estimate>,
    variance_estimate: Option<f64>,
    intervals: Option<Intervals>,
    warnings: Vec<String>,
}

pub fn estimate(cfg: &RunConfig, args: &Args, format: Format) -> Out {
    let need = |p: &Option<std::path::PathBuf>, flag: &str| {
        p.clone().ok_or_else(|| CliError::Config(format!("estimate needs {flag}")))
    };
    let ds = data::read_dataset(&need(&args.data, "--data")?)?;
    let marginals = data::read_marginals(&need(&args.probs, "--probs")?)?;
    let joint = args.joint.as_deref().map(data::read_joint).transpose()?;
    let n = ds.data.n();
    let labels = marginals
        .iter()
        .map(|r| r.1)
        .chain(ds.data.exposures.iter().copied())
        .chain([cfg.a, cfg.b])
        .max()
        .unwrap_or(0)
        + 1;
    let probs = data::probability_table(n, labels, &marginals, joint.as_deref())?;
    let mask = cfg.mask(n)?;
    let covariates = ds.covariates.as_deref();
    let scenario = cfg.scenario.as_ref().map(|_| cfg.build()).transpose()?;
    let specs = resolve_estimators(
        cfg,
        None,
        covariates,
        None,
        &[EstimatorSpec::Ht, EstimatorSpec::Hajek, EstimatorSpec::Greg { ridge: 0.0 }],
    )?;
    let mut warnings = Vec::new();
    let estimates: Vec<Estimate> = specs
        .iter()
        .map(|e| match e.evaluate(&ds.data, &probs, covariates, cfg.a, cfg.b, &mask) {
            Ok(v) => Estimate { estimator: e.name(), value: Some(v), error: None },
            Err(err) => Estimate { estimator: e.name(), value: None, error: Some(err.to_string()) },
        })
        .collect();
    let (ht, flagged) = ht_estimate_flagged(&ds.data, &probs, cfg.a, cfg.b, &mask);
    if flagged {
        warnings.push("a unit realized a contrast exposure with zero probability".into());
    }
    let policy = cfg.policy(scenario.as_ref())?;
    let (varest, intervals) = match PairWeightTable::build(&probs, cfg.a, cfg.b, &policy, &mask) {
        Ok(table) => {
            let v = as_variance_estimate(&ds.data, &table);
            if v < 0.0 {
                warnings.push(format!("negative variance estimate {}; intervals use zero", float(v)));
            }
            let ci = |m| confidence_interval(ht, v, m, cfg.level);
            (Some(v), Some(Intervals { normal: ci(IntervalMethod::Normal), chebyshev: ci(IntervalMethod::Chebyshev) }))
        }
        Err(e @ Error::MissingJointProbability { .. }) => {
            warnings.push(format!("no variance estimate: {e}; pass --joint or use --override all"));
            (None, None)
        }
        Err(e) => return Err(e.into()),
    };
    let report = EstimateReport {
        n,
        a: cfg.a,
        b: cfg.b,
        level: cfg.level,
        estimates,
        variance_estimate: varest,
        intervals,
        warnings,
    };
    match format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let rows: Vec<Vec<String>> =
                report.estimates.iter().map(|e| vec![e.estimator.to_string(), cell(e.value)]).collect();
            to_csv(&["estimator", "value"], &rows)
        }
    }
}

#[derive(Serialize)]
struct SimulateReport {
    truth_source: TruthSource,
    #[serde(flatten)]
    summary: McSummary,
}

fn mc_config(cfg: &RunConfig) -> Result<McConfig, CliError> {
    Ok(McConfig { reps: cfg.reps, seed: cfg.require_seed()?, workers: cfg.workers, level: cfg.level })
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

pub fn simulate(cfg: &RunConfig, format: Format) -> Out {
    let mc = mc_config(cfg)?;
    let s = cfg.build()?;
    let mask = cfg.mask(s.n())?;
    let r = reference(&s, cfg.a, cfg.b, &mask)?;
    let specs = resolve_estimators(cfg, Some(&s), s.covariates(), r.truth.as_ref(), &[EstimatorSpec::Ht, EstimatorSpec::Hajek])?;
    let policy = cfg.policy(Some(&s))?;
    let mut extra = Vec::new();
    let table = match PairWeightTable::build(&r.law, cfg.a, cfg.b, &policy, &mask) {
        Ok(t) => Some(t),
        Err(e @ Error::MissingJointProbability { .. }) => {
            extra.push(format!("no variance estimates: {e}"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let mut summary = run_replications(&s, &r.law, r.tau, &specs, cfg.a, cfg.b, &mask, table.as_ref(), &mc)?;
    summary.warnings.extend(extra);
    match format {
        Format::Json => to_json(&SimulateReport { truth_source: r.source, summary }),
        Format::Csv => {
            print_warnings(&summary.warnings);
            let rows: Vec<Vec<String>> = summary
                .estimators
                .iter()
                .map(|e| {
                    let mut row = vec![e.estimator.clone(), e.n.to_string(), e.reps.to_string()];
                    row.extend(e.csv_values().into_iter().map(cell));
                    row
                })
                .collect();
            to_csv(&CSV_HEADER, &rows)
        }
    }
}

pub fn rates(cfg: &RunConfig, format: Format) -> Out {
    let mc = mc_config(cfg)?;
    let ns = cfg.ns.clone().ok_or_else(|| CliError::Config("rates needs --ns or \"ns\" in the config".into()))?;
    if ns.len() < 2 {
        return Err(CliError::Config("rates needs at least two sizes".into()));
    }
    let template = cfg.spec()?.clone();
    let family = |n: usize| {
        let mut spec = template.clone();
        spec.n = n;
        spec.build()
    };
    let table = rate_experiment(family, &ns, cfg.a, cfg.b, &mc)?;
    match format {
        Format::Json => to_json(&table),
        Format::Csv => {
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.reps.to_string(),
                        float(r.rmse),
                        float(r.d_a),
                        float(r.d_b),
                        cell(r.e),
                        cell(r.u),
                        cell(r.t),
                        float(table.slope),
                    ]
                })
                .collect();
            to_csv(&["n", "reps", "rmse", "d_a", "d_b", "e", "u", "t", "slope"], &rows)
        }
    }
}

#[derive(Serialize)]
struct CoverageReport {
    truth_source: TruthSource,
    #[serde(flatten)]
    row: exposure_lab::montecarlo::CoverageRow,
    warnings: Vec<String>,
}

pub fn coverage(cfg: &RunConfig, format: Format) -> Out {
    let mc = mc_config(cfg)?;
    let s = cfg.build()?;
    let mask = cfg.mask(s.n())?;
    let r = reference(&s, cfg.a, cfg.b, &mask)?;
    let row = coverage_experiment(&s, &r, cfg.a, cfg.b, &mask, &cfg.policy(Some(&s))?, &mc)?;
    let mut warnings = Vec::new();
    if row.negative_varest_rate > 0.0 {
        warnings.push(format!("variance estimate negative in {} of replications", float(row.negative_varest_rate)));
    }
    match format {
        Format::Json => to_json(&CoverageReport { truth_source: r.source, row, warnings }),
        Format::Csv => {
            print_warnings(&warnings);
            let values = vec![
                row.n.to_string(),
                row.reps.to_string(),
                float(row.level),
                float(row.tau),
                cell(row.variance),
                float(row.mean_varest),
                float(row.cov_normal),
                float(row.cov_chebyshev),
                float(row.mcse_normal),
                float(row.mcse_chebyshev),
                float(row.negative_varest_rate),
            ];
            let header = [
                "n",
                "reps",
                "level",
                "tau",
                "variance",
                "mean_varest",
                "cov_normal",
                "cov_chebyshev",
                "mcse_normal",
                "mcse_chebyshev",
                "negative_varest_rate",
            ];
            to_csv(&header, &[values])
        }
    }
}

#[derive(Serialize)]
struct VarbiasReport {
    a: usize,
    b: usize,
    #[serde(rename = "override")]
    policy: String,
    variance: f64,
    expected_varest: f64,
    decomposition: BiasDecomposition,
    /// (E[V̂] − Var) − total.
    residual: f64,
    correctly_specified: bool,
    warnings: Vec<String>,
}

pub fn varbias(cfg: &RunConfig, format: Format) -> Out {
    let s = cfg.build()?;
    let mask = cfg.mask(s.n())?;
    let policy = cfg.policy(Some(&s))?;
    let law = compute_exposure_law(&s)?;
    let truth = compute_ground_truth(&s, &law)?;
    let moments = compute_error_moments(&s, &law, &truth)?;
    let variance = estimator_moments(&s, &law, &EstimatorSpec::Ht, cfg.a, cfg.b, &mask)?.variance;
    let expected = variance_estimator_expectation(&s, &law, cfg.a, cfg.b, &policy, &mask)?;
    let bd = bias_decomposition(&law, &truth, &moments, cfg.a, cfg.b, &policy, &mask)?;
    let mut warnings = Vec::new();
    validation_warnings(&validate_scenario(&s), &mut warnings);
    if bd.total < 0.0 {
        warnings.push("variance estimator is anti-conservative for this scenario".into());
    }
    let report = VarbiasReport {
        a: cfg.a,
        b: cfg.b,
        policy: format!("{:?}", cfg.override_arg).to_lowercase(),
        variance,
        expected_varest: expected,
        residual: expected - variance - bd.total,
        decomposition: bd,
        correctly_specified: correct_specification(&s)?.iter().all(|&c| c),
        warnings,
    };
    match format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let d = &report.decomposition;
            let terms = [
                ("b1", d.b1),
                ("b2_ab", d.b2_ab),
                ("b2_ba", d.b2_ba),
                ("b3_ab", d.b3_ab),
                ("b3_ba", d.b3_ba),
                ("b4_ab", d.b4_ab),
                ("b4_aa", d.b4_aa),
                ("b4_bb", d.b4_bb),
                ("total", d.total),
                ("variance", report.variance),
                ("expected_varest", report.expected_varest),
                ("residual", report.residual),
            ];
            let rows: Vec<Vec<String>> = terms.iter().map(|(k, v)| vec![k.to_string(), float(*v)]).collect();
            to_csv(&["term", "value"], &rows)
        }
    }
}
