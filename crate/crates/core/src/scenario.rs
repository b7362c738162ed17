//! Experiment description: units, treatment alphabet, design, exposure mapping and outcomes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{fold_space, omega_len, Space};
use crate::library::{Design, ExposureMap, GraphSpec, InterferenceGraph, OutcomeModel};

pub type Treatment = u32;
pub type TreatmentAssignment = Vec<Treatment>;
pub type ExposureLabel = usize;

fn binary() -> usize {
    2
}

/// Serializable scenario description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n: usize,
    #[serde(default = "binary")]
    pub treatments: usize,
    pub design: Design,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    pub exposure: ExposureMap,
    pub outcome: OutcomeModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<usize>>,
}

impl ScenarioSpec {
    pub fn new(n: usize, design: Design, exposure: ExposureMap, outcome: OutcomeModel) -> Self {
        Self {
            n,
            treatments: 2,
            design,
            graph: None,
            exposure,
            outcome,
            covariates: None,
            groups: None,
        }
    }

    pub fn treatments(mut self, treatments: usize) -> Self {
        self.treatments = treatments;
        self
    }

    pub fn graph(mut self, graph: GraphSpec) -> Self {
        self.graph = Some(graph);
        self
    }

    pub fn covariates(mut self, x: Vec<Vec<f64>>) -> Self {
        self.covariates = Some(x);
        self
    }

    pub fn groups(mut self, groups: Vec<usize>) -> Self {
        self.groups = Some(groups);
        self
    }

    pub fn build(self) -> Result<Scenario> {
        Scenario::new(self)
    }
}

/// A validated, immutable scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    spec: ScenarioSpec,
    graph: Option<InterferenceGraph>,
    labels: usize,
}

impl Scenario {
    /// Checks dimensions and parameters. Pmf normalization and the outcome bound are
    /// reported by [`validate_scenario`] instead.
    pub fn new(spec: ScenarioSpec) -> Result<Self> {
        let n = spec.n;
        if n == 0 {
            return Err(Error::InvalidParams("scenario needs at least one unit".into()));
        }
        if spec.treatments < 2 {
            return Err(Error::InvalidParams("treatment alphabet needs at least two labels".into()));
        }
        let graph = spec
            .graph
            .as_ref()
            .map(|g| InterferenceGraph::build(g, n))
            .transpose()?;
        spec.design.check(n, spec.treatments)?;
        spec.exposure.check(n, spec.treatments, graph.as_ref())?;
        spec.outcome.check(n, spec.treatments, graph.as_ref())?;
        if let Some(x) = &spec.covariates {
            if x.len() != n {
                return Err(Error::InvalidParams(format!("{} covariate rows for {n} units", x.len())));
            }
            let p = x[0].len();
            if x.iter().any(|row| row.len() != p) {
                return Err(Error::InvalidParams("covariate rows differ in width".into()));
            }
        }
        if let Some(g) = &spec.groups {
            if g.len() != n {
                return Err(Error::InvalidParams(format!("{} group labels for {n} units", g.len())));
            }
        }
        let labels = spec.exposure.alphabet(spec.treatments);
        Ok(Self { spec, graph, labels })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn treatments(&self) -> usize {
        self.spec.treatments
    }

    /// Size of the exposure alphabet.
    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn design(&self) -> &Design {
        &self.spec.design
    }

    pub fn exposure(&self) -> &ExposureMap {
        &self.spec.exposure
    }

    pub fn outcome(&self) -> &OutcomeModel {
        &self.spec.outcome
    }

    pub fn graph(&self) -> Option<&InterferenceGraph> {
        self.graph.as_ref()
    }

    pub fn covariates(&self) -> Option<&[Vec<f64>]> {
        self.spec.covariates.as_deref()
    }

    /// Group label per unit: the explicit partition, else one derived from a block graph.
    pub fn groups(&self) -> Option<Vec<usize>> {
        self.spec
            .groups
            .clone()
            .or_else(|| self.graph.as_ref().and_then(InterferenceGraph::group_labels))
    }

    pub fn k1(&self) -> f64 {
        self.spec.outcome.k1(self.spec.treatments)
    }

    pub fn exposures_into(&self, z: &[u32], out: &mut [usize]) {
        self.spec.exposure.evaluate(z, self.spec.treatments, self.graph.as_ref(), out);
    }

    pub fn outcomes_into(&self, z: &[u32], out: &mut [f64]) {
        self.spec.outcome.evaluate(z, self.spec.treatments, self.graph.as_ref(), out);
    }

    /// Exposures and outcomes realized under `z`.
    pub fn realize(&self, z: &[u32]) -> RealizedData {
        let mut data = RealizedData::empty(self.n());
        data.fill(self, z);
        data
    }
}

/// One assignment with its realized exposures and outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizedData {
    pub z: TreatmentAssignment,
    pub exposures: Vec<ExposureLabel>,
    pub y: Vec<f64>,
}

impl RealizedData {
    pub fn empty(n: usize) -> Self {
        Self {
            z: vec![0; n],
            exposures: vec![0; n],
            y: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Recomputes exposures and outcomes from the assignment already stored in `z`.
    pub(crate) fn refresh(&mut self, s: &Scenario) {
        s.exposures_into(&self.z, &mut self.exposures);
        s.outcomes_into(&self.z, &mut self.y);
    }

    pub fn fill(&mut self, s: &Scenario, z: &[u32]) {
        self.z.copy_from_slice(z);
        self.refresh(s);
    }
}

/// Violated invariants found by [`validate_scenario`].
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    /// Whether the checks covered the full assignment space or only sampled draws.
    pub exhaustive: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

const VALIDATION_DRAWS: usize = 10_000;

/// Checks pmf normalization, exposure totality and the outcome bound.
///
/// Exposure and outcome checks run over the whole assignment space when it is
/// enumerable and over seeded sampler draws otherwise.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mass = s.design().total_mass();
    if (mass - 1.0).abs() > 1e-12 {
        report
            .violations
            .push(format!("design probabilities sum to {mass}, not 1"));
    }
    let k1 = s.k1();
    let labels = s.labels();
    let tol = 1e-12 * k1.max(1.0);
    let inspect = |data: &RealizedData, found: &mut Vec<String>| {
        for i in 0..data.n() {
            if data.exposures[i] >= labels {
                found.push(format!("unit {i} exposure {} outside alphabet of {labels}", data.exposures[i]));
            }
            if data.y[i].abs() > k1 + tol || !data.y[i].is_finite() {
                found.push(format!("unit {i} outcome {} exceeds k1={k1}", data.y[i]));
            }
        }
    };
    let exhaustive = fold_space(s, Space::Omega, Vec::new, |found: &mut Vec<String>, data, _| {
        if found.len() < 16 {
            inspect(data, found);
        }
    }, |a, b| a.extend(b));
    match exhaustive {
        Ok(found) => {
            report.exhaustive = true;
            report.violations.extend(found.into_iter().take(16));
        }
        Err(_) => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            let mut data = RealizedData::empty(s.n());
            let mut found = Vec::new();
            for _ in 0..VALIDATION_DRAWS {
                s.design().sample(s.n(), &mut rng, &mut data.z);
                data.refresh(s);
                inspect(&data, &mut found);
                if found.len() >= 16 {
                    break;
                }
            }
            report.violations.extend(found);
        }
    }
    report
}

/// First outcome seen per `(unit, label)` class over Ω, plus per-unit flags telling
/// whether every class was constant.
pub(crate) fn exposure_classes(s: &Scenario) -> Result<(Vec<Option<f64>>, Vec<bool>)> {
    let (n, labels) = (s.n(), s.labels());
    let init = || (vec![None::<f64>; n * labels], vec![true; n]);
    fold_space(
        s,
        Space::Omega,
        init,
        |(seen, ok), data, _| {
            for i in 0..n {
                let slot = &mut seen[i * labels + data.exposures[i]];
                match slot {
                    None => *slot = Some(data.y[i]),
                    Some(v) => {
                        if !same_value(*v, data.y[i]) {
                            ok[i] = false;
                        }
                    }
                }
            }
        },
        |(seen, ok), (other_seen, other_ok)| {
            for (k, v) in other_seen.into_iter().enumerate() {
                if let Some(v) = v {
                    match seen[k] {
                        None => seen[k] = Some(v),
                        Some(w) => {
                            if !same_value(v, w) {
                                ok[k / labels] = false;
                            }
                        }
                    }
                }
            }
            for (a, b) in ok.iter_mut().zip(other_ok) {
                *a &= b;
            }
        },
    )
}

/// Per-unit constant-treatment-response verdicts over the whole assignment space.
pub fn correct_specification(s: &Scenario) -> Result<Vec<bool>> {
    Ok(exposure_classes(s)?.1)
}

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Whether `y_i` is constant on every exposure class of unit `unit` over all of Ω.
pub fn is_correctly_specified(s: &Scenario, unit: usize) -> Result<bool> {
    Ok(correct_specification(s)?[unit])
}

/// Number of points in Ω, when it fits in 64 bits.
pub fn assignment_space_len(s: &Scenario) -> Option<u64> {
    omega_len(s.n(), s.treatments())
}
