use serde::{Deserialize, Serialize};

use super::exposure::assignment_index;
use super::graph::InterferenceGraph;
use crate::error::{Error, Result};

/// Potential-outcome models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutcomeModel {
    /// y_i = beta z_i + gamma * (treated-neighbour fraction).
    LinearSpillover { beta: f64, gamma: f64 },
    /// y_i = beta z_i + (c/n) sum_j z_j.
    GlobalDecay { beta: f64, c: f64 },
    /// y_i = beta z_i + delta * 1{(1/n) sum_j z_j >= threshold}.
    EquilibriumSwitch { beta: f64, delta: f64, threshold: f64 },
    /// Explicit outcome per unit and assignment index, with an optional declared bound.
    Tabular {
        values: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k1: Option<f64>,
    },
}

impl OutcomeModel {
    pub fn kind(&self) -> &'static str {
        match self {
            OutcomeModel::LinearSpillover { .. } => "linear_spillover",
            OutcomeModel::GlobalDecay { .. } => "global_decay",
            OutcomeModel::EquilibriumSwitch { .. } => "equilibrium_switch",
            OutcomeModel::Tabular { .. } => "tabular",
        }
    }

    /// Builds a tabular model by evaluating `f(i, z)` over the whole assignment space.
    pub fn tabulate<F>(n: usize, treatments: usize, k1: Option<f64>, f: F) -> Result<Self>
    where
        F: Fn(usize, &[u32]) -> f64,
    {
        let size = crate::exact::omega_len(n, treatments)
            .filter(|&s| s <= crate::exact::enumeration_cap())
            .ok_or(Error::EnumerationInfeasible { treatments, n, cap: crate::exact::enumeration_cap() })?;
        let mut values = vec![Vec::with_capacity(size as usize); n];
        let mut z = vec![0u32; n];
        for k in 0..size {
            super::design::digits(k, treatments as u64, &mut z);
            for (i, row) in values.iter_mut().enumerate() {
                row.push(f(i, &z));
            }
        }
        Ok(OutcomeModel::Tabular { values, k1 })
    }

    pub fn check(&self, n: usize, treatments: usize, graph: Option<&InterferenceGraph>) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            OutcomeModel::LinearSpillover { beta, gamma } => {
                if graph.is_none() {
                    return Err(Error::MissingGraph(self.kind()));
                }
                if !finite(&[*beta, *gamma]) {
                    return Err(Error::InvalidParams("non-finite outcome parameter".into()));
                }
            }
            OutcomeModel::GlobalDecay { beta, c } => {
                if !finite(&[*beta, *c]) {
                    return Err(Error::InvalidParams("non-finite outcome parameter".into()));
                }
            }
            OutcomeModel::EquilibriumSwitch { beta, delta, threshold } => {
                if !finite(&[*beta, *delta, *threshold]) {
                    return Err(Error::InvalidParams("non-finite outcome parameter".into()));
                }
            }
            OutcomeModel::Tabular { values, k1 } => {
                let size = crate::exact::omega_len(n, treatments)
                    .ok_or_else(|| Error::InvalidParams("tabular outcome over an unbounded space".into()))?;
                if values.len() != n || values.iter().any(|row| row.len() as u64 != size) {
                    return Err(Error::InvalidParams(format!(
                        "tabular outcome needs {n} rows of {size} values"
                    )));
                }
                if values.iter().any(|row| !finite(row)) {
                    return Err(Error::InvalidParams("non-finite tabular outcome".into()));
                }
                if let Some(k) = k1 {
                    if !(*k >= 0.0) {
                        return Err(Error::InvalidParams("declared k1 must be non-negative".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Bound on |y_i(z)| derived from the parameters (or declared, for tables).
    pub fn k1(&self, treatments: usize) -> f64 {
        let zmax = (treatments - 1) as f64;
        match self {
            OutcomeModel::LinearSpillover { beta, gamma } => beta.abs() * zmax + gamma.abs(),
            OutcomeModel::GlobalDecay { beta, c } => (beta.abs() + c.abs()) * zmax,
            OutcomeModel::EquilibriumSwitch { beta, delta, .. } => beta.abs() * zmax + delta.abs(),
            OutcomeModel::Tabular { values, k1 } => k1.unwrap_or_else(|| {
                values.iter().flatten().fold(0.0f64, |m, y| m.max(y.abs()))
            }),
        }
    }

    pub fn evaluate(&self, z: &[u32], treatments: usize, graph: Option<&InterferenceGraph>, out: &mut [f64]) {
        let n = z.len() as f64;
        match self {
            OutcomeModel::LinearSpillover { beta, gamma } => {
                let g = graph.expect("graph checked at construction");
                for (i, y) in out.iter_mut().enumerate() {
                    let nb = g.neighbors(i);
                    let frac = if nb.is_empty() {
                        0.0
                    } else {
                        nb.iter().filter(|&&j| z[j] != 0).count() as f64 / nb.len() as f64
                    };
                    *y = beta * z[i] as f64 + gamma * frac;
                }
            }
            OutcomeModel::GlobalDecay { beta, c } => {
                let total: f64 = z.iter().map(|&t| t as f64).sum();
                for (i, y) in out.iter_mut().enumerate() {
                    *y = beta * z[i] as f64 + c / n * total;
                }
            }
            OutcomeModel::EquilibriumSwitch { beta, delta, threshold } => {
                let total: f64 = z.iter().map(|&t| t as f64).sum();
                let switched = if total / n >= *threshold { *delta } else { 0.0 };
                for (i, y) in out.iter_mut().enumerate() {
                    *y = beta * z[i] as f64 + switched;
                }
            }
            OutcomeModel::Tabular { values, .. } => {
                let k = assignment_index(z, treatments) as usize;
                for (y, row) in out.iter_mut().zip(values) {
                    *y = row[k];
                }
            }
        }
    }
}
