use serde::{Deserialize, Serialize};

use super::graph::InterferenceGraph;
use crate::error::{Error, Result};

/// Exposure mapping kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExposureMap {
    /// d_i = z_i.
    OwnTreatment,
    /// Bucket of the treated-neighbour fraction; isolated units get their own label.
    NeighborFraction { cuts: Vec<f64> },
    /// Pair (z_i, neighbour bucket) encoded as `z_i * (cuts + 2) + bucket`.
    OwnAndNeighborFraction { cuts: Vec<f64> },
    /// 1 when at least `threshold` members of the closed neighbourhood are treated.
    GroupCount { threshold: usize },
    /// Bucket of the sample-wide treated share.
    GlobalFraction { cuts: Vec<f64> },
    /// Explicit label per unit and assignment index.
    Tabular { alphabet: usize, labels: Vec<Vec<usize>> },
}

/// Bucket of `f`: the number of cuts at or below it.
pub fn bucket(f: f64, cuts: &[f64]) -> usize {
    cuts.iter().filter(|&&c| c <= f).count()
}

impl ExposureMap {
    pub fn kind(&self) -> &'static str {
        match self {
            ExposureMap::OwnTreatment => "own_treatment",
            ExposureMap::NeighborFraction { .. } => "neighbor_fraction",
            ExposureMap::OwnAndNeighborFraction { .. } => "own_and_neighbor_fraction",
            ExposureMap::GroupCount { .. } => "group_count",
            ExposureMap::GlobalFraction { .. } => "global_fraction",
            ExposureMap::Tabular { .. } => "tabular",
        }
    }

    pub fn needs_graph(&self) -> bool {
        matches!(
            self,
            ExposureMap::NeighborFraction { .. }
                | ExposureMap::OwnAndNeighborFraction { .. }
                | ExposureMap::GroupCount { .. }
        )
    }

    /// Size of the exposure alphabet.
    pub fn alphabet(&self, treatments: usize) -> usize {
        match self {
            ExposureMap::OwnTreatment => treatments,
            ExposureMap::NeighborFraction { cuts } => cuts.len() + 2,
            ExposureMap::OwnAndNeighborFraction { cuts } => treatments * (cuts.len() + 2),
            ExposureMap::GroupCount { .. } => 2,
            ExposureMap::GlobalFraction { cuts } => cuts.len() + 1,
            ExposureMap::Tabular { alphabet, .. } => *alphabet,
        }
    }

    /// Label reserved for units without neighbours.
    pub fn isolated_label(&self) -> Option<usize> {
        match self {
            ExposureMap::NeighborFraction { cuts } | ExposureMap::OwnAndNeighborFraction { cuts } => {
                Some(cuts.len() + 1)
            }
            _ => None,
        }
    }

    pub fn check(&self, n: usize, treatments: usize, graph: Option<&InterferenceGraph>) -> Result<()> {
        if self.needs_graph() && graph.is_none() {
            return Err(Error::MissingGraph(self.kind()));
        }
        match self {
            ExposureMap::NeighborFraction { cuts }
            | ExposureMap::OwnAndNeighborFraction { cuts }
            | ExposureMap::GlobalFraction { cuts } => {
                if !cuts.windows(2).all(|w| w[0] < w[1]) || cuts.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidParams("cuts must be finite and strictly ascending".into()));
                }
            }
            ExposureMap::Tabular { alphabet, labels } => {
                let size = crate::exact::omega_len(n, treatments)
                    .ok_or_else(|| Error::InvalidParams("tabular exposure over an unbounded space".into()))?;
                if labels.len() != n || labels.iter().any(|row| row.len() as u64 != size) {
                    return Err(Error::InvalidParams(format!(
                        "tabular exposure needs {n} rows of {size} labels"
                    )));
                }
                if labels.iter().flatten().any(|&d| d >= *alphabet) {
                    return Err(Error::InvalidParams("tabular label outside the alphabet".into()));
                }
            }
            ExposureMap::OwnTreatment | ExposureMap::GroupCount { .. } => {}
        }
        Ok(())
    }

    /// Writes every unit's exposure under `z` into `out`.
    pub fn evaluate(&self, z: &[u32], treatments: usize, graph: Option<&InterferenceGraph>, out: &mut [usize]) {
        match self {
            ExposureMap::OwnTreatment => {
                for (d, &t) in out.iter_mut().zip(z) {
                    *d = t as usize;
                }
            }
            ExposureMap::NeighborFraction { cuts } => {
                let g = graph.expect("graph checked at construction");
                for (i, d) in out.iter_mut().enumerate() {
                    *d = neighbor_bucket(g, z, i, cuts);
                }
            }
            ExposureMap::OwnAndNeighborFraction { cuts } => {
                let g = graph.expect("graph checked at construction");
                let width = cuts.len() + 2;
                for (i, d) in out.iter_mut().enumerate() {
                    *d = z[i] as usize * width + neighbor_bucket(g, z, i, cuts);
                }
            }
            ExposureMap::GroupCount { threshold } => {
                let g = graph.expect("graph checked at construction");
                for (i, d) in out.iter_mut().enumerate() {
                    let own = usize::from(z[i] != 0);
                    let count = own + g.neighbors(i).iter().filter(|&&j| z[j] != 0).count();
                    *d = usize::from(count >= *threshold);
                }
            }
            ExposureMap::GlobalFraction { cuts } => {
                let treated = z.iter().filter(|&&t| t != 0).count();
                let label = bucket(treated as f64 / z.len() as f64, cuts);
                out.fill(label);
            }
            ExposureMap::Tabular { labels, .. } => {
                let k = assignment_index(z, treatments) as usize;
                for (d, row) in out.iter_mut().zip(labels) {
                    *d = row[k];
                }
            }
        }
    }
}

fn neighbor_bucket(g: &InterferenceGraph, z: &[u32], i: usize, cuts: &[f64]) -> usize {
    let nb = g.neighbors(i);
    if nb.is_empty() {
        return cuts.len() + 1;
    }
    let treated = nb.iter().filter(|&&j| z[j] != 0).count();
    bucket(treated as f64 / nb.len() as f64, cuts)
}

/// Lexicographic position of `z` in the assignment space, unit 0 most significant.
pub fn assignment_index(z: &[u32], treatments: usize) -> u64 {
    z.iter().fold(0u64, |acc, &t| acc * treatments as u64 + t as u64)
}
