use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator tag and parameters of an interference graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    /// Each unit is linked to the `k` nearest units on either side of a cycle.
    Ring { k: usize },
    /// Four-neighbour lattice, not wrapped.
    Grid { width: usize, height: usize },
    /// Complete graphs on consecutive blocks of the given sizes.
    Groups { sizes: Vec<usize> },
    ErdosRenyi { p: f64, seed: u64 },
}

/// Undirected graph without self-loops; neighbour lists are sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct InterferenceGraph {
    spec: GraphSpec,
    neighbors: Vec<Vec<usize>>,
}

impl InterferenceGraph {
    pub fn build(spec: &GraphSpec, n: usize) -> Result<Self> {
        let neighbors = match spec {
            GraphSpec::Ring { k } => ring(n, *k),
            GraphSpec::Grid { width, height } => {
                if width * height != n {
                    return Err(Error::InvalidParams(format!(
                        "grid {width}x{height} does not have {n} units"
                    )));
                }
                grid(*width, *height)
            }
            GraphSpec::Groups { sizes } => {
                check_partition(sizes, n)?;
                groups(sizes)
            }
            GraphSpec::ErdosRenyi { p, seed } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidParams(format!("edge probability {p} outside [0,1]")));
                }
                erdos_renyi(n, *p, *seed)
            }
        };
        Ok(Self {
            spec: spec.clone(),
            neighbors,
        })
    }

    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Group index per unit when the graph was generated from a block partition.
    pub fn group_labels(&self) -> Option<Vec<usize>> {
        match &self.spec {
            GraphSpec::Groups { sizes } => Some(block_labels(sizes)),
            _ => None,
        }
    }
}

pub(crate) fn check_partition(sizes: &[usize], n: usize) -> Result<()> {
    if sizes.contains(&0) {
        return Err(Error::InvalidParams("group sizes must be positive".into()));
    }
    let total: usize = sizes.iter().sum();
    if total != n {
        return Err(Error::InvalidParams(format!(
            "group sizes sum to {total}, expected {n}"
        )));
    }
    Ok(())
}

pub(crate) fn block_labels(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &s)| std::iter::repeat_n(g, s))
        .collect()
}

fn ring(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| {
            let mut nb: Vec<usize> = (1..=k)
                .flat_map(|s| [(i + s) % n, (i + n - s % n) % n])
                .filter(|&j| j != i)
                .collect();
            nb.sort_unstable();
            nb.dedup();
            nb
        })
        .collect()
}

fn grid(width: usize, height: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let mut nb = Vec::with_capacity(4);
            if r > 0 {
                nb.push((r - 1) * width + c);
            }
            if c > 0 {
                nb.push(r * width + c - 1);
            }
            if c + 1 < width {
                nb.push(r * width + c + 1);
            }
            if r + 1 < height {
                nb.push((r + 1) * width + c);
            }
            out.push(nb);
        }
    }
    out
}

fn groups(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for &s in sizes {
        for i in start..start + s {
            out.push((start..start + s).filter(|&j| j != i).collect());
        }
        start += s;
    }
    out
}

fn erdos_renyi(n: usize, p: f64, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                out[i].push(j);
                out[j].push(i);
            }
        }
    }
    for nb in &mut out {
        nb.sort_unstable();
    }
    out
}
