//! Conservative variance estimator, its exact bias decomposition, and intervals.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::exact::{ErrorMoments, GroundTruth};
use crate::law::ExposureProbabilities;
use crate::numeric::CompensatedSum;
use crate::scenario::RealizedData;

/// Which pairs get the zero-joint treatment beyond those with π_ij = 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum OverridePolicy {
    Natural,
    /// Group label per unit; distinct units sharing a label are overridden.
    Groups(Vec<usize>),
    /// Every pair of distinct units.
    AllPairs,
}

impl OverridePolicy {
    fn forced(&self, i: usize, j: usize) -> bool {
        i != j
            && match self {
                OverridePolicy::Natural => false,
                OverridePolicy::Groups(g) => g[i] == g[j],
                OverridePolicy::AllPairs => true,
            }
    }
}

/// Override for interference confined to known groups.
pub fn partial_interference_override(groups: &[usize]) -> OverridePolicy {
    OverridePolicy::Groups(groups.to_vec())
}

/// Pair weights w and override mask o restricted to the labels {a, b}.
///
/// Slot 0 stands for `a` and slot 1 for `b`.
#[derive(Clone, Debug)]
pub struct PairWeightTable {
    n: usize,
    a: usize,
    b: usize,
    mask: Vec<bool>,
    m: usize,
    pi: Vec<[f64; 2]>,
    w: Vec<f64>,
    o: Vec<bool>,
    inflation: Vec<[f64; 2]>,
}

impl PairWeightTable {
    pub fn build(
        law: &dyn ExposureProbabilities,
        a: usize,
        b: usize,
        policy: &OverridePolicy,
        mask: &[bool],
    ) -> Result<Self> {
        let n = law.units();
        if a == b || a >= law.labels() || b >= law.labels() {
            return Err(Error::InvalidParams(format!("contrast ({a}, {b}) is not a pair of distinct labels")));
        }
        if let OverridePolicy::Groups(g) = policy {
            if g.len() != n {
                return Err(Error::InvalidParams(format!("{} group labels for {n} units", g.len())));
            }
        }
        let labels = [a, b];
        let pi: Vec<[f64; 2]> = (0..n).map(|i| [law.marginal(i, a), law.marginal(i, b)]).collect();
        let mut w = vec![0.0; n * n * 4];
        let mut o = vec![false; n * n * 4];
        w.par_chunks_mut(n * 4)
            .zip(o.par_chunks_mut(n * 4))
            .enumerate()
            .try_for_each(|(i, (wrow, orow))| -> Result<()> {
                if !mask[i] {
                    return Ok(());
                }
                for j in (0..n).filter(|&j| mask[j]) {
                    let forced = policy.forced(i, j);
                    for s1 in 0..2 {
                        for s2 in 0..2 {
                            let k = j * 4 + s1 * 2 + s2;
                            let (p1, p2) = (pi[i][s1], pi[j][s2]);
                            if forced {
                                orow[k] = true;
                                wrow[k] = if p1 > 0.0 && p2 > 0.0 { 1.0 / (p1 * p2) } else { 0.0 };
                                continue;
                            }
                            let pij = law.joint_or_err(i, j, labels[s1], labels[s2])?;
                            if pij == 0.0 {
                                orow[k] = true;
                                wrow[k] = -p1 * p2;
                            } else {
                                wrow[k] = (pij - p1 * p2) / (pij * p1 * p2);
                            }
                        }
                    }
                }
                Ok(())
            })?;
        let mut inflation = vec![[0.0; 2]; n];
        for i in (0..n).filter(|&i| mask[i]) {
            for s in 0..2 {
                let count = (0..n)
                    .filter(|&j| mask[j])
                    .map(|j| o[(i * n + j) * 4 + s * 2] as u32 + o[(i * n + j) * 4 + s * 2 + 1] as u32)
                    .sum::<u32>();
                inflation[i][s] = count as f64;
            }
        }
        let m = mask.iter().filter(|&&x| x).count();
        Ok(Self { n, a, b, mask: mask.to_vec(), m, pi, w, o, inflation })
    }

    fn slot(&self, d: usize) -> Option<usize> {
        if d == self.a {
            Some(0)
        } else if d == self.b {
            Some(1)
        } else {
            None
        }
    }

    /// w_ij(d1, d2) for d1, d2 ∈ {a, b}.
    pub fn weight(&self, i: usize, j: usize, d1: usize, d2: usize) -> Option<f64> {
        Some(self.w[(i * self.n + j) * 4 + self.slot(d1)? * 2 + self.slot(d2)?])
    }

    /// o_ij(d1, d2) for d1, d2 ∈ {a, b}.
    pub fn overridden(&self, i: usize, j: usize, d1: usize, d2: usize) -> Option<bool> {
        Some(self.o[(i * self.n + j) * 4 + self.slot(d1)? * 2 + self.slot(d2)?])
    }

    /// Σ_j o_ij(d, a) + o_ij(d, b) over included units.
    pub fn inflation_count(&self, i: usize, d: usize) -> Option<f64> {
        Some(self.inflation[i][self.slot(d)?])
    }

    pub fn contrast(&self) -> (usize, usize) {
        (self.a, self.b)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// V̂ at one realized assignment. The value can be negative.
pub fn as_variance_estimate(data: &RealizedData, table: &PairWeightTable) -> f64 {
    let active: Vec<(usize, usize, f64)> = (0..table.n)
        .filter(|&i| table.mask[i])
        .filter_map(|i| table.slot(data.exposures[i]).map(|s| (i, s, data.y[i])))
        .filter(|&(i, s, _)| table.pi[i][s] > 0.0)
        .collect();
    let sign = [1.0, -1.0];
    let mut acc = CompensatedSum::new();
    for &(i, si, yi) in &active {
        let row = i * table.n;
        for &(j, sj, yj) in &active {
            acc.add(sign[si] * sign[sj] * table.w[(row + j) * 4 + si * 2 + sj] * yi * yj);
        }
        acc.add(yi * yi / table.pi[i][si] * table.inflation[i][si]);
    }
    let m = table.m as f64;
    acc.value() / (m * m)
}

/// The eight terms of E[V̂] − Var(τ̂) and their signed total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BiasDecomposition {
    pub b1: f64,
    pub b2_ab: f64,
    pub b2_ba: f64,
    pub b3_ab: f64,
    pub b3_ba: f64,
    pub b4_ab: f64,
    pub b4_aa: f64,
    pub b4_bb: f64,
    pub total: f64,
}

pub fn bias_decomposition(
    law: &dyn ExposureProbabilities,
    truth: &GroundTruth,
    moments: &ErrorMoments,
    a: usize,
    b: usize,
    policy: &OverridePolicy,
    mask: &[bool],
) -> Result<BiasDecomposition> {
    let table = PairWeightTable::build(law, a, b, policy, mask)?;
    let units: Vec<usize> = (0..law.units()).filter(|&i| mask[i]).collect();
    let ybar = |i: usize, d: usize| truth.ybar(i, d).ok_or(Error::UnrealizableExposure { unit: i, label: d });
    for &i in &units {
        ybar(i, a)?;
        ybar(i, b)?;
    }
    let y = |i: usize, d: usize| truth.ybar(i, d).unwrap_or(0.0);
    let o = |i: usize, j: usize, d1: usize, d2: usize| table.overridden(i, j, d1, d2).unwrap_or(false) as u8 as f64;
    let m = units.len() as f64;
    let scale = 1.0 / (m * m);

    let b1 = units.iter().map(|&i| (y(i, a) - y(i, b)).powi(2)).collect::<CompensatedSum>().value() * scale;

    let b2 = |d1: usize, d2: usize| {
        let mut acc = CompensatedSum::new();
        for &i in &units {
            for &j in units.iter().filter(|&&j| j != i) {
                acc.add(o(i, j, d1, d1) * (y(i, d1) + y(j, d1)).powi(2));
                acc.add(o(i, j, d1, d2) * (y(i, d1) - y(j, d2)).powi(2));
            }
        }
        acc.value() * scale / 2.0
    };
    let b3 = |d1: usize, d2: usize| {
        let mut acc = CompensatedSum::new();
        for &i in &units {
            let v = moments.cond_var(i, d1);
            for &j in units.iter().filter(|&&j| j != i) {
                acc.add((o(i, j, d1, d1) + o(i, j, d1, d2)) * v);
            }
        }
        acc.value() * scale
    };
    let b4 = |d1: usize, d2: usize| {
        let mut acc = CompensatedSum::new();
        for &i in &units {
            for &j in units.iter().filter(|&&j| j != i) {
                let keep = 1.0 - o(i, j, d1, d2);
                if keep == 0.0 {
                    continue;
                }
                let eij = truth.explainable(i, j, d1, d2);
                let eji = truth.explainable(j, i, d2, d1);
                let bracket =
                    y(i, d1) * eji + y(j, d2) * eij + eij * eji + moments.unexplained_cov(i, j, d1, d2);
                acc.add(keep * bracket);
            }
        }
        acc.value() * scale
    };

    let (b2_ab, b2_ba) = (b2(a, b), b2(b, a));
    let (b3_ab, b3_ba) = (b3(a, b), b3(b, a));
    let (b4_ab, b4_aa, b4_bb) = (b4(a, b), b4(a, a), b4(b, b));
    let total = [b1, b2_ab, b2_ba, b3_ab, b3_ba, 2.0 * b4_ab, -b4_aa, -b4_bb]
        .into_iter()
        .collect::<CompensatedSum>()
        .value();
    Ok(BiasDecomposition { b1, b2_ab, b2_ba, b3_ab, b3_ba, b4_ab, b4_aa, b4_bb, total })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    Normal,
    Chebyshev,
}

/// Half-width multiplier for a two-sided interval at `level`.
pub fn critical_value(method: IntervalMethod, level: f64) -> f64 {
    match method {
        IntervalMethod::Normal => Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0),
        IntervalMethod::Chebyshev => 1.0 / (1.0 - level).sqrt(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    /// The variance estimate was negative and replaced by zero.
    pub floored: bool,
    /// Zero width.
    pub degenerate: bool,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

pub fn confidence_interval(point: f64, varest: f64, method: IntervalMethod, level: f64) -> ConfidenceInterval {
    let floored = varest < 0.0;
    let half = critical_value(method, level) * varest.max(0.0).sqrt();
    ConfidenceInterval {
        lo: point - half,
        hi: point + half,
        floored,
        degenerate: half == 0.0,
    }
}
