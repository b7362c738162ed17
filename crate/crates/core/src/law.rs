//! Marginal and joint exposure probabilities.

use serde::Serialize;

use crate::error::{Error, Result};

/// Read access to exposure probabilities, whatever their source.
pub trait ExposureProbabilities: Sync {
    fn units(&self) -> usize;

    fn labels(&self) -> usize;

    /// π_i(d).
    fn marginal(&self, i: usize, d: usize) -> f64;

    /// π_ij(d1, d2), or `None` when the source carries no joint table.
    fn joint(&self, i: usize, j: usize, d1: usize, d2: usize) -> Option<f64>;

    fn joint_or_err(&self, i: usize, j: usize, d1: usize, d2: usize) -> Result<f64> {
        self.joint(i, j, d1, d2)
            .ok_or(Error::MissingJointProbability { i, j, d1, d2 })
    }

    /// Cov(I_i(d), I_j(d)).
    fn cov(&self, i: usize, j: usize, d: usize) -> Result<f64> {
        Ok(self.joint_or_err(i, j, d, d)? - self.marginal(i, d) * self.marginal(j, d))
    }
}

/// Dense exposure law produced by enumeration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExposureLaw {
    n: usize,
    labels: usize,
    pi: Vec<f64>,
    pij: Vec<f64>,
}

impl ExposureLaw {
    /// `pi` is indexed `[i][d]` and `pij` `[i][j][d1][d2]`, both flattened row-major.
    pub fn from_tables(n: usize, labels: usize, pi: Vec<f64>, pij: Vec<f64>) -> Self {
        assert_eq!(pi.len(), n * labels);
        assert_eq!(pij.len(), n * n * labels * labels);
        Self { n, labels, pi, pij }
    }

    #[inline]
    pub fn pi(&self, i: usize, d: usize) -> f64 {
        self.pi[i * self.labels + d]
    }

    #[inline]
    pub fn pij(&self, i: usize, j: usize, d1: usize, d2: usize) -> f64 {
        let l = self.labels;
        self.pij[((i * self.n + j) * l + d1) * l + d2]
    }

    /// z̄_i(d) = 1{π_i(d) = 0}.
    pub fn zbar(&self, i: usize, d: usize) -> bool {
        self.pi(i, d) == 0.0
    }

    /// 1{π_ij(d1, d2) = 0}.
    pub fn zjoint(&self, i: usize, j: usize, d1: usize, d2: usize) -> bool {
        self.pij(i, j, d1, d2) == 0.0
    }
}

impl ExposureProbabilities for ExposureLaw {
    fn units(&self) -> usize {
        self.n
    }

    fn labels(&self) -> usize {
        self.labels
    }

    fn marginal(&self, i: usize, d: usize) -> f64 {
        self.pi(i, d)
    }

    fn joint(&self, i: usize, j: usize, d1: usize, d2: usize) -> Option<f64> {
        Some(self.pij(i, j, d1, d2))
    }
}

/// Marginal probabilities with optional sparse joint entries, as read from files.
#[derive(Clone, Debug, Default)]
pub struct ProbabilityTable {
    n: usize,
    labels: usize,
    pi: Vec<f64>,
    joint: Option<std::collections::HashMap<(usize, usize, usize, usize), f64>>,
}

impl ProbabilityTable {
    /// Builds from `(unit, label, pi)` rows; unlisted pairs have probability zero.
    pub fn from_marginals(n: usize, labels: usize, rows: &[(usize, usize, f64)]) -> Result<Self> {
        let mut pi = vec![0.0; n * labels];
        for &(i, d, p) in rows {
            if i >= n || d >= labels {
                return Err(Error::InvalidParams(format!("probability row ({i},{d}) out of range")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParams(format!("probability {p} outside [0,1]")));
            }
            pi[i * labels + d] = p;
        }
        Ok(Self { n, labels, pi, joint: None })
    }

    /// Attaches joint probabilities from `(i, j, d1, d2, pij)` rows. Diagonal and
    /// mirrored entries are filled in; any pair not listed is treated as missing.
    pub fn with_joint(mut self, rows: &[(usize, usize, usize, usize, f64)]) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for &(i, j, d1, d2, p) in rows {
            if i >= self.n || j >= self.n || d1 >= self.labels || d2 >= self.labels {
                return Err(Error::InvalidParams(format!("joint row ({i},{j},{d1},{d2}) out of range")));
            }
            map.insert((i, j, d1, d2), p);
            map.insert((j, i, d2, d1), p);
        }
        self.joint = Some(map);
        Ok(self)
    }
}

impl ExposureProbabilities for ProbabilityTable {
    fn units(&self) -> usize {
        self.n
    }

    fn labels(&self) -> usize {
        self.labels
    }

    fn marginal(&self, i: usize, d: usize) -> f64 {
        self.pi[i * self.labels + d]
    }

    fn joint(&self, i: usize, j: usize, d1: usize, d2: usize) -> Option<f64> {
        if i == j {
            return Some(if d1 == d2 { self.marginal(i, d1) } else { 0.0 });
        }
        self.joint.as_ref()?.get(&(i, j, d1, d2)).copied()
    }
}
