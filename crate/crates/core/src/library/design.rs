use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::check_partition;
use crate::error::{Error, Result};

/// Assignment mechanism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Design {
    /// Independent binary assignments with treatment probability `p`.
    Bernoulli { p: f64 },
    /// Independent assignments over the full treatment alphabet.
    Iid { probs: Vec<f64> },
    /// Exactly `m` treated units, uniformly over all such assignments.
    Complete { m: usize },
    /// Complete randomization inside consecutive blocks.
    GroupComplete { sizes: Vec<usize>, treated: Vec<usize> },
    /// Explicit probability mass function.
    Restricted { support: Vec<Vec<u32>>, probs: Vec<f64> },
}

impl Design {
    /// Checks parameters against the unit count and treatment alphabet.
    ///
    /// Normalization of a restricted pmf is left to scenario validation so that
    /// malformed designs can still be inspected.
    pub fn check(&self, n: usize, treatments: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        match self {
            Design::Bernoulli { p } => {
                if treatments != 2 {
                    return bad("bernoulli design needs a binary treatment alphabet".into());
                }
                if !(*p > 0.0 && *p < 1.0) {
                    return bad(format!("bernoulli probability {p} outside (0,1)"));
                }
            }
            Design::Iid { probs } => {
                if probs.len() != treatments {
                    return bad(format!("iid design has {} probabilities for {treatments} treatments", probs.len()));
                }
                if probs.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
                    return bad("iid probabilities must lie in (0,1)".into());
                }
                if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return bad("iid probabilities must sum to one".into());
                }
            }
            Design::Complete { m } => {
                if treatments != 2 {
                    return bad("complete randomization needs a binary treatment alphabet".into());
                }
                if *m == 0 || *m >= n {
                    return bad(format!("complete design needs 0 < m < n, got m={m}, n={n}"));
                }
            }
            Design::GroupComplete { sizes, treated } => {
                if treatments != 2 {
                    return bad("group complete randomization needs a binary treatment alphabet".into());
                }
                check_partition(sizes, n)?;
                if sizes.len() != treated.len() {
                    return bad("one treated count per group required".into());
                }
                if sizes.iter().zip(treated).any(|(s, m)| m > s) {
                    return bad("treated count exceeds group size".into());
                }
            }
            Design::Restricted { support, probs } => {
                if support.is_empty() || support.len() != probs.len() {
                    return bad("restricted design needs one probability per support point".into());
                }
                for z in support {
                    if z.len() != n {
                        return bad(format!("support point of length {} for {n} units", z.len()));
                    }
                    if z.iter().any(|&t| t as usize >= treatments) {
                        return bad("support point outside the treatment alphabet".into());
                    }
                }
                if probs.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
                    return bad("restricted probabilities must be non-negative".into());
                }
            }
        }
        Ok(())
    }

    /// Total probability mass of the support (one for every kind but a malformed restricted pmf).
    pub fn total_mass(&self) -> f64 {
        match self {
            Design::Restricted { probs, .. } => crate::numeric::csum(probs.iter().copied()),
            _ => 1.0,
        }
    }

    /// Number of support points, saturating at `u128::MAX`.
    pub fn support_len(&self, n: usize, treatments: usize) -> u128 {
        match self {
            Design::Bernoulli { .. } | Design::Iid { .. } => {
                (treatments as u128).checked_pow(n as u32).unwrap_or(u128::MAX)
            }
            Design::Complete { m } => binomial(n, *m),
            Design::GroupComplete { sizes, treated } => sizes
                .iter()
                .zip(treated)
                .fold(1u128, |acc, (&s, &m)| acc.saturating_mul(binomial(s, m))),
            Design::Restricted { support, .. } => support.len() as u128,
        }
    }

    /// Writes support point `k` into `z` and returns its probability.
    pub fn support_point(&self, n: usize, treatments: usize, k: u64, z: &mut [u32]) -> f64 {
        match self {
            Design::Bernoulli { p } => {
                digits(k, 2, z);
                let treated = z.iter().filter(|&&t| t == 1).count() as i32;
                p.powi(treated) * (1.0 - p).powi(n as i32 - treated)
            }
            Design::Iid { probs } => {
                digits(k, treatments as u64, z);
                z.iter().map(|&t| probs[t as usize]).product()
            }
            Design::Complete { m } => {
                unrank_combination(n, *m, k as u128, z);
                1.0 / binomial(n, *m) as f64
            }
            Design::GroupComplete { sizes, treated } => {
                let counts: Vec<u128> = sizes.iter().zip(treated).map(|(&s, &m)| binomial(s, m)).collect();
                let mut rest = k as u128;
                let mut start = n;
                let mut prob = 1.0;
                for g in (0..sizes.len()).rev() {
                    let r = rest % counts[g];
                    rest /= counts[g];
                    start -= sizes[g];
                    unrank_combination(sizes[g], treated[g], r, &mut z[start..start + sizes[g]]);
                    prob /= counts[g] as f64;
                }
                prob
            }
            Design::Restricted { support, probs } => {
                z.copy_from_slice(&support[k as usize]);
                probs[k as usize]
            }
        }
    }

    /// Draws one assignment.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, z: &mut [u32]) {
        match self {
            Design::Bernoulli { p } => {
                for t in z.iter_mut() {
                    *t = u32::from(rng.random::<f64>() < *p);
                }
            }
            Design::Iid { probs } => {
                for t in z.iter_mut() {
                    *t = draw_index(probs, rng.random::<f64>()) as u32;
                }
            }
            Design::Complete { m } => {
                z.fill(0);
                for i in index::sample(rng, n, *m) {
                    z[i] = 1;
                }
            }
            Design::GroupComplete { sizes, treated } => {
                z.fill(0);
                let mut start = 0;
                for (&s, &m) in sizes.iter().zip(treated) {
                    for i in index::sample(rng, s, m) {
                        z[start + i] = 1;
                    }
                    start += s;
                }
            }
            Design::Restricted { support, probs } => {
                let total = self.total_mass();
                let k = draw_index(probs, rng.random::<f64>() * total);
                z.copy_from_slice(&support[k]);
            }
        }
    }
}

fn draw_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Mixed-radix digits of `k` with unit 0 as the most significant position.
pub(crate) fn digits(mut k: u64, base: u64, z: &mut [u32]) {
    for t in z.iter_mut().rev() {
        *t = (k % base) as u32;
        k /= base;
    }
}

/// Binomial coefficient, saturating on overflow.
pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic unranking of an `m`-subset of `0..n` into an indicator vector.
fn unrank_combination(n: usize, m: usize, mut rank: u128, z: &mut [u32]) {
    let mut left = m;
    for i in 0..n {
        if left == 0 {
            z[i] = 0;
            continue;
        }
        let with_i = binomial(n - i - 1, left - 1);
        if rank < with_i {
            z[i] = 1;
            left -= 1;
        } else {
            z[i] = 0;
            rank -= with_i;
        }
    }
}
