//! Exposure laws and conditional means in closed form, for scenarios too large to enumerate.

use statrs::distribution::{Binomial, Discrete};

use super::design::Design;
use super::exposure::{bucket, ExposureMap};
use super::outcome::OutcomeModel;
use crate::error::{Error, Result};
use crate::law::ExposureProbabilities;
use crate::numeric::CompensatedSum;
use crate::scenario::Scenario;

#[derive(Clone, Debug, PartialEq)]
enum Pairing {
    Independent,
    Complete { n: usize, m: usize },
    Blocks { block: Vec<usize>, sizes: Vec<usize>, treated: Vec<usize> },
    /// Every unit shares one exposure.
    Common,
}

/// Exposure law computed from the design's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticLaw {
    n: usize,
    labels: usize,
    pi: Vec<f64>,
    pairing: Pairing,
}

fn unsupported(s: &Scenario) -> Error {
    Error::NoClosedForm(format!(
        "{} exposure with a {} design",
        s.exposure().kind(),
        design_kind(s.design())
    ))
}

fn design_kind(d: &Design) -> &'static str {
    match d {
        Design::Bernoulli { .. } => "bernoulli",
        Design::Iid { .. } => "iid",
        Design::Complete { .. } => "complete",
        Design::GroupComplete { .. } => "group_complete",
        Design::Restricted { .. } => "restricted",
    }
}

fn block_of(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(g, &k)| std::iter::repeat_n(g, k)).collect()
}

/// Distribution of the global exposure label under a Bernoulli design, with the
/// binomial pmf of the treated count.
fn global_buckets(n: usize, p: f64, cuts: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let law = Binomial::new(p, n as u64).expect("bernoulli probability checked");
    let pmf: Vec<f64> = (0..=n).map(|k| law.pmf(k as u64)).collect();
    let mut q = vec![CompensatedSum::new(); cuts.len() + 1];
    for (k, &w) in pmf.iter().enumerate() {
        q[bucket(k as f64 / n as f64, cuts)].add(w);
    }
    (q.iter().map(CompensatedSum::value).collect(), pmf)
}

pub fn analytic_law(s: &Scenario) -> Result<AnalyticLaw> {
    let (n, labels) = (s.n(), s.labels());
    let mut pi = vec![0.0; n * labels];
    let pairing = match (s.exposure(), s.design()) {
        (ExposureMap::OwnTreatment, design) => {
            let (pairing, marg): (Pairing, Box<dyn Fn(usize) -> Vec<f64>>) = match design {
                Design::Bernoulli { p } => {
                    let p = *p;
                    (Pairing::Independent, Box::new(move |_| vec![1.0 - p, p]))
                }
                Design::Iid { probs } => {
                    let probs = probs.clone();
                    (Pairing::Independent, Box::new(move |_| probs.clone()))
                }
                Design::Complete { m } => {
                    let f = *m as f64 / n as f64;
                    (Pairing::Complete { n, m: *m }, Box::new(move |_| vec![1.0 - f, f]))
                }
                Design::GroupComplete { sizes, treated } => {
                    let block = block_of(sizes);
                    let (b, sz, tr) = (block.clone(), sizes.clone(), treated.clone());
                    (
                        Pairing::Blocks { block, sizes: sizes.clone(), treated: treated.clone() },
                        Box::new(move |i| {
                            let f = tr[b[i]] as f64 / sz[b[i]] as f64;
                            vec![1.0 - f, f]
                        }),
                    )
                }
                Design::Restricted { .. } => return Err(unsupported(s)),
            };
            for i in 0..n {
                pi[i * labels..(i + 1) * labels].copy_from_slice(&marg(i));
            }
            pairing
        }
        (ExposureMap::GlobalFraction { cuts }, Design::Bernoulli { p }) => {
            let (q, _) = global_buckets(n, *p, cuts);
            for i in 0..n {
                pi[i * labels..(i + 1) * labels].copy_from_slice(&q);
            }
            Pairing::Common
        }
        _ => return Err(unsupported(s)),
    };
    Ok(AnalyticLaw { n, labels, pi, pairing })
}

impl ExposureProbabilities for AnalyticLaw {
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
        // Without replacement from a block of `size` units with `m` treated.
        let urn = |size: usize, m: usize| {
            let count = [size - m, m];
            let second = count[d2] as f64 - (d1 == d2) as u8 as f64;
            count[d1] as f64 * second / (size as f64 * (size - 1) as f64)
        };
        Some(match &self.pairing {
            Pairing::Independent => self.marginal(i, d1) * self.marginal(j, d2),
            Pairing::Complete { n, m } => urn(*n, *m),
            Pairing::Blocks { block, sizes, treated } => {
                let g = block[i];
                if g == block[j] {
                    urn(sizes[g], treated[g])
                } else {
                    self.marginal(i, d1) * self.marginal(j, d2)
                }
            }
            Pairing::Common => {
                if d1 == d2 {
                    self.marginal(i, d1)
                } else {
                    0.0
                }
            }
        })
    }
}

/// E[z_j | z_i = d] for j ≠ i under an own-treatment design, either of the
/// treatment value or of the indicator z_j ≠ 0.
fn conditional_treatment(design: &Design, n: usize, i: usize, j: usize, d: usize, indicator: bool) -> f64 {
    let d = d as f64;
    match design {
        Design::Bernoulli { p } => *p,
        Design::Iid { probs } => {
            if indicator {
                1.0 - probs[0]
            } else {
                probs.iter().enumerate().map(|(t, q)| t as f64 * q).sum()
            }
        }
        Design::Complete { m } => (*m as f64 - d) / (n - 1) as f64,
        Design::GroupComplete { sizes, treated } => {
            let block = block_of(sizes);
            let g = block[j];
            if g == block[i] {
                (treated[g] as f64 - d) / (sizes[g] - 1) as f64
            } else {
                treated[g] as f64 / sizes[g] as f64
            }
        }
        Design::Restricted { .. } => unreachable!("restricted designs have no closed form"),
    }
}

/// ȳ_i(d) for every unit and label, indexed `[i][d]`.
pub fn closed_form_ybar(s: &Scenario) -> Result<Vec<f64>> {
    let law = analytic_law(s)?;
    let (n, labels) = (s.n(), s.labels());
    if (0..n * labels).any(|k| law.pi[k] == 0.0) {
        return Err(Error::NoClosedForm("an exposure has probability zero".into()));
    }
    let nf = n as f64;
    let mut out = vec![0.0; n * labels];
    match s.exposure() {
        ExposureMap::OwnTreatment => {
            let design = s.design();
            let switch_prob = |d: usize, t: f64| -> Result<f64> {
                match design {
                    Design::Bernoulli { p } => {
                        let rest = Binomial::new(*p, (n - 1) as u64).expect("bernoulli probability checked");
                        Ok((0..n)
                            .filter(|&k| (k + d) as f64 / nf >= t)
                            .map(|k| rest.pmf(k as u64))
                            .collect::<CompensatedSum>()
                            .value())
                    }
                    Design::Complete { m } => Ok((*m as f64 / nf >= t) as u8 as f64),
                    Design::GroupComplete { treated, .. } => {
                        Ok((treated.iter().sum::<usize>() as f64 / nf >= t) as u8 as f64)
                    }
                    _ => Err(Error::NoClosedForm("equilibrium switch under an iid design".into())),
                }
            };
            for i in 0..n {
                for d in 0..labels {
                    let df = d as f64;
                    out[i * labels + d] = match s.outcome() {
                        OutcomeModel::LinearSpillover { beta, gamma } => {
                            let g = s.graph().expect("graph checked at construction");
                            let nb = g.neighbors(i);
                            let frac = if nb.is_empty() {
                                0.0
                            } else {
                                nb.iter()
                                    .map(|&j| conditional_treatment(design, n, i, j, d, true))
                                    .sum::<f64>()
                                    / nb.len() as f64
                            };
                            beta * df + gamma * frac
                        }
                        OutcomeModel::GlobalDecay { beta, c } => {
                            let others: CompensatedSum = (0..n)
                                .filter(|&j| j != i)
                                .map(|j| conditional_treatment(design, n, i, j, d, false))
                                .collect();
                            beta * df + c / nf * (df + others.value())
                        }
                        OutcomeModel::EquilibriumSwitch { beta, delta, threshold } => {
                            beta * df + delta * switch_prob(d, *threshold)?
                        }
                        OutcomeModel::Tabular { .. } => {
                            return Err(Error::NoClosedForm("tabular outcomes".into()))
                        }
                    };
                }
            }
        }
        ExposureMap::GlobalFraction { cuts } => {
            let Design::Bernoulli { p } = s.design() else { unreachable!() };
            let (q, pmf) = global_buckets(n, *p, cuts);
            for i in 0..n {
                let isolated = s.graph().is_some_and(|g| g.degree(i) == 0);
                let mut acc = vec![CompensatedSum::new(); labels];
                for (k, &w) in pmf.iter().enumerate() {
                    let share = k as f64 / nf;
                    let y = match s.outcome() {
                        OutcomeModel::GlobalDecay { beta, c } => (beta + c) * share,
                        OutcomeModel::EquilibriumSwitch { beta, delta, threshold } => {
                            beta * share + if share >= *threshold { *delta } else { 0.0 }
                        }
                        OutcomeModel::LinearSpillover { beta, gamma } => {
                            beta * share + if isolated { 0.0 } else { gamma * share }
                        }
                        OutcomeModel::Tabular { .. } => {
                            return Err(Error::NoClosedForm("tabular outcomes".into()))
                        }
                    };
                    acc[bucket(share, cuts)].add(w * y);
                }
                for d in 0..labels {
                    out[i * labels + d] = acc[d].value() / q[d];
                }
            }
        }
        _ => return Err(unsupported(s)),
    }
    Ok(out)
}

/// τ(a, b) over the units selected by `mask`, from the closed-form ȳ.
pub fn closed_form_effect(s: &Scenario, a: usize, b: usize, mask: &[bool]) -> Result<f64> {
    let ybar = closed_form_ybar(s)?;
    let l = s.labels();
    let mut acc = CompensatedSum::new();
    let mut m = 0usize;
    for i in (0..s.n()).filter(|&i| mask[i]) {
        acc.add(ybar[i * l + a] - ybar[i * l + b]);
        m += 1;
    }
    Ok(acc.value() / m as f64)
}
