//! Compensated accumulation helpers.

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub const fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one.
    #[inline]
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator of values.
pub fn csum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Dense vector of compensated sums with element-wise merge.
#[derive(Clone, Debug)]
pub(crate) struct SumTable {
    cells: Vec<CompensatedSum>,
}

impl SumTable {
    pub fn zeros(len: usize) -> Self {
        Self {
            cells: vec![CompensatedSum::new(); len],
        }
    }

    #[inline]
    pub fn add(&mut self, idx: usize, x: f64) {
        self.cells[idx].add(x);
    }

    pub fn merge(&mut self, other: &SumTable) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.merge(b);
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.cells.iter().map(CompensatedSum::value).collect()
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = csum(x.iter().copied()) / n;
    let my = csum(y.iter().copied()) / n;
    let sxy = csum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = csum(x.iter().map(|a| (a - mx) * (a - mx)));
    sxy / sxx
}
