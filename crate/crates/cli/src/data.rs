//! CSV inputs for `estimate`.

use std::path::Path;

use exposure_lab::{ProbabilityTable, RealizedData};

use crate::error::CliError;

/// `(i, j, d1, d2, pij)`.
pub type JointRow = (usize, usize, usize, usize, f64);

pub struct Dataset {
    pub data: RealizedData,
    pub covariates: Option<Vec<Vec<f64>>>,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, what: &str, line: usize) -> Result<T, CliError> {
    rec.get(k)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::Config(format!("line {line}: bad or missing {what}")))
}

fn expect_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<(), CliError> {
    if got.len() < want.len() || got.iter().zip(want).any(|(g, w)| g != *w) {
        return Err(CliError::Config(format!(
            "{}: header must start with {}",
            path.display(),
            want.join(",")
        )));
    }
    Ok(())
}

/// Columns `unit,z,exposure,y[,x1..xp]`; every unit 0..n-1 exactly once.
pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    expect_header(path, &header, &["unit", "z", "exposure", "y"])?;
    let p = header.len() - 4;
    let mut rows: Vec<(usize, u32, usize, f64, Vec<f64>)> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let x = (0..p).map(|c| field(&rec, 4 + c, "covariate", line)).collect::<Result<Vec<f64>, _>>()?;
        rows.push((
            field(&rec, 0, "unit", line)?,
            field(&rec, 1, "z", line)?,
            field(&rec, 2, "exposure", line)?,
            field(&rec, 3, "y", line)?,
            x,
        ));
    }
    rows.sort_by_key(|r| r.0);
    if rows.is_empty() || rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(CliError::Config(format!("{}: units must be 0..n-1, each once", path.display())));
    }
    let covariates = (p > 0).then(|| rows.iter().map(|r| r.4.clone()).collect());
    Ok(Dataset {
        data: RealizedData {
            z: rows.iter().map(|r| r.1).collect(),
            exposures: rows.iter().map(|r| r.2).collect(),
            y: rows.iter().map(|r| r.3).collect(),
        },
        covariates,
    })
}

/// Columns `unit,d,pi`.
pub fn read_marginals(path: &Path) -> Result<Vec<(usize, usize, f64)>, CliError> {
    let mut rdr = reader(path)?;
    expect_header(path, &rdr.headers()?.clone(), &["unit", "d", "pi"])?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        rows.push((field(&rec, 0, "unit", k + 2)?, field(&rec, 1, "d", k + 2)?, field(&rec, 2, "pi", k + 2)?));
    }
    Ok(rows)
}

/// Columns `i,j,d1,d2,pij`.
pub fn read_joint(path: &Path) -> Result<Vec<JointRow>, CliError> {
    let mut rdr = reader(path)?;
    expect_header(path, &rdr.headers()?.clone(), &["i", "j", "d1", "d2", "pij"])?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        rows.push((
            field(&rec, 0, "i", line)?,
            field(&rec, 1, "j", line)?,
            field(&rec, 2, "d1", line)?,
            field(&rec, 3, "d2", line)?,
            field(&rec, 4, "pij", line)?,
        ));
    }
    Ok(rows)
}

pub fn probability_table(
    n: usize,
    labels: usize,
    marginals: &[(usize, usize, f64)],
    joint: Option<&[JointRow]>,
) -> Result<ProbabilityTable, CliError> {
    let table = ProbabilityTable::from_marginals(n, labels, marginals)?;
    Ok(match joint {
        Some(rows) => table.with_joint(rows)?,
        None => table,
    })
}
