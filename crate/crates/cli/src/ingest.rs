use std::fmt;
use std::path::Path;

use exposure_glm::claim_count::{CountData, CountObservation};
use exposure_glm::{Observation, Portfolio};

/// A problem with one cell or the header of an input file. Rows count data
/// lines from 1; the header is row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestError {
    pub row: usize,
    pub column: String,
    pub value: String,
    pub reason: String,
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.row == 0 {
            write!(f, "header, column \"{}\": {}", self.column, self.reason)
        } else {
            write!(
                f,
                "row {}, column \"{}\": value \"{}\" {}",
                self.row, self.column, self.value, self.reason
            )
        }
    }
}

impl std::error::Error for IngestError {}

fn cell_error(row: usize, column: &str, value: &str, reason: &str) -> IngestError {
    IngestError {
        row,
        column: column.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

struct Table {
    covariates: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path, leading: [&str; 3]) -> anyhow::Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = rdr.headers()?.clone();
    for (i, want) in leading.iter().enumerate() {
        match header.get(i) {
            Some(h) if h == *want => {}
            other => {
                return Err(IngestError {
                    row: 0,
                    column: want.to_string(),
                    value: other.unwrap_or("").to_string(),
                    reason: format!("expected column {} to be \"{want}\"", i + 1),
                }
                .into())
            }
        }
    }
    let covariates: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(cell_error(i + 1, "*", "", &format!("row has {} fields, header has {}", rec.len(), header.len())).into());
        }
        rows.push(rec);
    }
    Ok(Table { covariates, rows })
}

fn number(rec: &csv::StringRecord, row: usize, idx: usize, column: &str) -> Result<f64, IngestError> {
    let raw = &rec[idx];
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(cell_error(row, column, raw, "is not a finite number")),
    }
}

fn covariates(rec: &csv::StringRecord, row: usize, names: &[String]) -> Result<Vec<f64>, IngestError> {
    names.iter().enumerate().map(|(j, name)| number(rec, row, j + 3, name)).collect()
}

/// Reads a loss-cost portfolio with header
/// `contract_id,exposure,loss_cost,x1,...,xq`, in file order.
pub fn ingest_csv(path: &Path) -> anyhow::Result<Portfolio> {
    let table = read_table(path, ["contract_id", "exposure", "loss_cost"])?;
    let mut obs = Vec::with_capacity(table.rows.len());
    for (i, rec) in table.rows.iter().enumerate() {
        let row = i + 1;
        let exposure = number(rec, row, 1, "exposure")?;
        if !(exposure > 0.0 && exposure <= 1.0) {
            return Err(cell_error(row, "exposure", &rec[1], "must lie in (0, 1]").into());
        }
        let loss = number(rec, row, 2, "loss_cost")?;
        if loss < 0.0 {
            return Err(cell_error(row, "loss_cost", &rec[2], "must be non-negative").into());
        }
        obs.push(Observation::new(&rec[0], exposure, loss, covariates(rec, row, &table.covariates)?));
    }
    Ok(Portfolio::with_names(obs, table.covariates)?)
}

/// Reads claim counts with header `contract_id,exposure,count,x1,...,xq`.
pub fn ingest_counts(path: &Path) -> anyhow::Result<CountData> {
    let table = read_table(path, ["contract_id", "exposure", "count"])?;
    let mut obs = Vec::with_capacity(table.rows.len());
    for (i, rec) in table.rows.iter().enumerate() {
        let row = i + 1;
        let exposure = number(rec, row, 1, "exposure")?;
        if !(exposure > 0.0 && exposure <= 1.0) {
            return Err(cell_error(row, "exposure", &rec[1], "must lie in (0, 1]").into());
        }
        let count = number(rec, row, 2, "count")?;
        if count < 0.0 || count.fract() != 0.0 {
            return Err(cell_error(row, "count", &rec[2], "must be a non-negative integer").into());
        }
        obs.push(CountObservation::new(exposure, count as u64, covariates(rec, row, &table.covariates)?));
    }
    Ok(CountData::new(obs)?)
}
