//! CSV input of liability estimates: header `year,income,expense`.

use std::path::Path;

use alm_lqg::calibrate::{EstimateRow, LiabilityEstimateTable};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}, record {record}: {source}")]
    Parse {
        path: String,
        record: usize,
        source: csv::Error,
    },
    #[error("{0}")]
    Invalid(#[from] alm_lqg::Error),
}

#[derive(Debug, Deserialize)]
struct Record {
    year: f64,
    income: f64,
    expense: f64,
}

pub fn read_estimate_table(path: &Path) -> Result<LiabilityEstimateTable, TableError> {
    let file = std::fs::File::open(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_estimate_table(file, &path.display().to_string())
}

pub fn parse_estimate_table(input: impl std::io::Read, name: &str) -> Result<LiabilityEstimateTable, TableError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<Record>().enumerate() {
        let rec = rec.map_err(|source| TableError::Parse {
            path: name.to_string(),
            record: i + 1,
            source,
        })?;
        rows.push(EstimateRow {
            year: rec.year,
            income: rec.income,
            expense: rec.expense,
        });
    }
    Ok(LiabilityEstimateTable::new(rows)?)
}
