//! CSV ingestion and export.
//!
//! The first column is a timestamp or index and is ignored. Columns whose
//! header starts with `cov_` are covariates; every other column is a target.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use timerft_core::series::MultivariateSeries;
use timerft_core::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("cannot open {path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("malformed CSV: {0}")]
    Malformed(#[from] csv::Error),
    #[error("header row must name an index column and at least one data column")]
    NoColumns,
    #[error("zero target columns")]
    NoTargets,
    #[error("no data rows")]
    NoRows,
    #[error("missing value at row {row}, column {column}")]
    Missing { row: usize, column: usize },
    #[error("non-numeric value {value:?} at row {row}, column {column}")]
    NonNumeric { row: usize, column: usize, value: String },
    #[error("row {row} has {found} fields, header has {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error(transparent)]
    Series(#[from] timerft_core::Error),
}

pub fn load_csv(path: &Path) -> Result<MultivariateSeries, CsvError> {
    let file = File::open(path).map_err(|source| CsvError::Open { path: path.display().to_string(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_csv(file, name)
}

/// Rows and columns in error messages are 1-based and count the header row
/// and the index column, so they match what a spreadsheet shows.
pub fn read_csv<R: Read>(reader: R, name: String) -> Result<MultivariateSeries, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.len() < 2 {
        return Err(CsvError::NoColumns);
    }
    let (cov_cols, target_cols): (Vec<usize>, Vec<usize>) = (1..header.len()).partition(|&c| header[c].starts_with("cov_"));
    if target_cols.is_empty() {
        return Err(CsvError::NoTargets);
    }
    let mut targets = Vec::new();
    let mut covariates = Vec::new();
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 2;
        if record.len() != header.len() {
            return Err(CsvError::Ragged { row, found: record.len(), expected: header.len() });
        }
        let cell = |c: usize| -> Result<f64, CsvError> {
            let raw = &record[c];
            if raw.is_empty() || raw.eq_ignore_ascii_case("nan") || raw.eq_ignore_ascii_case("na") {
                return Err(CsvError::Missing { row, column: c + 1 });
            }
            let v: f64 = raw.parse().map_err(|_| CsvError::NonNumeric { row, column: c + 1, value: raw.to_owned() })?;
            if !v.is_finite() {
                return Err(CsvError::Missing { row, column: c + 1 });
            }
            Ok(v)
        };
        for &c in &target_cols {
            targets.push(cell(c)?);
        }
        for &c in &cov_cols {
            covariates.push(cell(c)?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CsvError::NoRows);
    }
    let values = Matrix::from_vec(rows, target_cols.len(), targets)?;
    let covs = Matrix::from_vec(rows, cov_cols.len(), covariates)?;
    Ok(MultivariateSeries::new(values, covs, name)?)
}

/// Writes `t,y1..yN,cov_1..cov_M` with an integer index.
pub fn write_csv<W: Write>(series: &MultivariateSeries, writer: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_owned()];
    header.extend((1..=series.num_targets()).map(|i| format!("y{i}")));
    header.extend((1..=series.num_covariates()).map(|i| format!("cov_{i}")));
    w.write_record(&header)?;
    for r in 0..series.len() {
        let mut row = vec![r.to_string()];
        row.extend(series.values.row(r).iter().map(|v| format!("{v:?}")));
        row.extend(series.covariates.row(r).iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CsvError::Malformed(e.into()))?;
    Ok(())
}
