//! CSV ingestion. Files need a header row; every used field must parse as a
//! number.

use std::path::Path;

use chic_core::Dataset;
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};

/// Parsed numeric table with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> CliResult<Vec<f64>> {
        let j = self
            .column_index(name)
            .ok_or_else(|| CliError::Config(format!("column '{name}' not found; available: {}", self.headers.join(", "))))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        match e.kind() {
            csv::ErrorKind::Io(_) => CliError::io(path, std::io::Error::other(e.to_string())),
            _ => CliError::Csv {
                path: path.to_path_buf(),
                line,
                detail: e.to_string(),
            },
        }
    };
    let headers: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(CliError::Csv {
            path: path.to_path_buf(),
            line: 1,
            detail: "missing header row".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(headers.len());
        for (j, field) in rec.iter().enumerate() {
            let v = field.parse::<f64>().map_err(|_| CliError::Csv {
                path: path.to_path_buf(),
                line,
                detail: format!("column '{}': '{field}' is not a number", headers[j]),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

/// Column roles for building a dataset.
#[derive(Debug, Clone, Default)]
pub struct Roles<'a> {
    pub response: &'a str,
    pub weights: Option<&'a str>,
    pub offset: Option<&'a str>,
    /// Explicit predictors; all remaining columns when absent.
    pub predictors: Option<Vec<String>>,
}

pub fn build_dataset(table: &Table, roles: &Roles<'_>) -> CliResult<Dataset> {
    let reserved: Vec<&str> = [Some(roles.response), roles.weights, roles.offset].into_iter().flatten().collect();
    let names: Vec<String> = match &roles.predictors {
        Some(p) => p.clone(),
        None => table.headers.iter().filter(|h| !reserved.contains(&h.as_str())).cloned().collect(),
    };
    let y = DVector::from_vec(table.column(roles.response)?);
    let cols: Vec<Vec<f64>> = names.iter().map(|n| table.column(n)).collect::<CliResult<_>>()?;
    let x = DMatrix::from_fn(table.rows.len(), names.len(), |i, j| cols[j][i]);
    let mut data = Dataset::new(y, x, names)?;
    if let Some(w) = roles.weights {
        data = data.with_weights(DVector::from_vec(table.column(w)?))?;
    }
    if let Some(o) = roles.offset {
        data = data.with_offset(DVector::from_vec(table.column(o)?))?;
    }
    Ok(data)
}
