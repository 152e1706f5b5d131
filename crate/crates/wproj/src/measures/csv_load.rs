//! CSV ingestion: UTF-8, header row required, comma-separated, `.` decimal
//! point. The schema declares which columns become coordinates, an optional
//! weight column, and per-column transforms.
//!
//! Row policy: rows with missing values in declared columns are dropped and
//! counted, never imputed. Rows with nonpositive values in a log column are
//! dropped and counted. Rows with zero weight are dropped and counted (atoms
//! must carry positive mass). Non-numeric text in a declared column is a
//! hard error carrying the 1-based data row number.

use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{DiscreteMeasure, VariableTransform};
use crate::{Error, Result};

/// Declares how CSV columns map onto measure coordinates.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    /// Columns to ingest, in coordinate order.
    pub columns: Vec<String>,
    /// Optional weight column; normalized to sum 1 after row drops.
    pub weight_column: Option<String>,
    /// One transform per entry of `columns`.
    pub transforms: Vec<VariableTransform>,
}

impl CsvSchema {
    /// Identity transforms, no weight column.
    pub fn plain(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            weight_column: None,
            transforms: vec![VariableTransform::Identity; columns.len()],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::EmptyInput("schema columns"));
        }
        if self.transforms.len() != self.columns.len() {
            return Err(Error::InvalidOption(format!(
                "{} transforms for {} columns",
                self.transforms.len(),
                self.columns.len()
            )));
        }
        Ok(())
    }
}

/// Counts reported by ingestion alongside the measure.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub dropped_missing: usize,
    pub dropped_nonpositive_log: usize,
    pub dropped_zero_weight: usize,
}

/// Loads a measure from a CSV file on disk.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<(DiscreteMeasure, IngestReport)> {
    let file = std::fs::File::open(path)?;
    measure_from_csv_reader(file, schema)
}

/// Loads a measure from any CSV byte stream.
pub fn measure_from_csv_reader<R: Read>(
    reader: R,
    schema: &CsvSchema,
) -> Result<(DiscreteMeasure, IngestReport)> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let col_idx: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::MissingColumn { column: c.clone() })
        })
        .collect::<Result<_>>()?;
    let weight_idx = match &schema.weight_column {
        Some(c) => Some(headers.iter().position(|h| h == c).ok_or_else(|| {
            Error::MissingColumn { column: c.clone() }
        })?),
        None => None,
    };

    let d = schema.columns.len();
    let mut report = IngestReport::default();
    let mut rows: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut buf = vec![0.0; d];

    for record in rdr.records() {
        let record = record?;
        report.rows_read += 1;
        let row_no = report.rows_read;

        let mut missing = false;
        let mut bad_log = false;
        for (k, &ci) in col_idx.iter().enumerate() {
            let raw = record.get(ci).unwrap_or("");
            if raw.is_empty() {
                missing = true;
                break;
            }
            let value: f64 = raw.parse().map_err(|_| Error::ParseError {
                row: row_no,
                column: schema.columns[k].clone(),
                value: raw.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::ParseError {
                    row: row_no,
                    column: schema.columns[k].clone(),
                    value: raw.to_string(),
                });
            }
            buf[k] = match schema.transforms[k] {
                VariableTransform::Identity => value,
                VariableTransform::Log => {
                    if value <= 0.0 {
                        bad_log = true;
                        break;
                    }
                    value.ln()
                }
            };
        }
        if missing {
            report.dropped_missing += 1;
            continue;
        }
        if bad_log {
            report.dropped_nonpositive_log += 1;
            continue;
        }

        let w = match weight_idx {
            Some(wi) => {
                let raw = record.get(wi).unwrap_or("");
                if raw.is_empty() {
                    report.dropped_missing += 1;
                    continue;
                }
                let value: f64 = raw.parse().map_err(|_| Error::ParseError {
                    row: row_no,
                    column: schema.weight_column.clone().unwrap_or_default(),
                    value: raw.to_string(),
                })?;
                if !value.is_finite() {
                    return Err(Error::ParseError {
                        row: row_no,
                        column: schema.weight_column.clone().unwrap_or_default(),
                        value: raw.to_string(),
                    });
                }
                if value < 0.0 {
                    return Err(Error::NegativeWeight {
                        row: row_no,
                        value,
                    });
                }
                if value == 0.0 {
                    report.dropped_zero_weight += 1;
                    continue;
                }
                value
            }
            None => 1.0,
        };

        rows.extend_from_slice(&buf);
        weights.push(w);
    }

    if weights.is_empty() {
        return Err(Error::AllRowsDropped {
            rows_read: report.rows_read,
        });
    }
    report.rows_kept = weights.len();

    let n = weights.len();
    let support =
        Array2::from_shape_vec((n, d), rows).expect("row buffer length is n*d by construction");
    let total: f64 = weights.iter().sum();
    let weights = Array1::from_vec(weights.into_iter().map(|w| w / total).collect());
    Ok((DiscreteMeasure::new(support, weights)?, report))
}
