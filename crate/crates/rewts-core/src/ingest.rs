//! CSV ingestion.
//!
//! Input files carry a header row, one row per tick, numeric cells in decimal
//! notation. A declared schema maps columns to the target and covariates.
//!
//! Missing or unparseable cells are rejected in [`MissingPolicy::Strict`]
//! mode and linearly interpolated between the nearest finite neighbours in
//! [`MissingPolicy::Lenient`] mode. When a time column is declared with a
//! `resample` width, rows are pre-aggregated by the mean within each tick
//! window before any interpolation.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RewtsError};
use crate::timeseries::TimeSeriesFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Strict,
    Lenient,
}

/// Column mapping and parse options for one CSV source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Name of the target column.
    pub target: String,
    /// Covariate column names, in feature order.
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Per-covariate flag: values known in the future at forecast time.
    #[serde(default)]
    pub future_known: Vec<bool>,
    /// Optional time column; values must be strictly increasing.
    #[serde(default)]
    pub time: Option<String>,
    /// Cell delimiter, default comma.
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub mode: MissingPolicy,
    /// Declared tick step of the resulting frame.
    #[serde(default = "default_step")]
    pub step: f64,
    /// Optional tick window width for mean pre-aggregation of the time column.
    #[serde(default)]
    pub resample: Option<f64>,
}

fn default_delimiter() -> char {
    ','
}

fn default_step() -> f64 {
    1.0
}

impl CsvSchema {
    pub fn univariate(target: &str) -> Self {
        Self {
            target: target.to_string(),
            covariates: vec![],
            future_known: vec![],
            time: None,
            delimiter: ',',
            mode: MissingPolicy::Strict,
            step: 1.0,
            resample: None,
        }
    }
}

pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<TimeSeriesFrame> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| RewtsError::Schema(format!("missing column '{name}' in {}", path.display())))
    };
    let target_col = col(&schema.target)?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>>>()?;
    let time_col = schema.time.as_deref().map(col).transpose()?;
    if !schema.future_known.is_empty() && schema.future_known.len() != schema.covariates.len() {
        return Err(RewtsError::Schema(
            "future_known length does not match covariate count".into(),
        ));
    }

    let width = 1 + cov_cols.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(width);
        for (slot, &c) in std::iter::once(&target_col).chain(cov_cols.iter()).enumerate() {
            let cell = record.get(c).unwrap_or("");
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => match schema.mode {
                    MissingPolicy::Strict => {
                        return Err(RewtsError::Parse(format!(
                            "unparseable cell '{cell}' at data row {line}, feature {slot}"
                        )))
                    }
                    MissingPolicy::Lenient => row.push(f64::NAN),
                },
            }
        }
        if let Some(tc) = time_col {
            let cell = record.get(tc).unwrap_or("");
            let t = cell.trim().parse::<f64>().map_err(|_| {
                RewtsError::Parse(format!("unparseable time cell '{cell}' at data row {line}"))
            })?;
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(RewtsError::Ordering(format!(
                        "time column not strictly increasing at data row {line} ({t} after {prev})"
                    )));
                }
            }
            times.push(t);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(RewtsError::EmptyInput(format!("{} has no data rows", path.display())));
    }

    if let Some(window) = schema.resample {
        if time_col.is_none() {
            return Err(RewtsError::Schema("resample requires a time column".into()));
        }
        if !(window.is_finite() && window > 0.0) {
            return Err(RewtsError::Parameter(format!("resample width must be positive, got {window}")));
        }
        rows = resample_mean(&rows, &times, window, schema.mode)?;
    }

    if schema.mode == MissingPolicy::Lenient {
        interpolate_columns(&mut rows)?;
    }

    let n = rows.len();
    let mut target = Vec::with_capacity(n);
    let mut cov = Array2::zeros((n, cov_cols.len()));
    for (i, row) in rows.iter().enumerate() {
        target.push(row[0]);
        for (k, &v) in row[1..].iter().enumerate() {
            cov[[i, k]] = v;
        }
    }
    let future_known = if schema.future_known.is_empty() {
        vec![false; cov_cols.len()]
    } else {
        schema.future_known.clone()
    };
    TimeSeriesFrame::new(0, schema.step, target, cov, future_known)
}

/// Mean within each tick window `[t0 + i*w, t0 + (i+1)*w)`.
fn resample_mean(
    rows: &[Vec<f64>],
    times: &[f64],
    window: f64,
    mode: MissingPolicy,
) -> Result<Vec<Vec<f64>>> {
    let t0 = times[0];
    let width = rows[0].len();
    let last_bucket = ((times[times.len() - 1] - t0) / window).floor() as usize;
    let mut sums = vec![vec![0.0; width]; last_bucket + 1];
    let mut counts = vec![vec![0usize; width]; last_bucket + 1];
    for (row, &t) in rows.iter().zip(times) {
        let b = ((t - t0) / window).floor() as usize;
        let b = b.min(last_bucket);
        for (j, &v) in row.iter().enumerate() {
            if v.is_finite() {
                sums[b][j] += v;
                counts[b][j] += 1;
            }
        }
    }
    let mut out = Vec::with_capacity(last_bucket + 1);
    for (b, (s, c)) in sums.iter().zip(&counts).enumerate() {
        let mut row = Vec::with_capacity(width);
        for j in 0..width {
            if c[j] > 0 {
                row.push(s[j] / c[j] as f64);
            } else if mode == MissingPolicy::Lenient {
                row.push(f64::NAN);
            } else {
                return Err(RewtsError::Parse(format!("empty resample window {b}, feature {j}")));
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Replace NaN runs by linear interpolation between finite neighbours.
fn interpolate_columns(rows: &mut [Vec<f64>]) -> Result<()> {
    let width = rows[0].len();
    for j in 0..width {
        let mut i = 0;
        while i < rows.len() {
            if rows[i][j].is_nan() {
                let run_start = i;
                let mut run_end = i;
                while run_end < rows.len() && rows[run_end][j].is_nan() {
                    run_end += 1;
                }
                if run_start == 0 || run_end == rows.len() {
                    return Err(RewtsError::InsufficientData(format!(
                        "cannot interpolate feature {j}: missing values touch the series edge"
                    )));
                }
                let lo = rows[run_start - 1][j];
                let hi = rows[run_end][j];
                let span = (run_end - run_start + 1) as f64;
                for (offset, row) in rows[run_start..run_end].iter_mut().enumerate() {
                    row[j] = lo + (hi - lo) * (offset + 1) as f64 / span;
                }
                i = run_end;
            } else {
                i += 1;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_three_row_univariate() {
        let f = write_csv("y\n1\n2\n3\n");
        let frame = ingest_csv(f.path(), &CsvSchema::univariate("y")).unwrap();
        assert_eq!(frame.target().to_vec(), vec![1.0, 2.0, 3.0]);
        assert_eq!(frame.n_covariates(), 0);
    }

    #[test]
    fn lenient_interpolates_midpoint() {
        let f = write_csv("y\n2\nNaN\n4\n");
        let mut schema = CsvSchema::univariate("y");
        schema.mode = MissingPolicy::Lenient;
        let frame = ingest_csv(f.path(), &schema).unwrap();
        assert_abs_diff_eq!(frame.target()[1], 3.0);
    }

    #[test]
    fn strict_rejects_unparseable() {
        let f = write_csv("y\n2\noops\n4\n");
        let err = ingest_csv(f.path(), &CsvSchema::univariate("y")).unwrap_err();
        assert_eq!(err.category(), "parse");
    }

    #[test]
    fn shuffled_time_column_is_ordering_error() {
        let f = write_csv("t,y\n0,1\n2,2\n1,3\n");
        let mut schema = CsvSchema::univariate("y");
        schema.time = Some("t".into());
        let err = ingest_csv(f.path(), &schema).unwrap_err();
        assert_eq!(err.category(), "ordering");
    }

    #[test]
    fn missing_column_is_schema_error() {
        let f = write_csv("x\n1\n");
        let err = ingest_csv(f.path(), &CsvSchema::univariate("y")).unwrap_err();
        assert_eq!(err.category(), "schema");
    }

    #[test]
    fn empty_file_is_empty_input() {
        let f = write_csv("y\n");
        let err = ingest_csv(f.path(), &CsvSchema::univariate("y")).unwrap_err();
        assert_eq!(err.category(), "empty_input");
    }

    #[test]
    fn covariates_and_future_flags() {
        let f = write_csv("y,u\n1,10\n2,20\n");
        let mut schema = CsvSchema::univariate("y");
        schema.covariates = vec!["u".into()];
        schema.future_known = vec![true];
        let frame = ingest_csv(f.path(), &schema).unwrap();
        assert_eq!(frame.n_covariates(), 1);
        assert_eq!(frame.covariates()[[1, 0]], 20.0);
        assert_eq!(frame.future_known(), &[true]);
    }

    #[test]
    fn resample_means_within_windows() {
        let f = write_csv("t,y\n0.0,1\n0.4,3\n1.2,5\n1.8,7\n2.5,9\n");
        let mut schema = CsvSchema::univariate("y");
        schema.time = Some("t".into());
        schema.resample = Some(1.0);
        let frame = ingest_csv(f.path(), &schema).unwrap();
        assert_eq!(frame.target().to_vec(), vec![2.0, 6.0, 9.0]);
    }

    #[test]
    fn lenient_edge_gap_fails() {
        let f = write_csv("y\nNaN\n2\n3\n");
        let mut schema = CsvSchema::univariate("y");
        schema.mode = MissingPolicy::Lenient;
        let err = ingest_csv(f.path(), &schema).unwrap_err();
        assert_eq!(err.category(), "insufficient_data");
    }
}
