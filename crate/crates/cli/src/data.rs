//! Strict CSV ingestion: wide series panels and long-format flow tables.
//!
//! Every failure names the offending row and column. Timestamps must be
//! strictly increasing and equally spaced — the filters index time by row,
//! so an uneven grid would silently misalign discounting.

use std::path::Path;

use ndarray::{Array1, Array2};

use recouple_core::netflow::FlowRecord;

use crate::error::{CliError, Result};

/// A wide panel: `values[[t, j]]` is series `j` (config order) at row `t`.
#[derive(Debug, Clone)]
pub struct Panel {
    pub timestamps: Vec<f64>,
    pub values: Array2<f64>,
}

impl Panel {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn row(&self, t: usize) -> Array1<f64> {
        self.values.row(t).to_owned()
    }

    /// Reinterpret the panel as counts; every cell must be a nonnegative
    /// integer.
    pub fn to_counts(&self, names: &[String]) -> Result<Vec<Vec<u64>>> {
        let mut out = Vec::with_capacity(self.len());
        for t in 0..self.len() {
            let mut row = Vec::with_capacity(names.len());
            for (j, name) in names.iter().enumerate() {
                let v = self.values[[t, j]];
                if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
                    return Err(CliError::data(format!(
                        "row {}, column \"{name}\": count data must be nonnegative integers, got {v}",
                        t + 1
                    )));
                }
                row.push(v as u64);
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// Check a timestamp grid: strictly increasing, equally spaced.
fn check_grid(timestamps: &[f64], what: &str) -> Result<()> {
    for (i, w) in timestamps.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(CliError::data(format!(
                "{what}: timestamps must be strictly increasing, but row {} has t = {} after t = {}",
                i + 2,
                w[1],
                w[0]
            )));
        }
    }
    if timestamps.len() >= 3 {
        let dt = timestamps[1] - timestamps[0];
        let tol = 1e-9 * dt.abs().max(1.0);
        for (i, w) in timestamps.windows(2).enumerate().skip(1) {
            if ((w[1] - w[0]) - dt).abs() > tol {
                return Err(CliError::data(format!(
                    "{what}: timestamps must be equally spaced, but the step into row {} is {} (expected {dt})",
                    i + 2,
                    w[1] - w[0]
                )));
            }
        }
    }
    Ok(())
}

/// Read a wide panel and reorder its columns to `names` order. The file must
/// contain a leading timestamp column plus exactly the configured series.
pub fn read_wide_panel(path: &Path, names: &[String]) -> Result<Panel> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{display}: {e}")))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| CliError::data(format!("{display}: {e}")))?
            .iter()
            .map(|h| h.to_string())
            .collect();
    if headers.len() < 2 {
        return Err(CliError::data(format!(
            "{display}: a wide panel needs a timestamp column plus at least one series column"
        )));
    }
    let data_cols = &headers[1..];
    for name in names {
        if !data_cols.iter().any(|c| c == name) {
            return Err(CliError::data(format!(
                "{display}: configured series \"{name}\" has no column (columns: {})",
                data_cols.join(", ")
            )));
        }
    }
    for col in data_cols {
        if !names.iter().any(|n| n == col) {
            return Err(CliError::data(format!(
                "{display}: column \"{col}\" matches no configured series"
            )));
        }
    }
    // Column position of each configured series.
    let positions: Vec<usize> = names
        .iter()
        .map(|n| headers.iter().position(|h| h == n).expect("presence checked above"))
        .collect();

    let mut timestamps = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| CliError::data(format!("{display}: {e}")))?;
        if record.len() != headers.len() {
            return Err(CliError::data(format!(
                "{display}: row {row_no} has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        let parse = |idx: usize| -> Result<f64> {
            let raw = &record[idx];
            let v: f64 = raw.parse().map_err(|_| {
                CliError::data(format!(
                    "{display}: row {row_no}, column \"{}\": cannot parse \"{raw}\" as a number",
                    headers[idx]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::data(format!(
                    "{display}: row {row_no}, column \"{}\": non-finite value \"{raw}\"",
                    headers[idx]
                )));
            }
            Ok(v)
        };
        timestamps.push(parse(0)?);
        let mut row = Vec::with_capacity(names.len());
        for &pos in &positions {
            row.push(parse(pos)?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{display}: no data rows")));
    }
    check_grid(&timestamps, &display)?;
    let q = names.len();
    let values =
        Array2::from_shape_fn((rows.len(), q), |(t, j)| rows[t][j]);
    Ok(Panel { timestamps, values })
}

/// A long-format flow table: validated records with timestamps mapped to
/// consecutive period indices.
#[derive(Debug, Clone)]
pub struct FlowTable {
    pub records: Vec<FlowRecord>,
    pub periods: usize,
}

/// Read a long flow table with columns `t,from,to,count`. Node 0 is the
/// outside world; real nodes are 1..=`nodes`. Rows must be grouped by
/// nondecreasing timestamp; every distinct timestamp becomes one period.
pub fn read_flow_table(path: &Path, nodes: usize) -> Result<FlowTable> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{display}: {e}")))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| CliError::data(format!("{display}: {e}")))?
            .iter()
            .map(|h| h.to_string())
            .collect();
    let expected = ["t", "from", "to", "count"];
    if headers != expected {
        return Err(CliError::data(format!(
            "{display}: a flow table's header must be \"t,from,to,count\", got \"{}\"",
            headers.join(",")
        )));
    }

    let mut timestamps: Vec<f64> = Vec::new();
    let mut records = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| CliError::data(format!("{display}: {e}")))?;
        if record.len() != 4 {
            return Err(CliError::data(format!(
                "{display}: row {row_no} has {} fields, expected 4",
                record.len()
            )));
        }
        let t: f64 = record[0].parse().map_err(|_| {
            CliError::data(format!(
                "{display}: row {row_no}, column \"t\": cannot parse \"{}\" as a number",
                &record[0]
            ))
        })?;
        if !t.is_finite() {
            return Err(CliError::data(format!(
                "{display}: row {row_no}, column \"t\": non-finite timestamp"
            )));
        }
        let node = |idx: usize, name: &str| -> Result<usize> {
            let v: usize = record[idx].parse().map_err(|_| {
                CliError::data(format!(
                    "{display}: row {row_no}, column \"{name}\": cannot parse \"{}\" as a node id",
                    &record[idx]
                ))
            })?;
            if v > nodes {
                return Err(CliError::data(format!(
                    "{display}: row {row_no}, column \"{name}\": node {v} outside 0..={nodes}"
                )));
            }
            Ok(v)
        };
        let from = node(1, "from")?;
        let to = node(2, "to")?;
        let count: i64 = record[3].parse().map_err(|_| {
            CliError::data(format!(
                "{display}: row {row_no}, column \"count\": cannot parse \"{}\" as an integer",
                &record[3]
            ))
        })?;
        if count < 0 {
            return Err(CliError::data(format!(
                "{display}: row {row_no}, column \"count\": negative count {count}"
            )));
        }

        let period = match timestamps.last() {
            None => {
                timestamps.push(t);
                0
            }
            Some(&last) if t == last => timestamps.len() - 1,
            Some(&last) if t > last => {
                timestamps.push(t);
                timestamps.len() - 1
            }
            Some(&last) => {
                return Err(CliError::data(format!(
                    "{display}: row {row_no}: timestamp {t} after {last}; rows must be grouped by nondecreasing t"
                )));
            }
        };
        records.push(FlowRecord { t: period, from, to, count: count as u64 });
    }
    if records.is_empty() {
        return Err(CliError::data(format!("{display}: no data rows")));
    }
    check_grid(&timestamps, &display)?;
    Ok(FlowTable { records, periods: timestamps.len() })
}
