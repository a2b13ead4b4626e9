//! Report records and their CSV / JSON-lines serialization.
//!
//! A run emits one flat stream of typed records; the `record` field names
//! the type. Every record carries `(run_id, seed, config_hash)` so any row
//! cut out of a report can be traced back to the exact run that produced
//! it. CSV output uses a fixed column set chosen by the command (union of
//! the record types it can emit); JSON-lines output omits absent fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::hex_prefix;
use crate::error::{CliError, Result};

/// Identity stamped on every record of a run.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub run_id: String,
    pub seed: u64,
    pub config_hash: String,
}

impl RunMeta {
    /// Derive the run id from the effective configuration and the raw data
    /// bytes: equal inputs give equal ids, so reruns are recognizable.
    pub fn derive(canonical_config: &str, config_hash: &str, seed: u64, data: &[u8]) -> RunMeta {
        let mut h = Sha256::new();
        h.update(canonical_config.as_bytes());
        h.update([0u8]);
        h.update(seed.to_le_bytes());
        h.update([0u8]);
        h.update(data);
        let run_id = hex_prefix(&h.finalize(), 12);
        RunMeta { run_id, seed, config_hash: config_hash.to_string() }
    }
}

/// One report row. Which optional fields are set depends on `record`:
/// `step` (one-step filtering), `path` (multi-step forecast quantiles),
/// `sample` (raw forecast draws), `score` (model comparison), `flow`
/// (per-pair network filtering), `gravity` (per-node flow decomposition).
#[derive(Debug, Clone, Serialize, Default)]
pub struct Record {
    pub record: &'static str,
    pub run_id: String,
    pub seed: u64,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub to: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draw: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spread: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dof: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q05: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q25: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q50: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q75: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q95: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_index: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_lik: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cum_log_lik: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discounted_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intervened: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub destination: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
}

impl Record {
    /// Fresh record of the given type stamped with the run identity.
    pub fn new(kind: &'static str, meta: &RunMeta) -> Record {
        Record {
            record: kind,
            run_id: meta.run_id.clone(),
            seed: meta.seed,
            config_hash: meta.config_hash.clone(),
            ..Record::default()
        }
    }

    fn field(&self, name: &str) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(T::to_string).unwrap_or_default()
        }
        match name {
            "record" => self.record.to_string(),
            "run_id" => self.run_id.clone(),
            "seed" => self.seed.to_string(),
            "config_hash" => self.config_hash.clone(),
            "t" => opt(&self.t),
            "h" => opt(&self.h),
            "series" => opt(&self.series),
            "model" => opt(&self.model),
            "from" => opt(&self.from),
            "to" => opt(&self.to),
            "node" => opt(&self.node),
            "draw" => opt(&self.draw),
            "y" => opt(&self.y),
            "mean" => opt(&self.mean),
            "spread" => opt(&self.spread),
            "dof" => opt(&self.dof),
            "q05" => opt(&self.q05),
            "q25" => opt(&self.q25),
            "q50" => opt(&self.q50),
            "q75" => opt(&self.q75),
            "q95" => opt(&self.q95),
            "value" => opt(&self.value),
            "pit" => opt(&self.pit),
            "log_score" => opt(&self.log_score),
            "ess" => opt(&self.ess),
            "entropy_index" => opt(&self.entropy_index),
            "log_lik" => opt(&self.log_lik),
            "cum_log_lik" => opt(&self.cum_log_lik),
            "discounted_score" => opt(&self.discounted_score),
            "probability" => opt(&self.probability),
            "log_l" => opt(&self.log_l),
            "run_length" => opt(&self.run_length),
            "signal" => opt(&self.signal),
            "intervened" => opt(&self.intervened),
            "origin" => opt(&self.origin),
            "destination" => opt(&self.destination),
            "intensity" => opt(&self.intensity),
            other => panic!("unknown report column {other}"),
        }
    }
}

/// Column sets per command (identity columns first).
pub mod columns {
    pub const IDENTITY: [&str; 4] = ["record", "run_id", "seed", "config_hash"];

    pub fn fit() -> Vec<&'static str> {
        let mut c = IDENTITY.to_vec();
        c.extend([
            "t", "series", "y", "mean", "spread", "dof", "q05", "q25", "q50", "q75", "q95",
            "pit", "log_score", "ess", "entropy_index",
        ]);
        c
    }

    pub fn forecast(raw_samples: bool) -> Vec<&'static str> {
        let mut c = IDENTITY.to_vec();
        c.extend(["h", "series", "mean", "q05", "q25", "q50", "q75", "q95"]);
        if raw_samples {
            c.extend(["draw", "value"]);
        }
        c
    }

    pub fn compare() -> Vec<&'static str> {
        let mut c = IDENTITY.to_vec();
        c.extend(["t", "model", "log_lik", "cum_log_lik", "discounted_score", "probability"]);
        c
    }

    pub fn netflow() -> Vec<&'static str> {
        let mut c = IDENTITY.to_vec();
        c.extend([
            "t", "from", "to", "y", "mean", "log_score", "log_l", "run_length", "signal",
            "intervened", "node", "origin", "destination", "intensity",
        ]);
        c
    }
}

/// Output encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

/// Streaming report writer: records go out as they are produced, so memory
/// stays flat in the series length.
pub struct ReportWriter {
    format: Format,
    columns: Vec<&'static str>,
    csv: Option<csv::Writer<Box<dyn Write>>>,
    jsonl: Option<Box<dyn Write>>,
}

impl ReportWriter {
    pub fn new(
        out: Option<&Path>,
        format: Format,
        columns: Vec<&'static str>,
    ) -> Result<ReportWriter> {
        let sink: Box<dyn Write> = match out {
            Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| {
                CliError::Io(format!("cannot create {}: {e}", path.display()))
            })?)),
            None => Box::new(BufWriter::new(std::io::stdout())),
        };
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(sink);
                w.write_record(&columns)
                    .map_err(|e| CliError::Io(format!("writing header: {e}")))?;
                Ok(ReportWriter { format, columns, csv: Some(w), jsonl: None })
            }
            Format::Jsonl => Ok(ReportWriter { format, columns, csv: None, jsonl: Some(sink) }),
        }
    }

    pub fn write(&mut self, record: &Record) -> Result<()> {
        match self.format {
            Format::Csv => {
                let w = self.csv.as_mut().expect("csv writer present");
                let fields: Vec<String> =
                    self.columns.iter().map(|c| record.field(c)).collect();
                w.write_record(&fields)
                    .map_err(|e| CliError::Io(format!("writing record: {e}")))
            }
            Format::Jsonl => {
                let w = self.jsonl.as_mut().expect("jsonl writer present");
                let line = serde_json::to_string(record)
                    .map_err(|e| CliError::Io(format!("encoding record: {e}")))?;
                writeln!(w, "{line}").map_err(|e| CliError::Io(format!("writing record: {e}")))
            }
        }
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(w) = self.csv.as_mut() {
            w.flush().map_err(|e| CliError::Io(format!("flushing report: {e}")))?;
        }
        if let Some(w) = self.jsonl.as_mut() {
            w.flush().map_err(|e| CliError::Io(format!("flushing report: {e}")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_id_is_deterministic_and_input_sensitive() {
        let a = RunMeta::derive("{\"v\":1}", "abc", 7, b"data");
        let b = RunMeta::derive("{\"v\":1}", "abc", 7, b"data");
        assert_eq!(a.run_id, b.run_id);
        let c = RunMeta::derive("{\"v\":1}", "abc", 8, b"data");
        assert_ne!(a.run_id, c.run_id);
        let d = RunMeta::derive("{\"v\":1}", "abc", 7, b"other");
        assert_ne!(a.run_id, d.run_id);
        assert_eq!(a.run_id.len(), 12);
    }

    #[test]
    fn csv_row_respects_column_order_and_blanks() {
        let meta = RunMeta { run_id: "r".into(), seed: 1, config_hash: "h".into() };
        let mut rec = Record::new("step", &meta);
        rec.t = Some(3);
        rec.y = Some(1.5);
        assert_eq!(rec.field("record"), "step");
        assert_eq!(rec.field("t"), "3");
        assert_eq!(rec.field("y"), "1.5");
        assert_eq!(rec.field("pit"), "");
    }

    #[test]
    fn jsonl_omits_absent_fields() {
        let meta = RunMeta { run_id: "r".into(), seed: 1, config_hash: "h".into() };
        let mut rec = Record::new("path", &meta);
        rec.h = Some(2);
        rec.mean = Some(0.25);
        let line = serde_json::to_string(&rec).unwrap();
        assert!(line.contains("\"h\":2"), "{line}");
        assert!(!line.contains("pit"), "{line}");
    }
}
