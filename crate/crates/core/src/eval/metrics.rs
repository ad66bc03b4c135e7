use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportFormat {
    Csv,
    JsonLines,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json-lines" | "jsonl" => Ok(ExportFormat::JsonLines),
            other => Err(Error::Config(format!("unknown export format `{other}` (csv, json-lines)"))),
        }
    }
}

/// One evaluation point of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    /// Mean training loss since the previous record; unset before learning starts.
    pub loss: Option<f64>,
    pub epsilon: f64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Learned quantile std at each probe state (chain only).
    pub probe_state_std: Vec<f64>,
    pub wall_clock_secs: f64,
    pub seed: u64,
    pub agent: String,
    /// Set on a diagnostic record, e.g. when a seed was aborted.
    pub note: Option<String>,
}

impl MetricsRecord {
    pub fn is_diagnostic(&self) -> bool {
        self.note.is_some()
    }
}

const FIXED_COLUMNS: [&str; 8] = [
    "step",
    "loss",
    "epsilon",
    "eval_return_mean",
    "eval_return_std",
    "success_rate",
    "collision_rate",
    "timeout_rate",
];
const TRAILING_COLUMNS: [&str; 4] = ["wall_clock_secs", "seed", "agent", "note"];

pub fn csv_header(probe_count: usize) -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..probe_count).map(|i| format!("probe_state_std_{i}")))
        .chain(TRAILING_COLUMNS.iter().map(|s| s.to_string()))
        .collect()
}

fn csv_row(r: &MetricsRecord, probe_count: usize) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut row = vec![
        r.step.to_string(),
        opt(r.loss),
        r.epsilon.to_string(),
        r.eval_return_mean.to_string(),
        r.eval_return_std.to_string(),
        r.success_rate.to_string(),
        r.collision_rate.to_string(),
        r.timeout_rate.to_string(),
    ];
    row.extend((0..probe_count).map(|i| opt(r.probe_state_std.get(i).copied())));
    row.push(r.wall_clock_secs.to_string());
    row.push(r.seed.to_string());
    row.push(r.agent.clone());
    row.push(r.note.clone().unwrap_or_default());
    row
}

/// Writes `records` to `path`, replacing any existing file.
pub fn export(records: &[MetricsRecord], format: ExportFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        ExportFormat::Csv => {
            let probes = records.iter().map(|r| r.probe_state_std.len()).max().unwrap_or(0);
            let mut w = csv::Writer::from_writer(file);
            let csv_err = |e: csv::Error| Error::parse(path, e);
            w.write_record(csv_header(probes)).map_err(csv_err)?;
            for r in records {
                w.write_record(csv_row(r, probes)).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        ExportFormat::JsonLines => {
            let mut w = std::io::BufWriter::new(file);
            for r in records {
                let line = serde_json::to_string(r).map_err(|e| Error::parse(path, e))?;
                writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

pub fn read_json_lines(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Append-only JSON-lines sink; each record is flushed as it is written.
pub struct MetricsLog {
    file: File,
    path: std::path::PathBuf,
}

impl MetricsLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, record: &MetricsRecord) -> Result<()> {
        let mut line = serde_json::to_string(record).map_err(|e| Error::parse(&self.path, e))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
