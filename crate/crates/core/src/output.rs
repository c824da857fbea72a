//! Result tables in CSV or JSON and the run manifest.
//!
//! Floats are written with 17 significant digits, so a CSV round trip
//! reproduces every value bit for bit. Non-finite values appear as `inf`,
//! `-inf` or `NaN` in CSV and as the same strings in JSON.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ConfigFile;
use crate::error::{Error, Result};
use crate::scaling::{ScalingRow, SweepMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn to_csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Float(v) if v.is_finite() => Value::from(*v),
            Cell::Float(v) => Value::from(format_float(*v)),
            Cell::Text(s) => Value::from(s.clone()),
        }
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// A row with a fixed column order.
pub trait Record {
    fn header() -> &'static [&'static str];
    fn cells(&self) -> Vec<Cell>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutsetRecord {
    pub n: usize,
    pub f_khz: f64,
    pub ln_a: f64,
    pub ln_noise: f64,
    pub alpha: f64,
    pub sum_d_ln: f64,
    pub mc_logdet_bits: f64,
    pub trace_bound_bits: f64,
    pub sv_estimate: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Record for CutsetRecord {
    fn header() -> &'static [&'static str] {
        &[
            "n",
            "f_khz",
            "ln_a",
            "ln_N",
            "alpha",
            "sum_dL_ln",
            "mc_logdet_bits",
            "trace_bound_bits",
            "sv_estimate",
            "trials",
            "seed",
        ]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Int(self.n as u64),
            Cell::Float(self.f_khz),
            Cell::Float(self.ln_a),
            Cell::Float(self.ln_noise),
            Cell::Float(self.alpha),
            Cell::Float(self.sum_d_ln),
            Cell::Float(self.mc_logdet_bits),
            Cell::Float(self.trace_bound_bits),
            Cell::Float(self.sv_estimate),
            Cell::Int(self.trials as u64),
            Cell::Int(self.seed),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhRecord {
    pub n: usize,
    pub placement: String,
    pub f_khz: f64,
    pub mode: String,
    pub duty_ln: f64,
    pub per_pair_rate_bits: f64,
    pub active_sources: f64,
    pub total_bits: f64,
    pub unroutable_fraction: f64,
    pub seed: u64,
    /// `log₂` of the total, usable when `total_bits` underflows.
    pub total_log2: f64,
    pub max_hop_distance: f64,
}

impl Record for MhRecord {
    fn header() -> &'static [&'static str] {
        &[
            "n",
            "placement",
            "f_khz",
            "mode",
            "duty_ln",
            "per_pair_rate_bits",
            "active_sources",
            "total_bits",
            "unroutable_fraction",
            "seed",
            "total_log2",
            "max_hop_distance",
        ]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Int(self.n as u64),
            Cell::Text(self.placement.clone()),
            Cell::Float(self.f_khz),
            Cell::Text(self.mode.clone()),
            Cell::Float(self.duty_ln),
            Cell::Float(self.per_pair_rate_bits),
            Cell::Float(self.active_sources),
            Cell::Float(self.total_bits),
            Cell::Float(self.unroutable_fraction),
            Cell::Int(self.seed),
            Cell::Float(self.total_log2),
            Cell::Float(self.max_hop_distance),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRecord {
    pub f_khz: f64,
    pub r: f64,
    pub absorption_db_per_km: f64,
    pub ln_a: f64,
    pub noise_db: f64,
    pub attenuation_ln: f64,
}

impl Record for ChannelRecord {
    fn header() -> &'static [&'static str] {
        &["f_khz", "r", "absorption_db_per_km", "ln_a", "noise_db", "attenuation_ln"]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Float(self.f_khz),
            Cell::Float(self.r),
            Cell::Float(self.absorption_db_per_km),
            Cell::Float(self.ln_a),
            Cell::Float(self.noise_db),
            Cell::Float(self.attenuation_ln),
        ]
    }
}

/// Failed sweep rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureRecord {
    pub n: usize,
    pub mode: String,
    pub error: String,
}

impl Record for FailureRecord {
    fn header() -> &'static [&'static str] {
        &["n", "mode", "error"]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Int(self.n as u64),
            Cell::Text(self.mode.clone()),
            Cell::Text(self.error.clone()),
        ]
    }
}

impl CutsetRecord {
    pub fn from_row(row: &ScalingRow) -> Option<Self> {
        let c = row.cutset.as_ref()?;
        Some(CutsetRecord {
            n: row.n,
            f_khz: row.f_khz,
            ln_a: row.ln_a,
            ln_noise: row.ln_noise,
            alpha: row.alpha,
            sum_d_ln: c.sum_d_ln.ln(),
            mc_logdet_bits: c.mc_logdet_bits,
            trace_bound_bits: c.trace_bound_bits,
            sv_estimate: c.sv_estimate,
            trials: c.trials,
            seed: row.seed,
        })
    }
}

impl MhRecord {
    pub fn from_row(row: &ScalingRow) -> Option<Self> {
        let m = row.mh.as_ref()?;
        let (placement, mode) = match row.mode {
            SweepMode::MhRegular => ("regular", "regular_analytic"),
            SweepMode::MhRegularSim => ("regular", "regular_simulated"),
            SweepMode::MhRandom => ("random", "random_simulated"),
            SweepMode::Cutset => return None,
        };
        Some(MhRecord {
            n: row.n,
            placement: placement.into(),
            f_khz: row.f_khz,
            mode: mode.into(),
            duty_ln: m.duty_ln.ln(),
            per_pair_rate_bits: m.per_pair_rate.exp(),
            active_sources: m.active_sources,
            total_bits: m.total.exp(),
            unroutable_fraction: m.unroutable_fraction,
            seed: row.seed,
            total_log2: m.total.log2(),
            max_hop_distance: m.max_hop_distance,
        })
    }
}

/// Writes records one at a time, flushing after each so partial results
/// survive an interrupted run.
pub struct TableWriter<R: Record> {
    path: PathBuf,
    format: Format,
    out: BufWriter<File>,
    rows: usize,
    _record: std::marker::PhantomData<R>,
}

impl<R: Record> TableWriter<R> {
    pub fn create(path: &Path, format: Format) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = TableWriter {
            path: path.to_path_buf(),
            format,
            out: BufWriter::new(file),
            rows: 0,
            _record: std::marker::PhantomData,
        };
        match format {
            Format::Csv => {
                let line = csv_line(R::header().iter().map(|s| s.to_string()));
                w.write_raw(&line)?;
            }
            Format::Json => w.write_raw("[")?,
        }
        Ok(w)
    }

    fn write_raw(&mut self, s: &str) -> Result<()> {
        self.out
            .write_all(s.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn write(&mut self, record: &R) -> Result<()> {
        let text = match self.format {
            Format::Csv => csv_line(record.cells().iter().map(Cell::to_csv)),
            Format::Json => {
                let sep = if self.rows == 0 { "\n" } else { ",\n" };
                format!("{sep}{}", json_object::<R>(record))
            }
        };
        self.rows += 1;
        self.write_raw(&text)
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        if self.format == Format::Json {
            let end = if self.rows == 0 { "]\n" } else { "\n]\n" };
            self.write_raw(end)?;
        }
        Ok(self.path)
    }
}

fn csv_line(fields: impl Iterator<Item = String>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(fields).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("fields are UTF-8")
}

fn json_object<R: Record>(record: &R) -> String {
    let map: serde_json::Map<String, Value> = R::header()
        .iter()
        .zip(record.cells())
        .map(|(k, c)| (k.to_string(), c.to_json()))
        .collect();
    // keep the column order rather than the map's sorted order
    let fields: Vec<String> = R::header()
        .iter()
        .map(|k| format!("{}:{}", Value::from(*k), map[*k]))
        .collect();
    format!("{{{}}}", fields.join(","))
}

/// Writes all `records` to `path` in one go.
pub fn emit_results<R: Record>(records: &[R], format: Format, path: &Path) -> Result<()> {
    let mut w = TableWriter::<R>::create(path, format)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

/// The CSV text [`emit_results`] would write.
pub fn csv_string<R: Record>(records: &[R]) -> String {
    let mut out = csv_line(R::header().iter().map(|s| s.to_string()));
    for r in records {
        out.push_str(&csv_line(r.cells().iter().map(Cell::to_csv)));
    }
    out
}

/// The JSON text [`emit_results`] would write.
pub fn json_string<R: Record>(records: &[R]) -> String {
    if records.is_empty() {
        return "[]\n".to_string();
    }
    let rows: Vec<String> = records.iter().map(json_object::<R>).collect();
    format!("[\n{}\n]\n", rows.join(",\n"))
}

/// Parses a CSV written by [`TableWriter`] into its header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_error(path, e))?;
    Ok((header, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: malformed CSV: {other:?}", path.display())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub command: String,
    pub outputs: Vec<String>,
    pub config: ConfigFile,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
