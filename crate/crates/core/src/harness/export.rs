use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsSummary;
use super::runner::RunResult;
use crate::detector::Thresholds;
use crate::grid_model::{SignalTrace, TraceBundle};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

/// CSV column order.
pub const CSV_COLUMNS: [&str; 10] = [
    "run_index",
    "seed",
    "alarm",
    "time_to_detect",
    "gain_stat",
    "var_stat",
    "spec_stat",
    "deception_rms",
    "regime_x_over_n",
    "regime_n_over_r",
];

/// One CSV row. The three statistics are block means on `channel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub run_index: u64,
    pub seed: u64,
    pub alarm: bool,
    pub time_to_detect: Option<usize>,
    pub gain_stat: f64,
    pub var_stat: f64,
    pub spec_stat: f64,
    pub deception_rms: f64,
    pub regime_x_over_n: Option<f64>,
    pub regime_n_over_r: Option<f64>,
}

impl CsvRow {
    pub fn from_result(r: &RunResult, channel: usize) -> Self {
        let s = r.mean_stats(channel);
        Self {
            run_index: r.run_index,
            seed: r.seed,
            alarm: r.report.alarm,
            time_to_detect: r.report.time_to_detect,
            gain_stat: s.gain,
            var_stat: s.band_variance,
            spec_stat: s.band_power,
            deception_rms: r.deception_rms,
            regime_x_over_n: r.regime.map(|g| g.x_over_n),
            regime_n_over_r: r.regime.map(|g| g.n_over_r),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// Writes per-run rows (CSV; statistics of `channel`) or the summary (JSON).
///
/// Floats use the shortest representation that parses back to the same
/// value, so a round trip is exact.
pub fn export_results(
    results: &[RunResult],
    summary: Option<&MetricsSummary>,
    channel: usize,
    format: ExportFormat,
    path: &Path,
) -> Result<()> {
    match format {
        ExportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(create(path)?);
            w.write_record(CSV_COLUMNS).map_err(|e| csv_err(path, e))?;
            let mut rows: Vec<CsvRow> = results.iter().map(|r| CsvRow::from_result(r, channel)).collect();
            rows.sort_by_key(|r| r.run_index);
            for row in &rows {
                w.serialize(row).map_err(|e| csv_err(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        ExportFormat::Json => {
            let summary =
                summary.ok_or_else(|| Error::contract("JSON export needs a metrics summary"))?;
            write_json(summary, path)
        }
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<CsvRow>, _>>()
        .map_err(|e| csv_err(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

pub fn read_summary(path: &Path) -> Result<MetricsSummary> {
    read_json(path)
}

pub fn save_thresholds(thresholds: &Thresholds, path: &Path) -> Result<()> {
    write_json(thresholds, path)
}

pub fn load_thresholds(path: &Path) -> Result<Thresholds> {
    read_json(path)
}

/// Columns of a plot-data file, in order.
///
/// Per channel `i`: `s{i}` genuine reading, `n{i}` the watermark image the
/// defender expects, `r{i} = s{i} - n{i}`. On an attacked channel also
/// `r{i}_fake`, `n{i}_extracted`, `k{i}` and `s{i}_fake` (the value on the
/// line), so that `s{i}_fake - r{i}_fake = k{i} * n{i}_extracted` row-wise.
pub fn plot_columns(
    bundle: &TraceBundle,
    templates: &[SignalTrace],
    channels: &[usize],
    from: usize,
) -> Result<Vec<(String, Vec<f64>)>> {
    let p = bundle.sensors.len();
    let horizon = bundle.horizon();
    if from >= horizon {
        return Err(Error::contract(format!("plot data starts at {from}, horizon is {horizon}")));
    }
    let mut cols = vec![(
        "t".to_string(),
        (from..horizon).map(|t| t as f64).collect::<Vec<_>>(),
    )];
    for &ch in channels {
        if ch >= p || ch >= templates.len() {
            return Err(Error::contract(format!("unknown channel {ch} (have {p})")));
        }
        let s = &bundle.sensors[ch].values()[from..];
        let n = &templates[ch].values()[from..];
        cols.push((format!("r{ch}"), s.iter().zip(n).map(|(s, n)| s - n).collect()));
        cols.push((format!("n{ch}"), n.to_vec()));
        cols.push((format!("s{ch}"), s.to_vec()));
        if let Some(a) = bundle.attack.as_ref().filter(|a| a.target == ch) {
            cols.push((format!("r{ch}_fake"), a.fake_regular[from..].to_vec()));
            cols.push((format!("n{ch}_extracted"), a.extracted[from..].to_vec()));
            cols.push((format!("k{ch}"), a.gain[from..].to_vec()));
            cols.push((format!("s{ch}_fake"), bundle.received[ch].values()[from..].to_vec()));
        }
    }
    Ok(cols)
}

/// Writes [`plot_columns`] as whitespace-separated text with a header line.
pub fn emit_plot_data(
    bundle: &TraceBundle,
    templates: &[SignalTrace],
    channels: &[usize],
    from: usize,
    path: &Path,
) -> Result<()> {
    let cols = plot_columns(bundle, templates, channels, from)?;
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let header: Vec<&str> = cols.iter().map(|(h, _)| h.as_str()).collect();
    writeln!(w, "{}", header.join(" ")).map_err(io)?;
    for row in 0..cols[0].1.len() {
        let line: Vec<String> = std::iter::once(format!("{}", cols[0].1[row] as usize))
            .chain(cols[1..].iter().map(|(_, v)| format!("{:?}", v[row])))
            .collect();
        writeln!(w, "{}", line.join(" ")).map_err(io)?;
    }
    w.flush().map_err(io)
}
