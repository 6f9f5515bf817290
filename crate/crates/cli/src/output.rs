//! CSV artifacts. Every file starts with its header, even when empty.

use std::path::Path;

use anyhow::Context;
use ddrhc_core::comm::{TraceRecord, WindowRecord};
use ddrhc_leo::scenario::{MetricsRow, WindowSummary};
use serde::Serialize;

pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
pub struct MetricsCsv {
    pub step: usize,
    pub t: f64,
    pub mae_a: f64,
    pub mae_e: f64,
    pub mae_i: f64,
    pub mae_u: f64,
    pub mae_raan: f64,
    pub mean_z_rel: f64,
    pub z_norm: f64,
    pub couplings: usize,
}

pub const METRICS_HEADER: &[&str] =
    &["step", "t", "mae_a", "mae_e", "mae_i", "mae_u", "mae_raan", "mean_z_rel", "z_norm", "couplings"];

impl From<&MetricsRow> for MetricsCsv {
    fn from(r: &MetricsRow) -> Self {
        let f = &r.fleet;
        Self {
            step: r.step,
            t: f.t,
            mae_a: f.mae_a,
            mae_e: f.mae_e,
            mae_i: f.mae_i,
            mae_u: f.mae_u,
            mae_raan: f.mae_raan,
            mean_z_rel: r.mean_z_rel,
            z_norm: r.z_norm,
            couplings: r.couplings,
        }
    }
}

pub const DETAIL_HEADER: &[&str] =
    &["step", "t", "sat", "a_error", "e", "i_error", "du", "draan", "thrust_t", "thrust_n", "thrust_w", "mass"];

#[derive(Serialize)]
pub struct TraceCsv {
    pub window: usize,
    pub round: usize,
    pub from: usize,
    pub to: usize,
    pub kind: String,
    pub bytes: usize,
}

pub const TRACE_HEADER: &[&str] = &["window", "round", "from", "to", "kind", "bytes"];

impl From<&TraceRecord> for TraceCsv {
    fn from(r: &TraceRecord) -> Self {
        Self { window: r.window, round: r.round, from: r.from, to: r.to, kind: r.kind.to_string(), bytes: r.bytes }
    }
}

#[derive(Serialize)]
pub struct WindowCsv {
    pub k: usize,
    pub start_time: f64,
    pub ready_time: f64,
    pub messages: usize,
    pub bytes: usize,
    pub max_sent_per_round: usize,
    pub max_received_per_round: usize,
    pub couplings: Option<usize>,
    pub dropped: Option<usize>,
    pub masked_pairs: Option<usize>,
    pub max_peak_bytes: Option<usize>,
}

pub const WINDOW_HEADER: &[&str] = &[
    "k",
    "start_time",
    "ready_time",
    "messages",
    "bytes",
    "max_sent_per_round",
    "max_received_per_round",
    "couplings",
    "dropped",
    "masked_pairs",
    "max_peak_bytes",
];

impl WindowCsv {
    pub fn new(w: &WindowRecord, summary: Option<&WindowSummary>) -> Self {
        Self {
            k: w.k,
            start_time: w.start_time,
            ready_time: w.ready_time,
            messages: w.messages,
            bytes: w.bytes,
            max_sent_per_round: w.max_sent_per_round,
            max_received_per_round: w.max_received_per_round,
            couplings: summary.map(|s| s.couplings),
            dropped: summary.map(|s| s.dropped),
            masked_pairs: summary.map(|s| s.masked_pairs),
            max_peak_bytes: summary.map(|s| s.max_peak_bytes),
        }
    }
}

#[derive(Serialize)]
pub struct NetworkMetricsCsv {
    pub step: usize,
    pub z_norm: f64,
    pub cost: f64,
}

pub const NETWORK_METRICS_HEADER: &[&str] = &["step", "z_norm", "cost"];

pub const RANGE_HEADER: &[&str] = &["range_m", "min", "max", "mean", "mean_within"];

pub const DURATION_HEADER: &[&str] = &["t", "sat", "neighbor", "duration", "capped"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramCsv {
    pub bin_start: f64,
    pub bin_end: f64,
    pub count: usize,
}

pub const HISTOGRAM_HEADER: &[&str] = &["bin_start", "bin_end", "count"];

pub const LOAD_HEADER: &[&str] = &[
    "sats",
    "max_in_degree",
    "max_sent_per_round",
    "max_received_per_round",
    "max_bytes_per_round",
    "max_peak_bytes",
    "messages",
];
