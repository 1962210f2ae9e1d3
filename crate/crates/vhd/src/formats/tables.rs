//! Line-oriented text outputs. Floats are printed with Rust's shortest
//! round-trip formatting, so parsing a written value gives the same bits.

use std::fmt::Write as _;
use std::path::Path;

use vhd_core::eval::ScoreTrack;
use vhd_core::train::LossRecord;

use super::{read_text, write_atomic};
use crate::error::{Result, VhdError};

pub const LOSS_LOG_HEADER: &str = "epoch,step,coarse,fine,distill,total,lr";
pub const SCORES_HEADER: &str = "video_id,segment_index,score";
pub const METRICS_HEADER: &str = "metric,category,value";
pub const SWEEP_HEADER: &str = "value,map";

/// One decimal score per line.
pub fn annotations_to_text(labels: &[f64]) -> String {
    let mut out = String::with_capacity(labels.len() * 4);
    for l in labels {
        writeln!(out, "{l}").unwrap();
    }
    out
}

pub fn parse_annotations(text: &str, origin: &Path) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let v: f64 = line
                .trim()
                .parse()
                .map_err(|_| VhdError::parse(origin, i + 1, format!("not a number: {line:?}")))?;
            if !v.is_finite() {
                return Err(VhdError::parse(origin, i + 1, "non-finite score"));
            }
            Ok(v)
        })
        .collect()
}

pub fn write_annotations(path: &Path, labels: &[f64]) -> Result<()> {
    write_atomic(path, annotations_to_text(labels).as_bytes())
}

pub fn load_annotations(path: &Path) -> Result<Vec<f64>> {
    parse_annotations(&read_text(path)?, path)
}

pub fn loss_log_to_text(log: &[LossRecord]) -> String {
    let mut out = format!("{LOSS_LOG_HEADER}\n");
    for r in log {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch, r.step, r.coarse, r.fine, r.distill, r.total, r.lr
        )
        .unwrap();
    }
    out
}

pub fn parse_loss_log(text: &str, origin: &Path) -> Result<Vec<LossRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == LOSS_LOG_HEADER => {}
        _ => return Err(VhdError::parse(origin, 1, "missing loss log header")),
    }
    lines
        .map(|(i, line)| {
            let bad = |what: &str| VhdError::parse(origin, i + 1, what.to_string());
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
            let real = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            Ok(LossRecord {
                epoch: int(f[0])?,
                step: int(f[1])?,
                coarse: real(f[2])?,
                fine: real(f[3])?,
                distill: real(f[4])?,
                total: real(f[5])?,
                lr: real(f[6])?,
            })
        })
        .collect()
}

pub fn write_loss_log(path: &Path, log: &[LossRecord]) -> Result<()> {
    write_atomic(path, loss_log_to_text(log).as_bytes())
}

pub fn load_loss_log(path: &Path) -> Result<Vec<LossRecord>> {
    parse_loss_log(&read_text(path)?, path)
}

pub fn scores_to_text(tracks: &[ScoreTrack]) -> String {
    let mut out = format!("{SCORES_HEADER}\n");
    for t in tracks {
        for (i, s) in t.scores.iter().enumerate() {
            writeln!(out, "{},{i},{s}", t.video_id).unwrap();
        }
    }
    out
}

/// A metrics report line.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub category: String,
    pub value: f64,
}

pub fn metrics_to_text(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.metric, r.category, r.value).unwrap();
    }
    out
}

pub fn parse_metrics(text: &str, origin: &Path) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRICS_HEADER => {}
        _ => return Err(VhdError::parse(origin, 1, "missing metrics header")),
    }
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let value = f.get(2).and_then(|v| v.parse().ok());
            match (f.len(), value) {
                (3, Some(value)) => Ok(MetricRow {
                    metric: f[0].into(),
                    category: f[1].into(),
                    value,
                }),
                _ => Err(VhdError::parse(origin, i + 1, "expected metric,category,value")),
            }
        })
        .collect()
}

pub fn sweep_to_text(rows: &[(f64, f64)]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for (v, m) in rows {
        writeln!(out, "{v},{m}").unwrap();
    }
    out
}
