//! CSV logs: distortion records, training progress and histograms.

use std::path::Path;

use deeptwist_core::lowrank::Histogram;
use deeptwist_core::trainer::{DistortionRecord, ProgressRecord};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const METRICS_HEADER: [&str; 8] = ["step", "epoch", "lr", "loss_pre", "loss_post", "rel_loss_jump", "delta_w", "test_acc"];
pub const PROGRESS_HEADER: [&str; 5] = ["step", "epoch", "lr", "loss", "test_acc"];
pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_lo", "bin_hi", "count"];

/// Nine significant digits, plain notation when the exponent is moderate.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let s = format!("{:.*}", (8 - exp).max(0) as usize, v);
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
        s.to_string()
    } else {
        format!("{v:.8e}")
    }
}

fn csv_bytes<const N: usize>(header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn metrics_csv(log: &[DistortionRecord]) -> Result<Vec<u8>> {
    csv_bytes(
        METRICS_HEADER,
        log.iter().map(|r| {
            [
                r.step.to_string(),
                r.epoch.to_string(),
                sig9(r.lr),
                sig9(r.loss_pre),
                sig9(r.loss_post),
                sig9(r.rel_loss_jump),
                sig9(r.delta_w),
                sig9(r.test_acc),
            ]
        }),
    )
}

pub fn write_metrics(log: &[DistortionRecord], path: &Path) -> Result<()> {
    write_atomic(path, &metrics_csv(log)?)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::format(line, format!("line {line}: bad value in column {i}")))
}

/// Parses a metrics CSV back. Format error offsets are line numbers.
pub fn read_metrics(bytes: &[u8]) -> Result<Vec<DistortionRecord>> {
    let mut r = csv::Reader::from_reader(bytes);
    if r.headers()?.iter().ne(METRICS_HEADER) {
        return Err(Error::format(0, "unexpected metrics header"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        out.push(DistortionRecord {
            step: field(&rec, 0, line)?,
            epoch: field(&rec, 1, line)?,
            lr: field(&rec, 2, line)?,
            loss_pre: field(&rec, 3, line)?,
            loss_post: field(&rec, 4, line)?,
            rel_loss_jump: field(&rec, 5, line)?,
            delta_w: field(&rec, 6, line)?,
            test_acc: field(&rec, 7, line)?,
        });
    }
    Ok(out)
}

pub fn write_progress(log: &[ProgressRecord], path: &Path) -> Result<()> {
    let bytes = csv_bytes(
        PROGRESS_HEADER,
        log.iter()
            .map(|r| [r.step.to_string(), r.epoch.to_string(), sig9(r.lr), sig9(r.loss), sig9(r.test_acc)]),
    )?;
    write_atomic(path, &bytes)
}

pub fn write_histogram(h: &Histogram, path: &Path) -> Result<()> {
    let bytes = csv_bytes(
        HISTOGRAM_HEADER,
        h.bins().map(|(lo, hi, n)| [sig9(lo), sig9(hi), n.to_string()]),
    )?;
    write_atomic(path, &bytes)
}
