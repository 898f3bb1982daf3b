//! Per-round metrics and their CSV form.
//!
//! One row per `(seed, round)`, columns in [`CSV_HEADER`] order. Floats are
//! written with 17 significant digits so a read-back is exact; an empty field
//! means the quantity is unknown for this objective or method.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "seed,round,loss,f_gap,grad_norm_sq,dist_sq,mean_client_err_sq,\
avg_err_sq,tilde_gap,uplink_bits_total,downlink_bits_total,cumulative_bits";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub seed: u64,
    pub round: usize,
    pub loss: f64,
    /// `f(w_t) − f*`
    pub f_gap: Option<f64>,
    /// `‖∇f(w_t)‖²`
    pub grad_norm_sq: f64,
    /// `‖w_t − w*‖²`
    pub dist_sq: Option<f64>,
    /// `(1/M) Σ ‖e_tⁱ‖²`
    pub mean_client_err_sq: f64,
    /// `‖(1/M) Σ e_tⁱ‖²`
    pub avg_err_sq: f64,
    /// `‖w̃_t − w_t‖`
    pub tilde_gap: Option<f64>,
    /// Traffic of the round that produced `w_t` (0 at `t = 0`).
    pub uplink_bits_total: u64,
    pub downlink_bits_total: u64,
    pub cumulative_bits: u64,
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

pub fn write_metrics_csv<'a, W: Write>(
    rows: impl IntoIterator<Item = &'a RoundMetrics>,
    mut out: W,
) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.round,
            float(r.loss),
            opt(r.f_gap),
            float(r.grad_norm_sq),
            opt(r.dist_sq),
            float(r.mean_client_err_sq),
            float(r.avg_err_sq),
            opt(r.tilde_gap),
            r.uplink_bits_total,
            r.downlink_bits_total,
            r.cumulative_bits
        )?;
    }
    Ok(())
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<RoundMetrics>> {
    let mut lines = BufReader::new(input).lines();
    match lines.next() {
        Some(Ok(h)) if h == CSV_HEADER => {}
        _ => return Err(Error::Csv("missing or unexpected header".into())),
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        let lineno = n + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(Error::Csv(format!("line {lineno}: expected 12 fields, got {}", f.len())));
        }
        let bad = |col: usize| Error::Csv(format!("line {lineno}: bad value {:?} in column {}", f[col], col + 1));
        let num = |col: usize| f[col].parse::<f64>().map_err(|_| bad(col));
        let maybe = |col: usize| -> Result<Option<f64>> {
            if f[col].is_empty() {
                Ok(None)
            } else {
                num(col).map(Some)
            }
        };
        let int = |col: usize| f[col].parse::<u64>().map_err(|_| bad(col));
        rows.push(RoundMetrics {
            seed: int(0)?,
            round: int(1)? as usize,
            loss: num(2)?,
            f_gap: maybe(3)?,
            grad_norm_sq: num(4)?,
            dist_sq: maybe(5)?,
            mean_client_err_sq: num(6)?,
            avg_err_sq: num(7)?,
            tilde_gap: maybe(8)?,
            uplink_bits_total: int(9)?,
            downlink_bits_total: int(10)?,
            cumulative_bits: int(11)?,
        });
    }
    Ok(rows)
}

/// Splits rows into per-seed series, seeds in first-appearance order.
pub fn group_by_seed(rows: Vec<RoundMetrics>) -> Vec<Vec<RoundMetrics>> {
    let mut out: Vec<Vec<RoundMetrics>> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|s| s[0].seed == r.seed) {
            Some(series) => series.push(r),
            None => out.push(vec![r]),
        }
    }
    out
}
