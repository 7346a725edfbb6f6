//! Per-triplet score rows and their CSV/JSON encodings.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::fmt_f64;
use crate::config::Units;
use crate::info::shannon_entropy;
use crate::model::{QcaTriplet, TransitionMatrix};
use crate::sep_solver::SepResult;
use crate::sf_solver::SfResult;

/// One scored triplet. Entropy-like columns are in `units`; `d_min` and
/// `f_s` are always computed in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    pub h_q: f64,
    pub h_c: f64,
    pub h_a: f64,
    pub s_dot: f64,
    pub d_min: f64,
    pub f_s: f64,
    pub sep: f64,
    pub s_m: f64,
    pub naive_sep: f64,
    pub first_order_sep: f64,
    pub outer_iters: usize,
    pub residual: f64,
    pub d_forward_reverse: f64,
    pub cache_hit: bool,
}

impl ReportRow {
    pub fn new(t: &QcaTriplet, sf: &SfResult, sep: &SepResult) -> Self {
        let units = sep.units;
        Self {
            id: t.id.clone(),
            h_q: shannon_entropy(&t.p_q, units),
            h_c: shannon_entropy(&t.p_c, units),
            h_a: shannon_entropy(&t.p_a, units),
            s_dot: sep.s_system,
            d_min: sf.d_min,
            f_s: sf.f_s,
            sep: sep.sep_total,
            s_m: sep.s_medium,
            naive_sep: sep.naive_sep,
            first_order_sep: sep.first_order_sep,
            outer_iters: sf.outer_iters,
            residual: sf.constraint_residual,
            d_forward_reverse: sep.d_forward_reverse,
            cache_hit: false,
        }
    }

    pub fn csv_header(units: Units) -> Vec<String> {
        let u = units.label();
        vec![
            "id".into(),
            format!("H_Q_{u}"),
            format!("H_C_{u}"),
            format!("H_A_{u}"),
            format!("S_dot_{u}"),
            "D_min_nats".into(),
            "F_S".into(),
            format!("SEP_{u}"),
            format!("S_m_{u}"),
            format!("naive_SEP_{u}"),
            format!("first_order_SEP_{u}"),
            "outer_iters".into(),
            "residual".into(),
            format!("D_fwd_rev_{u}"),
            "cache_hit".into(),
        ]
    }

    pub fn csv_record(&self) -> Vec<String> {
        let mut rec = vec![self.id.clone()];
        rec.extend(
            [
                self.h_q,
                self.h_c,
                self.h_a,
                self.s_dot,
                self.d_min,
                self.f_s,
                self.sep,
                self.s_m,
                self.naive_sep,
                self.first_order_sep,
            ]
            .map(fmt_f64),
        );
        rec.push(self.outer_iters.to_string());
        rec.push(fmt_f64(self.residual));
        rec.push(fmt_f64(self.d_forward_reverse));
        rec.push(self.cache_hit.to_string());
        rec
    }
}

/// Optimal matrices of one triplet, as nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrices {
    pub q_star: Vec<Vec<f64>>,
    pub a_star: Vec<Vec<f64>>,
    pub a_reverse: Vec<Vec<f64>>,
}

impl Matrices {
    pub fn new(
        q_star: &TransitionMatrix,
        a_star: &TransitionMatrix,
        a_reverse: &TransitionMatrix,
    ) -> Self {
        Self {
            q_star: q_star.to_rows(),
            a_star: a_star.to_rows(),
            a_reverse: a_reverse.to_rows(),
        }
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    units: Units,
    d_min_units: Units,
    rows: &'a [ReportRow],
}

pub fn write_csv<W: Write>(out: W, units: Units, rows: &[ReportRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ReportRow::csv_header(units))?;
    for row in rows {
        w.write_record(row.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(mut out: W, units: Units, rows: &[ReportRow]) -> std::io::Result<()> {
    let report = JsonReport {
        units,
        d_min_units: Units::Nats,
        rows,
    };
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()
}
