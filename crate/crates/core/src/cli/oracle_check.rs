use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use super::input::parse_triplet_file;
use super::{exit, fmt_f64, open_output, read_input, CliError, CliResult, Format, GlobalArgs};
use crate::config::{SolverConfig, Units};
use crate::model::QcaTriplet;
use crate::oracle::{grid_dmin_n2, pgd_dmin, pgd_sep, OracleConfig, MAX_ORACLE_TOPICS};
use crate::sep_solver::solve_sep;
use crate::sf_solver::solve_sf;

#[derive(Debug, Args)]
pub struct OracleCheckArgs {
    /// Triplet JSON file, or `-` for stdin.
    pub input: PathBuf,
    /// Largest accepted absolute difference between solver and oracle.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    /// Grid points per free parameter for two-topic triplets.
    #[arg(long, default_value_t = 1000)]
    pub grid_resolution: usize,
}

/// All values in nats.
#[derive(Debug, Serialize)]
struct CheckRow {
    id: String,
    n_topics: usize,
    d_min_solver: f64,
    d_min_oracle: f64,
    d_min_diff: f64,
    sep_solver: f64,
    sep_oracle: f64,
    sep_diff: f64,
    within_tol: bool,
}

fn check(
    t: &QcaTriplet,
    cfg: &SolverConfig,
    ocfg: &OracleConfig,
    tol: f64,
) -> crate::Result<CheckRow> {
    let sf = solve_sf(t, cfg)?;
    let sep = solve_sep(&sf, t, cfg)?;
    let d_oracle = if t.n_topics() == 2 {
        grid_dmin_n2(t, ocfg)?
    } else {
        pgd_dmin(t, ocfg)?
    };
    let sep_oracle = pgd_sep(&sf.a_star, &t.p_c, &t.p_a, ocfg)?;
    let d_min_diff = (sf.d_min - d_oracle).abs();
    let sep_diff = (sep.sep_total - sep_oracle).abs();
    Ok(CheckRow {
        id: t.id.clone(),
        n_topics: t.n_topics(),
        d_min_solver: sf.d_min,
        d_min_oracle: d_oracle,
        d_min_diff,
        sep_solver: sep.sep_total,
        sep_oracle,
        sep_diff,
        within_tol: d_min_diff <= tol && sep_diff <= tol,
    })
}

pub fn run(args: &OracleCheckArgs, global: &GlobalArgs) -> CliResult {
    let mut cfg = global.solver_config()?;
    cfg.report_units = Units::Nats;
    if !(args.tol >= 0.0) {
        return Err(CliError::usage(format!(
            "--tol must be non-negative, got {}",
            args.tol
        )));
    }
    if args.grid_resolution < 2 {
        return Err(CliError::usage("--grid-resolution must be at least 2"));
    }
    let mut ocfg = OracleConfig {
        grid_resolution: args.grid_resolution,
        ..Default::default()
    };
    if let Some(seed) = global.seed {
        ocfg.seed = seed;
    }

    let entries = parse_triplet_file(&read_input(&args.input)?)?;
    for entry in &entries {
        if let Ok(t) = &entry.triplet {
            if !(2..=MAX_ORACLE_TOPICS).contains(&t.n_topics()) {
                return Err(CliError::usage(format!(
                    "triplet #{} ({}): oracle check supports 2..={MAX_ORACLE_TOPICS} topics, got {}",
                    entry.index,
                    entry.id,
                    t.n_topics()
                )));
            }
        }
    }

    let outcomes: Vec<_> = entries
        .par_iter()
        .map(|entry| match &entry.triplet {
            Ok(t) => check(t, &cfg, &ocfg, args.tol).map_err(|e| e.to_string()),
            Err(msg) => Err(msg.clone()),
        })
        .collect();

    let mut rows = Vec::new();
    let mut failed = false;
    for (entry, outcome) in entries.iter().zip(outcomes) {
        match outcome {
            Ok(row) => rows.push(row),
            Err(msg) => {
                failed = true;
                eprintln!("triplet #{} ({}): {msg}", entry.index, entry.id);
            }
        }
    }

    let mut out = open_output(global.out.as_deref())?;
    let io_err = |e: std::io::Error| CliError::io("writing oracle table", e);
    match global.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            let to_err = |e: csv::Error| io_err(std::io::Error::other(e));
            w.write_record([
                "id",
                "n_topics",
                "D_min_solver_nats",
                "D_min_oracle_nats",
                "D_min_abs_diff",
                "SEP_solver_nats",
                "SEP_oracle_nats",
                "SEP_abs_diff",
                "within_tol",
            ])
            .map_err(to_err)?;
            for r in &rows {
                let mut rec = vec![r.id.clone(), r.n_topics.to_string()];
                rec.extend(
                    [
                        r.d_min_solver,
                        r.d_min_oracle,
                        r.d_min_diff,
                        r.sep_solver,
                        r.sep_oracle,
                        r.sep_diff,
                    ]
                    .map(fmt_f64),
                );
                rec.push(r.within_tol.to_string());
                w.write_record(rec).map_err(to_err)?;
            }
            w.flush().map_err(io_err)?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &rows).map_err(|e| io_err(e.into()))?;
            writeln!(out).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)?;

    Ok(if failed {
        exit::TRIPLET_FAILURE
    } else if rows.iter().any(|r| !r.within_tol) {
        exit::ORACLE_MISMATCH
    } else {
        exit::OK
    })
}
