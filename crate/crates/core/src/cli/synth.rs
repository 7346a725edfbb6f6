use std::fs;
use std::path::Path;

use clap::Args;
use serde::Serialize;

use super::{exit, fmt_f64, CliError, CliResult, GlobalArgs};
use crate::config::Units;
use crate::synthetic::{run_study, StudyFailure, StudyReport, SynthConfig};

const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of triplets to sample.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 23)]
    pub n_topics: usize,
    #[arg(long, default_value_t = 0.3)]
    pub alpha_q: f64,
    #[arg(long, default_value_t = 1.5)]
    pub alpha_c: f64,
    #[arg(long, default_value_t = 0.8)]
    pub alpha_a: f64,
    /// Exponent in [0, 1] tying the answer distribution to the context.
    #[arg(long, default_value_t = 0.7)]
    pub coupling: f64,
}

#[derive(Serialize)]
struct IterationStats {
    min: usize,
    median: f64,
    max: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: SynthConfig,
    units: Units,
    n_solved: usize,
    correlation_absent: bool,
    pearson_r: Option<f64>,
    slope: Option<f64>,
    intercept: Option<f64>,
    failures: usize,
    failed: &'a [StudyFailure],
    outer_iters: Option<IterationStats>,
}

fn iteration_stats(report: &StudyReport) -> Option<IterationStats> {
    let mut iters: Vec<usize> = report.records.iter().map(|r| r.outer_iters).collect();
    iters.sort_unstable();
    let n = iters.len();
    if n == 0 {
        return None;
    }
    let median = if n % 2 == 1 {
        iters[n / 2] as f64
    } else {
        (iters[n / 2 - 1] + iters[n / 2]) as f64 / 2.0
    };
    Some(IterationStats {
        min: iters[0],
        median,
        max: iters[n - 1],
    })
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let to_err = |e: csv::Error| CliError::io(path.display(), std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.flush().map_err(|e| CliError::io(path.display(), e))
}

pub fn run(args: &SynthArgs, global: &GlobalArgs) -> CliResult {
    let solver = global.solver_config()?;
    let cfg = SynthConfig {
        n_topics: args.n_topics,
        n_triplets: args.n,
        alpha_q: args.alpha_q,
        alpha_c: args.alpha_c,
        alpha_a: args.alpha_a,
        context_coupling: args.coupling,
        seed: global.seed.unwrap_or(DEFAULT_SEED),
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let dir = global.out.as_deref().ok_or_else(|| {
        CliError::usage("synth writes several files; pass an output directory with --out")
    })?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;

    let report = run_study(&cfg, &solver).map_err(|e| CliError::usage(e.to_string()))?;

    write_csv(
        &dir.join("scatter.csv"),
        &["f_s", "sep", "s_dot", "h_q", "h_c", "h_a"],
        report.records.iter().map(|r| {
            [r.f_s, r.sep_total, r.s_system, r.h_q, r.h_c, r.h_a]
                .map(fmt_f64)
                .to_vec()
        }),
    )?;

    let mut curve = report.naive_curve_points.clone();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    write_csv(
        &dir.join("naive_curve.csv"),
        &["f_s", "naive_sep"],
        curve.into_iter().map(|(f, s)| vec![fmt_f64(f), fmt_f64(s)]),
    )?;

    let summary = Summary {
        config: cfg,
        units: report.units,
        n_solved: report.records.len(),
        correlation_absent: report.pearson_r.is_none(),
        pearson_r: report.pearson_r,
        slope: report.ols_slope,
        intercept: report.ols_intercept,
        failures: report.failures.len(),
        failed: &report.failures,
        outer_iters: iteration_stats(&report),
    };
    let path = dir.join("summary.json");
    let mut bytes = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| CliError::io(path.display(), e))?;

    if report.failures.is_empty() {
        Ok(exit::OK)
    } else {
        Ok(exit::TRIPLET_FAILURE)
    }
}
