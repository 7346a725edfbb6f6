use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;

use super::cache::{cache_key, Cache, CacheEntry};
use super::input::parse_triplet_file;
use super::report::{write_csv, write_json, Matrices, ReportRow};
use super::{exit, open_output, read_input, CliError, CliResult, Format, GlobalArgs};
use crate::config::SolverConfig;
use crate::model::QcaTriplet;
use crate::sep_solver::solve_sep;
use crate::sf_solver::solve_sf;

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Triplet JSON file, or `-` for stdin.
    pub input: PathBuf,
    /// Write q_star, a_star and a_reverse for each triplet into this directory.
    #[arg(long)]
    pub emit_matrices: Option<PathBuf>,
}

fn solve(t: &QcaTriplet, cfg: &SolverConfig) -> crate::Result<(ReportRow, Matrices)> {
    let sf = solve_sf(t, cfg)?;
    let sep = solve_sep(&sf, t, cfg)?;
    let matrices = Matrices::new(&sf.q_star, &sf.a_star, &sep.a_reverse);
    Ok((ReportRow::new(t, &sf, &sep), matrices))
}

fn score_one(
    t: &QcaTriplet,
    cfg: &SolverConfig,
    cache: Option<&Cache>,
) -> crate::Result<(ReportRow, Matrices)> {
    let Some(cache) = cache else {
        return solve(t, cfg);
    };
    let key = cache_key(t, cfg);
    if let Some(entry) = cache.load(&key) {
        let mut row = entry.row;
        row.id = t.id.clone();
        row.cache_hit = true;
        return Ok((row, entry.matrices));
    }
    let (row, matrices) = solve(t, cfg)?;
    let entry = CacheEntry {
        key,
        row: row.clone(),
        matrices: matrices.clone(),
    };
    if let Err(e) = cache.store(&entry) {
        log::warn!("could not write cache entry for {}: {e}", t.id);
    }
    Ok((row, matrices))
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn emit_matrices(dir: &Path, index: usize, id: &str, m: &Matrices) -> Result<(), CliError> {
    let path = dir.join(format!("{index:04}_{}.json", sanitize(id)));
    let bytes = serde_json::to_vec_pretty(m).expect("matrices serialize");
    fs::write(&path, bytes).map_err(|e| CliError::io(path.display(), e))
}

pub fn run(args: &ScoreArgs, global: &GlobalArgs) -> CliResult {
    let cfg = global.solver_config()?;
    let text = read_input(&args.input)?;
    let entries = parse_triplet_file(&text)?;
    let cache = match &global.cache {
        Some(dir) => Some(Cache::open(dir).map_err(|e| CliError::io(dir.display(), e))?),
        None => None,
    };
    if let Some(dir) = &args.emit_matrices {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }

    let outcomes: Vec<_> = entries
        .par_iter()
        .map(|entry| match &entry.triplet {
            Ok(t) => score_one(t, &cfg, cache.as_ref()).map_err(|e| e.to_string()),
            Err(msg) => Err(msg.clone()),
        })
        .collect();

    let mut rows = Vec::new();
    let mut failed = 0;
    for (entry, outcome) in entries.iter().zip(outcomes) {
        match outcome {
            Ok((row, matrices)) => {
                if let Some(dir) = &args.emit_matrices {
                    emit_matrices(dir, entry.index, &entry.id, &matrices)?;
                }
                rows.push(row);
            }
            Err(msg) => {
                failed += 1;
                eprintln!("triplet #{} ({}): {msg}", entry.index, entry.id);
            }
        }
    }

    let out = open_output(global.out.as_deref())?;
    let units = cfg.report_units;
    match global.format {
        Format::Csv => write_csv(out, units, &rows)
            .map_err(|e| CliError::io("writing report", std::io::Error::other(e)))?,
        Format::Json => {
            write_json(out, units, &rows).map_err(|e| CliError::io("writing report", e))?
        }
    }
    Ok(if failed > 0 {
        exit::TRIPLET_FAILURE
    } else {
        exit::OK
    })
}
