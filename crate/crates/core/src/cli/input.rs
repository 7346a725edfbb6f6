//! Triplet file ingestion.
//!
//! A file holds one triplet object or an array of them. Each object carries
//! `id`, optional `n_topics`, and for each of q/c/a either a probability
//! array `p_*` or integer cluster counts `counts_*`.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value;

use super::CliError;
use crate::info::from_cluster_counts;
use crate::model::{QcaTriplet, RawTriplet};

#[derive(Debug, Deserialize)]
struct TripletEntry {
    id: String,
    n_topics: Option<usize>,
    p_q: Option<Vec<f64>>,
    p_c: Option<Vec<f64>>,
    p_a: Option<Vec<f64>>,
    counts_q: Option<Vec<u64>>,
    counts_c: Option<Vec<u64>>,
    counts_a: Option<Vec<u64>>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

/// One entry of a triplet file: a validated triplet or a diagnostic.
#[derive(Debug, Clone)]
pub struct ParsedEntry {
    pub index: usize,
    pub id: String,
    pub triplet: std::result::Result<QcaTriplet, String>,
}

fn resolve(
    name: &str,
    probs: Option<Vec<f64>>,
    counts: Option<Vec<u64>>,
    n_topics: Option<usize>,
) -> std::result::Result<Vec<f64>, String> {
    match (probs, counts) {
        (Some(p), _) => Ok(p),
        (None, Some(c)) => {
            let n = n_topics.unwrap_or(c.len());
            from_cluster_counts(&c, n)
                .map(|d| d.probs().to_vec())
                .map_err(|e| format!("counts_{name}: {e}"))
        }
        (None, None) => Err(format!("missing p_{name} or counts_{name}")),
    }
}

impl TripletEntry {
    fn into_triplet(self) -> std::result::Result<QcaTriplet, String> {
        let n = self.n_topics;
        let p_q = resolve("q", self.p_q, self.counts_q, n)?;
        let p_c = resolve("c", self.p_c, self.counts_c, n)?;
        let p_a = resolve("a", self.p_a, self.counts_a, n)?;
        RawTriplet {
            id: self.id,
            n_topics: n,
            p_q,
            p_c,
            p_a,
            metadata: self.metadata,
        }
        .into_triplet()
        .map_err(|e| e.to_string())
    }
}

/// Parses a triplet file.
///
/// Syntax errors and entries of the wrong shape fail the whole file; entries
/// that parse but describe invalid distributions are returned as diagnostics.
pub fn parse_triplet_file(text: &str) -> std::result::Result<Vec<ParsedEntry>, CliError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| {
        CliError::usage(format!(
            "malformed JSON at line {}, column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    let items = match doc {
        Value::Array(items) => items,
        obj @ Value::Object(_) => vec![obj],
        _ => {
            return Err(CliError::usage(
                "expected a triplet object or an array of triplets",
            ))
        }
    };
    items
        .into_iter()
        .enumerate()
        .map(|(index, item)| {
            let entry: TripletEntry = serde_json::from_value(item)
                .map_err(|e| CliError::usage(format!("triplet #{index}: {e}")))?;
            let id = entry.id.clone();
            Ok(ParsedEntry {
                index,
                id,
                triplet: entry.into_triplet(),
            })
        })
        .collect()
}
