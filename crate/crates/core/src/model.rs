//! Domain types: topic distributions, transition matrices and QCA triplets.
//!
//! Every type here is immutable once constructed and validates its
//! invariants in the constructor, so downstream code can rely on them.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs whose mass is within this distance of 1 are renormalized instead of rejected.
pub const RENORMALIZE_WINDOW: f64 = 1e-6;

/// Row sums of a [`TransitionMatrix`] must be this close to 1.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// A probability vector over `N` shared topics.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TopicDistribution {
    probs: Vec<f64>,
}

impl TopicDistribution {
    /// Builds a distribution, renormalizing inputs whose sum lies within
    /// [`RENORMALIZE_WINDOW`] of one and rejecting anything else.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("no topics".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "entry {i} is not finite"
                )));
            }
            if p < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "entry {i} is negative ({p})"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_WINDOW {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p / sum).collect(),
        })
    }

    pub fn uniform(n_topics: usize) -> Self {
        assert!(
            n_topics > 0,
            "uniform distribution needs at least one topic"
        );
        Self {
            probs: vec![1.0 / n_topics as f64; n_topics],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_topics(&self) -> usize {
        self.probs.len()
    }

    /// Adds `eps` to every entry and renormalizes. Returns the raw vector
    /// because the solvers work on slices.
    pub fn smoothed(&self, eps: f64) -> Vec<f64> {
        if eps == 0.0 {
            return self.probs.clone();
        }
        let total = 1.0 + eps * self.probs.len() as f64;
        self.probs.iter().map(|p| (p + eps) / total).collect()
    }

    /// Reorders topics so that new index `k` holds old index `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.probs.len());
        Self {
            probs: perm.iter().map(|&k| self.probs[k]).collect(),
        }
    }
}

impl<'de> Deserialize<'de> for TopicDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let probs = Vec::<f64>::deserialize(d)?;
        TopicDistribution::new(probs).map_err(serde::de::Error::custom)
    }
}

/// Row-stochastic `N x N` matrix. Row = source topic, column = destination topic.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    data: Array2<f64>,
}

impl TransitionMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows == 0 || rows != cols {
            return Err(Error::InvalidMatrix(format!(
                "shape {rows}x{cols} is not square"
            )));
        }
        for ((i, j), &v) in data.indexed_iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidMatrix(format!("entry ({i}, {j}) = {v}")));
            }
        }
        for (i, row) in data.rows().into_iter().enumerate() {
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidMatrix(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let data = Array2::from_shape_vec((n, n), flat)
            .map_err(|e| Error::InvalidMatrix(e.to_string()))?;
        Self::new(data)
    }

    /// Every row equal to `row`.
    pub fn rank_one(row: &[f64]) -> Result<Self> {
        let n = row.len();
        Self::new(Array2::from_shape_fn((n, n), |(_, j)| row[j]))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: Array2::eye(n),
        }
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    /// `p^T M`: the distribution reached after one transition from `p`.
    pub fn pushforward(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for (i, row) in self.data.rows().into_iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[j] += p[i] * v;
            }
        }
        out
    }

    /// Largest `|(p^T M)_j - target_j|`.
    pub fn marginal_residual(&self, p: &[f64], target: &[f64]) -> f64 {
        self.pushforward(p)
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Applies the same topic relabelling to rows and columns.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        assert_eq!(perm.len(), n);
        Self {
            data: Array2::from_shape_fn((n, n), |(k, l)| self.data[[perm[k], perm[l]]]),
        }
    }

    pub fn max_abs_diff(&self, other: &TransitionMatrix) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One scoring unit: question, context and answer distributions over the same topics.
#[derive(Debug, Clone, PartialEq)]
pub struct QcaTriplet {
    pub id: String,
    pub p_q: TopicDistribution,
    pub p_c: TopicDistribution,
    pub p_a: TopicDistribution,
    pub metadata: BTreeMap<String, String>,
}

impl QcaTriplet {
    pub fn new(
        id: impl Into<String>,
        p_q: TopicDistribution,
        p_c: TopicDistribution,
        p_a: TopicDistribution,
    ) -> Result<Self> {
        let n = p_c.n_topics();
        for d in [&p_q, &p_a] {
            if d.n_topics() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: d.n_topics(),
                });
            }
        }
        Ok(Self {
            id: id.into(),
            p_q,
            p_c,
            p_a,
            metadata: BTreeMap::new(),
        })
    }

    /// Convenience constructor from plain vectors.
    pub fn from_vecs(
        id: impl Into<String>,
        p_q: Vec<f64>,
        p_c: Vec<f64>,
        p_a: Vec<f64>,
    ) -> Result<Self> {
        RawTriplet {
            id: id.into(),
            n_topics: None,
            p_q,
            p_c,
            p_a,
            metadata: BTreeMap::new(),
        }
        .into_triplet()
    }

    pub fn with_metadata(mut self, metadata: BTreeMap<String, String>) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn n_topics(&self) -> usize {
        self.p_c.n_topics()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            id: self.id.clone(),
            p_q: self.p_q.permuted(perm),
            p_c: self.p_c.permuted(perm),
            p_a: self.p_a.permuted(perm),
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_raw(&self) -> RawTriplet {
        RawTriplet {
            id: self.id.clone(),
            n_topics: Some(self.n_topics()),
            p_q: self.p_q.probs().to_vec(),
            p_c: self.p_c.probs().to_vec(),
            p_a: self.p_a.probs().to_vec(),
            metadata: self.metadata.clone(),
        }
    }
}

/// Unvalidated triplet, as read from disk or assembled by a caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTriplet {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_topics: Option<usize>,
    pub p_q: Vec<f64>,
    pub p_c: Vec<f64>,
    pub p_a: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl RawTriplet {
    pub fn into_triplet(self) -> Result<QcaTriplet> {
        let findings = validate_triplet(&self);
        if !findings.is_empty() {
            return Err(Error::InvalidInput(findings));
        }
        let t = QcaTriplet::new(
            self.id,
            TopicDistribution::new(self.p_q)?,
            TopicDistribution::new(self.p_c)?,
            TopicDistribution::new(self.p_a)?,
        )?;
        Ok(t.with_metadata(self.metadata))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FindingKind {
    Empty,
    NonFinite { index: usize },
    NegativeEntry { index: usize, value: f64 },
    SumDeviation { sum: f64 },
    DimensionMismatch { expected: usize, found: usize },
}

/// One invariant violation reported by [`validate_triplet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    /// Which distribution is affected (`p_q`, `p_c` or `p_a`).
    pub field: String,
    #[serde(flatten)]
    pub kind: FindingKind,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FindingKind::Empty => write!(f, "{}: empty", self.field),
            FindingKind::NonFinite { index } => {
                write!(f, "{}[{index}]: not a finite number", self.field)
            }
            FindingKind::NegativeEntry { index, value } => {
                write!(f, "{}[{index}]: negative entry {value}", self.field)
            }
            FindingKind::SumDeviation { sum } => {
                write!(f, "{}: entries sum to {sum}, expected 1", self.field)
            }
            FindingKind::DimensionMismatch { expected, found } => {
                write!(f, "{}: length {found}, expected {expected}", self.field)
            }
        }
    }
}

/// Lists every invariant violation of `t`; an empty list means the triplet is usable.
///
/// The reference topic count is `n_topics` when given, else the context length.
pub fn validate_triplet(t: &RawTriplet) -> Vec<Finding> {
    let n = t.n_topics.unwrap_or(t.p_c.len());
    let mut findings = Vec::new();
    for (field, probs) in [("p_q", &t.p_q), ("p_c", &t.p_c), ("p_a", &t.p_a)] {
        let mut push = |kind| {
            findings.push(Finding {
                field: field.to_string(),
                kind,
            })
        };
        if probs.is_empty() {
            push(FindingKind::Empty);
            continue;
        }
        if probs.len() != n {
            push(FindingKind::DimensionMismatch {
                expected: n,
                found: probs.len(),
            });
        }
        let mut finite = true;
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() {
                finite = false;
                push(FindingKind::NonFinite { index });
            } else if value < 0.0 {
                push(FindingKind::NegativeEntry { index, value });
            }
        }
        if finite {
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > RENORMALIZE_WINDOW {
                push(FindingKind::SumDeviation { sum });
            }
        }
    }
    findings
}
