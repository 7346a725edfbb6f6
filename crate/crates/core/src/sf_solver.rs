//! Semantic faithfulness: joint minimization of the conditional KL divergence
//! `D(A || Q)` over row-stochastic matrices with `p_c^T A = p_a` and
//! `p_c^T Q = p_q`, by alternating I-projections.
//!
//! The A-step is a multiplicative fixed point on the column scalings
//! `u_j = exp(-lambda_j)`. The Q-step maximizes a concave dual in the row and
//! column multipliers `(nu, xi)` by exact coordinate ascent (see [`crate::dual`]).

use ndarray::Array2;

use crate::config::SolverConfig;
use crate::dual;
use crate::error::{Error, Result};
use crate::info::kl_conditional_raw;
use crate::model::{QcaTriplet, TopicDistribution, TransitionMatrix};

/// Outcome of [`solve_sf`].
#[derive(Debug, Clone, PartialEq)]
pub struct SfResult {
    /// Minimal conditional KL divergence, in nats.
    pub d_min: f64,
    /// `1 / (1 + d_min)`.
    pub f_s: f64,
    pub q_star: TransitionMatrix,
    pub a_star: TransitionMatrix,
    pub outer_iters: usize,
    /// `D(A^(k) || Q^(k))` after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Largest marginal violation of `a_star` against `p_a` and of `q_star` against `p_q`.
    pub constraint_residual: f64,
    /// A-step column scalings at the optimum, normalized to a maximum of 1.
    pub u_star: Vec<f64>,
    /// Q-step row multipliers.
    pub nu_star: Vec<f64>,
    /// Q-step column multipliers.
    pub xi_star: Vec<f64>,
    /// Smoothing floor the solve used; needed to evaluate the duals against the same marginals.
    pub epsilon_smooth: f64,
}

/// Output of one Q-step.
#[derive(Debug, Clone, PartialEq)]
pub struct QStep {
    pub q: TransitionMatrix,
    pub nu: Vec<f64>,
    pub xi: Vec<f64>,
}

/// Feasible rank-one starting point: every row equals `p_q`.
pub fn init_q_matrix(p_c: &TopicDistribution, p_q: &TopicDistribution) -> TransitionMatrix {
    debug_assert_eq!(p_c.n_topics(), p_q.n_topics());
    TransitionMatrix::rank_one(p_q.probs()).expect("a distribution is a stochastic row")
}

/// Divides each row by its sum so the matrix is row-stochastic to rounding.
fn normalize_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    m
}

/// I-projection of `Q` onto `{A row-stochastic, p_c^T A = p_a}`.
///
/// Returns the projected matrix and the column scalings `u`.
pub fn a_step(
    q: &TransitionMatrix,
    p_c: &TopicDistribution,
    p_a: &TopicDistribution,
    cfg: &SolverConfig,
) -> Result<(TransitionMatrix, Vec<f64>)> {
    let n = q.n();
    let (pc, pa) = (p_c.probs(), p_a.probs());
    let qm = q.as_array();
    let active: Vec<usize> = (0..n).filter(|&i| pc[i] > 0.0).collect();

    let mut u: Vec<f64> = pa
        .iter()
        .map(|&p| if p > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let mut row_norm = vec![0.0; n];
    let mut converged = false;
    let mut change = f64::INFINITY;

    let fill_row_norms = |u: &[f64], row_norm: &mut [f64]| -> Result<()> {
        for &i in &active {
            let r: f64 = (0..n).map(|k| qm[[i, k]] * u[k]).sum();
            if r <= 0.0 {
                return Err(Error::DualDomainViolation {
                    stage: "a-step",
                    detail: format!("row {i} of Q has no mass on the answer support"),
                });
            }
            row_norm[i] = r;
        }
        Ok(())
    };

    for _ in 0..cfg.max_inner_iters {
        fill_row_norms(&u, &mut row_norm)?;
        let mut next = vec![0.0; n];
        for j in 0..n {
            if pa[j] == 0.0 {
                continue;
            }
            let s: f64 = active
                .iter()
                .map(|&i| pc[i] * qm[[i, j]] / row_norm[i])
                .sum();
            if s <= 0.0 {
                return Err(Error::DualDomainViolation {
                    stage: "a-step",
                    detail: format!("column {j} of Q carries no context mass but p_a[{j}] > 0"),
                });
            }
            next[j] = pa[j] / s;
        }
        let top = next.iter().cloned().fold(0.0, f64::max);
        next.iter_mut().for_each(|v| *v /= top);
        change = next
            .iter()
            .zip(&u)
            .filter(|(v, _)| **v > 0.0)
            .map(|(v, old)| (v - old).abs() / v)
            .fold(0.0, f64::max);
        u = next;
        if change < cfg.tol_inner {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            stage: "a-step",
            iterations: cfg.max_inner_iters,
            residual: change,
            partial_trace: Vec::new(),
        });
    }

    fill_row_norms(&u, &mut row_norm)?;
    let a = Array2::from_shape_fn((n, n), |(i, j)| {
        if pc[i] > 0.0 {
            qm[[i, j]] * u[j] / row_norm[i]
        } else {
            pa[j]
        }
    });
    let a = TransitionMatrix::new(normalize_rows(a))?;
    let residual = a.marginal_residual(pc, pa);
    if residual > cfg.feasibility_tol {
        return Err(Error::NonConvergence {
            stage: "a-step",
            iterations: cfg.max_inner_iters,
            residual,
            partial_trace: Vec::new(),
        });
    }
    Ok((a, u))
}

/// Projection of `A` onto `{Q row-stochastic, p_c^T Q = p_q}` minimizing `D(A || Q)`.
pub fn q_step(
    a: &TransitionMatrix,
    p_c: &TopicDistribution,
    p_q: &TopicDistribution,
    cfg: &SolverConfig,
) -> Result<QStep> {
    q_step_warm(a, p_c.probs(), p_q.probs(), cfg, None)
}

pub(crate) fn q_step_warm(
    a: &TransitionMatrix,
    pc: &[f64],
    pq: &[f64],
    cfg: &SolverConfig,
    warm: Option<(&[f64], &[f64])>,
) -> Result<QStep> {
    let n = a.n();
    let am = a.as_array();
    let w = Array2::from_shape_fn((n, n), |(i, j)| pc[i] * am[[i, j]]);
    let sol = dual::coordinate_ascent(
        "q-step",
        &w,
        pc,
        pq,
        warm,
        cfg.tol_inner,
        cfg.max_inner_iters,
    )?;

    let q = Array2::from_shape_fn((n, n), |(i, j)| {
        if pc[i] > 0.0 {
            am[[i, j]] / (sol.row[i] + sol.col[j])
        } else {
            pq[j]
        }
    });
    let q = TransitionMatrix::new(normalize_rows(q))?;
    let residual = q.marginal_residual(pc, pq);
    if residual > cfg.feasibility_tol {
        return Err(Error::NonConvergence {
            stage: "q-step",
            iterations: sol.sweeps,
            residual,
            partial_trace: Vec::new(),
        });
    }
    Ok(QStep {
        q,
        nu: sol.row,
        xi: sol.col,
    })
}

/// Smoothed copies of the triplet's distributions, in (p_q, p_c, p_a) order.
pub(crate) fn smoothed(t: &QcaTriplet, eps: f64) -> Result<[TopicDistribution; 3]> {
    Ok([
        TopicDistribution::new(t.p_q.smoothed(eps))?,
        TopicDistribution::new(t.p_c.smoothed(eps))?,
        TopicDistribution::new(t.p_a.smoothed(eps))?,
    ])
}

/// Computes the semantic faithfulness score of a triplet starting from the
/// rank-one initializer.
pub fn solve_sf(t: &QcaTriplet, cfg: &SolverConfig) -> Result<SfResult> {
    cfg.validate()?;
    let [p_q, p_c, _] = smoothed(t, cfg.epsilon_smooth)?;
    let q0 = init_q_matrix(&p_c, &p_q);
    solve_sf_from(t, q0, cfg)
}

/// Same as [`solve_sf`] but from a caller-supplied feasible `Q^(0)`.
pub fn solve_sf_from(t: &QcaTriplet, q0: TransitionMatrix, cfg: &SolverConfig) -> Result<SfResult> {
    cfg.validate()?;
    if q0.n() != t.n_topics() {
        return Err(Error::DimensionMismatch {
            expected: t.n_topics(),
            found: q0.n(),
        });
    }
    let [p_q, p_c, p_a] = smoothed(t, cfg.epsilon_smooth)?;
    let (pq, pc, pa) = (p_q.probs(), p_c.probs(), p_a.probs());

    let mut q = q0;
    let mut trace: Vec<f64> = Vec::new();
    let mut duals: Option<(Vec<f64>, Vec<f64>)> = None;
    let with_trace = |e: Error, trace: &[f64]| match e {
        Error::NonConvergence {
            stage,
            iterations,
            residual,
            ..
        } => Error::NonConvergence {
            stage,
            iterations,
            residual,
            partial_trace: trace.to_vec(),
        },
        other => other,
    };

    for _ in 0..cfg.max_outer_iters {
        let (a, u) = a_step(&q, &p_c, &p_a, cfg).map_err(|e| with_trace(e, &trace))?;
        let warm = duals.as_ref().map(|(r, c)| (r.as_slice(), c.as_slice()));
        let step = q_step_warm(&a, pc, pq, cfg, warm).map_err(|e| with_trace(e, &trace))?;
        q = step.q;
        let d = kl_conditional_raw(&a, &q, pc)?;
        let previous = trace.last().copied();
        trace.push(d);
        duals = Some((step.nu.clone(), step.xi.clone()));

        if previous.is_some_and(|p| (p - d).abs() < cfg.tol_outer) {
            // Rounding can leave a tiny negative value at an exact optimum.
            let d_min = d.max(0.0);
            let constraint_residual = a.marginal_residual(pc, pa).max(q.marginal_residual(pc, pq));
            return Ok(SfResult {
                d_min,
                f_s: 1.0 / (1.0 + d_min),
                q_star: q,
                a_star: a,
                outer_iters: trace.len(),
                objective_trace: trace,
                constraint_residual,
                u_star: u,
                nu_star: step.nu,
                xi_star: step.xi,
                epsilon_smooth: cfg.epsilon_smooth,
            });
        }
    }
    let residual = match trace.as_slice() {
        [.., a, b] => (a - b).abs(),
        _ => f64::INFINITY,
    };
    Err(Error::NonConvergence {
        stage: "outer",
        iterations: cfg.max_outer_iters,
        residual,
        partial_trace: trace,
    })
}
