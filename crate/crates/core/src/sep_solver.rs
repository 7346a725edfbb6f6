//! Semantic entropy production: a lower bound on the total entropy produced
//! by the context-to-answer transition, obtained by minimizing the forward
//! versus time-reversed path divergence over admissible reverse matrices.
//!
//! With forward joint `P_ij = p_c[i] A_ij` and reverse joint
//! `R_ij = p_a[j] A^R_ji`, the total entropy production is `KL(P || R)`, and
//! it splits into the medium term `sum P_ij log(A_ij / A^R_ji)` plus the
//! system term `H[p_a] - H[p_c]`. The reverse matrix is constrained by
//! `sum_i A^R_ji = 1` and `sum_j p_a[j] A^R_ji = p_c[i]`.

use ndarray::Array2;

use crate::config::{SolverConfig, Units};
use crate::dual;
use crate::error::{Error, Result};
use crate::info::entropy_nats;
use crate::model::{QcaTriplet, TopicDistribution, TransitionMatrix};
use crate::sf_solver::{smoothed, SfResult};

/// Forward matrices whose answer marginal misses `p_a` by more than this are rejected.
pub const FORWARD_MARGINAL_TOL: f64 = 1e-6;

/// Outcome of [`solve_sep`]. Entropy-like fields are expressed in `units`.
#[derive(Debug, Clone, PartialEq)]
pub struct SepResult {
    pub units: Units,
    /// Minimized total entropy production.
    pub sep_total: f64,
    /// `H[p_a] - H[p_c]` on the unsmoothed inputs.
    pub s_system: f64,
    /// `sep_total - s_system`: entropy exchanged with the medium.
    pub s_medium: f64,
    /// `sum_ij p_c[i] A*_ij log(A*_ij / A^R_ji)` at the optimal reverse matrix.
    pub d_forward_reverse: f64,
    /// Rows indexed by answer-side topic.
    pub a_reverse: TransitionMatrix,
    /// Row (context-side) multipliers.
    pub xi_star: Vec<f64>,
    /// Column (answer-side) multipliers.
    pub nu_star: Vec<f64>,
    /// `1/F_S - 1`, converted to `units`.
    pub naive_sep: f64,
    /// First-order estimate from the Q-step duals, converted to `units`.
    pub first_order_sep: f64,
    pub dual_sweeps: usize,
}

/// Optimal reverse process for a fixed forward matrix, all values in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverseProjection {
    pub a_reverse: TransitionMatrix,
    pub xi: Vec<f64>,
    pub nu: Vec<f64>,
    pub sep_total: f64,
    pub d_forward_reverse: f64,
    pub sweeps: usize,
}

/// `H[p_a] - H[p_c]` in `units`. Negative when the answer is more concentrated.
pub fn system_entropy_change(
    p_c: &TopicDistribution,
    p_a: &TopicDistribution,
    units: Units,
) -> f64 {
    units.from_nats(entropy_nats(p_a.probs()) - entropy_nats(p_c.probs()))
}

/// `1/f_s - 1`, in nats.
pub fn naive_sep(f_s: f64) -> Result<f64> {
    if !(f_s > 0.0 && f_s <= 1.0) {
        return Err(Error::DomainError(format!(
            "F_S must lie in (0, 1], got {f_s}"
        )));
    }
    Ok(1.0 / f_s - 1.0)
}

/// `(1/F_S - 1) + sum_j xi*_j (p_q[j] - p_a[j])`, in nats.
///
/// `xi*` are the column multipliers of the final Q-step; the correction term
/// is invariant to the additive gauge shared by the row and column duals.
/// The marginals are smoothed exactly as in the solve that produced `sf`.
pub fn first_order_sep(sf: &SfResult, p_q: &TopicDistribution, p_a: &TopicDistribution) -> f64 {
    let pq = p_q.smoothed(sf.epsilon_smooth);
    let pa = p_a.smoothed(sf.epsilon_smooth);
    let correction: f64 = sf
        .xi_star
        .iter()
        .zip(pq.iter().zip(&pa))
        .map(|(xi, (q, a))| xi * (q - a))
        .sum();
    (1.0 / sf.f_s - 1.0) + correction
}

/// Finds the reverse matrix minimizing the total entropy production of the
/// forward process `(p_c, a_star)`.
///
/// Uses the same coordinate ascent as the Q-step with the answer marginal as
/// the column target, then recovers `A^R_ji = p_c[i] A*_ij / (p_a[j] (xi_i + nu_j))`.
pub fn reverse_projection(
    a_star: &TransitionMatrix,
    p_c: &TopicDistribution,
    p_a: &TopicDistribution,
    cfg: &SolverConfig,
) -> Result<ReverseProjection> {
    cfg.validate()?;
    let n = a_star.n();
    if p_c.n_topics() != n || p_a.n_topics() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p_c.n_topics().max(p_a.n_topics()),
        });
    }
    let (pc, pa) = (p_c.probs(), p_a.probs());
    let forward_residual = a_star.marginal_residual(pc, pa);
    if forward_residual > FORWARD_MARGINAL_TOL {
        return Err(Error::InfeasibleReverse {
            residual: forward_residual,
        });
    }

    let am = a_star.as_array();
    let joint = Array2::from_shape_fn((n, n), |(i, j)| pc[i] * am[[i, j]]);
    // Answer topics with no forward mass get no reverse weight either.
    let col_target: Vec<f64> = (0..n)
        .map(|j| {
            if joint.column(j).sum() > 0.0 {
                pa[j]
            } else {
                0.0
            }
        })
        .collect();
    let sol = dual::coordinate_ascent(
        "reverse",
        &joint,
        pc,
        &col_target,
        None,
        cfg.tol_inner,
        cfg.max_inner_iters,
    )?;

    let mut rev = Array2::from_shape_fn((n, n), |(j, i)| {
        if col_target[j] > 0.0 {
            joint[[i, j]] / (pa[j] * (sol.row[i] + sol.col[j]))
        } else {
            pc[i]
        }
    });
    for mut row in rev.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    let a_reverse = TransitionMatrix::new(rev)?;
    let reverse_residual = a_reverse.marginal_residual(pa, pc);
    if reverse_residual > cfg.feasibility_tol {
        return Err(Error::InfeasibleReverse {
            residual: reverse_residual,
        });
    }

    let mut sep_total = 0.0;
    let mut d_forward_reverse = 0.0;
    for ((i, j), &p) in joint.indexed_iter() {
        if p == 0.0 {
            continue;
        }
        let back = a_reverse.get(j, i);
        let r = pa[j] * back;
        if r == 0.0 {
            return Err(Error::AbsoluteContinuityViolation { row: i, col: j });
        }
        sep_total += p * (p / r).ln();
        d_forward_reverse += p * (am[[i, j]] / back).ln();
    }

    Ok(ReverseProjection {
        a_reverse,
        xi: sol.row,
        nu: sol.col,
        sep_total,
        d_forward_reverse,
        sweeps: sol.sweeps,
    })
}

/// Entropy production bound and its decomposition for a solved triplet.
pub fn solve_sep(sf: &SfResult, t: &QcaTriplet, cfg: &SolverConfig) -> Result<SepResult> {
    let [_, p_c, p_a] = smoothed(t, sf.epsilon_smooth)?;
    let rev = reverse_projection(&sf.a_star, &p_c, &p_a, cfg)?;
    let units = cfg.report_units;
    let sep_total = units.from_nats(rev.sep_total);
    let s_system = system_entropy_change(&t.p_c, &t.p_a, units);
    Ok(SepResult {
        units,
        sep_total,
        s_system,
        s_medium: sep_total - s_system,
        d_forward_reverse: units.from_nats(rev.d_forward_reverse),
        a_reverse: rev.a_reverse,
        xi_star: rev.xi,
        nu_star: rev.nu,
        naive_sep: units.from_nats(naive_sep(sf.f_s)?),
        first_order_sep: units.from_nats(first_order_sep(sf, &t.p_q, &t.p_a)),
        dual_sweeps: rev.sweeps,
    })
}
