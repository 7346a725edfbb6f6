//! Coordinate ascent on the separable dual
//!
//! ```text
//! L(x, y) = sum_ij w_ij log(x_i + y_j) - sum_i r_i x_i - sum_j c_j y_j + 1
//! ```
//!
//! whose maximizer yields the matrix `w_ij / (x_i + y_j)` with row sums `r`
//! and column sums `c`. Both the Q-step and the reverse-process projection
//! reduce to this problem with different column targets.
//!
//! For fixed `y`, each `x_i` solves `sum_j w_ij / (x_i + y_j) = r_i`, and the
//! column update is symmetric. The left-hand side is convex and strictly
//! decreasing on the admissible half-line, so every coordinate update is an
//! exact one-dimensional root-find.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Denominators `x_i + y_j` on the support never drop below this.
pub(crate) const MIN_DENOMINATOR: f64 = 1e-300;

const ROOT_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DualSolution {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
    pub sweeps: usize,
}

/// Solves `sum_k w_k / (x + d_k) = target` for `x` over `x > -min d_k`.
///
/// `terms` yields `(w_k, d_k)` with `w_k > 0`; `warm` is an optional starting guess.
fn solve_reciprocal(terms: &[(f64, f64)], target: f64, warm: Option<f64>) -> Option<f64> {
    debug_assert!(target > 0.0 && !terms.is_empty());
    let d_min = terms.iter().map(|&(_, d)| d).fold(f64::INFINITY, f64::min);
    let d_spread = terms.iter().map(|&(_, d)| d - d_min).fold(0.0, f64::max);
    let total: f64 = terms.iter().map(|&(w, _)| w).sum();
    let w_at_min: f64 = terms
        .iter()
        .filter(|&&(_, d)| d == d_min)
        .map(|&(w, _)| w)
        .sum();

    // In the shifted variable t = x + d_min the root lies in [lo, hi].
    let h = |t: f64| -> (f64, f64) {
        terms.iter().fold((0.0, 0.0), |(f, df), &(w, d)| {
            let s = t + (d - d_min);
            (f + w / s, df + w / (s * s))
        })
    };
    let hi = total / target;
    let lo = (total / target - d_spread)
        .max(w_at_min / target)
        .max(MIN_DENOMINATOR);
    if !(lo.is_finite() && hi.is_finite()) {
        return None;
    }

    // Newton on 1/h, a harmonic mean of affine functions and hence concave:
    // iterates started left of the root stay left of it, and a single term
    // is solved in one step however far away the start is.
    let mut t = lo;
    if let Some(x) = warm {
        let tw = x + d_min;
        if tw > lo && tw <= hi && h(tw).0 >= target {
            t = tw;
        }
    }
    for _ in 0..ROOT_MAX_ITERS {
        let (f, df) = h(t);
        if f <= target {
            return Some(t - d_min);
        }
        let next = (t + f * (f - target) / (target * df)).min(hi);
        if next - t <= 4.0 * f64::EPSILON * next {
            return Some(next - d_min);
        }
        t = next;
    }
    None
}

/// Maximizes the dual by alternating exact row and column updates.
///
/// Rows with `r_i = 0` must carry no weight and are skipped. Columns with
/// `c_j = 0` must carry no weight either. Stops once every row marginal of
/// `w_ij / (x_i + y_j)` is within relative error `tol` of its target.
pub(crate) fn coordinate_ascent(
    stage: &'static str,
    w: &Array2<f64>,
    row_target: &[f64],
    col_target: &[f64],
    warm: Option<(&[f64], &[f64])>,
    tol: f64,
    max_sweeps: usize,
) -> Result<DualSolution> {
    let n = row_target.len();
    let col_mass: Vec<f64> = (0..n).map(|j| w.column(j).sum()).collect();
    for j in 0..n {
        if (col_mass[j] > 0.0) != (col_target[j] > 0.0) {
            return Err(Error::DualDomainViolation {
                stage,
                detail: format!(
                    "column {j} has weight {} but target {}",
                    col_mass[j], col_target[j]
                ),
            });
        }
    }
    for i in 0..n {
        let mass = w.row(i).sum();
        if (mass > 0.0) != (row_target[i] > 0.0) {
            return Err(Error::DualDomainViolation {
                stage,
                detail: format!("row {i} has weight {mass} but target {}", row_target[i]),
            });
        }
    }

    let (mut row, mut col) = match warm {
        Some((r, c)) => (r.to_vec(), c.to_vec()),
        None => (vec![0.0; n], vec![1.0; n]),
    };
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut residual = f64::INFINITY;

    for sweep in 1..=max_sweeps {
        // Row duals are recomputed from the columns right away, so shifting
        // them here costs no precision.
        regauge(&mut row, &mut col, row_target, col_target);
        for i in 0..n {
            if row_target[i] == 0.0 {
                continue;
            }
            terms.clear();
            terms.extend(
                (0..n)
                    .filter(|&j| w[[i, j]] > 0.0)
                    .map(|j| (w[[i, j]], col[j])),
            );
            row[i] = solve_reciprocal(&terms, row_target[i], Some(row[i])).ok_or_else(|| {
                Error::DualDomainViolation {
                    stage,
                    detail: format!("row {i} root-find failed"),
                }
            })?;
        }
        for j in 0..n {
            if col_target[j] == 0.0 {
                continue;
            }
            terms.clear();
            terms.extend(
                (0..n)
                    .filter(|&i| w[[i, j]] > 0.0)
                    .map(|i| (w[[i, j]], row[i])),
            );
            col[j] = solve_reciprocal(&terms, col_target[j], Some(col[j])).ok_or_else(|| {
                Error::DualDomainViolation {
                    stage,
                    detail: format!("column {j} root-find failed"),
                }
            })?;
        }

        // Columns are exact after their update; rows measure the remaining error.
        residual = (0..n)
            .filter(|&i| row_target[i] > 0.0)
            .map(|i| {
                let s: f64 = (0..n)
                    .filter(|&j| w[[i, j]] > 0.0)
                    .map(|j| w[[i, j]] / (row[i] + col[j]))
                    .sum();
                (s / row_target[i] - 1.0).abs()
            })
            .fold(0.0, f64::max);
        if !residual.is_finite() {
            return Err(Error::DualDomainViolation {
                stage,
                detail: "non-finite dual iterate".into(),
            });
        }
        if residual < tol {
            return Ok(DualSolution {
                row,
                col,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NonConvergence {
        stage,
        iterations: max_sweeps,
        residual,
        partial_trace: Vec::new(),
    })
}

/// Moves the shared additive gauge so the smallest active column dual is 0.
///
/// Columns whose weight is tiny compared to their target need denominators
/// far below the scale of the duals; anchoring them near zero keeps those
/// sums free of cancellation.
fn regauge(row: &mut [f64], col: &mut [f64], row_target: &[f64], col_target: &[f64]) {
    let shift = col
        .iter()
        .zip(col_target)
        .filter(|(_, &c)| c > 0.0)
        .map(|(&y, _)| y)
        .fold(f64::INFINITY, f64::min);
    if !shift.is_finite() {
        return;
    }
    for (y, &c) in col.iter_mut().zip(col_target) {
        if c > 0.0 {
            *y -= shift;
        }
    }
    for (x, &r) in row.iter_mut().zip(row_target) {
        if r > 0.0 {
            *x += shift;
        }
    }
}

/// `sum_ij w_ij log(x_i + y_j) - sum_i r_i x_i - sum_j c_j y_j + 1`.
#[cfg(test)]
fn dual_objective(
    w: &Array2<f64>,
    row_target: &[f64],
    col_target: &[f64],
    row: &[f64],
    col: &[f64],
) -> f64 {
    let mut value = 1.0;
    for ((i, j), &wij) in w.indexed_iter() {
        if wij > 0.0 {
            value += wij * (row[i] + col[j]).ln();
        }
    }
    value -= row_target.iter().zip(row).map(|(r, x)| r * x).sum::<f64>();
    value -= col_target.iter().zip(col).map(|(c, y)| c * y).sum::<f64>();
    value
}
