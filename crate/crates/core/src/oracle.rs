//! Slow reference solvers for small instances.
//!
//! These share no code with the alternating-minimization or dual solvers:
//! objectives and gradients are written out directly, and feasibility is
//! enforced by projection onto the marginal polytope, a small quadratic
//! program solved by Newton's method on its dual.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{QcaTriplet, TopicDistribution, TransitionMatrix};

/// Number of random feasible starting points per projected-gradient run.
pub const PGD_STARTS: usize = 5;

/// Largest topic count the projected-gradient oracles accept.
pub const MAX_ORACLE_TOPICS: usize = 5;

const ARMIJO: f64 = 1e-4;
const NONMONOTONE_MEMORY: usize = 10;
const MIN_STEP: f64 = 1e-10;
const MAX_STEP: f64 = 1e4;
/// Descent stops once a unit projected-gradient step moves no entry further than this.
const STATIONARY_GAP: f64 = 1e-13;
const MAX_BACKTRACKS: usize = 60;
const PROJECTION_MAX_ITERS: usize = 500;

/// Lower bound kept on matrix entries during projected descent. On the face
/// where an entry and its reference both vanish the gradient cannot show that
/// they should leave zero together, and descent stalls there. Staying this far
/// inside moves the minimum by far less than any oracle tolerance.
const INTERIOR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Points per free parameter in [`grid_dmin_n2`].
    pub grid_resolution: usize,
    /// Initial projected-gradient step.
    pub pgd_step: f64,
    pub pgd_iters: usize,
    /// Largest row or marginal violation accepted from a projection.
    pub projection_tol: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_resolution: 1000,
            pgd_step: 1.0,
            pgd_iters: 5000,
            projection_tol: 1e-12,
            seed: 0x5eed,
        }
    }
}

/// `D(A || Q)` with `A = [[a, 1-a], [b, 1-b]]`, `Q = [[q, 1-q], [s, 1-s]]`.
fn kl_n2(pc: &[f64], a: f64, b: f64, q: f64, s: f64) -> f64 {
    fn term(x: f64, y: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else if y == 0.0 {
            f64::INFINITY
        } else {
            x * (x / y).ln()
        }
    }
    pc[0] * (term(a, q) + term(1.0 - a, 1.0 - q)) + pc[1] * (term(b, s) + term(1.0 - b, 1.0 - s))
}

/// Values of the first-row entry that keep the second row inside [0, 1].
fn feasible_interval(pc: &[f64], target0: f64) -> (f64, f64) {
    let lo = ((target0 - pc[1]) / pc[0]).max(0.0);
    let hi = (target0 / pc[0]).min(1.0);
    (lo, hi.max(lo))
}

/// Exhaustive search over the two free parameters of an `N = 2` instance.
///
/// After row-stochasticity and the marginal constraint, each matrix is fixed
/// by its `(0, 0)` entry; both are swept over `grid_resolution` evenly spaced
/// feasible values and the smallest divergence is returned.
pub fn grid_dmin_n2(t: &QcaTriplet, cfg: &OracleConfig) -> Result<f64> {
    if t.n_topics() != 2 {
        return Err(Error::Dimension {
            n: t.n_topics(),
            min: 2,
            max: 2,
        });
    }
    let pc = t.p_c.probs();
    if pc.iter().any(|&p| p <= 0.0) {
        return Err(Error::DomainError(
            "grid oracle needs a full-support context".into(),
        ));
    }
    let res = cfg.grid_resolution.max(2);
    let axis = |target0: f64| -> Vec<(f64, f64)> {
        let (lo, hi) = feasible_interval(pc, target0);
        (0..res)
            .map(|k| {
                let first = lo + (hi - lo) * k as f64 / (res - 1) as f64;
                let second = ((target0 - pc[0] * first) / pc[1]).clamp(0.0, 1.0);
                (first, second)
            })
            .collect()
    };
    let a_axis = axis(t.p_a.probs()[0]);
    let q_axis = axis(t.p_q.probs()[0]);
    let mut best = f64::INFINITY;
    for &(a, b) in &a_axis {
        for &(q, s) in &q_axis {
            best = best.min(kl_n2(pc, a, b, q, s));
        }
    }
    Ok(best)
}

/// Shift `theta` such that `max(v - theta, 0)` sums to `total`.
fn simplex_threshold(v: &[f64], total: f64) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - total) / (k + 1) as f64;
        if x - candidate > 0.0 {
            theta = candidate;
        }
    }
    theta
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Array2<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[[i, k]].abs().total_cmp(&a[[j, k]].abs()))?;
        if a[[p, k]] == 0.0 {
            return None;
        }
        if p != k {
            for c in 0..n {
                a.swap([k, c], [p, c]);
            }
            b.swap(k, p);
        }
        for i in k + 1..n {
            let f = a[[i, k]] / a[[k, k]];
            for c in k..n {
                a[[i, c]] -= f * a[[k, c]];
            }
            b[i] -= f * b[k];
        }
    }
    for k in (0..n).rev() {
        let tail: f64 = (k + 1..n).map(|c| a[[k, c]] * b[c]).sum();
        b[k] = (b[k] - tail) / a[[k, k]];
    }
    Some(b)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, r| acc.max(r.abs()))
}

/// Constraint set `{M : M_ij >= floor[j], rows sum to 1, sum_i weights[i] M_ij = target[j]}`.
///
/// Distances are measured with row `i` weighted by `weights[i]` (or 1 for a
/// zero weight row). Objectives here carry the same row weights, so this
/// metric removes most of their ill-conditioning when some rows are light.
struct MarginalSet<'a> {
    weights: &'a [f64],
    target: &'a [f64],
    floor: Vec<f64>,
    /// Inverse of the metric weight of each row.
    spread: Vec<f64>,
}

impl<'a> MarginalSet<'a> {
    /// Columns whose target can carry it get entries bounded below by
    /// `floor`; the rest keep the plain nonnegativity bound.
    fn new(weights: &'a [f64], target: &'a [f64], floor: f64) -> Self {
        let n = target.len();
        let usable = floor * (n as f64) < 1.0;
        let floor = target
            .iter()
            .map(|&t| if usable && t >= floor { floor } else { 0.0 })
            .collect();
        let spread = weights
            .iter()
            .map(|&w| if w > 0.0 { 1.0 / w } else { 1.0 })
            .collect();
        Self {
            weights,
            target,
            floor,
            spread,
        }
    }

    /// `m_ij + s_i (alpha_i + w_i beta_j) - floor_j` for multipliers
    /// `mu = (alpha, beta)`, with `s` the inverse row metric.
    fn shifted(&self, m: &Array2<f64>, mu: &[f64], i: usize, j: usize) -> f64 {
        let n = self.weights.len();
        m[[i, j]] + self.spread[i] * (mu[i] + self.weights[i] * mu[n + j]) - self.floor[j]
    }

    /// Inner product in the row metric.
    fn inner(&self, a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.rows()
            .into_iter()
            .zip(b.rows())
            .zip(&self.spread)
            .map(|((x, y), s)| x.dot(&y) / s)
            .sum()
    }

    fn primal(&self, m: &Array2<f64>, mu: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn(m.dim(), |(i, j)| {
            self.floor[j] + self.shifted(m, mu, i, j).max(0.0)
        })
    }

    /// Row-sum and weighted column-sum violations, stacked.
    fn residuals(&self, x: &Array2<f64>) -> Vec<f64> {
        let rows = x.rows().into_iter().map(|r| r.sum() - 1.0);
        let cols = (0..x.ncols()).map(|j| {
            let s: f64 = x
                .column(j)
                .iter()
                .zip(self.weights)
                .map(|(v, w)| v * w)
                .sum();
            s - self.target[j]
        });
        rows.chain(cols).collect()
    }

    fn gap(&self, x: &Array2<f64>) -> f64 {
        max_abs(&self.residuals(x))
    }

    /// A row or column that is short of its total while all of its entries
    /// sit at their bounds has no curvature, and Newton barely moves it.
    /// Minimizes the dual exactly along each such multiplier instead: shift
    /// until the best entry reaches its bound, then far enough to close the
    /// shortfall. Returns whether anything moved.
    fn activate_starved(&self, m: &Array2<f64>, mu: &mut [f64], f: &[f64]) -> bool {
        let n = self.weights.len();
        let w = self.weights;
        let mut moved = false;
        for i in 0..n {
            let best = (0..n)
                .map(|j| self.shifted(m, mu, i, j))
                .fold(f64::NEG_INFINITY, f64::max);
            if f[i] < 0.0 && best <= 0.0 {
                mu[i] += (-best - f[i]) / self.spread[i];
                moved = true;
            }
        }
        for j in 0..n {
            let rows = (0..n).filter(|&i| w[i] > 0.0);
            if f[n + j] >= 0.0 || rows.clone().any(|i| self.shifted(m, mu, i, j) > 0.0) {
                continue;
            }
            let reach = |i: usize| -self.shifted(m, mu, i, j) / (w[i] * self.spread[i]);
            let nearest = rows.min_by(|&a, &b| reach(a).total_cmp(&reach(b)));
            if let Some(i) = nearest {
                mu[n + j] += reach(i) - f[n + j] / (w[i] * w[i] * self.spread[i]);
                moved = true;
            }
        }
        moved
    }

    /// Projection of `m` onto the set in the row metric by semismooth Newton on the
    /// dual, with an exact line search along each damped Newton direction.
    ///
    /// `tol` applies to inputs of unit size; for larger inputs rounding in the
    /// multipliers limits attainable feasibility, so it scales with `max |m|`.
    fn project(&self, m: &Array2<f64>, tol: f64) -> Result<Array2<f64>> {
        let tol = tol * m.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let n = self.weights.len();
        let w = self.weights;
        let mut mu = vec![0.0; 2 * n];
        let row_total = 1.0 - self.floor.iter().sum::<f64>();
        for (i, row) in m.rows().into_iter().enumerate() {
            let lifted: Vec<f64> = row.iter().zip(&self.floor).map(|(v, f)| v - f).collect();
            mu[i] = -simplex_threshold(&lifted, row_total) / self.spread[i];
        }
        let mut x = self.primal(m, &mu);
        let mut f = self.residuals(&x);
        for _ in 0..PROJECTION_MAX_ITERS {
            if max_abs(&f) < tol {
                return Ok(x);
            }
            if self.activate_starved(m, &mut mu, &f) {
                x = self.primal(m, &mu);
                f = self.residuals(&x);
                continue;
            }
            let mut h = Array2::<f64>::zeros((2 * n, 2 * n));
            for i in 0..n {
                for j in 0..n {
                    if self.shifted(m, &mu, i, j) > 0.0 {
                        let s = self.spread[i];
                        h[[i, i]] += s;
                        h[[i, n + j]] += w[i] * s;
                        h[[n + j, i]] += w[i] * s;
                        h[[n + j, n + j]] += w[i] * w[i] * s;
                    }
                }
            }
            // Removes the null direction (w, -1) and any inactive block.
            let ridge = 1e-10 * h.diag().fold(1.0_f64, |a, &d| a.max(d));
            h.diag_mut().mapv_inplace(|d| d + ridge);
            let step = solve_dense(h, f.iter().map(|r| -r).collect()).ok_or_else(|| {
                Error::NonConvergence {
                    stage: "oracle projection",
                    iterations: 0,
                    residual: self.gap(&x),
                    partial_trace: Vec::new(),
                }
            })?;
            let norm = max_abs(&f);
            let along = |dir: &[f64], t: f64| -> (Vec<f64>, Array2<f64>, Vec<f64>) {
                let trial: Vec<f64> = mu.iter().zip(dir).map(|(a, d)| a + t * d).collect();
                let trial_x = self.primal(m, &trial);
                let trial_f = self.residuals(&trial_x);
                (trial, trial_x, trial_f)
            };
            let full = along(&step, 1.0);
            let (trial, trial_x, trial_f) = if max_abs(&full.2) <= 0.5 * norm {
                full
            } else {
                // The dual restricted to the line is convex and piecewise
                // quadratic; bisect its monotone derivative for the minimizer.
                // The direction is searched in units of its largest component
                // so that bisection resolves the step to rounding even when
                // damping inflated it.
                let scale = max_abs(&step);
                let dir: Vec<f64> = step.iter().map(|d| d / scale).collect();
                let slope_at = |t: f64| {
                    along(&dir, t)
                        .2
                        .iter()
                        .zip(&dir)
                        .map(|(a, d)| a * d)
                        .sum::<f64>()
                };
                let (mut lo, mut hi) = (0.0, 1.0);
                let mut doublings = 0;
                while slope_at(hi) < 0.0 && doublings < MAX_BACKTRACKS {
                    (lo, hi) = (hi, 2.0 * hi);
                    doublings += 1;
                }
                for _ in 0..MAX_BACKTRACKS {
                    let mid = 0.5 * (lo + hi);
                    if slope_at(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                along(&dir, hi)
            };
            (mu, x, f) = (trial, trial_x, trial_f);
        }
        if max_abs(&f) < tol {
            return Ok(x);
        }
        Err(Error::NonConvergence {
            stage: "oracle projection",
            iterations: PROJECTION_MAX_ITERS,
            residual: self.gap(&x),
            partial_trace: Vec::new(),
        })
    }

    /// Turns a gradient into the steepest ascent direction of the row metric.
    fn raise(&self, g: &Array2<f64>) -> Array2<f64> {
        let mut out = g.clone();
        for (mut row, s) in out.rows_mut().into_iter().zip(&self.spread) {
            row *= *s;
        }
        out
    }

    fn random_point(&self, rng: &mut ChaCha8Rng, tol: f64) -> Result<Array2<f64>> {
        let n = self.weights.len();
        let raw = Array2::from_shape_simple_fn((n, n), || rng.sample::<f64, _>(Exp1));
        let projected = self.project(&raw, tol)?;
        // Blend with the rank-one point so the start is interior.
        Ok(Array2::from_shape_fn((n, n), |(i, j)| {
            0.9 * projected[[i, j]] + 0.1 * self.target[j]
        }))
    }
}

fn dot(a: &[Array2<f64>], b: &[Array2<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x * y).sum()).sum()
}

fn combine(a: &[Array2<f64>], t: f64, b: &[Array2<f64>]) -> Vec<Array2<f64>> {
    a.iter().zip(b).map(|(x, y)| x + &(y * t)).collect()
}

/// Minimizes `objective` over a product of marginal sets by spectral projected
/// gradient: Barzilai-Borwein step lengths, and a nonmonotone Armijo search
/// along the projected direction.
fn projected_descent<F, G>(
    sets: &[MarginalSet<'_>],
    start: Vec<Array2<f64>>,
    objective: F,
    gradient: G,
    cfg: &OracleConfig,
) -> Result<f64>
where
    F: Fn(&[Array2<f64>]) -> f64,
    G: Fn(&[Array2<f64>]) -> Vec<Array2<f64>>,
{
    let mut x = start;
    let mut fx = objective(&x);
    let mut g = gradient(&x);
    let mut step = cfg.pgd_step;
    let mut best = fx;
    let mut recent = std::collections::VecDeque::from([fx]);
    for _ in 0..cfg.pgd_iters {
        let target = sets
            .iter()
            .zip(x.iter().zip(&g))
            .map(|(set, (xb, gb))| set.project(&(xb - &(set.raise(gb) * step)), cfg.projection_tol))
            .collect::<Result<Vec<_>>>()?;
        let d = combine(&target, -1.0, &x);
        let gap = d
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        if gap < STATIONARY_GAP {
            break;
        }
        let slope = dot(&g, &d);
        let reference = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = combine(&x, t, &d);
            let fc = objective(&candidate);
            if fc.is_finite() && fc <= reference + ARMIJO * t * slope {
                accepted = Some((candidate, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((candidate, fc)) = accepted else {
            break;
        };
        let g_next = gradient(&candidate);
        let s = combine(&candidate, -1.0, &x);
        let y = combine(&g_next, -1.0, &g);
        let sy = dot(&s, &y);
        let ss: f64 = sets.iter().zip(&s).map(|(set, sb)| set.inner(sb, sb)).sum();
        step = if sy > 0.0 {
            (ss / sy).clamp(MIN_STEP, MAX_STEP)
        } else {
            MAX_STEP
        };
        (x, fx, g) = (candidate, fc, g_next);
        best = best.min(fx);
        recent.push_back(fx);
        if recent.len() > NONMONOTONE_MEMORY {
            recent.pop_front();
        }
    }
    Ok(best)
}

fn check_pgd_dimension(n: usize) -> Result<()> {
    if !(2..=MAX_ORACLE_TOPICS).contains(&n) {
        return Err(Error::Dimension {
            n,
            min: 2,
            max: MAX_ORACLE_TOPICS,
        });
    }
    Ok(())
}

/// Joint projected gradient descent on `(A, Q)` for the minimal conditional
/// KL divergence; best of [`PGD_STARTS`] random feasible starts.
pub fn pgd_dmin(t: &QcaTriplet, cfg: &OracleConfig) -> Result<f64> {
    let n = t.n_topics();
    check_pgd_dimension(n)?;
    let pc = t.p_c.probs();
    let sets = [
        MarginalSet::new(pc, t.p_a.probs(), INTERIOR_FLOOR),
        MarginalSet::new(pc, t.p_q.probs(), INTERIOR_FLOOR),
    ];
    let objective = |x: &[Array2<f64>]| -> f64 {
        let (a, q) = (&x[0], &x[1]);
        let mut total = 0.0;
        for ((i, j), &aij) in a.indexed_iter() {
            if aij > 0.0 && pc[i] > 0.0 {
                if q[[i, j]] <= 0.0 {
                    return f64::INFINITY;
                }
                total += pc[i] * aij * (aij / q[[i, j]]).ln();
            }
        }
        total
    };
    let gradient = |x: &[Array2<f64>]| -> Vec<Array2<f64>> {
        let (a, q) = (&x[0], &x[1]);
        // Entries with both values at zero contribute nothing; their floors
        // keep the gradient finite on that face.
        let ga = Array2::from_shape_fn((n, n), |(i, j)| {
            pc[i] * ((a[[i, j]].max(1e-16) / q[[i, j]].max(1e-16)).ln() + 1.0)
        });
        let gq = Array2::from_shape_fn((n, n), |(i, j)| {
            if a[[i, j]] == 0.0 {
                0.0
            } else {
                -pc[i] * a[[i, j]] / q[[i, j]]
            }
        });
        vec![ga, gq]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = f64::INFINITY;
    for _ in 0..PGD_STARTS {
        let start = vec![
            sets[0].random_point(&mut rng, cfg.projection_tol)?,
            sets[1].random_point(&mut rng, cfg.projection_tol)?,
        ];
        best = best.min(projected_descent(&sets, start, objective, gradient, cfg)?);
    }
    Ok(best)
}

/// Projected gradient descent over reverse matrices for the minimal total
/// entropy production of the forward process `(p_c, a_star)`.
pub fn pgd_sep(
    a_star: &TransitionMatrix,
    p_c: &TopicDistribution,
    p_a: &TopicDistribution,
    cfg: &OracleConfig,
) -> Result<f64> {
    let n = a_star.n();
    check_pgd_dimension(n)?;
    let (pc, pa) = (p_c.probs(), p_a.probs());
    let forward = Array2::from_shape_fn((n, n), |(i, j)| pc[i] * a_star.get(i, j));
    let residual = (0..n)
        .map(|j| (forward.column(j).sum() - pa[j]).abs())
        .fold(0.0, f64::max);
    if residual > 1e-6 {
        return Err(Error::InfeasibleReverse { residual });
    }
    // Reverse matrix rows are answer topics: sum_j p_a[j] R[j][i] = p_c[i].
    let sets = [MarginalSet::new(pa, pc, INTERIOR_FLOOR)];
    let objective = |x: &[Array2<f64>]| -> f64 {
        let r = &x[0];
        let mut total = 0.0;
        for ((i, j), &p) in forward.indexed_iter() {
            if p > 0.0 {
                let back = pa[j] * r[[j, i]];
                if back <= 0.0 {
                    return f64::INFINITY;
                }
                total += p * (p / back).ln();
            }
        }
        total
    };
    let gradient = |x: &[Array2<f64>]| -> Vec<Array2<f64>> {
        let r = &x[0];
        vec![Array2::from_shape_fn((n, n), |(j, i)| {
            if forward[[i, j]] == 0.0 {
                0.0
            } else {
                -forward[[i, j]] / r[[j, i]]
            }
        })]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = f64::INFINITY;
    for _ in 0..PGD_STARTS {
        let start = vec![sets[0].random_point(&mut rng, cfg.projection_tol)?];
        best = best.min(projected_descent(&sets, start, objective, gradient, cfg)?);
    }
    Ok(best)
}
