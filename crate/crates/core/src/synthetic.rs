//! Seeded Dirichlet generator for question/context/answer triplets and the
//! faithfulness-vs-entropy-production correlation study built on it.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{SolverConfig, Units};
use crate::error::{Error, Result};
use crate::info::shannon_entropy;
use crate::model::{QcaTriplet, TopicDistribution};
use crate::sep_solver::solve_sep;
use crate::sf_solver::solve_sf;

/// Coordinate spreads at or below this make correlation and regression undefined.
pub const DEGENERATE_SPREAD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_topics: usize,
    pub n_triplets: usize,
    pub alpha_q: f64,
    pub alpha_c: f64,
    pub alpha_a: f64,
    /// Exponent applied to `p_c` before it modulates the answer draw.
    pub context_coupling: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_topics: 23,
            n_triplets: 100,
            alpha_q: 0.3,
            alpha_c: 1.5,
            alpha_a: 0.8,
            context_coupling: 0.7,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_topics == 0 || self.n_triplets == 0 {
            return Err(Error::InvalidConfig(
                "n_topics and n_triplets must be positive".into(),
            ));
        }
        for (name, a) in [
            ("alpha_q", self.alpha_q),
            ("alpha_c", self.alpha_c),
            ("alpha_a", self.alpha_a),
        ] {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {a}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.context_coupling) {
            return Err(Error::InvalidConfig(format!(
                "context_coupling must lie in [0, 1], got {}",
                self.context_coupling
            )));
        }
        Ok(())
    }
}

fn dirichlet(rng: &mut ChaCha20Rng, alpha: f64, n: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("validated concentration");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        // Tiny concentrations can underflow every coordinate; redraw.
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.into_iter().map(|x| x / total).collect()
}

/// Draws triplet `index` of the stream identified by `cfg.seed`.
///
/// Each index gets its own ChaCha20 stream, so a triplet does not depend on
/// how many others were drawn before it.
pub fn sample_qca(cfg: &SynthConfig, index: u64) -> Result<QcaTriplet> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let n = cfg.n_topics;
    let p_q = dirichlet(&mut rng, cfg.alpha_q, n);
    let p_c = dirichlet(&mut rng, cfg.alpha_c, n);
    let d = dirichlet(&mut rng, cfg.alpha_a, n);
    let mut p_a = normalize(
        p_c.iter()
            .zip(&d)
            .map(|(c, d)| c.powf(cfg.context_coupling) * d)
            .collect(),
    );
    if !p_a.iter().sum::<f64>().is_finite() {
        p_a = d;
    }
    QcaTriplet::new(
        format!("synth-{index}"),
        TopicDistribution::new(p_q)?,
        TopicDistribution::new(p_c)?,
        TopicDistribution::new(p_a)?,
    )
}

/// One solved study triplet. Entropies and entropy production are in the
/// report units of the solver config; `d_min` is in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub index: u64,
    pub id: String,
    pub f_s: f64,
    pub d_min: f64,
    pub sep_total: f64,
    pub s_system: f64,
    pub s_medium: f64,
    pub naive_sep: f64,
    pub h_q: f64,
    pub h_c: f64,
    pub h_a: f64,
    pub outer_iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyFailure {
    pub index: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub units: Units,
    pub records: Vec<StudyRecord>,
    pub failures: Vec<StudyFailure>,
    /// Absent when fewer than two points survive or either coordinate is constant.
    pub pearson_r: Option<f64>,
    pub ols_slope: Option<f64>,
    pub ols_intercept: Option<f64>,
    /// `(f_s, 1/f_s - 1)` per record, in record order.
    pub naive_curve_points: Vec<(f64, f64)>,
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn centered_moments(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    if spread(xs) <= DEGENERATE_SPREAD || spread(ys) <= DEGENERATE_SPREAD {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    Some((mx, my, sxx, syy, sxy))
}

/// Pearson correlation coefficient, clamped to `[-1, 1]`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (_, _, sxx, syy, sxy) = centered_moments(xs, ys)?;
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Least-squares fit `y = slope * x + intercept`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let (mx, my, sxx, _, sxy) = centered_moments(xs, ys)?;
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn solve_record(index: u64, t: &QcaTriplet, solver: &SolverConfig) -> Result<StudyRecord> {
    let sf = solve_sf(t, solver)?;
    let sep = solve_sep(&sf, t, solver)?;
    let units = solver.report_units;
    Ok(StudyRecord {
        index,
        id: t.id.clone(),
        f_s: sf.f_s,
        d_min: sf.d_min,
        sep_total: sep.sep_total,
        s_system: sep.s_system,
        s_medium: sep.s_medium,
        naive_sep: sep.naive_sep,
        h_q: shannon_entropy(&t.p_q, units),
        h_c: shannon_entropy(&t.p_c, units),
        h_a: shannon_entropy(&t.p_a, units),
        outer_iters: sf.outer_iters,
        residual: sf.constraint_residual,
    })
}

/// Builds a report from already-solved records.
pub fn summarize(
    units: Units,
    records: Vec<StudyRecord>,
    failures: Vec<StudyFailure>,
) -> StudyReport {
    let xs: Vec<f64> = records.iter().map(|r| r.f_s).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.sep_total).collect();
    let fit = ols(&xs, &ys);
    StudyReport {
        units,
        pearson_r: pearson(&xs, &ys),
        ols_slope: fit.map(|f| f.0),
        ols_intercept: fit.map(|f| f.1),
        naive_curve_points: records.iter().map(|r| (r.f_s, r.naive_sep)).collect(),
        records,
        failures,
    }
}

/// Samples `cfg.n_triplets` triplets, solves each, and correlates
/// faithfulness with minimal entropy production.
///
/// Solver failures are collected per triplet and excluded from the statistics.
pub fn run_study(cfg: &SynthConfig, solver: &SolverConfig) -> Result<StudyReport> {
    cfg.validate()?;
    solver.validate()?;
    let outcomes: Vec<(u64, Result<StudyRecord>)> = (0..cfg.n_triplets as u64)
        .into_par_iter()
        .map(|index| {
            let outcome = sample_qca(cfg, index).and_then(|t| solve_record(index, &t, solver));
            (index, outcome)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (index, outcome) in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("synthetic triplet {index} failed: {e}");
                failures.push(StudyFailure {
                    index,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(summarize(solver.report_units, records, failures))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::entropy_nats;
    use crate::model::validate_triplet;
    use approx::assert_relative_eq;

    #[test]
    fn same_index_same_triplet() {
        let cfg = SynthConfig::default();
        assert_eq!(sample_qca(&cfg, 7).unwrap(), sample_qca(&cfg, 7).unwrap());
        assert_ne!(
            sample_qca(&cfg, 7).unwrap().p_q,
            sample_qca(&cfg, 8).unwrap().p_q
        );
    }

    #[test]
    fn large_concentration_is_near_uniform() {
        let cfg = SynthConfig {
            alpha_c: 1e6,
            ..Default::default()
        };
        let t = sample_qca(&cfg, 0).unwrap();
        let u = 1.0 / cfg.n_topics as f64;
        assert!(t.p_c.probs().iter().all(|p| (p - u).abs() < 1e-2));
    }

    #[test]
    fn default_sparsity_ordering() {
        let cfg = SynthConfig::default();
        let (mut hq, mut hc, mut ha) = (0.0, 0.0, 0.0);
        for i in 0..100 {
            let t = sample_qca(&cfg, i).unwrap();
            assert!(validate_triplet(&t.to_raw()).is_empty());
            hq += entropy_nats(t.p_q.probs());
            hc += entropy_nats(t.p_c.probs());
            ha += entropy_nats(t.p_a.probs());
        }
        assert!(hq < ha && ha < hc, "{hq} {ha} {hc}");
    }

    #[test]
    fn collinear_points_fit_exactly() {
        let xs = [0.2, 0.5, 0.9];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        assert_relative_eq!(pearson(&xs, &ys).unwrap(), -1.0, epsilon = 1e-15);
        let (slope, intercept) = ols(&xs, &ys).unwrap();
        assert_relative_eq!(slope, -2.0, epsilon = 1e-14);
        assert_relative_eq!(intercept, 3.0, epsilon = 1e-14);
    }

    #[test]
    fn hand_computed_statistics() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [2.0, 2.0, 5.0];
        // sxy = (-1)(-1) + 0 + (1)(2) = 3, sxx = 2, syy = 1 + 1 + 4 = 6
        assert_relative_eq!(
            pearson(&xs, &ys).unwrap(),
            3.0 / (2.0f64.sqrt() * 6.0f64.sqrt())
        );
        let (slope, intercept) = ols(&xs, &ys).unwrap();
        assert_relative_eq!(slope, 1.5);
        assert_relative_eq!(intercept, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_statistics_are_absent() {
        assert_eq!(pearson(&[0.5], &[1.0]), None);
        assert_eq!(pearson(&[0.1, 0.2], &[1.0, 1.0]), None);
        assert_eq!(ols(&[0.3, 0.3], &[1.0, 2.0]), None);
    }

    #[test]
    fn single_triplet_study() {
        let cfg = SynthConfig {
            n_triplets: 1,
            n_topics: 5,
            ..Default::default()
        };
        let report = run_study(&cfg, &SolverConfig::default()).unwrap();
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.pearson_r, None);
        assert_eq!(report.ols_slope, None);
    }

    #[test]
    fn study_is_deterministic() {
        let cfg = SynthConfig {
            n_triplets: 12,
            n_topics: 8,
            ..Default::default()
        };
        let solver = SolverConfig::default();
        let a = run_study(&cfg, &solver).unwrap();
        let b = run_study(&cfg, &solver).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(a.records.windows(2).all(|w| w[0].index < w[1].index));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            SynthConfig {
                alpha_q: 0.0,
                ..Default::default()
            },
            SynthConfig {
                context_coupling: 1.5,
                ..Default::default()
            },
            SynthConfig {
                n_topics: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(sample_qca(&cfg, 0), Err(Error::InvalidConfig(_))));
        }
    }
}
