use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logarithm base used when reporting entropy-like quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Bits,
    Nats,
}

impl Units {
    /// Converts a value computed with natural logarithms into these units.
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            Units::Nats => nats,
            Units::Bits => nats / std::f64::consts::LN_2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Units::Bits => "bits",
            Units::Nats => "nats",
        }
    }
}

/// Stopping rules and numerical safeguards for the SF and SEP solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Outer loop stops once the objective changes by less than this (nats).
    pub tol_outer: f64,
    /// Fixed-point and dual-ascent sweeps stop once the largest relative change is below this.
    pub tol_inner: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Floor added to every probability entry (followed by renormalization) before solving.
    pub epsilon_smooth: f64,
    /// Largest marginal violation accepted from a solved matrix.
    pub feasibility_tol: f64,
    pub report_units: Units,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_outer: 1e-9,
            tol_inner: 1e-11,
            max_outer_iters: 500,
            max_inner_iters: 20_000,
            epsilon_smooth: 1e-12,
            feasibility_tol: 1e-7,
            report_units: Units::Bits,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_outer", self.tol_outer),
            ("tol_inner", self.tol_inner),
            ("feasibility_tol", self.feasibility_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(0.0..=1e-6).contains(&self.epsilon_smooth) {
            return Err(Error::InvalidConfig(format!(
                "epsilon_smooth must lie in [0, 1e-6], got {}",
                self.epsilon_smooth
            )));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::InvalidConfig(
                "iteration budgets must be positive".into(),
            ));
        }
        Ok(())
    }
}
