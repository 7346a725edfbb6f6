//! Faithfulness metrics for question/context/answer (QCA) triplets given as
//! topic distributions.
//!
//! * [`sf_solver`] computes the semantic faithfulness score `F_S = 1 / (1 + D_min)`,
//!   where `D_min` is the smallest conditional KL divergence between an
//!   answer-transition matrix and a question-transition matrix that both
//!   reproduce the observed marginals.
//! * [`sep_solver`] computes a lower bound on the entropy produced by the
//!   context-to-answer transition and splits it into system and medium parts.
//! * [`oracle`] holds slow, independent reference solvers for small instances.
//! * [`synthetic`] generates seeded Dirichlet triplets and runs correlation studies.
//! * [`cli`] is the command-line front end.
//!
//! ```
//! use faithfulness::{solve_sf, solve_sep, QcaTriplet, SolverConfig};
//!
//! let t = QcaTriplet::from_vecs("q1", vec![0.6, 0.4], vec![0.5, 0.5], vec![0.7, 0.3]).unwrap();
//! let cfg = SolverConfig::default();
//! let sf = solve_sf(&t, &cfg).unwrap();
//! let sep = solve_sep(&sf, &t, &cfg).unwrap();
//! assert!(sf.f_s > 0.9 && sf.f_s <= 1.0);
//! assert!(sep.sep_total >= -1e-9);
//! ```

pub mod cli;
pub mod config;
mod dual;
pub mod error;
pub mod info;
pub mod model;
pub mod oracle;
pub mod sep_solver;
pub mod sf_solver;
pub mod synthetic;

pub use config::{SolverConfig, Units};
pub use error::{Error, Result};
pub use info::{from_cluster_counts, kl_conditional, shannon_entropy};
pub use model::{
    validate_triplet, Finding, QcaTriplet, RawTriplet, TopicDistribution, TransitionMatrix,
};
pub use sep_solver::{first_order_sep, naive_sep, solve_sep, system_entropy_change, SepResult};
pub use sf_solver::{a_step, init_q_matrix, q_step, solve_sf, SfResult};
