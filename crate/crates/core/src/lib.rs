//! Survival probabilities for the discrete-time risk model
//! `W(n) = u + kappa n - sum_{i <= n} X_i` with integer claims.

pub mod cli;
pub mod config;
pub mod dist;
pub mod error;
pub mod oracle;
pub mod pi_solver;
pub mod pipeline;
pub mod poly;
pub mod report;
pub mod roots;
pub mod survival;

pub use config::{McConfig, ModelConfig, Tolerances};
pub use dist::{ClaimDistribution, ClaimLaw, NetProfit};
pub use error::{Error, Result};
