//! Time-consistent mean-variance equilibrium policies under CKLS stochastic
//! volatility.
//!
//! The myopic part of the policy comes from a linear Volterra equation of the
//! second kind ([`volterra`]); the hedging part from a nonlocal BSDE system
//! solved by least-squares regression backward Euler ([`bsde`]). Closed-form
//! CIR and OU policies ([`baselines`]) serve as oracles, and [`evaluate`]
//! estimates the conditional objective by Monte Carlo.

pub mod baselines;
pub mod bsde;
pub mod error;
pub mod evaluate;
pub mod model;
pub mod output;
pub mod policy;
pub mod problems;
pub mod regression;
pub mod simulate;
pub mod statedep;
pub mod volterra;

pub use error::{Error, Result};
