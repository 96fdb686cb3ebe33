//! Payroll-tax incidence under imperfect competition.
//!
//! The crate solves a monopsony + CES + constant-elasticity-demand firm model,
//! computes and cross-checks its tax elasticities, estimates the structural
//! parameters by classical minimum distance, generates synthetic matched
//! employer-employee panels with a known treatment effect, and provides the
//! fixed-effects OLS / 2SLS machinery used to analyse them.

pub mod cmd;
pub mod econometrics;
pub mod economy;
pub mod elasticity;
pub mod error;
pub mod optim;
pub mod panel;
pub mod plot;
pub mod roots;

pub use error::{Error, Result};
