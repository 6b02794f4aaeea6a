//! Toolkit for inferring strategic agents' cost functions from distribution
//! shift, and for using the inferred response maps downstream.
//!
//! Agents react to a published predictor by maximizing a known benefit minus
//! an unknown Bregman-divergence cost. This crate simulates those responses,
//! estimates the cost potential by aligning optimal-transport pushforwards of
//! ex-ante and ex-post samples, and feeds the estimated response map into
//! plug-in performative risk minimization, alongside repeated-gradient and
//! least-squares baselines.

pub mod agents;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod measures;
pub mod ot;
pub mod perf_risk;
pub mod potentials;
pub mod rng;

pub use error::{Error, Result};
