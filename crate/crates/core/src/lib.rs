//! Differentially private SGD for pointwise and pairwise convex learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: vectors, projection, seeded random streams.
//! * [`losses`]: convex losses with certified Lipschitz and smoothness constants.
//! * [`privacy`]: Rényi-DP accounting and noise calibration.
//! * [`sgd`]: the two private SGD engines and their step-size schedules.
//! * [`problems`]: synthetic problems with known minimizers and risk oracles.
//! * [`analysis`]: closed-form stability and optimization bounds, plus estimators.
//! * [`experiments`]: excess-risk sweeps and CSV/JSON reports.
//! * [`config`] and [`cli`]: strict TOML configs and the `dpsgd` command line.

pub mod numerics;
pub mod losses;
pub mod privacy;
pub mod sgd;
pub mod problems;
pub mod analysis;
pub mod experiments;
pub mod config;
pub mod cli;
mod quadrature;
