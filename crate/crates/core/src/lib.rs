//! Numerical toolkit for entropic projection and McKean-Vlasov control
//! problems with running distributional constraints `Ψ(μ_t) ≤ ε` in one
//! space dimension.
//!
//! The pipeline is: a [`model::Scenario`] describes coefficients, constraint
//! and initial law; [`hjb`] and [`fp`] solve the backward and forward halves
//! of the optimality system; [`control`] finds the Lagrange multiplier (and
//! the McKean-Vlasov fixed point); [`particles`] and [`analysis`] provide
//! Monte Carlo cross-checks, stability sweeps and diagnostics; [`cli`] is
//! the batch front-end.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod expr;
pub mod fp;
pub mod hjb;
pub mod io;
pub mod model;
pub mod oracle;
pub mod particles;
pub mod scenarios;
pub mod tridiag;
