//! Constructive solver for vortex condensation equations of Liouville type.
//!
//! The library builds the unique solutions of a scalar master equation and of
//! a coupled two-field system on doubly periodic cells and on the plane by
//! minimizing strictly convex energy functionals, then verifies flux
//! quantization, sign, and decay properties of the computed fields.
//!
//! Modules are layered bottom-up: [`model`] holds parameters and feasibility
//! checks, [`grid`] the discrete calculus, [`background`] the singular source
//! splittings, [`energy`] the variational functionals, [`solver`] the Newton
//! iteration and per-regime pipelines, [`diagnostics`] the post-solve
//! verification, and [`cli`] the command-line front end.

pub mod background;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod energy;
pub mod grid;
pub mod io;
pub mod model;
pub mod solver;

pub mod par;

mod fft;

pub use model::{
    classify_regime, feasibility_scalar_periodic, feasibility_system_periodic,
    guaranteed_sign_properties, FeasibilityVerdict, Regime, ScalarModel, SignGuarantees,
    SystemModel, Vortex, VortexSet,
};

