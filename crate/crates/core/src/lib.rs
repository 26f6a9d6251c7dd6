//! Simulation of noise-assisted transport through small networks of coupled
//! bosonic cavities.
//!
//! Two engines compute the same observables: a truncated-Fock Lindblad engine
//! ([`lindblad`]) and an exact second-moment engine ([`moments`]) that is valid
//! because the dynamics is quadratic.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the math
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod linalg;
pub mod lindblad;
pub mod moments;
pub mod network;
pub mod ode;
pub mod sparse;
pub mod trajectory;

/// Crate version, recorded in every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result, Violation};
pub use fock::{build_basis, FockBasis};
pub use network::{
    standard_four_site, validate_network, FourSiteCouplings, InterferenceMode, NetworkSpec, ValidatedNetwork,
};
pub use sparse::SparseOperator;
