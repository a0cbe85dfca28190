//! Numerical laboratory for the multi-particle Anderson tight-binding model
//! with sub-exponentially decaying inter-particle interaction.
//!
//! The crate builds finite-volume Hamiltonians `-Delta + V + h U` on
//! multi-particle cubes, classifies cubes by their boundary Green functions,
//! estimates the probability that separable cube pairs are simultaneously
//! singular, and measures eigenfunction decay and Hilbert-Schmidt moments.

pub mod disorder;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod msa;
pub mod observables;
pub mod operator;
pub mod parallel;
pub mod spectral;

pub use error::{Error, Result};

/// Diagnostic on stderr, silenced by setting `ANDERSON_QUIET`.
pub(crate) fn note(msg: &str) {
    if std::env::var_os("ANDERSON_QUIET").is_none() {
        eprintln!("note: {msg}");
    }
}
