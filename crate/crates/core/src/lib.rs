//! Simulation and verification of parallel CHSH self-tests.
//!
//! The crate evaluates bipartite strategies for `n/2` simultaneous CHSH
//! subtests, extracts candidate qubit operators `X'_k`, `Z'_k` from the
//! measurement statistics, and checks the extracted operators against the
//! conditions that certify `n/2` maximally entangled pairs up to a local swap
//! isometry.
//!
//! Module map:
//! - [`linalg`]: dense complex matrices, spectral operator functions.
//! - [`bits`], [`strategy`]: questions, answers and player models.
//! - [`game`]: win rule, CHSH functional, exact value, Monte Carlo referee.
//! - [`extraction`]: relabeling symmetries, pigeonhole searches, `X'`/`Z'` construction.
//! - [`verifier`]: condition norms, swap isometry, distances, certification.
//! - [`cli`]: command-line front end.

pub mod bits;
pub mod cli;
pub mod error;
pub mod extraction;
pub mod game;
pub mod linalg;
pub mod strategy;
pub mod verifier;

pub use bits::BitString;
pub use error::{Error, Result};
