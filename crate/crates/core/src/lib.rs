//! Security analysis of Gaussian-modulated coherent-state
//! measurement-device-independent QKD under one-mode entangling-cloner
//! attacks.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: channel and protocol parameters, fiber loss, detector absorption.
//! * [`symplectic`]: covariance matrices, symplectic spectra, Gaussian conditioning.
//! * [`bounds`]: mutual information, Eve's Shannon and Holevo terms, DR/RR key rates.
//! * [`scan`]: modulation optimisation, rate-vs-distance sweeps, cutoff search.
//! * [`simulate`]: Monte Carlo protocol runs, parameter estimation, LO phase calibration.
//! * [`cli`]: the `cvmdi` command-line front end.
//!
//! All variances are in shot-noise units (vacuum variance = 1) and all
//! information quantities are in bits per pulse.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod model;
pub mod scan;
pub mod simulate;
pub mod symplectic;

pub use error::{Error, Result};
