//! Link-level simulator for grant-free, asynchronous DSSS uplinks with more
//! devices than chips per symbol.
//!
//! The crate covers the discrete signal model ([`model`]), oversampled
//! waveform synthesis and matched filtering ([`waveform`]), two device
//! identification algorithms ([`ident_ridge`], [`ident_bic`]), non-coherent
//! multiuser detection ([`mud`]) and Monte Carlo orchestration ([`harness`]).

pub mod error;
pub mod harness;
pub mod ident_bic;
pub mod ident_ridge;
pub mod model;
pub mod mud;
pub mod rng;
pub mod waveform;

pub use error::{Error, Result};
pub use nalgebra::DMatrix;
pub use num_complex::Complex64;

/// Complex matrix used for chip-level observations.
pub type CMatrix = DMatrix<Complex64>;
