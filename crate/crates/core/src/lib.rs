//! Instantaneous frequency estimation for multicomponent signals whose
//! modes interfere in the time-frequency plane.
//!
//! The chain is: Gaussian STFT spectrogram ([`tfr`]) → per-frame inversion
//! to an exponential-sum coefficient sequence and annihilating-filter
//! frequency recovery ([`prony`]) → Cadzow / total-least-squares denoising
//! ([`denoise`]) → outlier rejection, monotone gap filling and smoothing
//! spline refinement through interference-free instants ([`refine`]).
//! [`pipeline`] wires the stages together and runs parameter sweeps.

pub mod config;
pub mod denoise;
pub mod error;
pub mod export;
pub mod linalg;
pub mod pipeline;
pub mod prony;
pub mod refine;
pub mod signalgen;
pub mod tfr;

pub use error::{Error, Result};
