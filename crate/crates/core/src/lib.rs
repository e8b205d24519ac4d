//! Joint maximum-likelihood estimation of carrier frequency offset (CFO),
//! sampling frequency offset (SFO), integer symbol timing error (STE) and
//! channel impulse response for a MIMO-OFDM training block.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`] – dense complex kernels (Kronecker/Hadamard products,
//!   condition-checked least squares, projections).
//! * [`model`] – the structured matrices of the received-signal model and a
//!   synthesiser for impaired training blocks.
//! * [`crlb`] – Fisher information and Cramér-Rao bounds for the CFO/SFO pair,
//!   with and without the channel as a nuisance parameter.
//! * [`estimators`] – the ML, MML and SML grid-search estimators behind a
//!   common [`estimators::Estimator`] trait and a name-keyed registry.
//! * [`harness`] – Monte-Carlo SNR sweeps producing MSE / timing-failure
//!   curves next to the matching bounds.
//! * [`config`] and [`io`] – the TOML plan format and the binary
//!   received-vector file format used by the command-line tool.

pub mod config;
pub mod crlb;
mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod model;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
pub use estimators::{
    Algorithm, EstimationResult, Estimator, EstimatorRegistry, GridSpec, SearchContext,
};
pub use model::{
    ChannelProfile, ChannelState, Impairments, ReceivedSignal, SystemConfig, TrainingMatrix,
};
pub use numerics::{CMatrix, CVector, C64};
