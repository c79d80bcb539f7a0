//! Hybrid analog/digital precoder design for wideband MIMO-OFDM links with
//! low-resolution phase shifters.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod constants;
pub mod error;
pub mod evalcore;
pub mod harness;
pub mod numerics;
pub mod par;
pub mod rng;
pub mod solver;

pub use config::{Structure, SystemConfig};
pub use error::{Error, Result};
