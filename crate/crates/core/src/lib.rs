//! Simulator, solver and learning harness for avatar-pseudonym markets.

pub mod config;
pub mod drl;
pub mod error;
pub mod market;
pub mod popa;
pub mod protocol;
pub mod scenario;
pub mod stackelberg;
pub mod sweep;

pub use error::{Error, Result};
