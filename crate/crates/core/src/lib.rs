//! Massive MIMO link and random-access simulation for IoT traffic.
//!
//! The [`urllc`] side evaluates how channel-training overhead trades against
//! reliability for short downlink packets under tight latency budgets. The
//! [`mmtc`] side simulates crowded random access with SUCRe contention
//! resolution and coded random access. [`harness`] ties both to TOML configs
//! and CSV output.

pub mod channel;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod mc;
pub mod precoding;
pub mod stats;
pub mod mmtc;
pub mod urllc;

pub use error::{Error, Result};
