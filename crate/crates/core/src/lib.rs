//! Beacon-synchronized TDMA over split host / radio-front-end nodes.
//!
//! The crate is a protocol library plus a deterministic discrete-event
//! simulator built on top of it:
//!
//! - [`timebase`]: integer-nanosecond clocks on typed axes and sample counting.
//! - [`channel`]: host↔radio link delays, RF propagation, packet detection.
//! - [`protocol`]: frame/slot arithmetic, beacons, the three-way PTP estimator
//!   and event synchronization.
//! - [`jit`]: just-in-time transmit scheduling and the radio TX queue.
//! - [`sim`]: the event engine, metrics and experiment drivers.
//! - [`scenario`] and [`cli`]: configuration ingestion, presets and result files.

pub mod channel;
pub mod cli;
pub mod jit;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod timebase;

use std::fmt;

use serde::{Deserialize, Serialize};

/// Node identifier. The AP is conventionally node 0 but nothing depends on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u16);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
