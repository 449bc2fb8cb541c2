//! TDMA frame structure, beacons, propagation-compensated slot boundaries,
//! the three-way PTP estimator and event synchronization.
//!
//! Offset convention: `o = device clock − AP clock`, so a device whose radio
//! counter reads ahead of the AP has a positive offset.

mod payload;
mod phy;
mod sync;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timebase::TimeError;

pub use payload::{
    AppMessage, BeaconPayload, DataPacketPayload, DecodeError, Feedback, ScheduleDirective,
};
pub use phy::{slot_duration, PhyConfig};
pub use sync::{
    ap_make_beacon, compute_slot_boundary, drift_metric, estimate_ap_time, ptp_update,
    schedule_synchronized_event, Anchor, ApState, PtpEstimate, SyncDiagnostics, SyncPolicy,
    SyncState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("device has not received a beacon yet")]
    NotSynchronized,
    #[error("clock offset not yet estimated")]
    OffsetUnknown,
    #[error("target frame {target} precedes anchor frame {anchor}")]
    TargetBeforeAnchor { target: u64, anchor: u64 },
    #[error("slot {slot} outside frame of {slots} slots")]
    SlotOutOfRange { slot: u32, slots: u32 },
    #[error("invalid PHY configuration: {0}")]
    InvalidPhy(String),
    #[error(transparent)]
    Time(#[from] TimeError),
}

/// Slot `slot` of frame `frame`. Slot 0 is always the beacon slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotAddress {
    pub frame: u64,
    pub slot: u32,
}

impl SlotAddress {
    pub const fn new(frame: u64, slot: u32) -> Self {
        SlotAddress { frame, slot }
    }

    pub fn is_beacon(&self) -> bool {
        self.slot == 0
    }

    /// Absolute slot index counted from frame 0, slot 0.
    pub fn linear(&self, phy: &PhyConfig) -> u64 {
        self.frame * phy.slots_per_frame as u64 + self.slot as u64
    }
}

impl fmt::Display for SlotAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.frame, self.slot)
    }
}
