use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{BeaconPayload, Feedback, PhyConfig, ProtocolError, ScheduleDirective, SlotAddress};
use crate::timebase::{Nanos, RadioTime, SampleCounter};
use crate::NodeId;

/// How many of its own recent uplink timestamps a device remembers while
/// waiting for the AP's echo.
const PENDING_CAPACITY: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Anchor {
    pub frame: u64,
    pub arrival: RadioTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PtpEstimate {
    pub delay: Nanos,
    pub offset: Nanos,
    /// The raw delay came out negative and was clamped to zero.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncPolicy {
    pub compensate: bool,
    /// Stop re-anchoring on beacons after this frame.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_after_frame: Option<u64>,
    /// Smooth successive delay estimates instead of overwriting them. The
    /// offset always takes the latest value since it moves with drift.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay_ewma_alpha: Option<f64>,
}

impl Default for SyncPolicy {
    fn default() -> Self {
        SyncPolicy {
            compensate: true,
            freeze_after_frame: None,
            delay_ewma_alpha: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncDiagnostics {
    pub beacons: u64,
    pub stale_beacons: u64,
    pub frozen_beacons: u64,
    pub ptp_updates: u64,
    pub negative_delay_clamps: u64,
    pub unmatched_feedback: u64,
}

/// Per-device synchronization state.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncState {
    pub device: NodeId,
    pub policy: SyncPolicy,
    anchor: Option<Anchor>,
    /// `(t1, s00k)` from the most recent processed beacon.
    last_beacon: Option<(RadioTime, RadioTime)>,
    d_est: Option<Nanos>,
    o_est: Option<Nanos>,
    pending: VecDeque<RadioTime>,
    pub diagnostics: SyncDiagnostics,
}

impl SyncState {
    pub fn new(device: NodeId, policy: SyncPolicy) -> Self {
        SyncState {
            device,
            policy,
            anchor: None,
            last_beacon: None,
            d_est: None,
            o_est: None,
            pending: VecDeque::new(),
            diagnostics: SyncDiagnostics::default(),
        }
    }

    pub fn anchor(&self) -> Option<Anchor> {
        self.anchor
    }

    pub fn d_est(&self) -> Option<Nanos> {
        self.d_est
    }

    pub fn o_est(&self) -> Option<Nanos> {
        self.o_est
    }

    pub fn is_synchronized(&self) -> bool {
        self.anchor.is_some()
    }

    /// Remembers the radio timestamp tagged on an outgoing uplink.
    pub fn record_transmission(&mut self, tx_radio_time: RadioTime) {
        if self.pending.len() == PENDING_CAPACITY {
            self.pending.pop_front();
        }
        self.pending.push_back(tx_radio_time);
    }

    /// Handles a detected beacon whose first sample landed on `arrival_sample`.
    ///
    /// Feedback is paired with the previous beacon's timestamps before the
    /// anchor moves, so the handshake always spans one beacon and one uplink.
    pub fn device_on_beacon(
        &mut self,
        payload: &BeaconPayload,
        arrival_sample: u64,
        counter: &SampleCounter,
    ) {
        self.diagnostics.beacons += 1;
        if let Some(a) = self.anchor {
            if payload.frame <= a.frame {
                self.diagnostics.stale_beacons += 1;
                return;
            }
        }
        let t1 = counter.sample_arrival_time(arrival_sample);
        let frozen = matches!(
            (self.policy.freeze_after_frame, self.anchor),
            (Some(limit), Some(_)) if payload.frame > limit
        );
        if frozen {
            self.diagnostics.frozen_beacons += 1;
            return;
        }

        if let Some(fb) = payload.feedback.iter().find(|f| f.device == self.device) {
            self.apply_feedback(fb);
        }
        self.anchor = Some(Anchor {
            frame: payload.frame,
            arrival: t1,
        });
        // The delay is stationary but the offset walks with drift, so the
        // offset follows every beacon's downlink leg.
        if let Some(d) = self.d_est {
            self.o_est = Some(t1 - payload.tx_radio_time - d);
        }
        self.last_beacon = Some((t1, payload.tx_radio_time));
    }

    fn apply_feedback(&mut self, fb: &Feedback) {
        let Some((t1, s00k)) = self.last_beacon else {
            self.diagnostics.unmatched_feedback += 1;
            return;
        };
        let Some(pos) = self.pending.iter().position(|&t| t == fb.tx_echo) else {
            self.diagnostics.unmatched_feedback += 1;
            return;
        };
        self.pending.drain(..=pos);
        let est = ptp_update(t1, s00k, fb.tx_echo, fb.rx_time);
        if est.clamped {
            self.diagnostics.negative_delay_clamps += 1;
        }
        self.diagnostics.ptp_updates += 1;
        let smooth = |old: Option<Nanos>, new: Nanos| match (self.policy.delay_ewma_alpha, old) {
            (Some(alpha), Some(old)) => {
                Nanos(((1.0 - alpha) * old.0 as f64 + alpha * new.0 as f64).round() as i64)
            }
            _ => new,
        };
        self.d_est = Some(smooth(self.d_est, est.delay));
        self.o_est = Some(est.offset);
    }
}

/// Three-way handshake estimator.
///
/// `t1`: device arrival of beacon sent at AP time `s00k`;
/// `t02`: AP arrival of uplink tagged `sijl` by the device.
pub fn ptp_update(t1: RadioTime, s00k: RadioTime, sijl: RadioTime, t02: RadioTime) -> PtpEstimate {
    let down = (t1 - s00k).0 as i128;
    let up = (t02 - sijl).0 as i128;
    let d = (down + up).div_euclid(2);
    let o = (down - up).div_euclid(2);
    PtpEstimate {
        delay: Nanos(d.max(0) as i64),
        offset: Nanos(o as i64),
        clamped: d < 0,
    }
}

/// Local radio time at which slot `target` starts, extrapolated from the
/// anchor beacon. With `compensate` the result is advanced by twice the
/// estimated propagation delay, when one is known.
pub fn compute_slot_boundary(
    state: &SyncState,
    target: SlotAddress,
    phy: &PhyConfig,
    compensate: bool,
) -> Result<RadioTime, ProtocolError> {
    let anchor = state.anchor.ok_or(ProtocolError::NotSynchronized)?;
    if target.frame < anchor.frame {
        return Err(ProtocolError::TargetBeforeAnchor {
            target: target.frame,
            anchor: anchor.frame,
        });
    }
    if target.slot >= phy.slots_per_frame {
        return Err(ProtocolError::SlotOutOfRange {
            slot: target.slot,
            slots: phy.slots_per_frame,
        });
    }
    let slots = (target.frame - anchor.frame) * phy.slots_per_frame as u64 + target.slot as u64;
    let offset = (slots as i64)
        .checked_mul(phy.slot_duration().0)
        .ok_or(crate::timebase::TimeError::Overflow)?;
    let mut boundary = anchor.arrival + Nanos(offset);
    if compensate {
        if let Some(d) = state.d_est {
            boundary -= d * 2;
        }
    }
    Ok(boundary)
}

/// AP radio time corresponding to `local` on this device.
pub fn estimate_ap_time(state: &SyncState, local: RadioTime) -> Result<RadioTime, ProtocolError> {
    let o = state.o_est.ok_or(ProtocolError::OffsetUnknown)?;
    Ok(local - o)
}

/// Local radio time at which to act so that the action happens at AP time `t_e`.
pub fn schedule_synchronized_event(
    state: &SyncState,
    t_e: RadioTime,
) -> Result<RadioTime, ProtocolError> {
    let o = state.o_est.ok_or(ProtocolError::OffsetUnknown)?;
    Ok(t_e + o)
}

/// Drift of an observed beacon arrival against the extrapolated one, in
/// samples (positive when the observation is early).
pub fn drift_metric(t0: RadioTime, frame: u64, observed: RadioTime, phy: &PhyConfig) -> f64 {
    let expected = t0 + phy.frame_duration() * frame as i64;
    (expected - observed).0 as f64 / phy.sample_period().0 as f64
}

/// Access-point side: owns the reference slot grid and collects uplink
/// observations for the next beacon.
#[derive(Debug, Clone, PartialEq)]
pub struct ApState {
    pub id: NodeId,
    pub origin: RadioTime,
    pub phy: PhyConfig,
    latest: BTreeMap<NodeId, Feedback>,
    directives: Vec<ScheduleDirective>,
}

impl ApState {
    pub fn new(id: NodeId, origin: RadioTime, phy: PhyConfig) -> Self {
        ApState {
            id,
            origin,
            phy,
            latest: BTreeMap::new(),
            directives: Vec::new(),
        }
    }

    /// AP radio time of the start of `slot`.
    pub fn slot_time(&self, slot: SlotAddress) -> RadioTime {
        self.origin + self.phy.slot_duration() * slot.linear(&self.phy) as i64
    }

    pub fn on_uplink(&mut self, device: NodeId, tx_echo: RadioTime, rx_time: RadioTime) {
        self.latest.insert(
            device,
            Feedback {
                device,
                tx_echo,
                rx_time,
            },
        );
    }

    pub fn push_directive(&mut self, d: ScheduleDirective) {
        self.directives.push(d);
    }

    /// Builds the beacon for frame `k`. Collected feedback and directives are
    /// consumed.
    pub fn make_beacon(&mut self, k: u64) -> (BeaconPayload, RadioTime) {
        let tx = self.slot_time(SlotAddress::new(k, 0));
        let payload = BeaconPayload {
            frame: k,
            tx_radio_time: tx,
            feedback: std::mem::take(&mut self.latest).into_values().collect(),
            directives: std::mem::take(&mut self.directives),
        };
        (payload, tx)
    }
}

pub fn ap_make_beacon(ap: &mut ApState, k: u64) -> (BeaconPayload, RadioTime) {
    ap.make_beacon(k)
}
