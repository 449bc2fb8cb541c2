//! Just-in-time transmit scheduling: RTT probing, the advance margin, wake
//! timers and the radio-side timestamped TX queue.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Direction, LinkModel, SimRng};
use crate::timebase::{Nanos, RadioTime};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JitError {
    #[error("RTT probing needs at least 2 probes, got {0}")]
    TooFewProbes(usize),
    #[error("advance time must be positive, got {0}")]
    NonPositiveAdvance(Nanos),
    #[error("slot boundary {boundary} is only {lead} away, less than the advance time {t_adv}")]
    TooSoon {
        boundary: RadioTime,
        lead: Nanos,
        t_adv: Nanos,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RttEstimate {
    pub mean: Nanos,
    pub deviation: Nanos,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitConfig {
    pub beta: f64,
    pub prep_allowance: Nanos,
    /// Fixed advance time; bypasses the estimate when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_adv: Option<Nanos>,
}

impl Default for JitConfig {
    fn default() -> Self {
        JitConfig {
            beta: 1.0,
            prep_allowance: Nanos::from_micros(34),
            t_adv: None,
        }
    }
}

/// Simulates `n_probes` ping exchanges over `link` and returns the sample
/// mean and sample standard deviation of the round trip.
///
/// Probes are assumed not to overlap, so each round trip is an independent
/// pair of draws. The caller decides when the estimate becomes available.
pub fn probe_rtt(
    link: &LinkModel,
    n_probes: usize,
    rng: &mut SimRng,
) -> Result<RttEstimate, JitError> {
    if n_probes < 2 {
        return Err(JitError::TooFewProbes(n_probes));
    }
    let rtts: Vec<f64> = (0..n_probes)
        .map(|_| {
            let up = link.direction(Direction::HostToRadio).draw(rng);
            let down = link.direction(Direction::RadioToHost).draw(rng);
            (up + down).0 as f64
        })
        .collect();
    let n = rtts.len() as f64;
    let mean = rtts.iter().sum::<f64>() / n;
    let var = rtts.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(RttEstimate {
        mean: Nanos(mean.round() as i64),
        deviation: Nanos(var.sqrt().round() as i64),
        samples: n_probes,
    })
}

pub fn compute_t_adv(est: &RttEstimate, cfg: &JitConfig) -> Result<Nanos, JitError> {
    let t = match cfg.t_adv {
        Some(t) => t,
        None => {
            Nanos((est.mean.0 as f64 + cfg.beta * est.deviation.0 as f64).round() as i64)
                + cfg.prep_allowance
        }
    };
    if t.0 <= 0 {
        return Err(JitError::NonPositiveAdvance(t));
    }
    Ok(t)
}

/// Radio time at which the host must wake to prepare the packet for a slot
/// starting at `boundary`.
pub fn arm_tx_timer(
    boundary: RadioTime,
    now: RadioTime,
    t_adv: Nanos,
) -> Result<RadioTime, JitError> {
    let lead = boundary - now;
    if lead < t_adv {
        return Err(JitError::TooSoon {
            boundary,
            lead,
            t_adv,
        });
    }
    Ok(boundary - t_adv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Accepted,
    Late,
    Conflict,
}

/// Timestamped transmit queue inside the radio front-end.
#[derive(Debug, Clone)]
pub struct RadioTxQueue<P> {
    min_lead: Nanos,
    queue: BTreeMap<RadioTime, P>,
    pub late_drops: u64,
    pub conflicts: u64,
}

impl<P> RadioTxQueue<P> {
    /// `min_lead` is the smallest accepted gap between now and the
    /// timestamp, normally one sample.
    pub fn new(min_lead: Nanos) -> Self {
        RadioTxQueue {
            min_lead,
            queue: BTreeMap::new(),
            late_drops: 0,
            conflicts: 0,
        }
    }

    pub fn radio_enqueue(
        &mut self,
        packet: P,
        timestamp: RadioTime,
        now: RadioTime,
    ) -> EnqueueOutcome {
        if timestamp < now + self.min_lead {
            self.late_drops += 1;
            return EnqueueOutcome::Late;
        }
        if self.queue.contains_key(&timestamp) {
            self.conflicts += 1;
            return EnqueueOutcome::Conflict;
        }
        self.queue.insert(timestamp, packet);
        EnqueueOutcome::Accepted
    }

    /// Removes and returns the earliest packet due at or before `now`.
    pub fn pop_due(&mut self, now: RadioTime) -> Option<(RadioTime, P)> {
        let (&ts, _) = self.queue.first_key_value()?;
        if ts > now {
            return None;
        }
        self.queue.pop_first()
    }

    pub fn next_due(&self) -> Option<RadioTime> {
        self.queue.keys().next().copied()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

pub fn radio_enqueue<P>(
    queue: &mut RadioTxQueue<P>,
    packet: P,
    timestamp: RadioTime,
    now: RadioTime,
) -> EnqueueOutcome {
    queue.radio_enqueue(packet, timestamp, now)
}
