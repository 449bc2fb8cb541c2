use std::cmp::Ordering;
use std::fmt;
use std::rc::Rc;

use crate::protocol::SlotAddress;
use crate::timebase::{GlobalTime, Nanos, RadioTime};
use crate::NodeId;

/// A packet as it travels host → radio → air → receiver.
#[derive(Debug)]
pub struct Packet {
    pub sender: NodeId,
    pub slot: SlotAddress,
    /// Transmit timestamp on the sender's radio axis.
    pub timestamp: RadioTime,
    pub generated_at: GlobalTime,
    /// Advance time in force when the packet was generated.
    pub t_adv: Nanos,
    pub beacon: bool,
    /// Device an AP reply is addressed to.
    pub reply_to: Option<NodeId>,
    /// Canonical encoded payload.
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub enum EventKind {
    BeaconTx {
        timestamp: RadioTime,
    },
    RadioTxFire {
        timestamp: RadioTime,
    },
    RadioRxArrival {
        packet: Rc<Packet>,
        tx_global: GlobalTime,
    },
    HostRxDelivery {
        packet: Rc<Packet>,
        sample: u64,
        arrival: GlobalTime,
    },
    TxTimerFire {
        slot: SlotAddress,
    },
    RadioSubmit {
        packet: Rc<Packet>,
    },
    Probe,
    EventSyncFire {
        event: u64,
        t_e: RadioTime,
    },
    MetricsFlush,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::BeaconTx { .. } => "beacon_tx",
            EventKind::RadioTxFire { .. } => "radio_tx_fire",
            EventKind::RadioRxArrival { .. } => "radio_rx_arrival",
            EventKind::HostRxDelivery { .. } => "host_rx_delivery",
            EventKind::TxTimerFire { .. } => "tx_timer_fire",
            EventKind::RadioSubmit { .. } => "radio_submit",
            EventKind::Probe => "probe",
            EventKind::EventSyncFire { .. } => "event_sync_fire",
            EventKind::MetricsFlush => "metrics_flush",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pkt = |f: &mut fmt::Formatter<'_>, p: &Packet| {
            write!(
                f,
                "from={} slot={} ts={} {}",
                p.sender,
                p.slot,
                p.timestamp,
                if p.beacon { "beacon" } else { "data" }
            )
        };
        write!(f, "{}", self.name())?;
        f.write_str(" ")?;
        match self {
            EventKind::BeaconTx { timestamp } | EventKind::RadioTxFire { timestamp } => {
                write!(f, "ts={timestamp}")
            }
            EventKind::RadioRxArrival { packet, tx_global } => {
                pkt(f, packet)?;
                write!(f, " tx={tx_global}")
            }
            EventKind::HostRxDelivery { packet, sample, .. } => {
                pkt(f, packet)?;
                write!(f, " sample={sample}")
            }
            EventKind::TxTimerFire { slot } => write!(f, "slot={slot}"),
            EventKind::RadioSubmit { packet } => pkt(f, packet),
            EventKind::Probe | EventKind::MetricsFlush => f.write_str("-"),
            EventKind::EventSyncFire { event, t_e } => write!(f, "event={event} t_e={t_e}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    pub due: GlobalTime,
    pub seq: u64,
    pub node: NodeId,
    pub kind: EventKind,
}

impl Event {
    /// One line of the trace dump: `due_ns seq node kind detail`.
    pub fn trace_line(&self) -> String {
        format!("{} {} {} {}", self.due, self.seq, self.node, self.kind)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.due, self.seq) == (other.due, other.seq)
    }
}
impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reversed so a `BinaryHeap` pops the earliest `(due, seq)` first.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.due, other.seq).cmp(&(self.due, self.seq))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BinaryHeap;

    #[test]
    fn heap_pops_in_due_then_seq_order() {
        let mk = |due: i64, seq: u64| Event {
            due: GlobalTime::from_ticks(due),
            seq,
            node: NodeId(0),
            kind: EventKind::Probe,
        };
        let mut h = BinaryHeap::new();
        for (d, s) in [(5, 3), (1, 4), (5, 1), (3, 2), (1, 0)] {
            h.push(mk(d, s));
        }
        let order: Vec<(i64, u64)> =
            std::iter::from_fn(|| h.pop().map(|e| (e.due.ticks(), e.seq))).collect();
        assert_eq!(order, vec![(1, 0), (1, 4), (3, 2), (5, 1), (5, 3)]);
    }

    #[test]
    fn trace_line_format() {
        let e = Event {
            due: GlobalTime::from_ticks(1234),
            seq: 7,
            node: NodeId(2),
            kind: EventKind::TxTimerFire {
                slot: SlotAddress::new(3, 5),
            },
        };
        assert_eq!(e.trace_line(), "1234 7 2 tx_timer_fire slot=3.5");
    }
}
