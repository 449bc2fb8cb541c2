use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::rc::Rc;

use crate::channel::LinkModel;
use crate::channel::{
    detect_arrival, DetectionModel, DetectionOutcome, PropagationModel, RngStreams, SimRng,
    StreamKind,
};
use crate::jit::{
    arm_tx_timer, compute_t_adv, probe_rtt, EnqueueOutcome, JitConfig, RadioTxQueue, RttEstimate,
};
use crate::protocol::{
    compute_slot_boundary, drift_metric, schedule_synchronized_event, ApState, AppMessage,
    BeaconPayload, DataPacketPayload, PhyConfig, ProtocolError, SlotAddress, SyncState,
};
use crate::scenario::{EventSyncSpec, Role, Scenario};
use crate::timebase::{
    ClockModel, Drift, GlobalTime, HostClock, HostTime, Nanos, RadioTime, SampleCounter,
};
use crate::NodeId;

use super::event::{Event, EventKind, Packet};
use super::metrics::{
    record_alignment, AlignmentReport, DriftPoint, EventSyncReport, FreshnessReport,
    InvariantReport, MetricsReport, NodeCounters, NodeReport, SampleCollector,
};
use super::SimError;

struct NodeRt {
    id: NodeId,
    role: Role,
    clock: ClockModel,
    host: HostClock,
    counter: SampleCounter,
    sync: Option<SyncState>,
    ap: Option<ApState>,
    link: LinkModel,
    jit: JitConfig,
    probes: usize,
    reprobe_every: Option<u64>,
    rtt_est: RttEstimate,
    t_adv: Nanos,
    txq: RadioTxQueue<Rc<Packet>>,
    /// Owned slots in ascending order; slot 0 for the AP.
    owned: Vec<u32>,
    rng_tx: SimRng,
    rng_rx: SimRng,
    rng_stale: SimRng,
    rng_det: SimRng,
    rng_probe: SimRng,
    chain_started: bool,
    counters: NodeCounters,
    /// AP: decoded requests awaiting a reply slot.
    requests: VecDeque<(u64, NodeId, HostTime)>,
    next_request: u64,
    /// Requester: generation time of the request still awaiting its reply.
    outstanding: Option<HostTime>,
    drift_origin: Option<(u64, RadioTime)>,
    /// Frames `[from, to)` whose beacons are forced missed.
    forced_misses: Vec<(u64, u64)>,
}

impl NodeRt {
    fn radio_now(&self, t: GlobalTime) -> Result<RadioTime, SimError> {
        Ok(self.clock.local_time_of(t)?)
    }

    fn global_of(&self, r: RadioTime) -> Result<GlobalTime, SimError> {
        Ok(self.clock.global_time_of(r)?)
    }

    fn next_owned(&self, after: Option<SlotAddress>) -> Option<SlotAddress> {
        let first = *self.owned.first()?;
        Some(match after {
            None => SlotAddress::new(0, first),
            Some(a) => match self.owned.iter().find(|&&s| s > a.slot) {
                Some(&s) => SlotAddress::new(a.frame, s),
                None => SlotAddress::new(a.frame + 1, first),
            },
        })
    }

    fn forced_miss(&self, frame: u64) -> bool {
        self.forced_misses
            .iter()
            .any(|&(a, b)| frame >= a && frame < b)
    }
}

/// One simulation run. Single-threaded and fully deterministic for a given
/// scenario and seed.
pub struct Engine {
    scenario_name: String,
    seed: u64,
    phy: PhyConfig,
    period: Nanos,
    airtime: Nanos,
    nodes: Vec<NodeRt>,
    index: BTreeMap<NodeId, usize>,
    ap: usize,
    prop: PropagationModel,
    detection: DetectionModel,
    compensate: bool,
    tx_processing: Nanos,
    rx_decode: Nanos,
    event_sync: Option<EventSyncSpec>,
    requester: Option<NodeId>,
    rtt_target: Option<u64>,
    drift_node: Option<NodeId>,
    warmup_frames: u64,
    rtt_csv_cap: usize,

    queue: BinaryHeap<Event>,
    seq: u64,
    now: GlobalTime,
    origin: GlobalTime,
    frames: u64,
    end: GlobalTime,
    stopped_early: bool,
    events_executed: u64,
    trace: Option<Vec<String>>,

    rtt: SampleCollector,
    alignment: BTreeMap<NodeId, BTreeMap<u64, u64>>,
    drift_trace: Vec<DriftPoint>,
    freshness: FreshnessReport,
    invariants: InvariantReport,
    ap_busy_until: GlobalTime,
    max_boundary_error: i64,
    fault_window_error: i64,
    sync_fires: BTreeMap<u64, Vec<(NodeId, GlobalTime, RadioTime)>>,
}

impl Engine {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Engine, SimError> {
        scenario.validate()?;
        let phy = scenario.phy;
        let period = phy.sample_period();
        let streams = RngStreams::new(seed);
        let owners = scenario.slot_owners();
        let ap_id = NodeId(scenario.ap().id);

        let mut nodes = Vec::new();
        for spec in scenario.ordered_nodes() {
            let id = NodeId(spec.id);
            let clock = ClockModel::new(spec.offset, Drift::from_ppm(spec.drift_ppm)?);
            let at_zero =
                clock.local_time_of::<crate::timebase::Radio>(GlobalTime::from_ticks(0))?;
            let init = RadioTime::from_ticks(at_zero.ticks().div_euclid(period.0) * period.0);
            let mut owned: Vec<u32> = owners
                .iter()
                .filter(|(_, &o)| o == id)
                .map(|(&s, _)| s)
                .collect();
            if spec.role == Role::Ap {
                owned.insert(0, 0);
            }
            let jit_section = scenario.node_jit(spec);
            let link = scenario.node_link(spec);
            let mut rng_probe = streams.stream(id, StreamKind::Probe);
            let rtt_est = probe_rtt(&link, jit_section.probes, &mut rng_probe)?;
            let jit = jit_section.config();
            let t_adv = compute_t_adv(&rtt_est, &jit)?;
            let forced_misses = scenario
                .faults
                .beacon_misses
                .iter()
                .filter(|m| m.node == spec.id)
                .map(|m| (m.from_frame, m.from_frame + m.count))
                .collect();
            nodes.push(NodeRt {
                id,
                role: spec.role,
                clock,
                host: HostClock::new(ClockModel::new(spec.host_offset, Drift::ZERO)),
                counter: SampleCounter::new(init, period)?,
                sync: (spec.role == Role::Device)
                    .then(|| SyncState::new(id, scenario.sync.policy())),
                ap: None,
                link,
                jit,
                probes: jit_section.probes,
                reprobe_every: jit_section.reprobe_every_frames,
                rtt_est,
                t_adv,
                txq: RadioTxQueue::new(period),
                owned,
                rng_tx: streams.stream(id, StreamKind::HostToRadio),
                rng_rx: streams.stream(id, StreamKind::RadioToHost),
                rng_stale: streams.stream(id, StreamKind::Staleness),
                rng_det: streams.stream(id, StreamKind::Detection),
                rng_probe,
                chain_started: false,
                counters: NodeCounters::default(),
                requests: VecDeque::new(),
                next_request: 0,
                outstanding: None,
                drift_origin: None,
                forced_misses,
            });
        }
        let index: BTreeMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let ap = index[&ap_id];

        let frame = phy.frame_duration();
        let max_t_adv = nodes.iter().map(|n| n.t_adv).max().unwrap_or(Nanos::ZERO);
        let lead_frames =
            scenario.horizon.lead_in_frames + (max_t_adv.0 as u64).div_ceil(frame.0 as u64);
        let origin = GlobalTime::from_ticks(frame.0 * lead_frames as i64);
        nodes[ap].ap = Some(ApState::new(
            ap_id,
            RadioTime::from_ticks(origin.ticks()),
            phy,
        ));
        let frames = scenario.frames();
        let end = origin + frame * frames as i64;

        let mut engine = Engine {
            scenario_name: scenario.name.clone(),
            seed,
            phy,
            period,
            airtime: phy.airtime(),
            nodes,
            index,
            ap,
            prop: scenario.propagation(),
            detection: *scenario.detection.active(),
            compensate: scenario.sync.policy().compensate,
            tx_processing: scenario.host.tx_processing,
            rx_decode: scenario.host.rx_decode,
            event_sync: scenario.traffic.event_sync,
            requester: scenario.traffic.requester.map(NodeId),
            rtt_target: scenario.horizon.rtt_pairs,
            drift_node: scenario.metrics.drift_node.map(NodeId),
            warmup_frames: scenario.metrics.warmup_frames,
            rtt_csv_cap: scenario.metrics.rtt_csv_cap,
            queue: BinaryHeap::new(),
            seq: 0,
            now: GlobalTime::from_ticks(0),
            origin,
            frames,
            end,
            stopped_early: false,
            events_executed: 0,
            trace: None,
            rtt: SampleCollector::new(scenario.metrics.sample_cap),
            alignment: BTreeMap::new(),
            drift_trace: Vec::new(),
            freshness: FreshnessReport::default(),
            invariants: InvariantReport::default(),
            ap_busy_until: GlobalTime::from_ticks(i64::MIN),
            max_boundary_error: 0,
            fault_window_error: 0,
            sync_fires: BTreeMap::new(),
        };
        for i in 0..engine.nodes.len() {
            if engine.nodes[i].role == Role::Device {
                engine.alignment.insert(engine.nodes[i].id, BTreeMap::new());
            }
            if let Some(every) = engine.nodes[i].reprobe_every {
                let due = engine.origin + frame * every as i64;
                engine.push(due, i, EventKind::Probe);
            }
        }
        engine.push(end, ap, EventKind::MetricsFlush);
        engine.nodes[ap].chain_started = true;
        engine.arm_next(ap, None, true)?;
        Ok(engine)
    }

    /// Collects one text line per executed event.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<String> {
        self.trace.take().unwrap_or_default()
    }

    fn push(&mut self, due: GlobalTime, node: usize, kind: EventKind) {
        debug_assert!(due >= self.now, "event scheduled in the past");
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Event {
            due,
            seq,
            node: self.nodes[node].id,
            kind,
        });
    }

    pub fn run(mut self) -> Result<(MetricsReport, Vec<String>), SimError> {
        while let Some(ev) = self.queue.pop() {
            if ev.due > self.end {
                self.queue.push(ev);
                break;
            }
            self.now = ev.due;
            self.events_executed += 1;
            if let Some(t) = &mut self.trace {
                t.push(ev.trace_line());
            }
            let i = self.index[&ev.node];
            if matches!(ev.kind, EventKind::MetricsFlush) {
                break;
            }
            self.dispatch(i, ev.kind)?;
            if self.stopped_early {
                break;
            }
        }
        let trace = self.take_trace();
        Ok((self.finish(), trace))
    }

    fn dispatch(&mut self, i: usize, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::TxTimerFire { slot } => self.on_timer(i, slot),
            EventKind::RadioSubmit { packet } => self.on_submit(i, packet),
            EventKind::BeaconTx { .. } | EventKind::RadioTxFire { .. } => self.on_radio_tx(i),
            EventKind::RadioRxArrival { packet, tx_global } => {
                self.on_arrival(i, packet, tx_global)
            }
            EventKind::HostRxDelivery {
                packet,
                sample,
                arrival,
            } => self.on_delivery(i, packet, sample, arrival),
            EventKind::Probe => self.on_probe(i),
            EventKind::EventSyncFire { event, t_e } => {
                let id = self.nodes[i].id;
                self.sync_fires
                    .entry(event)
                    .or_default()
                    .push((id, self.now, t_e));
                Ok(())
            }
            EventKind::MetricsFlush => Ok(()),
        }
    }

    fn boundary(&self, i: usize, slot: SlotAddress) -> Result<RadioTime, ProtocolError> {
        let n = &self.nodes[i];
        match (&n.ap, &n.sync) {
            (Some(ap), _) => Ok(ap.slot_time(slot)),
            (None, Some(sync)) => compute_slot_boundary(sync, slot, &self.phy, self.compensate),
            (None, None) => Err(ProtocolError::NotSynchronized),
        }
    }

    /// Arms the single TX timer for the first owned slot after `after` whose
    /// boundary is still at least `t_adv` away.
    fn arm_next(
        &mut self,
        i: usize,
        after: Option<SlotAddress>,
        join: bool,
    ) -> Result<(), SimError> {
        let mut cand = self.nodes[i].next_owned(after);
        while let Some(slot) = cand {
            if slot.frame >= self.frames {
                return Ok(());
            }
            let b = match self.boundary(i, slot) {
                Ok(b) => b,
                Err(ProtocolError::TargetBeforeAnchor { .. }) => {
                    cand = self.nodes[i].next_owned(Some(slot));
                    continue;
                }
                Err(ProtocolError::NotSynchronized) => return Ok(()),
                Err(e) => return Err(e.into()),
            };
            let n = &mut self.nodes[i];
            let radio_now = n.radio_now(self.now)?;
            match arm_tx_timer(b, radio_now, n.t_adv) {
                Ok(wake) => {
                    // The host sees radio time through the receive stream, so
                    // it notices the wake time late by one radio→host delay.
                    let stale = n.link.radio_to_host.draw(&mut n.rng_stale);
                    let fire = (n.global_of(wake)? + stale).max(self.now);
                    self.push(fire, i, EventKind::TxTimerFire { slot });
                    return Ok(());
                }
                Err(_) => {
                    if !join {
                        n.counters.skipped_slots += 1;
                    }
                    cand = n.next_owned(Some(slot));
                }
            }
        }
        Ok(())
    }

    fn on_timer(&mut self, i: usize, slot: SlotAddress) -> Result<(), SimError> {
        let timestamp = match self.boundary(i, slot) {
            Ok(b) => b,
            Err(ProtocolError::TargetBeforeAnchor { .. }) => {
                return self.arm_next(i, Some(slot), false)
            }
            Err(e) => return Err(e.into()),
        };
        let now = self.now;
        let requester = self.requester;
        let n = &mut self.nodes[i];
        // A request whose reply has not come back by then is presumed lost.
        let timeout = self.phy.frame_duration() * 2 + n.t_adv * 4;
        let host_now = n.host.host_time_of(now)?;
        let mut reply_to = None;
        let (bytes, beacon) = if let Some(ap) = n.ap.as_mut().filter(|_| slot.slot == 0) {
            let (payload, _) = ap.make_beacon(slot.frame);
            (payload.encode()?, true)
        } else {
            let msg = match n.role {
                Role::Ap => match n.requests.pop_front() {
                    Some((id, dest, echo_host_tx)) => {
                        reply_to = Some(dest);
                        AppMessage::Reply {
                            id,
                            dest,
                            echo_host_tx,
                        }
                    }
                    None => AppMessage::Filler,
                },
                Role::Device
                    if Some(n.id) == requester
                        && n.outstanding.is_none_or(|t| host_now - t > timeout) =>
                {
                    n.next_request += 1;
                    n.outstanding = Some(host_now);
                    AppMessage::Request { id: n.next_request }
                }
                Role::Device => AppMessage::Filler,
            };
            if let Some(sync) = &mut n.sync {
                sync.record_transmission(timestamp);
            }
            let payload = DataPacketPayload {
                sender: n.id,
                slot,
                tx_radio_time: timestamp,
                host_tx_time: host_now,
                body: msg.encode(),
            };
            (payload.encode(), false)
        };
        let packet = Rc::new(Packet {
            sender: n.id,
            slot,
            timestamp,
            generated_at: now,
            t_adv: n.t_adv,
            beacon,
            reply_to,
            bytes,
        });
        n.counters.generated += 1;
        let submit = now + self.tx_processing + n.link.host_to_radio.draw(&mut n.rng_tx);
        self.push(submit, i, EventKind::RadioSubmit { packet });
        self.arm_next(i, Some(slot), false)
    }

    fn on_submit(&mut self, i: usize, packet: Rc<Packet>) -> Result<(), SimError> {
        let n = &mut self.nodes[i];
        let radio_now = n.radio_now(self.now)?;
        let ts = packet.timestamp;
        let beacon = packet.beacon;
        match n.txq.radio_enqueue(packet, ts, radio_now) {
            EnqueueOutcome::Accepted => {
                let due = n.global_of(ts)?;
                let kind = if beacon {
                    EventKind::BeaconTx { timestamp: ts }
                } else {
                    EventKind::RadioTxFire { timestamp: ts }
                };
                self.push(due, i, kind);
            }
            EnqueueOutcome::Late => n.counters.late_drops += 1,
            EnqueueOutcome::Conflict => n.counters.conflicts += 1,
        }
        Ok(())
    }

    fn on_radio_tx(&mut self, i: usize) -> Result<(), SimError> {
        let now = self.now;
        let n = &mut self.nodes[i];
        let radio_now = n.radio_now(now)?;
        let Some((_, packet)) = n.txq.pop_due(radio_now) else {
            return Ok(());
        };
        n.counters.transmitted += 1;

        let age = now - packet.generated_at;
        self.freshness.checked += 1;
        self.freshness.max_age_ns = self.freshness.max_age_ns.max(age.0);
        if age > packet.t_adv + self.period {
            self.freshness.violations += 1;
        }

        let sender = packet.sender;
        let mut receivers = vec![i];
        if packet.beacon {
            receivers.extend(
                (0..self.nodes.len()).filter(|&r| r != i && self.nodes[r].role == Role::Device),
            );
        } else if i == self.ap {
            if let Some(dest) = packet.reply_to {
                receivers.push(self.index[&dest]);
            }
        } else {
            receivers = vec![self.ap];
        }
        for r in receivers {
            let d = self.prop.delay(sender, self.nodes[r].id)?;
            self.push(
                now + d,
                r,
                EventKind::RadioRxArrival {
                    packet: packet.clone(),
                    tx_global: now,
                },
            );
        }
        Ok(())
    }

    /// Every packet has exactly one receiver whose detection decides its
    /// fate: the AP, which also hears its own transmissions on loopback.
    fn is_primary(&self, receiver: usize, _packet: &Packet) -> bool {
        receiver == self.ap
    }

    fn on_arrival(
        &mut self,
        r: usize,
        packet: Rc<Packet>,
        tx_global: GlobalTime,
    ) -> Result<(), SimError> {
        let now = self.now;
        let primary = self.is_primary(r, &packet);
        let sender = self.index[&packet.sender];
        let loopback = sender == r;

        if r == self.ap {
            if now < self.ap_busy_until {
                self.invariants.overlaps += 1;
            }
            self.ap_busy_until = self.ap_busy_until.max(now + self.airtime);
        }
        if packet.beacon && !loopback {
            // AP radio time is true time, so a beacon must arrive exactly one
            // propagation delay after its timestamp.
            let d = self.prop.delay(packet.sender, self.nodes[r].id)?;
            self.invariants.beacon_arrival_checks += 1;
            if ((now - tx_global) - d).abs() > Nanos(1)
                || (tx_global.ticks() - packet.timestamp.ticks()).abs() > 1
            {
                self.invariants.beacon_arrival_violations += 1;
            }
        }

        let frame = packet.slot.frame;
        let n = &mut self.nodes[r];
        let radio_arrival = n.radio_now(now)?;
        let outcome = if loopback {
            DetectionOutcome::Detected(n.counter.quantize_to_sample(radio_arrival)?)
        } else if packet.beacon && n.forced_miss(frame) {
            DetectionOutcome::Missed
        } else {
            detect_arrival(&self.detection, radio_arrival, &n.counter, &mut n.rng_det)?
        };
        let sample = match outcome {
            DetectionOutcome::Missed => {
                if packet.beacon && !loopback {
                    n.counters.beacons_missed += 1;
                }
                if primary {
                    self.nodes[sender].counters.detection_missed += 1;
                }
                return Ok(());
            }
            DetectionOutcome::Detected(s) => s,
        };
        if packet.beacon && !loopback {
            n.counters.beacons_detected += 1;
            if Some(n.id) == self.drift_node {
                let t1 = n.counter.sample_arrival_time(sample);
                match n.drift_origin {
                    None => {
                        n.drift_origin = Some((frame, t1));
                        self.drift_trace.push(DriftPoint {
                            frame: 0,
                            delta_samples: 0.0,
                        });
                    }
                    Some((k0, t0)) => self.drift_trace.push(DriftPoint {
                        frame: frame - k0,
                        delta_samples: drift_metric(t0, frame - k0, t1, &self.phy),
                    }),
                }
            }
        }
        if primary {
            self.nodes[sender].counters.delivered += 1;
        }
        if loopback {
            return Ok(());
        }
        let n = &mut self.nodes[r];
        let deliver =
            now + self.airtime + n.link.radio_to_host.draw(&mut n.rng_rx) + self.rx_decode;
        self.push(
            deliver,
            r,
            EventKind::HostRxDelivery {
                packet,
                sample,
                arrival: now,
            },
        );
        Ok(())
    }

    fn on_delivery(
        &mut self,
        r: usize,
        packet: Rc<Packet>,
        sample: u64,
        arrival: GlobalTime,
    ) -> Result<(), SimError> {
        if packet.beacon {
            return self.on_beacon_delivery(r, &packet, sample);
        }
        let payload = DataPacketPayload::decode(&packet.bytes)?;
        let msg = AppMessage::decode(&payload.body)?;
        if r == self.ap {
            let sender = self.index[&payload.sender];
            let n = &mut self.nodes[r];
            let observed = n.counter.sample_arrival_time(sample);
            let ap = n.ap.as_mut().expect("AP state");
            ap.on_uplink(payload.sender, payload.tx_radio_time, observed);
            let expected = ap.slot_time(payload.slot);
            if let AppMessage::Request { id } = msg {
                n.requests
                    .push_back((id, payload.sender, payload.host_tx_time));
            }
            if payload.slot.frame >= self.warmup_frames {
                let hist = self.alignment.entry(payload.sender).or_default();
                record_alignment(hist, expected.ticks(), observed.ticks(), self.period.0);
                let err = (arrival.ticks() - expected.ticks()).abs();
                self.max_boundary_error = self.max_boundary_error.max(err);
                let s = &self.nodes[sender];
                let in_window = s
                    .forced_misses
                    .iter()
                    .any(|&(a, b)| payload.slot.frame >= a && payload.slot.frame <= b);
                if in_window {
                    self.fault_window_error = self.fault_window_error.max(err);
                }
            }
        } else if let AppMessage::Reply {
            dest, echo_host_tx, ..
        } = msg
        {
            let n = &mut self.nodes[r];
            if dest == n.id && n.outstanding == Some(echo_host_tx) {
                n.outstanding = None;
                let rtt = n.host.host_time_of(self.now)? - echo_host_tx;
                self.rtt.push(rtt.0);
                if matches!(self.rtt_target, Some(t) if self.rtt.count() >= t) {
                    self.stopped_early = true;
                }
            }
        }
        Ok(())
    }

    fn on_beacon_delivery(
        &mut self,
        r: usize,
        packet: &Packet,
        sample: u64,
    ) -> Result<(), SimError> {
        let payload = BeaconPayload::decode(&packet.bytes)?;
        let n = &mut self.nodes[r];
        let Some(sync) = n.sync.as_mut() else {
            return Ok(());
        };
        sync.device_on_beacon(&payload, sample, &n.counter);
        if let Some(es) = self.event_sync {
            if payload.frame % es.every_frames == 0 {
                if let Ok(local) =
                    schedule_synchronized_event(sync, payload.tx_radio_time + es.lead)
                {
                    let due = n.global_of(local)?;
                    if due >= self.now {
                        self.push(
                            due,
                            r,
                            EventKind::EventSyncFire {
                                event: payload.frame,
                                t_e: payload.tx_radio_time + es.lead,
                            },
                        );
                    }
                }
            }
        }
        let n = &mut self.nodes[r];
        if !n.chain_started && n.sync.as_ref().is_some_and(|s| s.is_synchronized()) {
            n.chain_started = true;
            self.arm_next(r, Some(SlotAddress::new(payload.frame, 0)), true)?;
        }
        Ok(())
    }

    fn on_probe(&mut self, i: usize) -> Result<(), SimError> {
        let n = &mut self.nodes[i];
        n.rtt_est = probe_rtt(&n.link, n.probes, &mut n.rng_probe)?;
        n.t_adv = compute_t_adv(&n.rtt_est, &n.jit)?;
        if let Some(every) = n.reprobe_every {
            let due = self.now + self.phy.frame_duration() * every as i64;
            self.push(due, i, EventKind::Probe);
        }
        Ok(())
    }

    fn finish(self) -> MetricsReport {
        let mut in_flight = vec![0u64; self.nodes.len()];
        for ev in self.queue.iter() {
            let i = self.index[&ev.node];
            match &ev.kind {
                EventKind::RadioSubmit { .. } => in_flight[i] += 1,
                EventKind::RadioRxArrival { packet, .. } if self.is_primary(i, packet) => {
                    in_flight[self.index[&packet.sender]] += 1;
                }
                _ => {}
            }
        }
        let mut invariants = self.invariants;
        invariants.freshness_violations = self.freshness.violations;
        let mut nodes = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let mut c = n.counters.clone();
            c.in_flight = in_flight[i] + n.txq.len() as u64;
            if c.generated
                != c.late_drops + c.conflicts + c.delivered + c.detection_missed + c.in_flight
            {
                invariants.conservation_violations += 1;
            }
            nodes.push(NodeReport {
                id: n.id.0,
                role: n.role,
                t_adv_ns: n.t_adv.0,
                rtt_estimate_mean_ns: n.rtt_est.mean.0,
                rtt_estimate_deviation_ns: n.rtt_est.deviation.0,
                counters: c,
                d_est_ns: n.sync.as_ref().and_then(|s| s.d_est()).map(|d| d.0),
                o_est_ns: n.sync.as_ref().and_then(|s| s.o_est()).map(|d| d.0),
                sync: n.sync.as_ref().map(|s| s.diagnostics),
            });
        }

        let event_sync = self.event_sync.map(|_| {
            let mut rep = EventSyncReport::default();
            let mut total = 0i128;
            for fires in self.sync_fires.values() {
                for &(_, g, t_e) in fires {
                    rep.max_abs_error_ns =
                        rep.max_abs_error_ns.max((g.ticks() - t_e.ticks()).abs());
                }
                if fires.len() < 2 {
                    continue;
                }
                let lo = fires.iter().map(|f| f.1).min().expect("non-empty");
                let hi = fires.iter().map(|f| f.1).max().expect("non-empty");
                let spread = (hi - lo).0;
                rep.events += 1;
                rep.max_spread_ns = rep.max_spread_ns.max(spread);
                total += spread as i128;
            }
            if rep.events > 0 {
                rep.mean_spread_ns = total as f64 / rep.events as f64;
            }
            rep
        });

        let frame = self.phy.frame_duration();
        let completed = if self.now > self.origin {
            (((self.now - self.origin).0 / frame.0) as u64).min(self.frames)
        } else {
            0
        };
        let mut rtt_samples = self.rtt.raw().to_vec();
        rtt_samples.truncate(self.rtt_csv_cap);
        MetricsReport {
            scenario: self.scenario_name,
            seed: self.seed,
            frames_configured: self.frames,
            frames_completed: completed,
            stopped_early: self.stopped_early,
            events_executed: self.events_executed,
            late_drops: nodes.iter().map(|n| n.counters.late_drops).sum(),
            missed_beacons: nodes.iter().map(|n| n.counters.beacons_missed).sum(),
            freshness: self.freshness,
            invariants,
            max_boundary_error_ns: self.max_boundary_error,
            fault_window_max_error_ns: self.fault_window_error,
            rtt: self.rtt.summary(),
            event_sync,
            nodes,
            alignment: self
                .alignment
                .iter()
                .map(|(id, h)| AlignmentReport::from_histogram(id.0, h))
                .collect(),
            drift_trace: self.drift_trace,
            rtt_samples,
        }
    }
}
