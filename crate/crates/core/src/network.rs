//! The event loop tying nodes, radios, agents and traffic together.
//!
//! Link layer behaviour implemented here:
//! * one frame on air per node at a time, the rest wait in a DropTail queue;
//! * receivers are the nodes within range at the instant transmission starts;
//! * a unicast whose destination is out of range is retried up to the retry
//!   limit, then reported to the routing agent as a link failure;
//! * broadcasts are delayed by a uniform jitter before queueing and are
//!   never retried;
//! * every in-range node other than the addressee is charged overhearing.
//!
//! There is no interference model: overlapping receptions all succeed.

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::energy::{airtime, EnergyMeter, Mode};
use crate::error::{Result, SimError};
use crate::link::{in_range, Dest, Frame, FrameKind, IfaceQueue, NodeId};
use crate::metrics::{compute_metrics, RunCounters, RunLabel, RunMetrics};
use crate::mobility::{Mobility, Position};
use crate::routing::{Action, Agent, Ctx, DataPacket, DropReason, Payload, Timer};
use crate::sim::{EventQueue, RngStream, SimTime, Streams};
use crate::traffic::{flows_for, CbrFlow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceEvent {
    Tx,
    Rx,
    Drop,
    Fail,
    Overhear,
}

impl TraceEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::Tx => "tx",
            TraceEvent::Rx => "rx",
            TraceEvent::Drop => "drop",
            TraceEvent::Fail => "fail",
            TraceEvent::Overhear => "overhear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: f64,
    pub event: TraceEvent,
    pub node: NodeId,
    pub frame_uid: u64,
    pub kind: FrameKind,
    pub bytes: u32,
}

#[derive(Debug)]
enum Ev {
    AppTick { flow: usize, k: u64 },
    Enqueue { node: NodeId, frame: Frame },
    TxEnd { node: NodeId },
    Timer { node: NodeId, timer: Timer },
}

impl Ev {
    fn tag(&self) -> u8 {
        match self {
            Ev::AppTick { .. } => 1,
            Ev::Enqueue { .. } => 2,
            Ev::TxEnd { .. } => 3,
            Ev::Timer { .. } => 4,
        }
    }
}

#[derive(Debug)]
struct InFlight {
    frame: Frame,
    attempt: u32,
    receivers: Vec<NodeId>,
    reached: bool,
}

#[derive(Debug)]
struct Node {
    agent: Agent,
    queue: IfaceQueue,
    current: Option<InFlight>,
    /// Set while the node finishes a transmission, so frames produced by
    /// its own handlers wait behind what is already queued.
    in_service: bool,
    meter: EnergyMeter,
    died_at: Option<f64>,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub metrics: RunMetrics,
    pub counters: RunCounters,
    pub meters: Vec<EnergyMeter>,
    pub flows: Vec<CbrFlow>,
    pub event_digest: u64,
    pub events_processed: u64,
    pub trace: Option<Vec<TraceRecord>>,
}

pub struct Simulator {
    cfg: ScenarioConfig,
    seed: u64,
    queue: EventQueue<Ev>,
    nodes: Vec<Node>,
    mobility: Mobility,
    flows: Vec<CbrFlow>,
    jitter: RngStream,
    counters: RunCounters,
    trace: Option<Vec<TraceRecord>>,
    next_uid: u64,
    positions: Vec<Position>,
    started: bool,
}

impl Simulator {
    pub fn new(cfg: ScenarioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut streams = Streams::new(seed);
        let mobility = Mobility::generate(&cfg.mobility, cfg.area, cfg.nodes, cfg.duration_s, &mut streams.mobility)?;
        let flows = flows_for(&cfg.traffic, cfg.nodes, cfg.duration_s, &mut streams.pairs, &mut streams.traffic)?;
        let nodes = (0..cfg.nodes)
            .map(|n| Node {
                agent: Agent::new(n, &cfg),
                queue: IfaceQueue::new(cfg.link.queue_capacity),
                current: None,
                in_service: false,
                meter: EnergyMeter::new(&cfg.energy),
                died_at: None,
            })
            .collect();
        Ok(Self {
            seed,
            queue: EventQueue::new(),
            nodes,
            mobility,
            flows,
            jitter: streams.jitter,
            counters: RunCounters::default(),
            trace: None,
            next_uid: 0,
            positions: Vec::with_capacity(cfg.nodes),
            started: false,
            cfg,
        })
    }

    /// Record a per-frame event trace.
    pub fn with_trace(mut self, on: bool) -> Self {
        self.trace = on.then(Vec::new);
        self
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn mobility(&self) -> &Mobility {
        &self.mobility
    }

    pub fn flows(&self) -> &[CbrFlow] {
        &self.flows
    }

    pub fn agent(&self, node: NodeId) -> &Agent {
        &self.nodes[node].agent
    }

    pub fn meter(&self, node: NodeId) -> &EnergyMeter {
        &self.nodes[node].meter
    }

    pub fn counters(&self) -> &RunCounters {
        &self.counters
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn queue_len(&self, node: NodeId) -> usize {
        self.nodes[node].queue.len()
    }

    fn next_uid(&mut self) -> u64 {
        self.next_uid += 1;
        self.next_uid
    }

    fn record(&mut self, event: TraceEvent, node: NodeId, frame_uid: u64, kind: FrameKind, bytes: u32) {
        if let Some(tr) = self.trace.as_mut() {
            tr.push(TraceRecord {
                t: self.queue.now().0,
                event,
                node,
                frame_uid,
                kind,
                bytes,
            });
        }
    }

    fn start(&mut self) -> Result<()> {
        if self.started {
            return Ok(());
        }
        self.started = true;
        for n in 0..self.nodes.len() {
            self.with_agent(n, |a, ctx| a.start(ctx))?;
        }
        for (i, f) in self.flows.iter().enumerate() {
            if f.start_at < f.stop_at {
                self.queue.schedule(SimTime(f.start_at), Ev::AppTick { flow: i, k: 0 })?;
            }
        }
        Ok(())
    }

    /// Process every event up to and including time `t` (capped at the run duration).
    pub fn run_until(&mut self, t: f64) -> Result<()> {
        self.start()?;
        let horizon = t.min(self.cfg.duration_s);
        while let Some(at) = self.queue.peek_time() {
            if at.0 > horizon {
                break;
            }
            let ev = self.queue.pop_next().expect("peeked");
            self.queue.mix_digest(&[ev.payload.tag()]);
            self.dispatch(ev.payload)?;
        }
        self.queue.advance_to(SimTime(horizon));
        Ok(())
    }

    /// Run to the configured duration, close the energy books and check the
    /// run's invariants.
    pub fn run(mut self) -> Result<RunOutput> {
        let duration = self.cfg.duration_s;
        self.run_until(duration)?;
        for (i, node) in self.nodes.iter_mut().enumerate() {
            let alive_for = node.died_at.unwrap_or(duration).min(duration);
            node.meter
                .finalize_idle(alive_for)
                .map_err(|e| SimError::Invariant(format!("node {i}: {e}")))?;
            node.meter
                .check_conservation(1e-9)
                .map_err(|e| SimError::Invariant(format!("node {i}: {e}")))?;
        }
        let c = &self.counters;
        if c.data_delivered > c.data_originated {
            return Err(SimError::Invariant(format!(
                "delivered {} > originated {}",
                c.data_delivered, c.data_originated
            )));
        }
        for p in &c.delivered_paths {
            if !crate::routing::is_simple(p) {
                return Err(SimError::Invariant(format!("delivered packet looped: {p:?}")));
            }
        }
        let meters: Vec<EnergyMeter> = self.nodes.iter().map(|n| n.meter.clone()).collect();
        let label = RunLabel {
            protocol: self.cfg.protocol,
            nodes: self.cfg.nodes,
            area_m: format!("{:.0}x{:.0}", self.cfg.area.width, self.cfg.area.height),
            seed: Some(self.seed),
        };
        let metrics = compute_metrics(&self.counters, &meters, duration, label);
        if let Some(pdr) = metrics.pdr {
            if !(0.0..=1.0).contains(&pdr) {
                return Err(SimError::Invariant(format!("pdr {pdr} outside [0, 1]")));
            }
        }
        Ok(RunOutput {
            seed: self.seed,
            metrics,
            counters: self.counters,
            meters,
            flows: self.flows,
            event_digest: self.queue.digest(),
            events_processed: self.queue.delivered_count(),
            trace: self.trace,
        })
    }

    fn dispatch(&mut self, ev: Ev) -> Result<()> {
        match ev {
            Ev::AppTick { flow, k } => self.app_tick(flow, k),
            Ev::Enqueue { node, frame } => self.mac_enqueue(node, frame),
            Ev::TxEnd { node } => self.tx_end(node),
            Ev::Timer { node, timer } => {
                if self.nodes[node].died_at.is_some() {
                    return Ok(());
                }
                self.with_agent(node, |a, ctx| a.timer(timer, ctx))
            }
        }
    }

    fn app_tick(&mut self, flow: usize, k: u64) -> Result<()> {
        let now = self.queue.now();
        let f = self.flows[flow].clone();
        if now.0 >= f.stop_at {
            return Ok(());
        }
        let uid = self.next_uid();
        let packet = DataPacket::new(uid, f.id, f.src, f.sink, f.payload_bytes, now);
        self.counters.data_originated += 1;
        if self.nodes[f.src].died_at.is_some() {
            self.counters.record_drop(DropReason::NodeDead);
        } else {
            self.with_agent(f.src, |a, ctx| a.originate(packet, ctx))?;
        }
        if let Some(next) = f.next_packet(k, now) {
            self.queue.schedule(next, Ev::AppTick { flow, k: k + 1 })?;
        }
        Ok(())
    }

    fn with_agent<F>(&mut self, node: NodeId, f: F) -> Result<()>
    where
        F: FnOnce(&mut Agent, &mut Ctx),
    {
        let mut out = Vec::new();
        {
            let mut ctx = Ctx {
                now: self.queue.now(),
                me: node,
                rng: &mut self.jitter,
                out: &mut out,
            };
            f(&mut self.nodes[node].agent, &mut ctx);
        }
        for action in out {
            self.apply(node, action)?;
        }
        Ok(())
    }

    fn apply(&mut self, node: NodeId, action: Action) -> Result<()> {
        let now = self.queue.now();
        match action {
            Action::Unicast {
                next_hop,
                size_bytes,
                payload,
            } => {
                if next_hop == node || next_hop >= self.nodes.len() {
                    return Err(SimError::Invariant(format!("node {node} unicast to invalid next hop {next_hop}")));
                }
                let frame = self.frame(node, Dest::Unicast(next_hop), size_bytes, payload);
                self.mac_enqueue(node, frame)
            }
            Action::Broadcast { size_bytes, payload } => {
                let frame = self.frame(node, Dest::Broadcast, size_bytes, payload);
                let delay = self.jitter.uniform(0.0, self.cfg.link.broadcast_jitter_s)?;
                self.queue.schedule(now.after(delay), Ev::Enqueue { node, frame })?;
                Ok(())
            }
            Action::SetTimer { delay, timer } => {
                self.queue.schedule(now.after(delay.max(0.0)), Ev::Timer { node, timer })?;
                Ok(())
            }
            Action::Deliver(p) => {
                if p.dst != node {
                    return Err(SimError::Invariant(format!(
                        "packet {} for {} delivered at {node}",
                        p.uid, p.dst
                    )));
                }
                if !p.path_is_simple() {
                    return Err(SimError::Invariant(format!("delivered packet {} looped: {:?}", p.uid, p.path)));
                }
                self.counters.data_delivered += 1;
                self.counters.delivered_payload_bits += u64::from(p.payload_bytes) * 8;
                self.counters.delivered_hops += (p.path.len() - 1) as u64;
                self.counters.delivered_paths.push(p.path);
                Ok(())
            }
            Action::Drop { packet, reason } => {
                self.counters.record_drop(reason);
                let bytes = packet.payload_bytes;
                self.record(TraceEvent::Drop, node, packet.uid, FrameKind::Data, bytes);
                Ok(())
            }
            Action::PurgeQueue { next_hop } => {
                for f in self.nodes[node].queue.purge_to(next_hop) {
                    self.record(TraceEvent::Drop, node, f.uid, f.kind, f.size_bytes);
                    if f.kind == FrameKind::Data {
                        self.counters.record_drop(DropReason::LinkBreak);
                    }
                }
                Ok(())
            }
        }
    }

    fn frame(&mut self, src: NodeId, dst: Dest, size_bytes: u32, payload: Payload) -> Frame {
        let kind = if payload.is_data() {
            FrameKind::Data
        } else {
            FrameKind::Control
        };
        Frame {
            uid: self.next_uid(),
            kind,
            size_bytes,
            src,
            dst,
            payload,
        }
    }

    fn drop_frame(&mut self, node: NodeId, frame: &Frame, reason: DropReason) {
        self.record(TraceEvent::Drop, node, frame.uid, frame.kind, frame.size_bytes);
        if frame.kind == FrameKind::Data {
            self.counters.record_drop(reason);
        }
    }

    /// Hand a frame to a node's link layer.
    fn mac_enqueue(&mut self, node: NodeId, frame: Frame) -> Result<()> {
        if self.nodes[node].died_at.is_some() {
            self.drop_frame(node, &frame, DropReason::NodeDead);
            return Ok(());
        }
        let n = &mut self.nodes[node];
        if n.current.is_some() || n.in_service || !n.queue.is_empty() {
            if let Err(frame) = n.queue.push(frame) {
                self.counters.queue_drops += 1;
                self.drop_frame(node, &frame, DropReason::QueueFull);
            }
            debug_assert!(self.nodes[node].queue.len() <= self.cfg.link.queue_capacity);
            return Ok(());
        }
        self.start_tx(node, frame, 0)
    }

    fn start_tx(&mut self, node: NodeId, frame: Frame, attempt: u32) -> Result<()> {
        let now = self.queue.now();
        if self.nodes[node].meter.remaining_at(now.0) <= 0.0 {
            self.nodes[node].died_at = Some(now.0);
            self.drop_frame(node, &frame, DropReason::NodeDead);
            return Ok(());
        }
        self.mobility.positions_at(now, &mut self.positions)?;
        let range = self.cfg.link.range_m;
        let me = self.positions[node];
        let receivers: Vec<NodeId> = (0..self.nodes.len())
            .filter(|&m| m != node && self.nodes[m].died_at.is_none() && in_range(me, self.positions[m], range))
            .collect();

        let bitrate = self.cfg.link.bitrate_bps;
        let size = frame.size_bytes;
        self.nodes[node].meter.charge_tx(size, &self.cfg.energy, bitrate)?;
        if attempt == 0 {
            match frame.kind {
                FrameKind::Control => {
                    self.counters.control_transmissions += 1;
                    self.counters.control_bytes += u64::from(size);
                }
                FrameKind::Data => self.counters.data_transmissions += 1,
            }
        } else {
            self.counters.mac_retries += 1;
        }
        self.record(TraceEvent::Tx, node, frame.uid, frame.kind, size);

        let addressee = match frame.dst {
            Dest::Unicast(d) => Some(d),
            Dest::Broadcast => None,
        };
        for &r in &receivers {
            let mode = match addressee {
                None => Mode::Rx,
                Some(d) if d == r => Mode::Rx,
                Some(_) => Mode::Overhear,
            };
            let meter = &mut self.nodes[r].meter;
            match mode {
                Mode::Rx => meter.charge_rx(size, &self.cfg.energy, bitrate)?,
                _ => meter.charge_overhear(size, &self.cfg.energy, bitrate)?,
            };
            let ev = if mode == Mode::Rx { TraceEvent::Rx } else { TraceEvent::Overhear };
            self.record(ev, r, frame.uid, frame.kind, size);
        }
        let reached = addressee.is_some_and(|d| receivers.contains(&d));
        self.nodes[node].current = Some(InFlight {
            frame,
            attempt,
            receivers,
            reached,
        });
        self.queue.schedule(now.after(airtime(size, bitrate)), Ev::TxEnd { node })?;
        Ok(())
    }

    fn tx_end(&mut self, node: NodeId) -> Result<()> {
        let Some(fl) = self.nodes[node].current.take() else {
            return Err(SimError::Invariant(format!("tx end at idle node {node}")));
        };
        self.nodes[node].in_service = true;
        match fl.frame.dst {
            Dest::Broadcast => {
                for &r in &fl.receivers {
                    self.deliver_to(r, node, fl.frame.payload.clone())?;
                }
            }
            Dest::Unicast(d) if fl.reached => {
                self.deliver_to(d, node, fl.frame.payload)?;
            }
            Dest::Unicast(d) => {
                if fl.attempt < self.cfg.link.retry_limit {
                    self.nodes[node].in_service = false;
                    return self.start_tx(node, fl.frame, fl.attempt + 1);
                }
                self.counters.link_failures += 1;
                self.record(TraceEvent::Fail, node, fl.frame.uid, fl.frame.kind, fl.frame.size_bytes);
                let payload = fl.frame.payload;
                self.with_agent(node, |a, ctx| a.link_failed(payload, d, ctx))?;
            }
        }
        self.nodes[node].in_service = false;
        if self.nodes[node].current.is_none() {
            if let Some(next) = self.nodes[node].queue.pop() {
                self.start_tx(node, next, 0)?;
            }
        }
        Ok(())
    }

    fn deliver_to(&mut self, node: NodeId, from: NodeId, payload: Payload) -> Result<()> {
        if self.nodes[node].died_at.is_some() {
            return Ok(());
        }
        let payload = match payload {
            Payload::Data(mut p) => {
                p.path.push(node);
                if p.dst != node && p.path.len() > self.cfg.data_ttl {
                    self.counters.record_drop(DropReason::Ttl);
                    return Ok(());
                }
                Payload::Data(p)
            }
            other => other,
        };
        self.with_agent(node, |a, ctx| a.receive(payload, from, ctx))
    }
}

/// One complete run of `cfg` with `seed`.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<RunOutput> {
    Simulator::new(cfg.clone(), seed)?.run()
}

/// Like [`run_scenario`] but also records the per-frame trace.
pub fn run_scenario_traced(cfg: &ScenarioConfig, seed: u64) -> Result<RunOutput> {
    Simulator::new(cfg.clone(), seed)?.with_trace(true).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{MobilityModel, PowerProfile};
    use crate::routing::DataPacket;
    use approx::assert_relative_eq;

    fn fixed(positions: &[[f64; 2]]) -> Simulator {
        let mut cfg = ScenarioConfig::sim2(crate::config::Protocol::Aodv, positions.len());
        cfg.duration_s = 10.0;
        cfg.mobility.model = MobilityModel::Static;
        cfg.mobility.positions = positions.to_vec();
        cfg.traffic.enabled = false;
        Simulator::new(cfg, 1).unwrap()
    }

    fn data(src: NodeId, dst: NodeId) -> Payload {
        Payload::Data(DataPacket::new(1, 0, src, dst, 512, SimTime::ZERO))
    }

    fn per_frame(mode: fn(&PowerProfile) -> f64) -> f64 {
        544.0 * 8.0 * mode(&PowerProfile::default()) / 2e6
    }

    #[test]
    fn unicast_to_neighbour_charges_rx_and_overhear() {
        let mut sim = fixed(&[[0.0, 0.0], [200.0, 0.0], [100.0, 100.0], [599.0, 599.0]]);
        let f = sim.frame(0, Dest::Unicast(1), 544, data(0, 1));
        sim.mac_enqueue(0, f).unwrap();
        sim.run_until(1.0).unwrap();
        assert_relative_eq!(sim.meter(0).e_tx, per_frame(|p| p.tx_power_w), max_relative = 1e-12);
        assert_relative_eq!(sim.meter(1).e_rx, per_frame(|p| p.rx_power_w), max_relative = 1e-12);
        assert_relative_eq!(sim.meter(2).e_over, per_frame(|p| p.overhear_power_w), max_relative = 1e-12);
        assert_eq!(sim.meter(3).busy_time, 0.0);
        assert_eq!(sim.counters().link_failures, 0);
    }

    #[test]
    fn unreachable_unicast_retries_then_fails() {
        let mut sim = fixed(&[[0.0, 0.0], [500.0, 0.0]]);
        let f = sim.frame(0, Dest::Unicast(1), 544, data(0, 1));
        sim.mac_enqueue(0, f).unwrap();
        sim.run_until(1.0).unwrap();
        let attempts = 1 + sim.config().link.retry_limit;
        assert_relative_eq!(
            sim.meter(0).e_tx,
            attempts as f64 * per_frame(|p| p.tx_power_w),
            max_relative = 1e-12
        );
        assert_eq!(sim.counters().mac_retries, u64::from(attempts - 1));
        assert_eq!(sim.counters().link_failures, 1);
        assert_eq!(sim.counters().drops_by_reason.get(&DropReason::LinkBreak), Some(&1));
    }

    #[test]
    fn broadcast_reaches_every_neighbour() {
        let mut sim = fixed(&[[300.0, 300.0], [300.0, 100.0], [100.0, 300.0], [450.0, 450.0], [0.0, 0.0]]);
        let rreq = crate::routing::aodv::Rreq {
            broadcast_id: 1,
            src: 0,
            src_seq: 1,
            dst: 4,
            dst_seq: None,
            hop_count: 0,
        };
        let f = sim.frame(0, Dest::Broadcast, 48, Payload::Aodv(crate::routing::aodv::Message::Rreq(rreq)));
        sim.start_tx(0, f, 0).unwrap();
        let rx = 48.0 * 8.0 * 0.230 / 2e6;
        for n in 1..=3 {
            assert_relative_eq!(sim.meter(n).e_rx, rx, max_relative = 1e-12);
        }
        assert_eq!(sim.meter(4).e_rx, 0.0);
        assert_eq!(sim.counters().control_transmissions, 1);
    }

    #[test]
    fn isolated_broadcast_still_costs_tx() {
        let mut sim = fixed(&[[0.0, 0.0], [599.0, 599.0]]);
        let f = sim.frame(0, Dest::Broadcast, 250, data(0, 1));
        sim.start_tx(0, f, 0).unwrap();
        sim.run_until(1.0).unwrap();
        assert_relative_eq!(sim.meter(0).e_tx, 250.0 * 8.0 * 0.330 / 2e6, max_relative = 1e-12);
        assert_eq!(sim.meter(1).e_rx + sim.meter(1).e_over, 0.0);
    }

    #[test]
    fn past_schedule_is_fatal() {
        let mut sim = fixed(&[[0.0, 0.0], [10.0, 0.0]]);
        sim.run_until(5.0).unwrap();
        let err = sim.queue.schedule(SimTime(1.0), Ev::TxEnd { node: 0 }).unwrap_err();
        assert!(err.is_invariant());
    }
}
