//! Routing agents and the contract between them and the event loop.
//!
//! Agents are plain state machines. Every handler receives a [`Ctx`] and
//! reports what it wants done (transmit, arm a timer, deliver, drop) by
//! pushing [`Action`]s; the network loop executes them.

pub mod aodv;
pub mod dsdv;
pub mod dsr;
mod pending;

pub use pending::{Buffered, PendingDiscoveries, TimerOutcome};

use crate::config::ScenarioConfig;
use crate::link::NodeId;
use crate::sim::{RngStream, SimTime};

/// An application packet and the bookkeeping that travels with it.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub uid: u64,
    pub flow: usize,
    pub src: NodeId,
    pub dst: NodeId,
    pub payload_bytes: u32,
    pub created_at: SimTime,
    /// Every node that has held the packet, starting with `src`.
    pub path: Vec<NodeId>,
    pub source_route: Option<dsr::SourceRoute>,
}

impl DataPacket {
    pub fn new(uid: u64, flow: usize, src: NodeId, dst: NodeId, payload_bytes: u32, created_at: SimTime) -> Self {
        Self {
            uid,
            flow,
            src,
            dst,
            payload_bytes,
            created_at,
            path: vec![src],
            source_route: None,
        }
    }

    /// True if no node appears twice on the traversed path.
    pub fn path_is_simple(&self) -> bool {
        is_simple(&self.path)
    }
}

pub(crate) fn is_simple(path: &[NodeId]) -> bool {
    let mut seen = std::collections::BTreeSet::new();
    path.iter().all(|n| seen.insert(*n))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Data(DataPacket),
    Aodv(aodv::Message),
    Dsdv(dsdv::Update),
    Dsr(dsr::Message),
}

impl Payload {
    pub fn is_data(&self) -> bool {
        matches!(self, Payload::Data(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoRoute,
    BufferFull,
    DiscoveryFailed,
    LinkBreak,
    QueueFull,
    Ttl,
    BadSourceRoute,
    Expired,
    NodeDead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    /// DSDV full-table dump.
    Periodic,
    /// DSDV rate-limited incremental update.
    Triggered,
    /// Route discovery retry for `dst`; `gen` invalidates stale timers.
    Discovery { dst: NodeId, gen: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Unicast {
        next_hop: NodeId,
        size_bytes: u32,
        payload: Payload,
    },
    Broadcast {
        size_bytes: u32,
        payload: Payload,
    },
    SetTimer {
        delay: f64,
        timer: Timer,
    },
    Deliver(DataPacket),
    Drop {
        packet: DataPacket,
        reason: DropReason,
    },
    /// Discard queued frames to a neighbour that just failed.
    PurgeQueue { next_hop: NodeId },
}

/// Per-call context handed to an agent.
pub struct Ctx<'a> {
    pub now: SimTime,
    pub me: NodeId,
    pub rng: &'a mut RngStream,
    pub out: &'a mut Vec<Action>,
}

impl Ctx<'_> {
    pub fn unicast(&mut self, next_hop: NodeId, size_bytes: u32, payload: Payload) {
        self.out.push(Action::Unicast {
            next_hop,
            size_bytes,
            payload,
        });
    }

    pub fn broadcast(&mut self, size_bytes: u32, payload: Payload) {
        self.out.push(Action::Broadcast { size_bytes, payload });
    }

    pub fn timer(&mut self, delay: f64, timer: Timer) {
        self.out.push(Action::SetTimer { delay, timer });
    }

    pub fn deliver(&mut self, packet: DataPacket) {
        self.out.push(Action::Deliver(packet));
    }

    pub fn drop_packet(&mut self, packet: DataPacket, reason: DropReason) {
        self.out.push(Action::Drop { packet, reason });
    }

    pub fn purge(&mut self, next_hop: NodeId) {
        self.out.push(Action::PurgeQueue { next_hop });
    }
}

/// One node's routing agent.
#[derive(Debug, Clone)]
pub enum Agent {
    Aodv(aodv::AodvAgent),
    Dsdv(dsdv::DsdvAgent),
    Dsr(dsr::DsrAgent),
}

impl Agent {
    pub fn new(me: NodeId, cfg: &ScenarioConfig) -> Self {
        let data_header = cfg.link.data_header_bytes;
        match cfg.protocol {
            crate::config::Protocol::Aodv => Agent::Aodv(aodv::AodvAgent::new(me, cfg.aodv.clone(), data_header)),
            crate::config::Protocol::Dsdv => Agent::Dsdv(dsdv::DsdvAgent::new(me, cfg.dsdv.clone(), data_header)),
            crate::config::Protocol::Dsr => Agent::Dsr(dsr::DsrAgent::new(me, cfg.dsr.clone(), data_header)),
        }
    }

    pub fn start(&mut self, ctx: &mut Ctx) {
        match self {
            Agent::Aodv(_) | Agent::Dsr(_) => {}
            Agent::Dsdv(a) => a.start(ctx),
        }
    }

    /// A packet generated locally by the application.
    pub fn originate(&mut self, packet: DataPacket, ctx: &mut Ctx) {
        match self {
            Agent::Aodv(a) => a.send_data(packet, ctx),
            Agent::Dsdv(a) => a.send_data(packet, ctx),
            Agent::Dsr(a) => a.send_data(packet, ctx),
        }
    }

    pub fn receive(&mut self, payload: Payload, from: NodeId, ctx: &mut Ctx) {
        match self {
            Agent::Aodv(a) => a.receive(payload, from, ctx),
            Agent::Dsdv(a) => a.receive(payload, from, ctx),
            Agent::Dsr(a) => a.receive(payload, from, ctx),
        }
    }

    /// Link-layer retry exhaustion for a unicast frame to `next_hop`.
    pub fn link_failed(&mut self, payload: Payload, next_hop: NodeId, ctx: &mut Ctx) {
        match self {
            Agent::Aodv(a) => a.link_failed(payload, next_hop, ctx),
            Agent::Dsdv(a) => a.link_failed(payload, next_hop, ctx),
            Agent::Dsr(a) => a.link_failed(payload, next_hop, ctx),
        }
    }

    pub fn timer(&mut self, timer: Timer, ctx: &mut Ctx) {
        match self {
            Agent::Aodv(a) => a.timer(timer, ctx),
            Agent::Dsdv(a) => a.timer(timer, ctx),
            Agent::Dsr(a) => a.timer(timer, ctx),
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Owns what a [`Ctx`] borrows so agent tests stay short.
    pub struct Harness {
        pub rng: RngStream,
        pub out: Vec<Action>,
    }

    impl Harness {
        pub fn new() -> Self {
            Self {
                rng: RngStream::new(1, "jitter"),
                out: Vec::new(),
            }
        }

        pub fn ctx(&mut self, me: NodeId, now: f64) -> Ctx<'_> {
            self.out.clear();
            Ctx {
                now: SimTime(now),
                me,
                rng: &mut self.rng,
                out: &mut self.out,
            }
        }

        pub fn broadcasts(&self) -> Vec<&Payload> {
            self.out
                .iter()
                .filter_map(|a| match a {
                    Action::Broadcast { payload, .. } => Some(payload),
                    _ => None,
                })
                .collect()
        }

        pub fn unicasts(&self) -> Vec<(NodeId, &Payload)> {
            self.out
                .iter()
                .filter_map(|a| match a {
                    Action::Unicast { next_hop, payload, .. } => Some((*next_hop, payload)),
                    _ => None,
                })
                .collect()
        }

        pub fn drops(&self) -> Vec<DropReason> {
            self.out
                .iter()
                .filter_map(|a| match a {
                    Action::Drop { reason, .. } => Some(*reason),
                    _ => None,
                })
                .collect()
        }
    }

    pub fn pkt(uid: u64, src: NodeId, dst: NodeId) -> DataPacket {
        DataPacket::new(uid, 0, src, dst, 512, SimTime::ZERO)
    }
}
