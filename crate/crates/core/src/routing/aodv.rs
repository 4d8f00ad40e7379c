//! Ad hoc on-demand distance vector routing.
//!
//! Routes are discovered by flooding a route request; the destination (or a
//! node holding a fresh enough route) answers with a unicast reply that
//! retraces the reverse path set up by the flood. Link failures invalidate
//! routes and are announced with a broadcast route error.

use std::collections::BTreeMap;

use super::pending::Buffered;
use super::{Ctx, DataPacket, DropReason, Payload, PendingDiscoveries, Timer, TimerOutcome};
use crate::config::AodvConfig;
use crate::link::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AodvRoute {
    pub dest: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub dest_seq: u64,
    pub valid: bool,
    pub expires_at: f64,
}

impl AodvRoute {
    pub fn usable(&self, now: f64) -> bool {
        self.valid && now < self.expires_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rreq {
    pub broadcast_id: u64,
    pub src: NodeId,
    pub src_seq: u64,
    pub dst: NodeId,
    /// Last sequence number the source knew for `dst`; `None` when unknown.
    pub dst_seq: Option<u64>,
    pub hop_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rrep {
    /// Originator of the request being answered.
    pub src: NodeId,
    pub dst: NodeId,
    pub dst_seq: u64,
    pub hop_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rerr {
    pub unreachable: Vec<(NodeId, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
}

#[derive(Debug, Clone)]
pub struct AodvAgent {
    me: NodeId,
    cfg: AodvConfig,
    data_header: u32,
    own_seq: u64,
    broadcast_id: u64,
    routes: BTreeMap<NodeId, AodvRoute>,
    /// (src, broadcast_id) -> expiry
    seen: BTreeMap<(NodeId, u64), f64>,
    pending: PendingDiscoveries,
    rreqs_processed: u64,
}

impl AodvAgent {
    pub fn new(me: NodeId, cfg: AodvConfig, data_header: u32) -> Self {
        Self {
            me,
            cfg,
            data_header,
            own_seq: 0,
            broadcast_id: 0,
            routes: BTreeMap::new(),
            seen: BTreeMap::new(),
            pending: PendingDiscoveries::default(),
            rreqs_processed: 0,
        }
    }

    pub fn route(&self, dest: NodeId) -> Option<&AodvRoute> {
        self.routes.get(&dest)
    }

    pub fn own_seq(&self) -> u64 {
        self.own_seq
    }

    pub fn rreqs_processed(&self) -> u64 {
        self.rreqs_processed
    }

    pub fn discovery_pending(&self, dst: NodeId) -> bool {
        self.pending.is_pending(dst)
    }

    fn usable_route(&self, dest: NodeId, now: f64) -> Option<AodvRoute> {
        self.routes.get(&dest).copied().filter(|r| r.usable(now))
    }

    /// Install or refresh a route if the offered one is fresher, or equally
    /// fresh and shorter, or the current entry is no longer active.
    fn offer_route(&mut self, dest: NodeId, next_hop: NodeId, hops: u32, seq: u64, now: f64) -> bool {
        let expires_at = now + self.cfg.active_route_timeout_s;
        let fresh = AodvRoute {
            dest,
            next_hop,
            hop_count: hops,
            dest_seq: seq,
            valid: true,
            expires_at,
        };
        match self.routes.get_mut(&dest) {
            None => {
                self.routes.insert(dest, fresh);
                true
            }
            Some(r) => {
                let active = r.usable(now);
                let better = seq > r.dest_seq
                    || (seq == r.dest_seq && (!active || hops < r.hop_count));
                if better {
                    *r = fresh;
                    true
                } else {
                    if active && r.next_hop == next_hop && r.dest_seq == seq && r.hop_count == hops {
                        r.expires_at = r.expires_at.max(expires_at);
                    }
                    false
                }
            }
        }
    }

    fn data_size(&self, p: &DataPacket) -> u32 {
        p.payload_bytes + self.data_header
    }

    pub fn send_data(&mut self, packet: DataPacket, ctx: &mut Ctx) {
        let now = ctx.now.0;
        if let Some(r) = self.usable_route(packet.dst, now) {
            self.transmit(packet, r.next_hop, ctx);
            return;
        }
        if packet.src != self.me {
            self.no_route_at_forwarder(packet, ctx);
            return;
        }
        let dst = packet.dst;
        match self.pending.buffer(packet, self.cfg.buffer_per_dest) {
            Buffered::StartDiscovery { gen } => self.originate_rreq(dst, gen, ctx),
            Buffered::Queued => {}
            Buffered::Rejected(p, reason) => ctx.drop_packet(p, reason),
        }
    }

    fn transmit(&mut self, packet: DataPacket, next_hop: NodeId, ctx: &mut Ctx) {
        let now = ctx.now.0;
        let timeout = self.cfg.active_route_timeout_s;
        if let Some(r) = self.routes.get_mut(&packet.dst) {
            r.expires_at = r.expires_at.max(now + timeout);
        }
        let size = self.data_size(&packet);
        ctx.unicast(next_hop, size, Payload::Data(packet));
    }

    fn no_route_at_forwarder(&mut self, packet: DataPacket, ctx: &mut Ctx) {
        let dst = packet.dst;
        let seq = match self.routes.get_mut(&dst) {
            Some(r) => {
                if r.valid {
                    r.valid = false;
                    r.dest_seq += 1;
                }
                r.dest_seq
            }
            None => 0,
        };
        ctx.drop_packet(packet, DropReason::NoRoute);
        self.send_rerr(vec![(dst, seq)], ctx);
    }

    /// Flood a route request for `dst` and arm the retry timer `gen`.
    pub fn originate_rreq(&mut self, dst: NodeId, gen: u64, ctx: &mut Ctx) {
        self.own_seq += 1;
        self.broadcast_id += 1;
        let rreq = Rreq {
            broadcast_id: self.broadcast_id,
            src: self.me,
            src_seq: self.own_seq,
            dst,
            dst_seq: self.routes.get(&dst).map(|r| r.dest_seq),
            hop_count: 0,
        };
        self.seen
            .insert((self.me, rreq.broadcast_id), ctx.now.0 + self.cfg.rreq_cache_expiry_s);
        ctx.broadcast(self.cfg.rreq_bytes, Payload::Aodv(Message::Rreq(rreq)));
        ctx.timer(self.cfg.discovery_timeout_s, Timer::Discovery { dst, gen });
    }

    fn seen_before(&mut self, key: (NodeId, u64), now: f64) -> bool {
        if self.seen.len() > 4096 {
            self.seen.retain(|_, exp| *exp > now);
        }
        match self.seen.get(&key) {
            Some(exp) if *exp > now => true,
            _ => {
                self.seen.insert(key, now + self.cfg.rreq_cache_expiry_s);
                false
            }
        }
    }

    pub fn handle_rreq(&mut self, rreq: Rreq, from: NodeId, ctx: &mut Ctx) {
        let now = ctx.now.0;
        if rreq.src == self.me || self.seen_before((rreq.src, rreq.broadcast_id), now) {
            return;
        }
        self.rreqs_processed += 1;
        self.offer_route(rreq.src, from, rreq.hop_count + 1, rreq.src_seq, now);

        if rreq.dst == self.me {
            self.own_seq += 1;
            if let Some(s) = rreq.dst_seq {
                self.own_seq = self.own_seq.max(s);
            }
            let rrep = Rrep {
                src: rreq.src,
                dst: self.me,
                dst_seq: self.own_seq,
                hop_count: 0,
            };
            ctx.unicast(from, self.cfg.rrep_bytes, Payload::Aodv(Message::Rrep(rrep)));
            return;
        }
        if self.cfg.intermediate_reply {
            if let Some(r) = self.usable_route(rreq.dst, now) {
                if r.dest_seq >= rreq.dst_seq.unwrap_or(0) && r.next_hop != from {
                    let rrep = Rrep {
                        src: rreq.src,
                        dst: rreq.dst,
                        dst_seq: r.dest_seq,
                        hop_count: r.hop_count,
                    };
                    ctx.unicast(from, self.cfg.rrep_bytes, Payload::Aodv(Message::Rrep(rrep)));
                    return;
                }
            }
        }
        let fwd = Rreq {
            hop_count: rreq.hop_count + 1,
            ..rreq
        };
        ctx.broadcast(self.cfg.rreq_bytes, Payload::Aodv(Message::Rreq(fwd)));
    }

    pub fn handle_rrep(&mut self, rrep: Rrep, from: NodeId, ctx: &mut Ctx) {
        let now = ctx.now.0;
        self.offer_route(rrep.dst, from, rrep.hop_count + 1, rrep.dst_seq, now);
        if rrep.src == self.me {
            if self.usable_route(rrep.dst, now).is_some() {
                for p in self.pending.resolve(rrep.dst) {
                    self.send_data(p, ctx);
                }
            }
            return;
        }
        // without a reverse route the reply dies here; the source's retry timer recovers
        if let Some(rev) = self.usable_route(rrep.src, now) {
            let timeout = self.cfg.active_route_timeout_s;
            if let Some(r) = self.routes.get_mut(&rrep.src) {
                r.expires_at = r.expires_at.max(now + timeout);
            }
            let fwd = Rrep {
                hop_count: rrep.hop_count + 1,
                ..rrep
            };
            ctx.unicast(rev.next_hop, self.cfg.rrep_bytes, Payload::Aodv(Message::Rrep(fwd)));
        }
    }

    /// Invalidate every route through `neighbor` and announce the loss.
    pub fn handle_link_break(&mut self, neighbor: NodeId, ctx: &mut Ctx) -> Vec<(NodeId, u64)> {
        let mut lost = Vec::new();
        for r in self.routes.values_mut() {
            if r.valid && r.next_hop == neighbor {
                r.valid = false;
                r.dest_seq += 1;
                lost.push((r.dest, r.dest_seq));
            }
        }
        ctx.purge(neighbor);
        if !lost.is_empty() {
            self.send_rerr(lost.clone(), ctx);
        }
        lost
    }

    fn send_rerr(&mut self, unreachable: Vec<(NodeId, u64)>, ctx: &mut Ctx) {
        ctx.broadcast(self.cfg.rerr_bytes, Payload::Aodv(Message::Rerr(Rerr { unreachable })));
    }

    pub fn handle_rerr(&mut self, rerr: &Rerr, from: NodeId, ctx: &mut Ctx) -> Vec<(NodeId, u64)> {
        let mut lost = Vec::new();
        for &(dest, seq) in &rerr.unreachable {
            if let Some(r) = self.routes.get_mut(&dest) {
                if r.valid && r.next_hop == from {
                    r.valid = false;
                    r.dest_seq = r.dest_seq.max(seq);
                    lost.push((dest, r.dest_seq));
                }
            }
        }
        if !lost.is_empty() {
            self.send_rerr(lost.clone(), ctx);
        }
        lost
    }

    pub fn receive(&mut self, payload: Payload, from: NodeId, ctx: &mut Ctx) {
        match payload {
            Payload::Data(p) if p.dst == self.me => ctx.deliver(p),
            Payload::Data(p) => self.send_data(p, ctx),
            Payload::Aodv(Message::Rreq(r)) => self.handle_rreq(r, from, ctx),
            Payload::Aodv(Message::Rrep(r)) => self.handle_rrep(r, from, ctx),
            Payload::Aodv(Message::Rerr(r)) => {
                self.handle_rerr(&r, from, ctx);
            }
            _ => {}
        }
    }

    pub fn link_failed(&mut self, payload: Payload, next_hop: NodeId, ctx: &mut Ctx) {
        self.handle_link_break(next_hop, ctx);
        if let Payload::Data(p) = payload {
            ctx.drop_packet(p, DropReason::LinkBreak);
        }
    }

    pub fn timer(&mut self, timer: Timer, ctx: &mut Ctx) {
        let Timer::Discovery { dst, gen } = timer else {
            return;
        };
        match self.pending.on_timer(dst, gen, self.cfg.rreq_retries) {
            TimerOutcome::Stale => {}
            TimerOutcome::Retry { gen } => self.originate_rreq(dst, gen, ctx),
            TimerOutcome::GiveUp(packets) => {
                for p in packets {
                    ctx.drop_packet(p, DropReason::DiscoveryFailed);
                }
            }
        }
    }
}
