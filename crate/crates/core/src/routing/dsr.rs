//! Dynamic source routing.
//!
//! The sender puts the whole path in each data packet. Paths come from a
//! per-node route cache filled by route discovery: a flooded request
//! accumulates the nodes it crosses, and the target returns that record to
//! the source along the reversed record. A forwarding failure is reported to
//! the source with a route error naming the broken link, and every node that
//! sees the error drops cached routes using that link.

use std::collections::BTreeMap;

use super::pending::Buffered;
use super::{is_simple, Ctx, DataPacket, DropReason, Payload, PendingDiscoveries, Timer, TimerOutcome};
use crate::config::DsrConfig;
use crate::link::NodeId;

/// Full path carried by a data packet; `cursor` indexes the node that
/// should receive it next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRoute {
    pub path: Vec<NodeId>,
    pub cursor: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DsrRreq {
    pub request_id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub route_record: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DsrRrep {
    /// Discovered path from the requester to the target.
    pub route: Vec<NodeId>,
    /// Index in `route` of the node this copy is addressed to.
    pub cursor: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DsrRerr {
    pub broken_from: NodeId,
    pub broken_to: NodeId,
    /// `broken_from` back to the packet's source.
    pub back_path: Vec<NodeId>,
    pub cursor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Rreq(DsrRreq),
    Rrep(DsrRrep),
    Rerr(DsrRerr),
}

#[derive(Debug, Clone, PartialEq)]
struct CachedRoute {
    path: Vec<NodeId>,
    inserted_at: f64,
}

/// Source routes known to one node, all starting at that node.
#[derive(Debug, Clone)]
pub struct RouteCache {
    owner: NodeId,
    routes: Vec<CachedRoute>,
    capacity: usize,
    lifetime: f64,
}

impl RouteCache {
    pub fn new(owner: NodeId, capacity: usize, lifetime: f64) -> Self {
        Self {
            owner,
            routes: Vec::new(),
            capacity,
            lifetime,
        }
    }

    /// Add a route starting at the owner. Routes with a repeated node are
    /// rejected; an identical route only has its timestamp refreshed.
    pub fn insert(&mut self, path: Vec<NodeId>, now: f64) -> bool {
        if path.len() < 2 || path[0] != self.owner || !is_simple(&path) {
            return false;
        }
        if let Some(r) = self.routes.iter_mut().find(|r| r.path == path) {
            r.inserted_at = now;
            return true;
        }
        if self.routes.len() >= self.capacity && self.capacity > 0 {
            self.routes.remove(0);
        }
        if self.capacity > 0 {
            self.routes.push(CachedRoute { path, inserted_at: now });
        }
        true
    }

    /// Shortest unexpired path to `dst`, including prefixes of longer routes.
    pub fn find(&self, dst: NodeId, now: f64) -> Option<Vec<NodeId>> {
        self.routes
            .iter()
            .filter(|r| now - r.inserted_at < self.lifetime)
            .filter_map(|r| r.path.iter().position(|n| *n == dst).map(|i| &r.path[..=i]))
            .filter(|p| p.len() >= 2)
            .min_by_key(|p| p.len())
            .map(<[NodeId]>::to_vec)
    }

    /// Drop every route that uses the directed link `from -> to`.
    pub fn prune_link(&mut self, from: NodeId, to: NodeId) -> usize {
        let before = self.routes.len();
        self.routes
            .retain(|r| !r.path.windows(2).any(|w| w[0] == from && w[1] == to));
        before - self.routes.len()
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn routes(&self) -> impl Iterator<Item = &[NodeId]> {
        self.routes.iter().map(|r| r.path.as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct DsrAgent {
    me: NodeId,
    cfg: DsrConfig,
    data_header: u32,
    cache: RouteCache,
    request_id: u64,
    seen: BTreeMap<(NodeId, u64), f64>,
    pending: PendingDiscoveries,
}

impl DsrAgent {
    pub fn new(me: NodeId, cfg: DsrConfig, data_header: u32) -> Self {
        let cache = RouteCache::new(me, cfg.cache_capacity, cfg.cache_lifetime_s);
        Self {
            me,
            cfg,
            data_header,
            cache,
            request_id: 0,
            seen: BTreeMap::new(),
            pending: PendingDiscoveries::default(),
        }
    }

    pub fn cache(&self) -> &RouteCache {
        &self.cache
    }

    pub fn discovery_pending(&self, dst: NodeId) -> bool {
        self.pending.is_pending(dst)
    }

    fn control_size(&self, nodes: usize) -> u32 {
        self.cfg.control_base_bytes + self.cfg.control_per_node_bytes * nodes as u32
    }

    fn data_size(&self, p: &DataPacket, path_len: usize) -> u32 {
        p.payload_bytes
            + self.data_header
            + self.cfg.sr_header_base_bytes
            + self.cfg.sr_header_per_hop_bytes * (path_len.saturating_sub(1)) as u32
    }

    fn send_along(&mut self, mut packet: DataPacket, path: Vec<NodeId>, ctx: &mut Ctx) {
        let next = path[1];
        let size = self.data_size(&packet, path.len());
        packet.source_route = Some(SourceRoute { path, cursor: 1 });
        ctx.unicast(next, size, Payload::Data(packet));
    }

    pub fn send_data(&mut self, packet: DataPacket, ctx: &mut Ctx) {
        if let Some(path) = self.cache.find(packet.dst, ctx.now.0) {
            self.send_along(packet, path, ctx);
            return;
        }
        let dst = packet.dst;
        match self.pending.buffer(packet, self.cfg.buffer_per_dest) {
            Buffered::StartDiscovery { gen } => self.originate_rreq(dst, gen, ctx),
            Buffered::Queued => {}
            Buffered::Rejected(p, reason) => ctx.drop_packet(p, reason),
        }
    }

    pub fn originate_rreq(&mut self, dst: NodeId, gen: u64, ctx: &mut Ctx) {
        self.request_id += 1;
        let rreq = DsrRreq {
            request_id: self.request_id,
            src: self.me,
            dst,
            route_record: vec![self.me],
        };
        self.seen
            .insert((self.me, rreq.request_id), ctx.now.0 + self.cfg.request_table_expiry_s);
        ctx.broadcast(self.control_size(1), Payload::Dsr(Message::Rreq(rreq)));
        ctx.timer(self.cfg.discovery_timeout_s, Timer::Discovery { dst, gen });
    }

    fn seen_before(&mut self, key: (NodeId, u64), now: f64) -> bool {
        if self.seen.len() > 4096 {
            self.seen.retain(|_, exp| *exp > now);
        }
        match self.seen.get(&key) {
            Some(exp) if *exp > now => true,
            _ => {
                self.seen.insert(key, now + self.cfg.request_table_expiry_s);
                false
            }
        }
    }

    fn reply(&mut self, route: Vec<NodeId>, ctx: &mut Ctx) {
        let cursor = route.len() - 2;
        let next = route[cursor];
        let size = self.control_size(route.len());
        ctx.unicast(next, size, Payload::Dsr(Message::Rrep(DsrRrep { route, cursor })));
    }

    pub fn handle_rreq(&mut self, rreq: DsrRreq, ctx: &mut Ctx) {
        let now = ctx.now.0;
        if rreq.src == self.me || rreq.route_record.contains(&self.me) {
            return;
        }
        if rreq.dst == self.me {
            // the target answers every copy, so several disjoint routes can come back
            let mut route = rreq.route_record;
            route.push(self.me);
            let back: Vec<NodeId> = route.iter().rev().copied().collect();
            self.cache.insert(back, now);
            self.reply(route, ctx);
            return;
        }
        if self.seen_before((rreq.src, rreq.request_id), now) {
            return;
        }
        if self.cfg.cache_reply {
            if let Some(tail) = self.cache.find(rreq.dst, now) {
                if tail[1..].iter().all(|n| !rreq.route_record.contains(n)) {
                    let mut route = rreq.route_record.clone();
                    route.extend(tail);
                    self.reply(route, ctx);
                    return;
                }
            }
        }
        let mut fwd = rreq;
        fwd.route_record.push(self.me);
        let size = self.control_size(fwd.route_record.len());
        ctx.broadcast(size, Payload::Dsr(Message::Rreq(fwd)));
    }

    pub fn handle_rrep(&mut self, rrep: DsrRrep, ctx: &mut Ctx) {
        let now = ctx.now.0;
        if rrep.route.get(rrep.cursor) != Some(&self.me) {
            return;
        }
        self.cache.insert(rrep.route[rrep.cursor..].to_vec(), now);
        if rrep.cursor == 0 {
            let dst = *rrep.route.last().expect("non-empty route");
            for p in self.pending.resolve(dst) {
                self.send_data(p, ctx);
            }
            return;
        }
        let cursor = rrep.cursor - 1;
        let next = rrep.route[cursor];
        let size = self.control_size(rrep.route.len());
        ctx.unicast(
            next,
            size,
            Payload::Dsr(Message::Rrep(DsrRrep {
                route: rrep.route,
                cursor,
            })),
        );
    }

    /// Forwarding `original` to `broken_to` failed at this node.
    pub fn handle_link_break(&mut self, broken_to: NodeId, original: Option<DataPacket>, ctx: &mut Ctx) {
        self.cache.prune_link(self.me, broken_to);
        ctx.purge(broken_to);
        let Some(packet) = original else {
            return;
        };
        if let Some(sr) = &packet.source_route {
            if let Some(i) = sr.path.iter().position(|n| *n == self.me) {
                if i > 0 {
                    let back_path: Vec<NodeId> = sr.path[..=i].iter().rev().copied().collect();
                    let next = back_path[1];
                    let size = self.control_size(back_path.len());
                    let rerr = DsrRerr {
                        broken_from: self.me,
                        broken_to,
                        back_path,
                        cursor: 1,
                    };
                    ctx.unicast(next, size, Payload::Dsr(Message::Rerr(rerr)));
                }
            }
        }
        ctx.drop_packet(packet, DropReason::LinkBreak);
    }

    pub fn handle_rerr(&mut self, rerr: DsrRerr, ctx: &mut Ctx) {
        self.cache.prune_link(rerr.broken_from, rerr.broken_to);
        if rerr.back_path.get(rerr.cursor) != Some(&self.me) || rerr.cursor + 1 >= rerr.back_path.len() {
            return;
        }
        let cursor = rerr.cursor + 1;
        let next = rerr.back_path[cursor];
        let size = self.control_size(rerr.back_path.len());
        ctx.unicast(next, size, Payload::Dsr(Message::Rerr(DsrRerr { cursor, ..rerr })));
    }

    fn forward_data(&mut self, mut packet: DataPacket, ctx: &mut Ctx) {
        let Some(sr) = packet.source_route.as_mut() else {
            ctx.drop_packet(packet, DropReason::BadSourceRoute);
            return;
        };
        if sr.path.get(sr.cursor) != Some(&self.me) {
            ctx.drop_packet(packet, DropReason::BadSourceRoute);
            return;
        }
        if sr.cursor + 1 == sr.path.len() {
            ctx.deliver(packet);
            return;
        }
        sr.cursor += 1;
        let next = sr.path[sr.cursor];
        let len = sr.path.len();
        let size = self.data_size(&packet, len);
        ctx.unicast(next, size, Payload::Data(packet));
    }

    pub fn receive(&mut self, payload: Payload, _from: NodeId, ctx: &mut Ctx) {
        match payload {
            Payload::Data(p) => self.forward_data(p, ctx),
            Payload::Dsr(Message::Rreq(r)) => self.handle_rreq(r, ctx),
            Payload::Dsr(Message::Rrep(r)) => self.handle_rrep(r, ctx),
            Payload::Dsr(Message::Rerr(r)) => self.handle_rerr(r, ctx),
            _ => {}
        }
    }

    pub fn link_failed(&mut self, payload: Payload, next_hop: NodeId, ctx: &mut Ctx) {
        match payload {
            Payload::Data(p) => self.handle_link_break(next_hop, Some(p), ctx),
            _ => self.handle_link_break(next_hop, None, ctx),
        }
    }

    pub fn timer(&mut self, timer: Timer, ctx: &mut Ctx) {
        let Timer::Discovery { dst, gen } = timer else {
            return;
        };
        if let Some(path) = self.cache.find(dst, ctx.now.0) {
            for p in self.pending.resolve(dst) {
                self.send_along(p, path.clone(), ctx);
            }
            return;
        }
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
