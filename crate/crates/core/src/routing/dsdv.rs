//! Destination-sequenced distance vector routing.
//!
//! Each node keeps one entry per destination with a hop count and the
//! destination's sequence number. Even numbers are issued by the destination
//! itself; a node that loses its next hop marks the route unreachable with
//! the next odd number so the break outranks the stale route everywhere.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{Ctx, DataPacket, DropReason, Payload, Timer};
use crate::config::DsdvConfig;
use crate::link::NodeId;

pub const INFINITY: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsdvEntry {
    pub dest: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub seq: u64,
    pub installed_at: f64,
}

impl DsdvEntry {
    pub fn reachable(&self) -> bool {
        self.hop_count != INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Advert {
    pub dest: NodeId,
    pub hop_count: u32,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub origin: NodeId,
    pub full: bool,
    pub entries: Vec<Advert>,
}

#[derive(Debug, Clone)]
pub struct DsdvAgent {
    me: NodeId,
    cfg: DsdvConfig,
    data_header: u32,
    table: BTreeMap<NodeId, DsdvEntry>,
    changed: BTreeSet<NodeId>,
    last_triggered: Option<f64>,
    triggered_pending: bool,
    buffer: BTreeMap<NodeId, VecDeque<DataPacket>>,
    dumps_sent: u64,
}

/// DSDV freshness rule: a strictly newer sequence number always wins; at
/// equal sequence numbers the shorter route wins.
pub fn should_adopt(current: Option<(u64, u32)>, cand_seq: u64, cand_hops: u32) -> bool {
    match current {
        None => cand_hops != INFINITY,
        Some((seq, hops)) => cand_seq > seq || (cand_seq == seq && cand_hops < hops),
    }
}

impl DsdvAgent {
    pub fn new(me: NodeId, cfg: DsdvConfig, data_header: u32) -> Self {
        let mut table = BTreeMap::new();
        table.insert(
            me,
            DsdvEntry {
                dest: me,
                next_hop: me,
                hop_count: 0,
                seq: 0,
                installed_at: 0.0,
            },
        );
        Self {
            me,
            cfg,
            data_header,
            table,
            changed: BTreeSet::new(),
            last_triggered: None,
            triggered_pending: false,
            buffer: BTreeMap::new(),
            dumps_sent: 0,
        }
    }

    pub fn entry(&self, dest: NodeId) -> Option<&DsdvEntry> {
        self.table.get(&dest)
    }

    pub fn table(&self) -> impl Iterator<Item = &DsdvEntry> {
        self.table.values()
    }

    pub fn own_seq(&self) -> u64 {
        self.table[&self.me].seq
    }

    pub fn dumps_sent(&self) -> u64 {
        self.dumps_sent
    }

    pub fn buffered(&self, dest: NodeId) -> usize {
        self.buffer.get(&dest).map_or(0, VecDeque::len)
    }

    fn update_size(&self, entries: usize) -> u32 {
        self.cfg.header_bytes + self.cfg.entry_bytes * entries as u32
    }

    pub fn start(&mut self, ctx: &mut Ctx) {
        let offset = ctx.rng.uniform(0.0, self.cfg.first_dump_window_s).unwrap_or(0.0);
        ctx.timer(offset, Timer::Periodic);
    }

    /// Full-table broadcast; bumps our own sequence number by two.
    pub fn periodic_dump(&mut self, ctx: &mut Ctx) -> Update {
        let now = ctx.now.0;
        let me = self.table.get_mut(&self.me).expect("self entry");
        me.seq += 2;
        me.installed_at = now;
        let update = Update {
            origin: self.me,
            full: true,
            entries: self
                .table
                .values()
                .map(|e| Advert {
                    dest: e.dest,
                    hop_count: e.hop_count,
                    seq: e.seq,
                })
                .collect(),
        };
        self.changed.clear();
        self.dumps_sent += 1;
        ctx.broadcast(self.update_size(update.entries.len()), Payload::Dsdv(update.clone()));
        ctx.timer(self.cfg.dump_interval_s, Timer::Periodic);
        self.expire_buffer(ctx);
        update
    }

    fn expire_buffer(&mut self, ctx: &mut Ctx) {
        let cutoff = ctx.now.0 - self.cfg.buffer_timeout_s;
        for q in self.buffer.values_mut() {
            while q.front().is_some_and(|p| p.created_at.0 < cutoff) {
                let p = q.pop_front().expect("front");
                ctx.drop_packet(p, DropReason::Expired);
            }
        }
        self.buffer.retain(|_, q| !q.is_empty());
    }

    /// Apply a neighbour's advertisement. Returns the destinations whose
    /// metric changed.
    pub fn handle_update(&mut self, update: &Update, from: NodeId, ctx: &mut Ctx) -> Vec<NodeId> {
        let mut metric_changed = Vec::new();
        for adv in &update.entries {
            if adv.dest == self.me {
                continue;
            }
            let cand_hops = if adv.hop_count == INFINITY {
                INFINITY
            } else {
                adv.hop_count.saturating_add(1).min(INFINITY - 1)
            };
            let current = self.table.get(&adv.dest).map(|e| (e.seq, e.hop_count));
            if !should_adopt(current, adv.seq, cand_hops) {
                continue;
            }
            let old_hops = current.map(|c| c.1);
            self.table.insert(
                adv.dest,
                DsdvEntry {
                    dest: adv.dest,
                    next_hop: from,
                    hop_count: cand_hops,
                    seq: adv.seq,
                    installed_at: ctx.now.0,
                },
            );
            if old_hops != Some(cand_hops) {
                self.changed.insert(adv.dest);
                metric_changed.push(adv.dest);
            }
            if cand_hops != INFINITY {
                self.flush(adv.dest, ctx);
            }
        }
        if !metric_changed.is_empty() {
            self.request_triggered(ctx);
        }
        metric_changed
    }

    /// Mark every route through `neighbor` unreachable with an odd sequence number.
    pub fn link_break(&mut self, neighbor: NodeId, ctx: &mut Ctx) -> Vec<NodeId> {
        let mut broken = Vec::new();
        for e in self.table.values_mut() {
            if e.dest != self.me && e.next_hop == neighbor && e.reachable() {
                e.hop_count = INFINITY;
                if e.seq % 2 == 0 {
                    e.seq += 1;
                }
                e.installed_at = ctx.now.0;
                broken.push(e.dest);
            }
        }
        if !broken.is_empty() {
            self.changed.extend(broken.iter().copied());
            self.request_triggered(ctx);
        }
        broken
    }

    fn request_triggered(&mut self, ctx: &mut Ctx) {
        if self.triggered_pending {
            return;
        }
        let earliest = self
            .last_triggered
            .map_or(f64::NEG_INFINITY, |t| t + self.cfg.triggered_min_gap_s);
        if ctx.now.0 >= earliest {
            self.send_triggered(ctx);
        } else {
            self.triggered_pending = true;
            ctx.timer(earliest - ctx.now.0, Timer::Triggered);
        }
    }

    fn send_triggered(&mut self, ctx: &mut Ctx) {
        self.triggered_pending = false;
        if self.changed.is_empty() {
            return;
        }
        let entries: Vec<Advert> = self
            .changed
            .iter()
            .filter_map(|d| self.table.get(d))
            .map(|e| Advert {
                dest: e.dest,
                hop_count: e.hop_count,
                seq: e.seq,
            })
            .collect();
        self.changed.clear();
        self.last_triggered = Some(ctx.now.0);
        let size = self.update_size(entries.len());
        ctx.broadcast(
            size,
            Payload::Dsdv(Update {
                origin: self.me,
                full: false,
                entries,
            }),
        );
    }

    fn flush(&mut self, dest: NodeId, ctx: &mut Ctx) {
        if let Some(q) = self.buffer.remove(&dest) {
            for p in q {
                self.forward(p, ctx);
            }
        }
    }

    fn forward(&mut self, packet: DataPacket, ctx: &mut Ctx) {
        match self.table.get(&packet.dst) {
            Some(e) if e.reachable() && e.dest != self.me => {
                let size = packet.payload_bytes + self.data_header;
                ctx.unicast(e.next_hop, size, Payload::Data(packet));
            }
            _ if packet.src == self.me => {
                let q = self.buffer.entry(packet.dst).or_default();
                if q.len() >= self.cfg.buffer_per_dest {
                    ctx.drop_packet(packet, DropReason::BufferFull);
                } else {
                    q.push_back(packet);
                }
            }
            _ => ctx.drop_packet(packet, DropReason::NoRoute),
        }
    }

    pub fn send_data(&mut self, packet: DataPacket, ctx: &mut Ctx) {
        self.forward(packet, ctx);
    }

    pub fn receive(&mut self, payload: Payload, from: NodeId, ctx: &mut Ctx) {
        match payload {
            Payload::Data(p) if p.dst == self.me => ctx.deliver(p),
            Payload::Data(p) => self.forward(p, ctx),
            Payload::Dsdv(u) => {
                self.handle_update(&u, from, ctx);
            }
            _ => {}
        }
    }

    pub fn link_failed(&mut self, payload: Payload, next_hop: NodeId, ctx: &mut Ctx) {
        self.link_break(next_hop, ctx);
        if let Payload::Data(p) = payload {
            ctx.drop_packet(p, DropReason::LinkBreak);
        }
    }

    pub fn timer(&mut self, timer: Timer, ctx: &mut Ctx) {
        match timer {
            Timer::Periodic => {
                self.periodic_dump(ctx);
            }
            Timer::Triggered => self.send_triggered(ctx),
            Timer::Discovery { .. } => {}
        }
    }
}
