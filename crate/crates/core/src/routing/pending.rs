use std::collections::{BTreeMap, VecDeque};

use super::{DataPacket, DropReason};
use crate::link::NodeId;

#[derive(Debug, Clone)]
struct Pending {
    retries: u32,
    gen: u64,
    buffer: VecDeque<DataPacket>,
}

/// Packets waiting on an on-demand route discovery, keyed by destination.
#[derive(Debug, Clone, Default)]
pub struct PendingDiscoveries {
    by_dest: BTreeMap<NodeId, Pending>,
    next_gen: u64,
}

#[derive(Debug, PartialEq)]
pub enum TimerOutcome {
    /// Timer from an earlier discovery round; ignore.
    Stale,
    /// Send another request; arm a timer with this generation.
    Retry { gen: u64 },
    /// Retries exhausted; these packets are lost.
    GiveUp(Vec<DataPacket>),
}

pub enum Buffered {
    /// First packet for this destination: start a discovery with timer `gen`.
    StartDiscovery { gen: u64 },
    /// Discovery already running.
    Queued,
    Rejected(DataPacket, DropReason),
}

impl PendingDiscoveries {
    pub fn is_pending(&self, dst: NodeId) -> bool {
        self.by_dest.contains_key(&dst)
    }

    pub fn buffered(&self, dst: NodeId) -> usize {
        self.by_dest.get(&dst).map_or(0, |p| p.buffer.len())
    }

    pub fn buffer(&mut self, packet: DataPacket, capacity: usize) -> Buffered {
        let dst = packet.dst;
        if let Some(p) = self.by_dest.get_mut(&dst) {
            if p.buffer.len() >= capacity {
                return Buffered::Rejected(packet, DropReason::BufferFull);
            }
            p.buffer.push_back(packet);
            return Buffered::Queued;
        }
        if capacity == 0 {
            return Buffered::Rejected(packet, DropReason::BufferFull);
        }
        self.next_gen += 1;
        let gen = self.next_gen;
        self.by_dest.insert(
            dst,
            Pending {
                retries: 0,
                gen,
                buffer: VecDeque::from([packet]),
            },
        );
        Buffered::StartDiscovery { gen }
    }

    /// Route found: hand back the buffered packets in arrival order.
    pub fn resolve(&mut self, dst: NodeId) -> Vec<DataPacket> {
        self.by_dest
            .remove(&dst)
            .map(|p| p.buffer.into_iter().collect())
            .unwrap_or_default()
    }

    pub fn on_timer(&mut self, dst: NodeId, gen: u64, max_retries: u32) -> TimerOutcome {
        let Some(p) = self.by_dest.get_mut(&dst) else {
            return TimerOutcome::Stale;
        };
        if p.gen != gen {
            return TimerOutcome::Stale;
        }
        if p.retries < max_retries {
            p.retries += 1;
            self.next_gen += 1;
            p.gen = self.next_gen;
            return TimerOutcome::Retry { gen: p.gen };
        }
        let p = self.by_dest.remove(&dst).expect("present");
        TimerOutcome::GiveUp(p.buffer.into_iter().collect())
    }
}
