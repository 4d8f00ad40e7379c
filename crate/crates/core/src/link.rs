//! Range-based radio and the link-layer data types: frames, the DropTail
//! interface queue and airtime.
//!
//! The transmit/retry state machine itself runs inside the network event
//! loop (see `network.rs`); this module holds the pieces that do not need
//! the clock.

use std::collections::VecDeque;

use crate::error::{Result, SimError};
use crate::mobility::Position;
use crate::routing::Payload;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Data,
    Control,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Data => "data",
            FrameKind::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    Unicast(NodeId),
    Broadcast,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub uid: u64,
    pub kind: FrameKind,
    pub size_bytes: u32,
    pub src: NodeId,
    pub dst: Dest,
    pub payload: Payload,
}

/// True iff the two positions are within `range_m` (closed boundary).
pub fn in_range(a: Position, b: Position, range_m: f64) -> bool {
    a.distance(b) <= range_m
}

/// Serialization delay of a frame of `size_bytes` at `bitrate` bits/s.
pub fn tx_duration(size_bytes: u32, bitrate: f64) -> Result<f64> {
    if size_bytes == 0 {
        return Err(SimError::Argument("frame size must be positive".into()));
    }
    Ok(crate::energy::airtime(size_bytes, bitrate))
}

/// FIFO interface queue that discards arrivals when full.
#[derive(Debug)]
pub struct IfaceQueue {
    frames: VecDeque<Frame>,
    capacity: usize,
    drops: u64,
}

impl IfaceQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            frames: VecDeque::with_capacity(capacity),
            capacity,
            drops: 0,
        }
    }

    /// Enqueue, handing the frame back if the queue is full.
    pub fn push(&mut self, frame: Frame) -> std::result::Result<(), Frame> {
        if self.frames.len() >= self.capacity {
            self.drops += 1;
            return Err(frame);
        }
        self.frames.push_back(frame);
        Ok(())
    }

    pub fn pop(&mut self) -> Option<Frame> {
        self.frames.pop_front()
    }

    /// Remove every queued unicast frame addressed to `next_hop`.
    pub fn purge_to(&mut self, next_hop: NodeId) -> Vec<Frame> {
        let (gone, keep): (Vec<_>, Vec<_>) = self
            .frames
            .drain(..)
            .partition(|f| f.dst == Dest::Unicast(next_hop));
        self.frames = keep.into();
        gone
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn drops(&self) -> u64 {
        self.drops
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{DataPacket, Payload};
    use approx::assert_relative_eq;

    fn frame(uid: u64, dst: Dest) -> Frame {
        Frame {
            uid,
            kind: FrameKind::Data,
            size_bytes: 544,
            src: 0,
            dst,
            payload: Payload::Data(DataPacket::new(uid, 0, 0, 1, 512, crate::sim::SimTime::ZERO)),
        }
    }

    #[test]
    fn range_boundary_is_closed() {
        let o = Position::new(0.0, 0.0);
        assert!(in_range(o, o, 250.0));
        assert!(in_range(o, Position::new(250.0, 0.0), 250.0));
        assert!(!in_range(o, Position::new(250.01, 0.0), 250.0));
        assert!(in_range(Position::new(0.0, 0.0), Position::new(150.0, 200.0), 250.0));
    }

    #[test]
    fn airtime_values() {
        assert_relative_eq!(tx_duration(544, 2e6).unwrap(), 2.176e-3, max_relative = 1e-12);
        assert_relative_eq!(tx_duration(250, 2e6).unwrap(), 1.0e-3, max_relative = 1e-12);
        assert!(tx_duration(0, 2e6).is_err());
        let mut last = 0.0;
        for s in 1..2000u32 {
            let d = tx_duration(s, 2e6).unwrap();
            assert!(d > last);
            last = d;
        }
    }

    #[test]
    fn droptail_at_capacity() {
        let mut q = IfaceQueue::new(50);
        for i in 0..50 {
            q.push(frame(i, Dest::Unicast(1))).unwrap();
        }
        let back = q.push(frame(50, Dest::Unicast(1))).unwrap_err();
        assert_eq!(back.uid, 50);
        assert_eq!(q.len(), 50);
        assert_eq!(q.drops(), 1);
        assert_eq!(q.pop().unwrap().uid, 0);
    }

    #[test]
    fn purge_keeps_order_of_others() {
        let mut q = IfaceQueue::new(10);
        for (i, d) in [Dest::Unicast(1), Dest::Unicast(2), Dest::Broadcast, Dest::Unicast(1), Dest::Unicast(3)]
            .into_iter()
            .enumerate()
        {
            q.push(frame(i as u64, d)).unwrap();
        }
        let gone = q.purge_to(1);
        assert_eq!(gone.iter().map(|f| f.uid).collect::<Vec<_>>(), vec![0, 3]);
        let rest: Vec<u64> = std::iter::from_fn(|| q.pop()).map(|f| f.uid).collect();
        assert_eq!(rest, vec![1, 2, 4]);
    }
}
