//! Discrete-event engine: simulation clock, ordered event queue and labeled
//! random streams.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;

/// Simulation time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, serde::Serialize, serde::Deserialize)]
pub struct SimTime(pub f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn after(self, delay: f64) -> SimTime {
        SimTime(self.0 + delay)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

struct Entry<T> {
    at: SimTime,
    seq: u64,
    payload: T,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<T> Eq for Entry<T> {}

impl<T> Ord for Entry<T> {
    // BinaryHeap is a max-heap; invert so the smallest (at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .0
            .total_cmp(&self.at.0)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// An event handed back by [`EventQueue::pop_next`].
#[derive(Debug, Clone, PartialEq)]
pub struct Event<T> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: T,
}

/// Time-ordered event queue with FIFO tie-breaking on equal timestamps.
///
/// The queue owns the simulation clock: popping an event advances the clock
/// to its firing time. Every popped event is folded into a running digest so
/// two replays can be compared cheaply.
pub struct EventQueue<T> {
    heap: BinaryHeap<Entry<T>>,
    now: SimTime,
    next_seq: u64,
    scheduled: u64,
    delivered: u64,
    digest: u64,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        Self::new()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv_mix(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            scheduled: 0,
            delivered: 0,
            digest: FNV_OFFSET,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedule `payload` at absolute time `at`. Returns the assigned sequence number.
    pub fn schedule(&mut self, at: SimTime, payload: T) -> Result<u64, SimError> {
        if !at.0.is_finite() || at.0 < self.now.0 {
            return Err(SimError::PastEvent {
                at: at.0,
                now: self.now.0,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.scheduled += 1;
        self.heap.push(Entry { at, seq, payload });
        Ok(seq)
    }

    /// Pop the event with the smallest `(fire_at, seq)`; `None` means the run is complete.
    pub fn pop_next(&mut self) -> Option<Event<T>> {
        let e = self.heap.pop()?;
        debug_assert!(e.at.0 >= self.now.0);
        self.now = e.at;
        self.delivered += 1;
        self.digest = fnv_mix(self.digest, &e.at.0.to_bits().to_le_bytes());
        self.digest = fnv_mix(self.digest, &e.seq.to_le_bytes());
        Some(Event {
            fire_at: e.at,
            seq: e.seq,
            payload: e.payload,
        })
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.at)
    }

    /// Moves the clock forward without an event (used to close a run at its horizon).
    pub fn advance_to(&mut self, t: SimTime) {
        if t.0 > self.now.0 {
            self.now = t;
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn scheduled_count(&self) -> u64 {
        self.scheduled
    }

    pub fn delivered_count(&self) -> u64 {
        self.delivered
    }

    /// Fold extra bytes (e.g. an event discriminant) into the replay digest.
    pub fn mix_digest(&mut self, bytes: &[u8]) {
        self.digest = fnv_mix(self.digest, bytes);
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }
}

/// A named, independently seeded random stream.
///
/// The stream key is derived from `(seed, label)` with a fixed hash, and the
/// generator is ChaCha8, so draws are identical on every platform.
#[derive(Clone, Debug)]
pub struct RngStream {
    label: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut h = fnv_mix(FNV_OFFSET, &seed.to_le_bytes());
        h = fnv_mix(h, label.as_bytes());
        // splitmix64 finalizer to spread the FNV state over all bits
        let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        Self {
            label: label.to_owned(),
            rng: ChaCha8Rng::seed_from_u64(z),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform draw in `[lo, hi)`; a degenerate interval returns `lo`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64, SimError> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(SimError::Argument(format!(
                "uniform: invalid interval [{lo}, {hi})"
            )));
        }
        if lo == hi {
            return Ok(lo);
        }
        let u: f64 = self.rng.gen();
        let v = lo + (hi - lo) * u;
        // guard against rounding up to `hi`
        Ok(if v >= hi { lo } else { v })
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Uniform point in a disk of the given radius centred at the origin.
    pub fn in_disk(&mut self, radius: f64) -> (f64, f64) {
        if radius <= 0.0 {
            return (0.0, 0.0);
        }
        let r = radius * self.rng.gen::<f64>().sqrt();
        let theta = std::f64::consts::TAU * self.rng.gen::<f64>();
        (r * theta.cos(), r * theta.sin())
    }
}

/// The labeled streams used by one run. Each concern draws only from its own
/// stream so adding protocol activity never perturbs mobility or traffic.
#[derive(Clone, Debug)]
pub struct Streams {
    pub mobility: RngStream,
    pub traffic: RngStream,
    pub jitter: RngStream,
    pub pairs: RngStream,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            mobility: RngStream::new(seed, "mobility"),
            traffic: RngStream::new(seed, "traffic"),
            jitter: RngStream::new(seed, "jitter"),
            pairs: RngStream::new(seed, "pairs"),
        }
    }
}
