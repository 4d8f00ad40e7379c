//! Constant-bit-rate UDP-style flows between node pairs.

use serde::Serialize;

use crate::config::TrafficConfig;
use crate::error::{Result, SimError};
use crate::link::NodeId;
use crate::sim::{RngStream, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CbrFlow {
    pub id: usize,
    pub src: NodeId,
    pub sink: NodeId,
    pub rate_pps: f64,
    pub payload_bytes: u32,
    pub start_at: f64,
    pub stop_at: f64,
}

impl CbrFlow {
    /// Time of the `k`-th packet (0-based). Computed from the start time
    /// rather than accumulated, so there is no drift over long runs.
    pub fn tick_time(&self, k: u64) -> f64 {
        self.start_at + k as f64 / self.rate_pps
    }

    /// Next send time after tick `k` was emitted, or `None` once `stop_at` is reached.
    pub fn next_packet(&self, k: u64, now: SimTime) -> Option<SimTime> {
        debug_assert!(now.0 < self.stop_at);
        let t = self.tick_time(k + 1);
        (t < self.stop_at).then_some(SimTime(t))
    }

    /// Packets the flow will originate over its lifetime.
    pub fn expected_packets(&self) -> u64 {
        if self.stop_at <= self.start_at {
            return 0;
        }
        let n = ((self.stop_at - self.start_at) * self.rate_pps).ceil() as u64;
        // ceil can overshoot by one when the span is an exact multiple
        if n > 0 && self.tick_time(n - 1) >= self.stop_at {
            n - 1
        } else {
            n
        }
    }
}

/// Default number of flows for `nodes` nodes: `min(10, nodes / 2)`.
pub fn default_flow_count(nodes: usize) -> usize {
    (nodes / 2).min(10)
}

/// Pick `flow_count` pairs with all endpoints distinct. Endpoints come from
/// the pair stream; start times from the traffic stream.
pub fn build_flows(
    node_count: usize,
    flow_count: usize,
    cfg: &TrafficConfig,
    stop_at: f64,
    pairs: &mut RngStream,
    traffic: &mut RngStream,
) -> Result<Vec<CbrFlow>> {
    if flow_count > node_count / 2 {
        return Err(SimError::Argument(format!(
            "{flow_count} flows need {} distinct nodes, only {node_count} available",
            2 * flow_count
        )));
    }
    // partial Fisher-Yates over node ids
    let mut ids: Vec<NodeId> = (0..node_count).collect();
    for i in 0..2 * flow_count {
        let j = i + pairs.index(node_count - i);
        ids.swap(i, j);
    }
    (0..flow_count)
        .map(|f| {
            Ok(CbrFlow {
                id: f,
                src: ids[2 * f],
                sink: ids[2 * f + 1],
                rate_pps: cfg.rate_pps,
                payload_bytes: cfg.payload_bytes,
                start_at: traffic.uniform(0.0, cfg.start_window_s)?,
                stop_at,
            })
        })
        .collect()
}

/// Flows for a run: explicit ones from the config if given, random pairs otherwise.
pub fn flows_for(
    cfg: &TrafficConfig,
    node_count: usize,
    duration: f64,
    pairs: &mut RngStream,
    traffic: &mut RngStream,
) -> Result<Vec<CbrFlow>> {
    if !cfg.enabled {
        return Ok(Vec::new());
    }
    if !cfg.flows.is_empty() {
        return Ok(cfg
            .flows
            .iter()
            .enumerate()
            .map(|(id, f)| CbrFlow {
                id,
                src: f.src,
                sink: f.sink,
                rate_pps: cfg.rate_pps,
                payload_bytes: cfg.payload_bytes,
                start_at: f.start_s,
                stop_at: f.stop_s.unwrap_or(duration).min(duration),
            })
            .collect());
    }
    let n = cfg.flow_count.unwrap_or_else(|| default_flow_count(node_count));
    build_flows(node_count, n, cfg, duration, pairs, traffic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn streams(seed: u64) -> (RngStream, RngStream) {
        (RngStream::new(seed, "pairs"), RngStream::new(seed, "traffic"))
    }

    #[test]
    fn default_counts() {
        assert_eq!(default_flow_count(20), 10);
        assert_eq!(default_flow_count(5), 2);
        assert_eq!(default_flow_count(80), 10);
    }

    #[test]
    fn twenty_nodes_distinct_endpoints() {
        let (mut p, mut t) = streams(1);
        let flows = build_flows(20, 10, &TrafficConfig::default(), 300.0, &mut p, &mut t).unwrap();
        let ends: BTreeSet<_> = flows.iter().flat_map(|f| [f.src, f.sink]).collect();
        assert_eq!(ends.len(), 20);
        assert!(flows.iter().all(|f| (0.0..5.0).contains(&f.start_at) && f.src != f.sink));
    }

    #[test]
    fn too_many_flows_rejected() {
        let (mut p, mut t) = streams(1);
        assert!(build_flows(5, 3, &TrafficConfig::default(), 300.0, &mut p, &mut t).is_err());
    }

    #[test]
    fn same_seed_same_pairs() {
        let (mut p1, mut t1) = streams(77);
        let (mut p2, mut t2) = streams(77);
        let a = build_flows(25, 10, &TrafficConfig::default(), 300.0, &mut p1, &mut t1).unwrap();
        let b = build_flows(25, 10, &TrafficConfig::default(), 300.0, &mut p2, &mut t2).unwrap();
        assert_eq!(a, b);
    }

    fn flow(start: f64, stop: f64) -> CbrFlow {
        CbrFlow {
            id: 0,
            src: 0,
            sink: 1,
            rate_pps: 8.0,
            payload_bytes: 512,
            start_at: start,
            stop_at: stop,
        }
    }

    fn count_ticks(f: &CbrFlow) -> u64 {
        let mut k = 0;
        let mut now = SimTime(f.start_at);
        let mut n = 1;
        while let Some(t) = f.next_packet(k, now) {
            assert!((t.0 - now.0 - 0.125).abs() < 1e-9);
            now = t;
            k += 1;
            n += 1;
        }
        n
    }

    #[test]
    fn full_run_packet_count() {
        let f = flow(0.0, 300.0);
        assert_eq!(count_ticks(&f), 2400);
        assert_eq!(f.expected_packets(), 2400);
        assert_eq!(f.next_packet(2399, SimTime(299.875)), None);
    }

    proptest! {
        #[test]
        fn tick_count_matches_duration(start in 0.0f64..5.0, len in 1.0f64..200.0) {
            let f = flow(start, start + len);
            let n = count_ticks(&f);
            let ideal = (len * 8.0).floor() as i64;
            prop_assert!((n as i64 - ideal).abs() <= 1);
            prop_assert_eq!(n, f.expected_packets());
        }
    }
}
