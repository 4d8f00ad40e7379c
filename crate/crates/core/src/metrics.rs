//! Per-run counters and the derived comparison metrics.
//!
//! Routing overhead is hop-wise control transmissions per delivered data
//! packet (normalized routing load). Throughput is delivered payload in
//! kbit/s over the whole run.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::Protocol;
use crate::energy::EnergyMeter;
use crate::link::NodeId;
use crate::routing::DropReason;

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunCounters {
    pub data_originated: u64,
    pub data_delivered: u64,
    pub data_dropped: u64,
    pub drops_by_reason: BTreeMap<DropReason, u64>,
    /// One per control frame per hop (MAC retries not counted again).
    pub control_transmissions: u64,
    pub control_bytes: u64,
    pub data_transmissions: u64,
    pub mac_retries: u64,
    pub link_failures: u64,
    pub queue_drops: u64,
    pub delivered_payload_bits: u64,
    pub delivered_hops: u64,
    #[serde(skip)]
    pub delivered_paths: Vec<Vec<NodeId>>,
}

impl RunCounters {
    pub fn record_drop(&mut self, reason: DropReason) {
        self.data_dropped += 1;
        *self.drops_by_reason.entry(reason).or_default() += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub protocol: Protocol,
    pub nodes: usize,
    pub area_m: String,
    pub duration_s: f64,
    /// `None` on seed-averaged rows.
    pub seed: Option<u64>,
    /// `None` when nothing was originated.
    pub pdr: Option<f64>,
    /// `None` when nothing was delivered.
    pub ro: Option<f64>,
    pub throughput_kbps: f64,
    pub e_tx_j: f64,
    pub e_rx_j: f64,
    pub e_idle_j: f64,
    pub e_over_j: f64,
    pub avg_remaining_j: f64,
}

impl RunMetrics {
    pub fn no_traffic(&self) -> bool {
        self.pdr.is_none()
    }
}

/// Scenario identity copied into every metrics row.
#[derive(Debug, Clone)]
pub struct RunLabel {
    pub protocol: Protocol,
    pub nodes: usize,
    pub area_m: String,
    pub seed: Option<u64>,
}

pub fn compute_metrics(counters: &RunCounters, meters: &[EnergyMeter], duration: f64, label: RunLabel) -> RunMetrics {
    let n = meters.len().max(1) as f64;
    let avg = |f: fn(&EnergyMeter) -> f64| meters.iter().map(f).sum::<f64>() / n;
    let pdr = (counters.data_originated > 0)
        .then(|| counters.data_delivered as f64 / counters.data_originated as f64);
    let ro = (counters.data_delivered > 0)
        .then(|| counters.control_transmissions as f64 / counters.data_delivered as f64);
    RunMetrics {
        protocol: label.protocol,
        nodes: label.nodes,
        area_m: label.area_m,
        duration_s: duration,
        seed: label.seed,
        pdr,
        ro,
        throughput_kbps: counters.delivered_payload_bits as f64 / duration / 1000.0,
        e_tx_j: avg(|m| m.e_tx),
        e_rx_j: avg(|m| m.e_rx),
        e_idle_j: avg(|m| m.e_idle),
        e_over_j: avg(|m| m.e_over),
        avg_remaining_j: avg(EnergyMeter::remaining),
    }
}

/// Arithmetic mean of a set of rows for one (protocol, nodes) point.
/// Optional ratios are averaged over the rows that have them.
pub fn average(rows: &[RunMetrics]) -> Option<RunMetrics> {
    let first = rows.first()?;
    let n = rows.len() as f64;
    let mean = |f: fn(&RunMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let mean_opt = |f: fn(&RunMetrics) -> Option<f64>| {
        let vals: Vec<f64> = rows.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Some(RunMetrics {
        protocol: first.protocol,
        nodes: first.nodes,
        area_m: first.area_m.clone(),
        duration_s: first.duration_s,
        seed: None,
        pdr: mean_opt(|r| r.pdr),
        ro: mean_opt(|r| r.ro),
        throughput_kbps: mean(|r| r.throughput_kbps),
        e_tx_j: mean(|r| r.e_tx_j),
        e_rx_j: mean(|r| r.e_rx_j),
        e_idle_j: mean(|r| r.e_idle_j),
        e_over_j: mean(|r| r.e_over_j),
        avg_remaining_j: mean(|r| r.avg_remaining_j),
    })
}
