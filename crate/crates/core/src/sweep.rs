//! Batches of independent runs over (protocol, node count, seed).
//!
//! Each run is self-contained, so points are farmed out with rayon when the
//! `parallel` feature is on. Results are always returned sorted by
//! (protocol, nodes, seed) whatever the completion order.

use serde::Serialize;
use serde_json::Value;

use crate::config::{Protocol, ScenarioConfig};
use crate::error::{Result, SimError};
use crate::metrics::{average, RunCounters, RunMetrics};
use crate::network::run_scenario;
use crate::traffic::CbrFlow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Sim1,
    Sim2,
}

impl Scenario {
    pub fn node_counts(self) -> Vec<usize> {
        match self {
            Scenario::Sim1 => vec![20, 40, 60, 80],
            Scenario::Sim2 => vec![5, 10, 15, 20, 25],
        }
    }

    pub fn config(self, protocol: Protocol, nodes: usize) -> ScenarioConfig {
        match self {
            Scenario::Sim1 => ScenarioConfig::sim1(protocol, nodes),
            Scenario::Sim2 => ScenarioConfig::sim2(protocol, nodes),
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim1" => Ok(Scenario::Sim1),
            "sim2" => Ok(Scenario::Sim2),
            other => Err(SimError::Argument(format!("unknown scenario `{other}` (expected sim1 or sim2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Parallel,
    Sequential,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSpec {
    pub scenario: Scenario,
    pub protocols: Vec<Protocol>,
    pub nodes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// JSON merged over every preset config, e.g. `{"duration_s": 60}`.
    pub overrides: Option<Value>,
}

impl SweepSpec {
    /// Preset node counts, all protocols, seeds `1..=seeds`.
    pub fn preset(scenario: Scenario, seeds: u64) -> Self {
        Self {
            scenario,
            protocols: Protocol::ALL.to_vec(),
            nodes: scenario.node_counts(),
            seeds: (1..=seeds).collect(),
            overrides: None,
        }
    }

    pub fn config_for(&self, protocol: Protocol, nodes: usize) -> Result<ScenarioConfig> {
        let base = self.scenario.config(protocol, nodes);
        let Some(over) = &self.overrides else {
            return Ok(base);
        };
        let mut v = serde_json::to_value(&base)?;
        merge(&mut v, over);
        let cfg: ScenarioConfig = serde_json::from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every run in output order.
    pub fn points(&self) -> Vec<(Protocol, usize, u64)> {
        let mut protocols = self.protocols.clone();
        protocols.sort();
        protocols.dedup();
        let mut nodes = self.nodes.clone();
        nodes.sort_unstable();
        nodes.dedup();
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        let mut out = Vec::with_capacity(protocols.len() * nodes.len() * seeds.len());
        for &p in &protocols {
            for &n in &nodes {
                for &s in &seeds {
                    out.push((p, n, s));
                }
            }
        }
        out
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// What a sweep keeps of each run.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub metrics: RunMetrics,
    pub counters: RunCounters,
    pub flows: Vec<CbrFlow>,
    pub event_digest: u64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub runs: Vec<SweepRun>,
    /// One seed-averaged row per (protocol, nodes), same order as `runs`.
    pub averages: Vec<RunMetrics>,
}

impl SweepResult {
    /// Raw rows followed by averaged rows.
    pub fn rows(&self) -> Vec<RunMetrics> {
        self.runs
            .iter()
            .map(|r| r.metrics.clone())
            .chain(self.averages.iter().cloned())
            .collect()
    }

    pub fn average_for(&self, protocol: Protocol, nodes: usize) -> Option<&RunMetrics> {
        self.averages.iter().find(|m| m.protocol == protocol && m.nodes == nodes)
    }
}

fn run_point(spec: &SweepSpec, (protocol, nodes, seed): (Protocol, usize, u64)) -> Result<SweepRun> {
    let cfg = spec.config_for(protocol, nodes)?;
    let out = run_scenario(&cfg, seed)?;
    let mut counters = out.counters;
    // already checked inside the run; not worth holding on to
    counters.delivered_paths = Vec::new();
    Ok(SweepRun {
        metrics: out.metrics,
        counters,
        flows: out.flows,
        event_digest: out.event_digest,
    })
}

#[cfg(feature = "parallel")]
fn map_points(spec: &SweepSpec, points: Vec<(Protocol, usize, u64)>, mode: ExecMode) -> Result<Vec<SweepRun>> {
    use rayon::prelude::*;
    match mode {
        ExecMode::Parallel => points.into_par_iter().map(|p| run_point(spec, p)).collect(),
        ExecMode::Sequential => points.into_iter().map(|p| run_point(spec, p)).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_points(spec: &SweepSpec, points: Vec<(Protocol, usize, u64)>, _mode: ExecMode) -> Result<Vec<SweepRun>> {
    points.into_iter().map(|p| run_point(spec, p)).collect()
}

pub fn run_sweep(spec: &SweepSpec, mode: ExecMode) -> Result<SweepResult> {
    let points = spec.points();
    if points.is_empty() {
        return Err(SimError::Argument("sweep has no points".into()));
    }
    let runs = map_points(spec, points, mode)?;
    let mut averages = Vec::new();
    for group in runs.chunk_by(|a, b| a.metrics.protocol == b.metrics.protocol && a.metrics.nodes == b.metrics.nodes) {
        let rows: Vec<RunMetrics> = group.iter().map(|r| r.metrics.clone()).collect();
        averages.extend(average(&rows));
    }
    Ok(SweepResult { runs, averages })
}
