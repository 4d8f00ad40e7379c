//! Scenario configuration. Every tunable in the model lives here; the JSON
//! form rejects unknown keys.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Aodv,
    Dsdv,
    Dsr,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Aodv, Protocol::Dsdv, Protocol::Dsr];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Aodv => "aodv",
            Protocol::Dsdv => "dsdv",
            Protocol::Dsr => "dsr",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aodv" => Ok(Protocol::Aodv),
            "dsdv" => Ok(Protocol::Dsdv),
            "dsr" => Ok(Protocol::Dsr),
            other => Err(SimError::Argument(format!("unknown protocol `{other}`"))),
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn square(side: f64) -> Self {
        Self {
            width: side,
            height: side,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityModel {
    RandomWaypoint,
    Rpgm,
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RpgmConfig {
    pub groups: usize,
    pub offset_radius_m: f64,
    pub jitter_radius_m: f64,
}

impl Default for RpgmConfig {
    fn default() -> Self {
        Self {
            groups: 4,
            offset_radius_m: 50.0,
            jitter_radius_m: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub model: MobilityModel,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub pause_s: f64,
    pub rpgm: RpgmConfig,
    /// Fixed node positions for the `static` model, one `[x, y]` per node.
    pub positions: Vec<[f64; 2]>,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            model: MobilityModel::RandomWaypoint,
            speed_min_mps: 1.0,
            speed_max_mps: 10.0,
            pause_s: 0.0,
            rpgm: RpgmConfig::default(),
            positions: Vec::new(),
        }
    }
}

/// An explicitly configured CBR flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub src: usize,
    pub sink: usize,
    pub start_s: f64,
    pub stop_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub enabled: bool,
    /// Number of random flows; `None` means `min(10, nodes / 2)`.
    pub flow_count: Option<usize>,
    /// When non-empty, replaces random pair selection.
    pub flows: Vec<FlowSpec>,
    pub rate_pps: f64,
    pub payload_bytes: u32,
    pub start_window_s: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            flow_count: None,
            flows: Vec::new(),
            rate_pps: 8.0,
            payload_bytes: 512,
            start_window_s: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub range_m: f64,
    pub bitrate_bps: f64,
    pub queue_capacity: usize,
    pub retry_limit: u32,
    pub broadcast_jitter_s: f64,
    /// IP + UDP + MAC framing added to every data payload.
    pub data_header_bytes: u32,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            range_m: 250.0,
            bitrate_bps: 2.0e6,
            queue_capacity: 50,
            retry_limit: 4,
            broadcast_jitter_s: 0.01,
            data_header_bytes: 32,
        }
    }
}

/// Power draw per radio mode. The reference constants 330 and 230 are read
/// as milliwatts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerProfile {
    pub tx_power_w: f64,
    pub rx_power_w: f64,
    pub idle_power_w: f64,
    pub overhear_power_w: f64,
    /// Carried for completeness; no sleep schedule is ever entered.
    pub sleep_power_w: f64,
    pub initial_energy_j: f64,
}

impl Default for PowerProfile {
    fn default() -> Self {
        Self {
            tx_power_w: 0.330,
            rx_power_w: 0.230,
            idle_power_w: 0.230,
            overhear_power_w: 0.230,
            sleep_power_w: 0.0,
            initial_energy_j: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DsdvConfig {
    pub dump_interval_s: f64,
    pub triggered_min_gap_s: f64,
    /// Window for the random offset of each node's first full dump.
    pub first_dump_window_s: f64,
    pub header_bytes: u32,
    pub entry_bytes: u32,
    pub buffer_per_dest: usize,
    pub buffer_timeout_s: f64,
}

impl Default for DsdvConfig {
    fn default() -> Self {
        Self {
            dump_interval_s: 15.0,
            triggered_min_gap_s: 1.0,
            first_dump_window_s: 1.0,
            header_bytes: 8,
            entry_bytes: 12,
            buffer_per_dest: 64,
            buffer_timeout_s: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AodvConfig {
    pub active_route_timeout_s: f64,
    pub rreq_cache_expiry_s: f64,
    pub discovery_timeout_s: f64,
    pub rreq_retries: u32,
    pub buffer_per_dest: usize,
    pub intermediate_reply: bool,
    pub rreq_bytes: u32,
    pub rrep_bytes: u32,
    pub rerr_bytes: u32,
}

impl Default for AodvConfig {
    fn default() -> Self {
        Self {
            active_route_timeout_s: 10.0,
            rreq_cache_expiry_s: 3.0,
            discovery_timeout_s: 1.0,
            rreq_retries: 3,
            buffer_per_dest: 64,
            intermediate_reply: true,
            rreq_bytes: 48,
            rrep_bytes: 44,
            rerr_bytes: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DsrConfig {
    pub cache_lifetime_s: f64,
    pub cache_capacity: usize,
    pub cache_reply: bool,
    pub discovery_timeout_s: f64,
    pub rreq_retries: u32,
    pub buffer_per_dest: usize,
    pub request_table_expiry_s: f64,
    pub control_base_bytes: u32,
    pub control_per_node_bytes: u32,
    pub sr_header_base_bytes: u32,
    pub sr_header_per_hop_bytes: u32,
}

impl Default for DsrConfig {
    fn default() -> Self {
        Self {
            cache_lifetime_s: 300.0,
            cache_capacity: 64,
            cache_reply: false,
            discovery_timeout_s: 1.0,
            rreq_retries: 3,
            buffer_per_dest: 64,
            request_table_expiry_s: 3.0,
            control_base_bytes: 16,
            control_per_node_bytes: 4,
            sr_header_base_bytes: 8,
            sr_header_per_hop_bytes: 4,
        }
    }
}

/// Everything needed to reproduce one run, apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub protocol: Protocol,
    pub nodes: usize,
    pub duration_s: f64,
    pub area: Area,
    pub mobility: MobilityConfig,
    pub traffic: TrafficConfig,
    pub link: LinkConfig,
    pub energy: PowerProfile,
    pub dsdv: DsdvConfig,
    pub aodv: AodvConfig,
    pub dsr: DsrConfig,
    /// Hop limit for data packets.
    pub data_ttl: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::sim2(Protocol::Aodv, 20)
    }
}

impl ScenarioConfig {
    /// Random Waypoint, 300 s, 600 x 600 m, 1-10 m/s.
    pub fn sim2(protocol: Protocol, nodes: usize) -> Self {
        Self {
            protocol,
            nodes,
            duration_s: 300.0,
            area: Area::square(600.0),
            mobility: MobilityConfig {
                model: MobilityModel::RandomWaypoint,
                speed_min_mps: 1.0,
                speed_max_mps: 10.0,
                ..MobilityConfig::default()
            },
            traffic: TrafficConfig::default(),
            link: LinkConfig::default(),
            energy: PowerProfile::default(),
            dsdv: DsdvConfig::default(),
            aodv: AodvConfig::default(),
            dsr: DsrConfig::default(),
            data_ttl: 64,
        }
    }

    /// RPGM, 900 s, 0.5-5 m/s, area side growing with node count.
    pub fn sim1(protocol: Protocol, nodes: usize) -> Self {
        Self {
            duration_s: 900.0,
            area: Area::square(sim1_area_side(nodes)),
            mobility: MobilityConfig {
                model: MobilityModel::Rpgm,
                speed_min_mps: 0.5,
                speed_max_mps: 5.0,
                ..MobilityConfig::default()
            },
            ..Self::sim2(protocol, nodes)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.nodes == 0 {
            return bad("nodes must be positive".into());
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return bad("duration_s must be positive".into());
        }
        if !(self.area.width > 0.0 && self.area.height > 0.0) {
            return bad("area dimensions must be positive".into());
        }
        let m = &self.mobility;
        match m.model {
            MobilityModel::Static => {
                if m.positions.len() != self.nodes {
                    return bad(format!(
                        "static mobility needs {} positions, got {}",
                        self.nodes,
                        m.positions.len()
                    ));
                }
                for p in &m.positions {
                    if !(0.0..=self.area.width).contains(&p[0]) || !(0.0..=self.area.height).contains(&p[1]) {
                        return bad(format!("position {p:?} outside area"));
                    }
                }
            }
            _ => {
                if !(m.speed_min_mps > 0.0) || m.speed_min_mps > m.speed_max_mps {
                    return bad("need 0 < speed_min_mps <= speed_max_mps".into());
                }
                if m.pause_s < 0.0 {
                    return bad("pause_s must be non-negative".into());
                }
            }
        }
        if m.model == MobilityModel::Rpgm && m.rpgm.groups == 0 {
            return bad("rpgm.groups must be positive".into());
        }
        let l = &self.link;
        if !(l.range_m > 0.0 && l.bitrate_bps > 0.0 && l.broadcast_jitter_s >= 0.0) || l.queue_capacity == 0 {
            return bad("link parameters must be positive".into());
        }
        let e = &self.energy;
        if !(e.tx_power_w > 0.0 && e.rx_power_w > 0.0 && e.idle_power_w > 0.0 && e.overhear_power_w > 0.0 && e.initial_energy_j > 0.0) {
            return bad("power profile values must be positive".into());
        }
        let t = &self.traffic;
        if t.enabled {
            if !(t.rate_pps > 0.0) || t.payload_bytes == 0 {
                return bad("traffic rate and payload must be positive".into());
            }
            for f in &t.flows {
                if f.src >= self.nodes || f.sink >= self.nodes || f.src == f.sink {
                    return bad(format!("flow {}->{} has invalid endpoints", f.src, f.sink));
                }
            }
        }
        if !(self.dsdv.dump_interval_s > 0.0) {
            return bad("dsdv.dump_interval_s must be positive".into());
        }
        if !(self.aodv.discovery_timeout_s > 0.0 && self.dsr.discovery_timeout_s > 0.0) {
            return bad("discovery timeouts must be positive".into());
        }
        if self.data_ttl < 2 {
            return bad("data_ttl must be at least 2".into());
        }
        Ok(())
    }
}

/// Node count to square side for the RPGM campaign (20 -> 500 m ... 80 -> 2000 m).
pub fn sim1_area_side(nodes: usize) -> f64 {
    let side = 25.0 * nodes as f64;
    side.clamp(500.0, 2000.0)
}
