//! Node trajectories: Random Waypoint, Reference Point Group Mobility, and
//! fixed placement. Trajectories are generated up front for the whole run
//! from the mobility stream only, then queried as position-at-time.

use std::io::Write;

use crate::config::{Area, MobilityConfig, MobilityModel};
use crate::error::{Result, SimError};
use crate::sim::{RngStream, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn clamp_to(self, area: &Area) -> Position {
        Position {
            x: self.x.clamp(0.0, area.width),
            y: self.y.clamp(0.0, area.height),
        }
    }
}

/// One movement leg: wait at `origin` from `pause_from` until `depart_at`,
/// then travel in a straight line to `waypoint` at `speed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub origin: Position,
    pub waypoint: Position,
    pub speed: f64,
    pub pause_from: SimTime,
    pub depart_at: SimTime,
    pub arrive_at: SimTime,
}

impl Leg {
    fn position_at(&self, t: f64) -> Position {
        if t <= self.depart_at.0 {
            return self.origin;
        }
        if t >= self.arrive_at.0 {
            return self.waypoint;
        }
        let travel = self.arrive_at.0 - self.depart_at.0;
        let f = (t - self.depart_at.0) / travel;
        Position {
            x: self.origin.x + (self.waypoint.x - self.origin.x) * f,
            y: self.origin.y + (self.waypoint.y - self.origin.y) * f,
        }
    }
}

/// Draw the next Random Waypoint leg for a node that reached `origin` at `arrived`.
pub fn rwp_next_leg(
    origin: Position,
    arrived: SimTime,
    rng: &mut RngStream,
    area: &Area,
    v_min: f64,
    v_max: f64,
    pause: f64,
) -> Result<Leg> {
    if !(v_min > 0.0) {
        return Err(SimError::Argument(format!("v_min must be positive, got {v_min}")));
    }
    let waypoint = Position::new(rng.uniform(0.0, area.width)?, rng.uniform(0.0, area.height)?);
    let speed = rng.uniform(v_min, v_max)?;
    let depart_at = arrived.after(pause);
    let arrive_at = depart_at.after(origin.distance(waypoint) / speed);
    Ok(Leg {
        origin,
        waypoint,
        speed,
        pause_from: arrived,
        depart_at,
        arrive_at,
    })
}

/// A piecewise-linear path covering `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    legs: Vec<Leg>,
}

impl Trajectory {
    pub fn random_waypoint(
        rng: &mut RngStream,
        area: &Area,
        v_min: f64,
        v_max: f64,
        pause: f64,
        horizon: f64,
    ) -> Result<Self> {
        let start = Position::new(rng.uniform(0.0, area.width)?, rng.uniform(0.0, area.height)?);
        let mut legs = Vec::new();
        let mut at = start;
        let mut t = SimTime::ZERO;
        loop {
            let leg = rwp_next_leg(at, t, rng, area, v_min, v_max, pause)?;
            at = leg.waypoint;
            t = leg.arrive_at;
            legs.push(leg);
            if t.0 > horizon {
                break;
            }
        }
        Ok(Self { legs })
    }

    pub fn fixed(p: Position) -> Self {
        Self {
            legs: vec![Leg {
                origin: p,
                waypoint: p,
                speed: 0.0,
                pause_from: SimTime::ZERO,
                depart_at: SimTime(f64::INFINITY),
                arrive_at: SimTime(f64::INFINITY),
            }],
        }
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    fn leg_index(&self, t: f64) -> usize {
        self.legs.partition_point(|l| l.pause_from.0 <= t).saturating_sub(1)
    }

    pub fn position_at(&self, t: SimTime) -> Result<Position> {
        if t.0 < 0.0 || !t.0.is_finite() {
            return Err(SimError::Argument(format!("position queried at invalid time {}", t.0)));
        }
        Ok(self.legs[self.leg_index(t.0)].position_at(t.0))
    }
}

/// A group moving around a shared reference point.
#[derive(Debug, Clone)]
pub struct RpgmGroup {
    pub members: Vec<usize>,
    pub reference: Trajectory,
    /// Fixed displacement of each member from the reference point.
    pub offsets: Vec<(f64, f64)>,
    /// Per member, one jitter sample per reference leg boundary.
    jitter: Vec<Vec<(f64, f64)>>,
    pub deviation_radius: f64,
}

impl RpgmGroup {
    pub fn new(
        members: Vec<usize>,
        rng: &mut RngStream,
        area: &Area,
        cfg: &MobilityConfig,
        horizon: f64,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(SimError::Argument("RPGM group has no members".into()));
        }
        let reference = Trajectory::random_waypoint(
            rng,
            area,
            cfg.speed_min_mps,
            cfg.speed_max_mps,
            cfg.pause_s,
            horizon,
        )?;
        let offsets = members.iter().map(|_| rng.in_disk(cfg.rpgm.offset_radius_m)).collect();
        let boundaries = reference.legs.len() + 1;
        let jitter = members
            .iter()
            .map(|_| (0..boundaries).map(|_| rng.in_disk(cfg.rpgm.jitter_radius_m)).collect())
            .collect();
        Ok(Self {
            members,
            reference,
            offsets,
            jitter,
            deviation_radius: cfg.rpgm.jitter_radius_m,
        })
    }

    fn member_position(&self, idx: usize, t: f64, area: &Area) -> Position {
        let k = self.reference.leg_index(t);
        let leg = &self.reference.legs[k];
        let span = leg.arrive_at.0 - leg.pause_from.0;
        let f = if span > 0.0 {
            ((t - leg.pause_from.0) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (j0, j1) = (self.jitter[idx][k], self.jitter[idx][k + 1]);
        let r = leg.position_at(t);
        let (ox, oy) = self.offsets[idx];
        Position {
            x: r.x + ox + j0.0 + (j1.0 - j0.0) * f,
            y: r.y + oy + j0.1 + (j1.1 - j0.1) * f,
        }
        .clamp_to(area)
    }
}

/// Positions of every member of `group` at `t`, in member order.
pub fn rpgm_positions_at(group: &RpgmGroup, area: &Area, t: SimTime) -> Result<Vec<Position>> {
    if group.members.is_empty() {
        return Err(SimError::Argument("RPGM group has no members".into()));
    }
    if t.0 < 0.0 {
        return Err(SimError::Argument(format!("position queried at invalid time {}", t.0)));
    }
    Ok((0..group.members.len())
        .map(|i| group.member_position(i, t.0, area))
        .collect())
}

#[derive(Debug, Clone)]
enum Model {
    Independent(Vec<Trajectory>),
    Groups {
        groups: Vec<RpgmGroup>,
        /// node -> (group, member index)
        slot: Vec<(usize, usize)>,
    },
}

/// Trajectories for all nodes of a run.
#[derive(Debug, Clone)]
pub struct Mobility {
    area: Area,
    model: Model,
}

impl Mobility {
    pub fn generate(
        cfg: &MobilityConfig,
        area: Area,
        nodes: usize,
        horizon: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let model = match cfg.model {
            MobilityModel::Static => {
                if cfg.positions.len() != nodes {
                    return Err(SimError::Config("static positions do not match node count".into()));
                }
                Model::Independent(
                    cfg.positions
                        .iter()
                        .map(|p| Trajectory::fixed(Position::new(p[0], p[1])))
                        .collect(),
                )
            }
            MobilityModel::RandomWaypoint => Model::Independent(
                (0..nodes)
                    .map(|_| {
                        Trajectory::random_waypoint(
                            rng,
                            &area,
                            cfg.speed_min_mps,
                            cfg.speed_max_mps,
                            cfg.pause_s,
                            horizon,
                        )
                    })
                    .collect::<Result<_>>()?,
            ),
            MobilityModel::Rpgm => {
                let g = cfg.rpgm.groups.clamp(1, nodes.max(1));
                let mut groups = Vec::with_capacity(g);
                let mut slot = vec![(0, 0); nodes];
                for gi in 0..g {
                    let members: Vec<usize> = (gi * nodes / g..(gi + 1) * nodes / g).collect();
                    for (mi, n) in members.iter().enumerate() {
                        slot[*n] = (gi, mi);
                    }
                    groups.push(RpgmGroup::new(members, rng, &area, cfg, horizon)?);
                }
                Model::Groups { groups, slot }
            }
        };
        Ok(Self { area, model })
    }

    pub fn node_count(&self) -> usize {
        match &self.model {
            Model::Independent(t) => t.len(),
            Model::Groups { slot, .. } => slot.len(),
        }
    }

    pub fn area(&self) -> Area {
        self.area
    }

    pub fn groups(&self) -> &[RpgmGroup] {
        match &self.model {
            Model::Groups { groups, .. } => groups,
            Model::Independent(_) => &[],
        }
    }

    pub fn trajectory(&self, node: usize) -> Option<&Trajectory> {
        match &self.model {
            Model::Independent(t) => t.get(node),
            Model::Groups { .. } => None,
        }
    }

    pub fn position_at(&self, node: usize, t: SimTime) -> Result<Position> {
        if node >= self.node_count() {
            return Err(SimError::Argument(format!("unknown node {node}")));
        }
        match &self.model {
            Model::Independent(trs) => trs[node].position_at(t),
            Model::Groups { groups, slot } => {
                if t.0 < 0.0 {
                    return Err(SimError::Argument(format!("position queried at invalid time {}", t.0)));
                }
                let (g, m) = slot[node];
                Ok(groups[g].member_position(m, t.0, &self.area))
            }
        }
    }

    /// Fill `out` with every node's position at `t`.
    pub fn positions_at(&self, t: SimTime, out: &mut Vec<Position>) -> Result<()> {
        out.clear();
        for n in 0..self.node_count() {
            out.push(self.position_at(n, t)?);
        }
        Ok(())
    }

    /// Sampled trajectory dump with columns `t,node,x,y`.
    pub fn write_csv<W: Write>(&self, w: W, duration: f64, step: f64) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "node", "x", "y"])?;
        let steps = (duration / step).floor() as usize;
        for k in 0..=steps {
            let t = k as f64 * step;
            for n in 0..self.node_count() {
                let p = self.position_at(n, SimTime(t))?;
                out.write_record([
                    format!("{t:.3}"),
                    n.to_string(),
                    format!("{:.3}", p.x),
                    format!("{:.3}", p.y),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
