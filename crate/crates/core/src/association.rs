//! Building-aware association on a concrete drop: D-BS/O-BS roles, discovery
//! cones, the reference-signal / reverse-pilot association steps, and the
//! uniform scheduler.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;

use crate::geometry::{angle_between, discovery_angle, BuildingField, Point, Wall};
use crate::scenario::ScenarioParams;

/// Slack on the closed discovery-cone test.
const CONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsRole {
    OBs,
    DBs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsState {
    pub position: Point,
    pub role: BsRole,
    /// Cone centre for a D-BS (towards its nearest wall's midpoint); zero for an O-BS.
    pub boresight: f64,
    /// Full cone width: the discovery angle for a D-BS, `2 pi` for an O-BS.
    pub discovery_range: f64,
    pub nearest_wall: Option<Wall>,
}

impl BsState {
    pub fn omni(position: Point) -> Self {
        Self { position, role: BsRole::OBs, boresight: 0.0, discovery_range: 2.0 * PI, nearest_wall: None }
    }

    /// Whether `ue` lies in the closed discovery cone.
    pub fn cone_contains(&self, ue: Point) -> bool {
        match self.role {
            BsRole::OBs => true,
            BsRole::DBs => {
                let axis = Point::new(self.boresight.cos(), self.boresight.sin());
                angle_between(ue.sub(self.position), axis) <= 0.5 * self.discovery_range + CONE_SLACK
            }
        }
    }
}

/// Role of an outdoor BS: a D-BS iff its beam towards the nearest wall,
/// contracted by `beta`, stays on the building.
pub fn classify_bs(bs: Point, field: &BuildingField, theta: f64, beta: f64) -> BsState {
    let Ok(wall) = field.nearest_wall(bs) else {
        return BsState::omni(bs);
    };
    let angle = discovery_angle(bs, &wall, beta);
    if theta <= angle {
        BsState {
            position: bs,
            role: BsRole::DBs,
            boresight: wall.midpoint().sub(bs).angle(),
            discovery_range: angle,
            nearest_wall: Some(wall),
        }
    } else {
        BsState { nearest_wall: Some(wall), ..BsState::omni(bs) }
    }
}

pub fn classify_all(positions: &[Point], field: &BuildingField, theta: f64, beta: f64) -> Vec<BsState> {
    positions.iter().map(|&p| classify_bs(p, field, theta, beta)).collect()
}

/// Received power model for [`rsrp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fading {
    Averaged,
    Faded(f64),
}

/// Reference-signal received power at `ue` from `bs`: zero when blocked or,
/// with `respect_cone`, outside the discovery cone.
pub fn rsrp(ue: Point, bs: &BsState, field: &BuildingField, params: &ScenarioParams, fading: Fading, respect_cone: bool) -> f64 {
    if (respect_cone && !bs.cone_contains(ue)) || !field.los_between(ue, bs.position) {
        return 0.0;
    }
    let h = match fading {
        Fading::Averaged => 1.0,
        Fading::Faded(h) => h,
    };
    params.g_m * h * ue.dist(bs.position).powf(-params.alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssocPath {
    ReferenceSignal,
    ReversePilot,
}

impl AssocPath {
    pub fn name(self) -> &'static str {
        match self {
            AssocPath::ReferenceSignal => "reference",
            AssocPath::ReversePilot => "reverse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub bs: usize,
    pub path: AssocPath,
}

/// UE-to-BS map; `None` marks a UE with no LOS BS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    pub links: Vec<Option<Link>>,
    cells: Vec<Vec<usize>>,
}

impl Association {
    pub fn new(links: Vec<Option<Link>>, n_bs: usize) -> Self {
        let mut cells = vec![Vec::new(); n_bs];
        for (ue, link) in links.iter().enumerate() {
            if let Some(l) = link {
                cells[l.bs].push(ue);
            }
        }
        Self { links, cells }
    }

    /// UEs attached to `bs`, in UE order.
    pub fn members(&self, bs: usize) -> &[usize] {
        &self.cells[bs]
    }

    pub fn uncovered(&self) -> usize {
        self.links.iter().filter(|l| l.is_none()).count()
    }

    /// CSV rows `ue_id,bs_id,path,rsrp` (averaged RSRP).
    pub fn dump_csv(&self, ues: &[Point], bss: &[BsState], params: &ScenarioParams) -> String {
        let mut s = String::from("ue_id,bs_id,path,rsrp\n");
        for (i, link) in self.links.iter().enumerate() {
            match link {
                Some(l) => {
                    let p = params.g_m * ues[i].dist(bss[l.bs].position).powf(-params.alpha);
                    let _ = writeln!(s, "{i},{},{},{p}", l.bs, l.path.name());
                }
                None => {
                    let _ = writeln!(s, "{i},,uncovered,0");
                }
            }
        }
        s
    }
}

/// Association of one UE. Averaged RSRP is `g_m r^-alpha` for every
/// candidate, so the strongest candidate is the nearest; BSs are scanned in
/// `(distance, index)` order and the scan stops at the first in-cone LOS BS.
pub fn associate_ue(ue: Point, bss: &[BsState], field: &BuildingField) -> Option<Link> {
    let mut order: Vec<(f64, usize)> = bss.iter().enumerate().map(|(i, b)| (ue.dist(b.position), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut fallback = None;
    for &(_, i) in &order {
        let bs = &bss[i];
        let in_cone = bs.cone_contains(ue);
        if !in_cone && fallback.is_some() {
            continue;
        }
        if !field.los_between(ue, bs.position) {
            continue;
        }
        if in_cone {
            return Some(Link { bs: i, path: AssocPath::ReferenceSignal });
        }
        fallback = Some(Link { bs: i, path: AssocPath::ReversePilot });
    }
    fallback
}

pub fn associate_all(ues: &[Point], bss: &[BsState], field: &BuildingField) -> Association {
    Association::new(ues.iter().map(|&u| associate_ue(u, bss, field)).collect(), bss.len())
}

/// Plain max-RSRP association over all LOS BSs, ignoring roles and cones.
pub fn associate_rsrp_baseline(ues: &[Point], bss: &[BsState], field: &BuildingField, params: &ScenarioParams) -> Association {
    let links = ues
        .iter()
        .map(|&u| {
            let mut best: Option<(f64, usize)> = None;
            for (i, b) in bss.iter().enumerate() {
                let p = rsrp(u, b, field, params, Fading::Averaged, false);
                if p > 0.0 && best.map_or(true, |(bp, _)| p > bp) {
                    best = Some((p, i));
                }
            }
            best.map(|(_, bs)| Link { bs, path: AssocPath::ReferenceSignal })
        })
        .collect();
    Association::new(links, bss.len())
}

/// Uniform pick among the UEs attached to `bs`; `None` for an empty cell.
pub fn schedule<R: Rng + ?Sized>(bs: usize, association: &Association, rng: &mut R) -> Option<usize> {
    let m = association.members(bs);
    if m.is_empty() {
        None
    } else {
        Some(m[rng.random_range(0..m.len())])
    }
}
