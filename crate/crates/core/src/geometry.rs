//! Point processes, the Boolean field of rectangular buildings, and the
//! blockage and wall queries the association protocol needs.
//!
//! Buildings are kept in a uniform grid so LOS, region and nearest-building
//! queries touch only nearby rectangles. Results are defined by the exact
//! rectangle tests; the grid only prunes candidates.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::scenario::ScenarioParams;
use crate::M2_PER_KM2;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

/// Unsigned angle between two direction vectors, in `[0, pi]`.
pub fn angle_between(a: Point, b: Point) -> f64 {
    a.cross(b).abs().atan2(a.dot(b))
}

/// Square observation window centred at the origin plus a guard band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub half_width: f64,
    pub margin: f64,
}

impl Window {
    pub fn new(half_width: f64, margin: f64) -> Result<Self> {
        if !(half_width > 0.0 && margin >= 0.0) {
            return Err(Error::Domain(format!(
                "window needs half_width > 0 and margin >= 0, got {half_width} and {margin}"
            )));
        }
        Ok(Self { half_width, margin })
    }

    /// Half side of the sampling square.
    pub fn extent(&self) -> f64 {
        self.half_width + self.margin
    }

    /// Area of the sampling square, m².
    pub fn area(&self) -> f64 {
        (2.0 * self.extent()).powi(2)
    }

    pub fn contains(&self, p: Point) -> bool {
        let e = self.extent();
        p.x.abs() <= e && p.y.abs() <= e
    }
}

/// Homogeneous PPP of the given density (per km²) on the margin-expanded window.
pub fn sample_ppp<R: Rng + ?Sized>(window: &Window, density: f64, rng: &mut R) -> Vec<Point> {
    let mean = density / M2_PER_KM2 * window.area();
    let n = poisson_count(mean, rng);
    let e = window.extent();
    (0..n).map(|_| Point::new(rng.random_range(-e..e), rng.random_range(-e..e))).collect()
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Building {
    pub center: Point,
    pub length: f64,
    pub width: f64,
    /// Direction of the long side, rad in `[0, pi)`.
    pub orientation: f64,
    cos: f64,
    sin: f64,
}

/// One side of a building, `v1 -> v2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub v1: Point,
    pub v2: Point,
    pub owner: usize,
    /// 0 bottom, 1 right, 2 top, 3 left in the building frame.
    pub side: usize,
}

impl Wall {
    pub fn midpoint(&self) -> Point {
        self.v1.add(self.v2).scale(0.5)
    }

    pub fn length(&self) -> f64 {
        self.v1.dist(self.v2)
    }
}

impl Building {
    pub fn new(center: Point, length: f64, width: f64, orientation: f64) -> Self {
        let (sin, cos) = orientation.sin_cos();
        Self { center, length, width, orientation, cos, sin }
    }

    /// Coordinates of `p` in the building frame (long side along u).
    pub fn to_local(&self, p: Point) -> Point {
        let d = p.sub(self.center);
        Point::new(d.x * self.cos + d.y * self.sin, -d.x * self.sin + d.y * self.cos)
    }

    pub fn to_world(&self, q: Point) -> Point {
        Point::new(
            self.center.x + q.x * self.cos - q.y * self.sin,
            self.center.y + q.x * self.sin + q.y * self.cos,
        )
    }

    fn half(&self) -> (f64, f64) {
        (0.5 * self.length, 0.5 * self.width)
    }

    /// Corners counter-clockwise from the local `(-l/2, -w/2)` corner.
    pub fn corners(&self) -> [Point; 4] {
        let (hl, hw) = self.half();
        [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)].map(|(u, v)| self.to_world(Point::new(u, v)))
    }

    pub fn walls(&self, owner: usize) -> [Wall; 4] {
        let c = self.corners();
        let ends = [(c[0], c[1]), (c[1], c[2]), (c[3], c[2]), (c[0], c[3])];
        std::array::from_fn(|side| Wall { v1: ends[side].0, v2: ends[side].1, owner, side })
    }

    /// Closed rectangle membership.
    pub fn contains(&self, p: Point) -> bool {
        let q = self.to_local(p);
        let (hl, hw) = self.half();
        q.x.abs() <= hl && q.y.abs() <= hw
    }

    /// Euclidean distance from `p` to the rectangle (zero inside).
    pub fn distance(&self, p: Point) -> f64 {
        let q = self.to_local(p);
        let (hl, hw) = self.half();
        let du = (q.x.abs() - hl).max(0.0);
        let dv = (q.y.abs() - hw).max(0.0);
        du.hypot(dv)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bbox(&self) -> (Point, Point) {
        let (hl, hw) = self.half();
        let ex = hl * self.cos.abs() + hw * self.sin.abs();
        let ey = hl * self.sin.abs() + hw * self.cos.abs();
        (Point::new(self.center.x - ex, self.center.y - ey), Point::new(self.center.x + ex, self.center.y + ey))
    }

    /// Whether the open segment `(p, q)` meets the closed rectangle.
    pub fn blocks(&self, p: Point, q: Point) -> bool {
        let a = self.to_local(p);
        let b = self.to_local(q);
        let (hl, hw) = self.half();
        match clip_segment(a, b.sub(a), -hl, hl, -hw, hw) {
            Some((t0, t1)) => t0 < 1.0 && t1 > 0.0,
            None => false,
        }
    }
}

/// Liang–Barsky clip of `a + s d`, `s in [0, 1]`, against a closed box.
/// Returns the parameter interval inside the box.
fn clip_segment(a: Point, d: Point, xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [(-d.x, a.x - xmin), (d.x, xmax - a.x), (-d.y, a.y - ymin), (d.y, ymax - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionClass {
    Near,
    Far,
    Indoor,
}

impl RegionClass {
    pub fn name(self) -> &'static str {
        match self {
            RegionClass::Near => "near",
            RegionClass::Far => "far",
            RegionClass::Indoor => "indoor",
        }
    }
}

#[derive(Debug, Clone)]
struct Grid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl Grid {
    const PAD: f64 = 1e-6;

    fn build(buildings: &[Building]) -> Option<Self> {
        if buildings.is_empty() {
            return None;
        }
        let (mut lo, mut hi) = (Point::new(f64::MAX, f64::MAX), Point::new(f64::MIN, f64::MIN));
        let mut cell = 1.0f64;
        for b in buildings {
            let (a, c) = b.bbox();
            lo = Point::new(lo.x.min(a.x), lo.y.min(a.y));
            hi = Point::new(hi.x.max(c.x), hi.y.max(c.y));
            cell = cell.max(c.x - a.x).max(c.y - a.y);
        }
        let (x0, y0) = (lo.x - Self::PAD, lo.y - Self::PAD);
        let nx = (((hi.x + Self::PAD - x0) / cell).ceil() as usize).max(1);
        let ny = (((hi.y + Self::PAD - y0) / cell).ceil() as usize).max(1);
        let mut grid = Self { x0, y0, cell, nx, ny, cells: vec![Vec::new(); nx * ny] };
        for (i, b) in buildings.iter().enumerate() {
            let (a, c) = b.bbox();
            let (i0, j0) = grid.cell_of(Point::new(a.x - Self::PAD, a.y - Self::PAD));
            let (i1, j1) = grid.cell_of(Point::new(c.x + Self::PAD, c.y + Self::PAD));
            for j in j0..=j1 {
                for ii in i0..=i1 {
                    grid.cells[j * nx + ii].push(i as u32);
                }
            }
        }
        Some(grid)
    }

    fn x1(&self) -> f64 {
        self.x0 + self.cell * self.nx as f64
    }

    fn y1(&self) -> f64 {
        self.y0 + self.cell * self.ny as f64
    }

    fn inside(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1() && p.y >= self.y0 && p.y <= self.y1()
    }

    /// Cell containing `p`, clamped to the grid.
    fn cell_of(&self, p: Point) -> (usize, usize) {
        let fx = ((p.x - self.x0) / self.cell).floor();
        let fy = ((p.y - self.y0) / self.cell).floor();
        (fx.clamp(0.0, (self.nx - 1) as f64) as usize, fy.clamp(0.0, (self.ny - 1) as f64) as usize)
    }

    fn cell(&self, i: usize, j: usize) -> &[u32] {
        &self.cells[j * self.nx + i]
    }

    /// Visits the cells crossed by segment `p -> q` in order until `visit`
    /// returns true. Returns whether it did.
    fn walk(&self, p: Point, q: Point, mut visit: impl FnMut(&[u32]) -> bool) -> bool {
        let d = q.sub(p);
        let Some((t0, t1)) = clip_segment(p, d, self.x0, self.x1(), self.y0, self.y1()) else {
            return false;
        };
        let a = p.add(d.scale(t0));
        let b = p.add(d.scale(t1));
        let (mut i, mut j) = self.cell_of(a);
        let (ei, ej) = self.cell_of(b);
        let step = |v: f64| if v > 0.0 { 1i64 } else if v < 0.0 { -1 } else { 0 };
        let (si, sj) = (step(d.x), step(d.y));
        let next_boundary = |idx: usize, s: i64, origin: f64| origin + self.cell * (idx as f64 + if s > 0 { 1.0 } else { 0.0 });
        let mut tmax_x = if si != 0 { (next_boundary(i, si, self.x0) - p.x) / d.x } else { f64::INFINITY };
        let mut tmax_y = if sj != 0 { (next_boundary(j, sj, self.y0) - p.y) / d.y } else { f64::INFINITY };
        let tdx = if si != 0 { self.cell / d.x.abs() } else { f64::INFINITY };
        let tdy = if sj != 0 { self.cell / d.y.abs() } else { f64::INFINITY };
        for _ in 0..(self.nx + self.ny + 2) {
            if visit(self.cell(i, j)) {
                return true;
            }
            if i == ei && j == ej {
                break;
            }
            if tmax_x < tmax_y {
                let ni = i as i64 + si;
                if ni < 0 || ni >= self.nx as i64 {
                    break;
                }
                i = ni as usize;
                tmax_x += tdx;
            } else {
                let nj = j as i64 + sj;
                if nj < 0 || nj >= self.ny as i64 {
                    break;
                }
                j = nj as usize;
                tmax_y += tdy;
            }
        }
        false
    }
}

/// Immutable Boolean field of rectangles with a grid index.
#[derive(Debug, Clone)]
pub struct BuildingField {
    buildings: Vec<Building>,
    grid: Option<Grid>,
}

impl BuildingField {
    pub fn new(buildings: Vec<Building>) -> Self {
        let grid = Grid::build(&buildings);
        Self { buildings, grid }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn buildings(&self) -> &[Building] {
        &self.buildings
    }

    pub fn len(&self) -> usize {
        self.buildings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buildings.is_empty()
    }

    /// Candidate building ids whose bounding boxes may lie within `r` of `p`.
    fn near_candidates(&self, p: Point, r: f64, mut f: impl FnMut(usize)) {
        let Some(g) = &self.grid else { return };
        let (i0, j0) = g.cell_of(Point::new(p.x - r, p.y - r));
        let (i1, j1) = g.cell_of(Point::new(p.x + r, p.y + r));
        let mut seen: Vec<u32> = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &id in g.cell(i, j) {
                    if !seen.contains(&id) {
                        seen.push(id);
                        f(id as usize);
                    }
                }
            }
        }
    }

    pub fn is_indoor(&self, p: Point) -> bool {
        let mut inside = false;
        self.near_candidates(p, 0.0, |i| inside |= self.buildings[i].contains(p));
        inside
    }

    pub fn classify_point(&self, p: Point, d_c: f64) -> RegionClass {
        let mut nearest = f64::INFINITY;
        self.near_candidates(p, d_c, |i| nearest = nearest.min(self.buildings[i].distance(p)));
        if nearest == 0.0 {
            RegionClass::Indoor
        } else if nearest < d_c {
            RegionClass::Near
        } else {
            RegionClass::Far
        }
    }

    /// True iff the open segment `(p, q)` touches no building.
    pub fn los_between(&self, p: Point, q: Point) -> bool {
        let Some(g) = &self.grid else { return true };
        let mut tested: Vec<u32> = Vec::new();
        let blocked = g.walk(p, q, |ids| {
            ids.iter().any(|&id| {
                if tested.contains(&id) {
                    return false;
                }
                tested.push(id);
                self.buildings[id as usize].blocks(p, q)
            })
        });
        !blocked
    }

    /// Nearest building and its distance; ties go to the smaller index.
    pub fn nearest_building(&self, p: Point) -> Option<(usize, f64)> {
        let g = self.grid.as_ref()?;
        let better = |cand: (usize, f64), best: Option<(usize, f64)>| match best {
            None => true,
            Some((bi, bd)) => cand.1 < bd || (cand.1 == bd && cand.0 < bi),
        };
        if !g.inside(p) {
            let mut best = None;
            for (i, b) in self.buildings.iter().enumerate() {
                let c = (i, b.distance(p));
                if better(c, best) {
                    best = Some(c);
                }
            }
            return best;
        }
        let (ci, cj) = g.cell_of(p);
        let mut best: Option<(usize, f64)> = None;
        for k in 0..=g.nx.max(g.ny) {
            let (ci, cj, k) = (ci as i64, cj as i64, k as i64);
            for j in (cj - k)..=(cj + k) {
                if j < 0 || j >= g.ny as i64 {
                    continue;
                }
                let on_edge_row = j == cj - k || j == cj + k;
                let mut i = ci - k;
                while i <= ci + k {
                    if i >= 0 && i < g.nx as i64 {
                        for &id in g.cell(i as usize, j as usize) {
                            let c = (id as usize, self.buildings[id as usize].distance(p));
                            if better(c, best) {
                                best = Some(c);
                            }
                        }
                    }
                    i += if on_edge_row || k == 0 { 1 } else { 2 * k };
                }
            }
            if let Some((_, d)) = best {
                if d < k as f64 * g.cell {
                    break;
                }
            }
        }
        best
    }

    /// The wall of the nearest building facing `bs`: among its visible walls,
    /// the one with the smallest perpendicular distance, ties by side index.
    pub fn nearest_wall(&self, bs: Point) -> Result<Wall> {
        let (id, _) = self.nearest_building(bs).ok_or(Error::NoBuildings)?;
        let b = &self.buildings[id];
        let q = b.to_local(bs);
        let (hl, hw) = b.half();
        // Signed distance outside each side's line, in side order.
        let outside = [-q.y - hw, q.x - hl, q.y - hw, -q.x - hl];
        let visible = outside.iter().enumerate().filter(|(_, &d)| d > 0.0);
        let side = match visible.clone().min_by(|a, b| a.1.total_cmp(b.1)) {
            Some((s, _)) => s,
            // Inside or on the boundary: the closest side line.
            None => outside.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0))).unwrap().0,
        };
        Ok(b.walls(id)[side])
    }
}

/// Angle subtended at `bs` by the wall contracted about its midpoint to a
/// fraction `beta` of its length.
pub fn discovery_angle(bs: Point, wall: &Wall, beta: f64) -> f64 {
    let (v1, v2) = (wall.v1, wall.v2);
    if v1 == v2 {
        return 0.0;
    }
    let p1 = v2.scale(1.0 - beta).add(v1.scale(1.0 + beta)).scale(0.5);
    let p2 = v1.scale(1.0 - beta).add(v2.scale(1.0 + beta)).scale(0.5);
    angle_between(p1.sub(bs), p2.sub(bs))
}

/// How building orientations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    Uniform,
    AxisAligned,
}

pub fn sample_buildings<R: Rng + ?Sized>(window: &Window, params: &ScenarioParams, rng: &mut R) -> BuildingField {
    sample_buildings_with(window, params, Orientation::Uniform, rng)
}

pub fn sample_buildings_with<R: Rng + ?Sized>(
    window: &Window,
    params: &ScenarioParams,
    orientation: Orientation,
    rng: &mut R,
) -> BuildingField {
    let centers = sample_ppp(window, params.lambda_ell, rng);
    let buildings = centers
        .into_iter()
        .map(|c| {
            let o = match orientation {
                Orientation::Uniform => rng.random_range(0.0..PI),
                Orientation::AxisAligned => 0.0,
            };
            Building::new(c, params.d_l, params.d_w, o)
        })
        .collect();
    BuildingField::new(buildings)
}

/// Non-homogeneous UE process: density `lambda_n` (per km²) in the band
/// within `d_c` of a building and `lambda_r` elsewhere outdoors.
pub fn sample_ues<R: Rng + ?Sized>(
    window: &Window,
    field: &BuildingField,
    d_c: f64,
    lambda_n: f64,
    lambda_r: f64,
    rng: &mut R,
) -> Vec<(Point, RegionClass)> {
    let mut out = Vec::new();
    // Band points: each building proposes in its d_c-expanded rectangle and
    // keeps only points it is the lowest-index proposer for.
    let expanded: Vec<Building> = field
        .buildings()
        .iter()
        .map(|b| Building::new(b.center, b.length + 2.0 * d_c, b.width + 2.0 * d_c, b.orientation))
        .collect();
    for (i, e) in expanded.iter().enumerate() {
        let n = poisson_count(lambda_n / M2_PER_KM2 * e.length * e.width, rng);
        for _ in 0..n {
            let u = rng.random_range(-0.5 * e.length..0.5 * e.length);
            let v = rng.random_range(-0.5 * e.width..0.5 * e.width);
            let p = e.to_world(Point::new(u, v));
            if !window.contains(p) || field.classify_point(p, d_c) != RegionClass::Near {
                continue;
            }
            if !expanded[..i].iter().any(|o| o.contains(p)) {
                out.push((p, RegionClass::Near));
            }
        }
    }
    for p in sample_ppp(window, lambda_r, rng) {
        if field.classify_point(p, d_c) == RegionClass::Far {
            out.push((p, RegionClass::Far));
        }
    }
    out
}

/// CSV dump of a field and labelled points for external plotting.
pub fn dump_csv(field: &BuildingField, points: &[(Point, &str)]) -> String {
    let mut s = String::from("# buildings\ncx,cy,len,wid,orient\n");
    for b in field.buildings() {
        let _ = writeln!(s, "{},{},{},{},{}", b.center.x, b.center.y, b.length, b.width, b.orientation);
    }
    s.push_str("# points\nx,y,kind\n");
    for (p, kind) in points {
        let _ = writeln!(s, "{},{},{}", p.x, p.y, kind);
    }
    s
}
