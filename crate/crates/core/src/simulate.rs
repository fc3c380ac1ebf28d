//! Monte Carlo engine. Each drop places a typical UE at the origin, samples
//! the network around it, runs association and scheduling, and records the
//! SIR, coverage and rate seen by the typical UE.
//!
//! Every drop owns a ChaCha8 generator seeded with its seed, split into
//! streams for geometry, scheduling and fading so that changing the
//! association (for example the bias) does not shift the fading draws.
//! Drops run in parallel and are reduced in seed order, so summaries are
//! bit-identical for any thread count.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::analytic::{self, AnalyticOptions};
use crate::association::{self, AssocPath, Association, BsRole, BsState, Link};
use crate::error::{Error, Result};
use crate::geometry::{self, angle_between, Building, BuildingField, Point, RegionClass, Window};
use crate::scenario::ScenarioParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimMode {
    /// Exact building geometry, BS roles and association.
    #[default]
    FullGeometry,
    /// LOS disk of radius `R_L` (half disk for a near-building UE) with
    /// homogeneous main-lobe interferer thinning and Poisson cell loads
    /// around the analytic mean loads.
    LosBall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    BuildingAware,
    /// Max-RSRP association over all LOS BSs.
    RsrpBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    pub mode: SimMode,
    pub scheme: Scheme,
    /// Defaults to half width `R_L` and margin `R_L`.
    pub window: Option<Window>,
    /// Let BSs with no scheduled UE interfere anyway.
    pub always_transmit: bool,
    pub analytic: AnalyticOptions,
}

pub const STREAM_GEOMETRY: u64 = 0;
pub const STREAM_SCHEDULING: u64 = 1;
pub const STREAM_FADING: u64 = 2;

/// Offset of the typical near-building UE from its wall, m.
pub const WALL_OFFSET: f64 = 1e-3;
const PLACEMENT_ATTEMPTS: usize = 1000;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Where the typical UE sits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypicalPlacement {
    pub class: RegionClass,
    /// The wall the UE is attached to, for a near-building UE.
    pub wall: Option<geometry::Wall>,
}

/// One realized network around the typical UE at the origin.
#[derive(Debug, Clone)]
pub struct NetworkDrop {
    pub window: Window,
    pub field: BuildingField,
    pub bss: Vec<BsState>,
    pub ues: Vec<(Point, RegionClass)>,
    pub typical: TypicalPlacement,
    pub seed: u64,
}

impl NetworkDrop {
    pub fn ue_points(&self) -> Vec<Point> {
        self.ues.iter().map(|u| u.0).collect()
    }
}

/// Per-drop outcome at the typical UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropSample {
    pub seed: u64,
    pub near: bool,
    /// No LOS BS: excluded from SIR statistics, counted as not covered.
    pub uncovered: bool,
    /// `NaN` when uncovered, `inf` without interference.
    pub sir: f64,
    pub sinr: Option<f64>,
    pub covered: bool,
    pub rate: f64,
    /// Other UEs in the serving cell.
    pub n_cell: usize,
    pub path: Option<AssocPath>,
    pub interferers: usize,
    pub mainlobe_interferers: usize,
}

impl DropSample {
    fn uncovered(seed: u64, near: bool) -> Self {
        Self {
            seed,
            near,
            uncovered: true,
            sir: f64::NAN,
            sinr: None,
            covered: false,
            rate: 0.0,
            n_cell: 0,
            path: None,
            interferers: 0,
            mainlobe_interferers: 0,
        }
    }

    pub fn mainlobe_fraction(&self) -> Option<f64> {
        (self.interferers > 0).then(|| self.mainlobe_interferers as f64 / self.interferers as f64)
    }
}

fn default_window(p: &ScenarioParams) -> Result<Window> {
    let r_l = analytic::los_distance(p.lambda_ell, p.d_l, p.d_w)?;
    Window::new(r_l, r_l)
}

/// A building with one wall's midpoint `WALL_OFFSET` away from the origin,
/// the origin lying outside it.
fn building_touching_origin<R: Rng + ?Sized>(p: &ScenarioParams, rng: &mut R) -> (Building, usize) {
    let orientation = rng.random_range(0.0..PI);
    let side = rng.random_range(0..4usize);
    let (hl, hw) = (0.5 * p.d_l, 0.5 * p.d_w);
    let (mid, normal) = match side {
        0 => (Point::new(0.0, -hw), Point::new(0.0, -1.0)),
        1 => (Point::new(hl, 0.0), Point::new(1.0, 0.0)),
        2 => (Point::new(0.0, hw), Point::new(0.0, 1.0)),
        _ => (Point::new(-hl, 0.0), Point::new(-1.0, 0.0)),
    };
    let local = mid.add(normal.scale(WALL_OFFSET));
    let (s, c) = orientation.sin_cos();
    let center = Point::new(-(local.x * c - local.y * s), -(local.x * s + local.y * c));
    (Building::new(center, p.d_l, p.d_w, orientation), side)
}

/// Samples the building field, the typical UE's class, outdoor BSs and UEs,
/// and classifies BSs. Uses the geometry stream only.
pub fn build_drop(p: &ScenarioParams, opts: &SimOptions, seed: u64) -> Result<NetworkDrop> {
    p.validate()?;
    let window = match opts.window {
        Some(w) => w,
        None => default_window(p)?,
    };
    let mut rng = stream(seed, STREAM_GEOMETRY);
    let near = rng.random_bool(p.gamma_c);
    let (field, typical) = place_typical(p, &window, near, &mut rng)?;

    let bs_points: Vec<Point> =
        geometry::sample_ppp(&window, p.lambda_b, &mut rng).into_iter().filter(|q| !field.is_indoor(*q)).collect();
    let (lambda_n, lambda_r) = analytic::ue_densities(p)?;
    let ues = geometry::sample_ues(&window, &field, p.d_c, lambda_n, lambda_r, &mut rng);
    let bss = match opts.scheme {
        Scheme::BuildingAware => association::classify_all(&bs_points, &field, p.theta, p.beta),
        Scheme::RsrpBaseline => bs_points.iter().map(|&q| BsState::omni(q)).collect(),
    };
    Ok(NetworkDrop { window, field, bss, ues, typical, seed })
}

fn place_typical(
    p: &ScenarioParams,
    window: &Window,
    near: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(BuildingField, TypicalPlacement)> {
    for _ in 0..PLACEMENT_ATTEMPTS {
        let field = geometry::sample_buildings(window, p, rng);
        if near {
            let (extra, side) = building_touching_origin(p, rng);
            let mut buildings = field.buildings().to_vec();
            let owner = buildings.len();
            buildings.push(extra);
            let field = BuildingField::new(buildings);
            if field.classify_point(Point::ORIGIN, p.d_c) == RegionClass::Near {
                let wall = extra.walls(owner)[side];
                return Ok((field, TypicalPlacement { class: RegionClass::Near, wall: Some(wall) }));
            }
        } else if field.classify_point(Point::ORIGIN, p.d_c) == RegionClass::Far {
            return Ok((field, TypicalPlacement { class: RegionClass::Far, wall: None }));
        }
    }
    Err(Error::Domain(format!(
        "could not place the typical UE outdoors in {PLACEMENT_ATTEMPTS} building fields; building density too high"
    )))
}

/// Association of the drop's UEs under its scheme.
pub fn associate_drop(drop: &NetworkDrop, p: &ScenarioParams, scheme: Scheme) -> Association {
    let pts = drop.ue_points();
    match scheme {
        Scheme::BuildingAware => association::associate_all(&pts, &drop.bss, &drop.field),
        Scheme::RsrpBaseline => association::associate_rsrp_baseline(&pts, &drop.bss, &drop.field, p),
    }
}

fn typical_link(drop: &NetworkDrop, p: &ScenarioParams, scheme: Scheme) -> Option<Link> {
    match scheme {
        Scheme::BuildingAware => association::associate_ue(Point::ORIGIN, &drop.bss, &drop.field),
        Scheme::RsrpBaseline => {
            association::associate_rsrp_baseline(&[Point::ORIGIN], &drop.bss, &drop.field, p).links[0]
        }
    }
}

fn noise_over_tx(p: &ScenarioParams) -> f64 {
    10f64.powf((analytic::noise_power_dbm(p.bandwidth_w, p.noise_figure_db) - p.tx_power_dbm) / 10.0)
}

struct Outcome {
    signal: f64,
    interference: f64,
    n_cell: usize,
    path: AssocPath,
    interferers: usize,
    mainlobe: usize,
}

fn finish(p: &ScenarioParams, opts: &SimOptions, seed: u64, near: bool, o: Outcome) -> DropSample {
    let sir = if o.interference > 0.0 { o.signal / o.interference } else { f64::INFINITY };
    let sinr = p.include_noise.then(|| o.signal / (o.interference + noise_over_tx(p)));
    let covered = sinr.unwrap_or(sir) > p.t;
    let rate = if covered {
        p.bandwidth_w / (o.n_cell as f64 + 1.0) * opts.analytic.log_base.log1p(p.t)
    } else {
        0.0
    };
    DropSample {
        seed,
        near,
        uncovered: false,
        sir,
        sinr,
        covered,
        rate,
        n_cell: o.n_cell,
        path: Some(o.path),
        interferers: o.interferers,
        mainlobe_interferers: o.mainlobe,
    }
}

fn realize_full(p: &ScenarioParams, opts: &SimOptions, seed: u64) -> Result<DropSample> {
    let drop = build_drop(p, opts, seed)?;
    let near = drop.typical.class == RegionClass::Near;
    let Some(serving) = typical_link(&drop, p, opts.scheme) else {
        return Ok(DropSample::uncovered(seed, near));
    };
    let assoc = associate_drop(&drop, p, opts.scheme);

    let mut sched = stream(seed, STREAM_SCHEDULING);
    let ue_pts = drop.ue_points();
    // Beam direction of every BS this slot; None means silent.
    let beams: Vec<Option<Point>> = drop
        .bss
        .iter()
        .enumerate()
        .map(|(i, bs)| match association::schedule(i, &assoc, &mut sched) {
            Some(ue) => Some(ue_pts[ue].sub(bs.position)),
            None if opts.always_transmit => Some(match (bs.role, bs.nearest_wall) {
                (BsRole::DBs, Some(w)) => w.midpoint().sub(bs.position),
                _ => {
                    let a = sched.random_range(0.0..2.0 * PI);
                    Point::new(a.cos(), a.sin())
                }
            }),
            None => None,
        })
        .collect();

    let mut fade = stream(seed, STREAM_FADING);
    let h: Vec<f64> = (0..drop.bss.len()).map(|_| Exp1.sample(&mut fade)).collect();

    let path_gain = |bs: &BsState| bs.position.norm().powf(-p.alpha);
    let signal = p.g_m * h[serving.bs] * path_gain(&drop.bss[serving.bs]);
    let (mut interference, mut interferers, mut mainlobe) = (0.0, 0, 0);
    for (i, bs) in drop.bss.iter().enumerate() {
        let Some(beam) = beams[i] else { continue };
        if i == serving.bs || !drop.field.los_between(Point::ORIGIN, bs.position) {
            continue;
        }
        let hit = angle_between(Point::ORIGIN.sub(bs.position), beam) <= 0.5 * p.theta;
        let g = if hit { p.g_m } else { p.g_s };
        interference += g * h[i] * path_gain(bs);
        interferers += 1;
        mainlobe += hit as usize;
    }
    let o = Outcome {
        signal,
        interference,
        n_cell: assoc.members(serving.bs).len(),
        path: serving.path,
        interferers,
        mainlobe,
    };
    Ok(finish(p, opts, seed, near, o))
}

fn realize_los_ball(p: &ScenarioParams, opts: &SimOptions, seed: u64) -> Result<DropSample> {
    p.validate()?;
    let beta = match opts.scheme {
        Scheme::BuildingAware => p.beta,
        Scheme::RsrpBaseline => 0.0,
    };
    let r_l = analytic::los_distance(p.lambda_ell, p.d_l, p.d_w)?;
    let r_beta = analytic::effective_mainlobe_radius(r_l, beta, p.d_l, p.theta)?;
    let hit_prob = analytic::mainlobe_thinning_prob(p.theta, p.g_s, p.g_m, p.alpha);

    let mut geo = stream(seed, STREAM_GEOMETRY);
    let near = geo.random_bool(p.gamma_c);
    // Only distances matter: gains are drawn by distance band, not bearing.
    let area = if near { 0.5 * PI * r_l * r_l } else { PI * r_l * r_l };
    let n = geometry::poisson_count(p.lambda_b / crate::M2_PER_KM2 * area, &mut geo);
    let dist: Vec<f64> = (0..n).map(|_| r_l * geo.random::<f64>().sqrt()).collect();
    let Some(serving) = (0..n).min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b))) else {
        return Ok(DropSample::uncovered(seed, near));
    };

    // Inside the thinning bands an interferer is kept, at main-lobe gain,
    // with the equivalent thinning probability and dropped otherwise; past
    // them it interferes with side-lobe gain. A zero means "side lobe".
    let main_prob: Box<dyn Fn(f64) -> f64> = if near {
        let region1 = (r_l - r_beta).min(0.5 * r_l);
        let mainlobe_edge = r_beta.max(0.5 * r_l);
        let q = analytic::region1_dbs_ratio(p.theta).clamp(0.0, 1.0);
        let p1 = q * (1.0 - hit_prob) + hit_prob;
        Box::new(move |d| if d < region1 { p1 } else if d < mainlobe_edge { hit_prob } else { 0.0 })
    } else {
        Box::new(move |d| if d <= r_beta { hit_prob } else { 0.0 })
    };

    let mut sched = stream(seed, STREAM_SCHEDULING);
    let mut fade = stream(seed, STREAM_FADING);
    let h: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut fade)).collect();
    let signal = p.g_m * h[serving] * dist[serving].powf(-p.alpha);
    let (mut interference, mut interferers, mut mainlobe) = (0.0, 0, 0);
    for i in (0..n).filter(|&i| i != serving) {
        let keep = main_prob(dist[i]);
        let g = if keep == 0.0 {
            p.g_s
        } else if sched.random::<f64>() < keep {
            mainlobe += 1;
            p.g_m
        } else {
            continue;
        };
        interference += g * h[i] * dist[i].powf(-p.alpha);
        interferers += 1;
    }
    let base = ScenarioParams { beta, ..p.clone() };
    let load = if near {
        analytic::mean_load_near(&base, beta, opts.analytic.load_trigger)?
    } else {
        analytic::mean_load_far(&base, beta, opts.analytic.load_trigger)?
    };
    let o = Outcome {
        signal,
        interference,
        n_cell: geometry::poisson_count(load, &mut sched),
        path: AssocPath::ReferenceSignal,
        interferers,
        mainlobe,
    };
    Ok(finish(p, opts, seed, near, o))
}

/// Runs one drop.
pub fn realize(p: &ScenarioParams, opts: &SimOptions, seed: u64) -> Result<DropSample> {
    match opts.mode {
        SimMode::FullGeometry => realize_full(p, opts, seed),
        SimMode::LosBall => realize_los_ball(p, opts, seed),
    }
}

/// Drops `seed_base .. seed_base + n_drops`, in seed order.
pub fn run_drops(p: &ScenarioParams, opts: &SimOptions, n_drops: usize, seed_base: u64) -> Result<Vec<DropSample>> {
    p.validate()?;
    (0..n_drops as u64).into_par_iter().map(|i| realize(p, opts, seed_base.wrapping_add(i))).collect()
}

/// Sample mean with its standard error and 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
    pub half_width: f64,
    pub count: usize,
}

impl Stat {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
        let values: Vec<f64> = values.into_iter().collect();
        for &v in &values {
            n += 1;
            sum += v;
        }
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, half_width: f64::NAN, count: 0 };
        }
        let mean = sum / n as f64;
        for &v in &values {
            sum_sq += (v - mean) * (v - mean);
        }
        let stderr = if n > 1 { (sum_sq / (n - 1) as f64 / n as f64).sqrt() } else { f64::NAN };
        Self { mean, stderr, half_width: 1.96 * stderr, count: n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateSummary {
    pub drops: usize,
    /// `P(SIR > t)` over all drops; uncovered drops count as failures.
    pub coverage: Stat,
    pub rate: Stat,
    /// Per-drop main-lobe interferer fraction over drops with interferers.
    pub mainlobe: Stat,
    pub uncovered_fraction: f64,
}

impl EstimateSummary {
    pub fn from_samples(samples: &[DropSample]) -> Self {
        let drops = samples.len();
        Self {
            drops,
            coverage: Stat::from_values(samples.iter().map(|s| s.covered as u8 as f64)),
            rate: Stat::from_values(samples.iter().map(|s| s.rate)),
            mainlobe: Stat::from_values(samples.iter().filter_map(|s| s.mainlobe_fraction())),
            uncovered_fraction: samples.iter().filter(|s| s.uncovered).count() as f64 / drops.max(1) as f64,
        }
    }

    pub const CSV_HEADER: &'static str = "drops,coverage,coverage_se,rate,rate_se,mainlobe,mainlobe_se,uncovered";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.drops,
            self.coverage.mean,
            self.coverage.stderr,
            self.rate.mean,
            self.rate.stderr,
            self.mainlobe.mean,
            self.mainlobe.stderr,
            self.uncovered_fraction
        )
    }
}

/// Monte Carlo summary over `n_drops` drops seeded `seed_base + i`.
pub fn estimate(p: &ScenarioParams, opts: &SimOptions, n_drops: usize, seed_base: u64) -> Result<EstimateSummary> {
    if n_drops < 2 {
        return Err(Error::Domain(format!("estimate needs at least 2 drops, got {n_drops}")));
    }
    Ok(EstimateSummary::from_samples(&run_drops(p, opts, n_drops, seed_base)?))
}

/// Per-drop trace: `seed,sir_db,covered,rate_bps,n_cell,path,uncovered`.
pub fn trace_csv(samples: &[DropSample]) -> String {
    let mut s = String::from("seed,sir_db,covered,rate_bps,n_cell,path,uncovered\n");
    for d in samples {
        let sir_db = if d.uncovered { String::new() } else { (10.0 * d.sir.log10()).to_string() };
        let path = d.path.map_or("", |p| p.name());
        let _ = writeln!(s, "{},{},{},{},{},{},{}", d.seed, sir_db, d.covered as u8, d.rate, d.n_cell, path, d.uncovered as u8);
    }
    s
}
