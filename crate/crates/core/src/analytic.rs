//! Closed-form and quadrature evaluation of the building-aware association
//! model: LOS distance, effective main-lobe radius, UE densities, SIR
//! coverage, mean cell loads, average rate, and the optimal association bias.
//!
//! Coverage integrals are the α → 2 limit of the Rayleigh-fading Laplace
//! transform, so every coverage and rate function here rejects `alpha != 2`;
//! other exponents are only available through [`crate::simulate`].
//!
//! Lengths are in metres. Densities cross this API per km² and are
//! converted to per m² internally.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::optimize::{self, Maximum};
use crate::quadrature::{integrate, QuadratureSettings};
use crate::scenario::ScenarioParams;
use crate::M2_PER_KM2;

/// Which reading of the O-BS cell-expansion rule is used by the load model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadTrigger {
    /// Expansion when `R_beta < 0.68 / sqrt(lambda_b)`, non-expanded load
    /// `1.28 lambda_r / lambda_b`, and BS density in the `A_r` correction.
    #[default]
    BsDensity,
    /// The typeset form: trigger `R_beta < 0.68 sqrt(lambda)` with the UE
    /// density, non-expanded load `1.28 lambda_r / (pi lambda_b R_beta^2)`, UE
    /// density in `A_r` and the `(R_beta - d_c)^3` term. Kept for comparison.
    Printed,
}

/// Logarithm used for spectral efficiency `log(1 + t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Two,
    Natural,
}

impl LogBase {
    pub fn log1p(self, t: f64) -> f64 {
        match self {
            LogBase::Two => (1.0 + t).log2(),
            LogBase::Natural => t.ln_1p(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnalyticOptions {
    pub quadrature: QuadratureSettings,
    pub load_trigger: LoadTrigger,
    pub log_base: LogBase,
}

/// Every analytic output for one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticReport {
    pub beta: f64,
    /// Average LOS distance, m.
    pub r_l: f64,
    /// Effective main-lobe radius, m.
    pub r_beta: f64,
    /// Near-building UE density, per km².
    pub lambda_n: f64,
    /// Far-from-building UE density, per km².
    pub lambda_r: f64,
    pub p_a: f64,
    pub p_ell: f64,
    pub s_n: f64,
    pub s_r: f64,
    pub s: f64,
    pub n_n: f64,
    pub n_r: f64,
    /// Average rate, bit/s (or nat/s with [`LogBase::Natural`]).
    pub rate: f64,
    /// SINR coverage, present when the scenario includes noise.
    pub sinr_coverage: Option<f64>,
}

impl AnalyticReport {
    pub const CSV_HEADER: &'static str = "beta,r_l,r_beta,lambda_n,lambda_r,p_a,p_ell,s_n,s_r,s,n_n,n_r,rate";

    pub fn csv_row(&self) -> String {
        [
            self.beta, self.r_l, self.r_beta, self.lambda_n, self.lambda_r, self.p_a, self.p_ell, self.s_n,
            self.s_r, self.s, self.n_n, self.n_r, self.rate,
        ]
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
    }
}

/// Average LOS distance of the equivalent LOS ball, m.
pub fn los_distance(lambda_ell: f64, d_l: f64, d_w: f64) -> Result<f64> {
    if lambda_ell == 0.0 {
        return Err(Error::UnboundedLos);
    }
    if !(lambda_ell > 0.0) || !(d_l > 0.0) || !(d_w > 0.0) {
        return Err(Error::Domain(format!(
            "LOS distance needs positive density and dimensions (lambda_ell {lambda_ell}, d_l {d_l}, d_w {d_w})"
        )));
    }
    let lam = lambda_ell / M2_PER_KM2;
    Ok(PI * (2.0 * (-lam * d_l * d_w).exp()).sqrt() / (2.0 * lam * (d_l + d_w)))
}

/// Largest distance from its building at which a BS still qualifies as a
/// D-BS: `beta d_l / (2 tan(theta / 2))`.
pub fn dbs_reach(beta: f64, d_l: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < PI) {
        return Err(Error::Domain(format!("D-BS geometry needs 0 < theta < pi, got {theta}")));
    }
    Ok(beta * d_l / (2.0 * (theta / 2.0).tan()))
}

/// Radius of the region whose BSs can reach the typical UE with the main
/// lobe, floored at zero.
pub fn effective_mainlobe_radius(r_l: f64, beta: f64, d_l: f64, theta: f64) -> Result<f64> {
    Ok((r_l - dbs_reach(beta, d_l, theta)?).max(0.0))
}

/// The bias at which a near-building UE's interference picture stops
/// changing (`R_beta = R_L / 2`): `tan(theta / 2) R_L / d_l`.
pub fn near_freeze_bias(p: &ScenarioParams) -> Result<f64> {
    let r_l = los_distance(p.lambda_ell, p.d_l, p.d_w)?;
    Ok((p.theta / 2.0).tan() * r_l / p.d_l)
}

/// Area fractions of the near-building band and of building interiors.
fn area_fractions(p: &ScenarioParams) -> (f64, f64) {
    let lam = p.lambda_ell_m2();
    (2.0 * lam * (p.d_l + p.d_w) * p.d_c, lam * p.d_l * p.d_w)
}

/// UE densities `(lambda_n, lambda_r)` per km² in the near-building band and
/// in the remaining outdoor area.
pub fn ue_densities(p: &ScenarioParams) -> Result<(f64, f64)> {
    let (band, indoor) = area_fractions(p);
    if band + indoor >= 1.0 {
        return Err(Error::Domain(format!(
            "near-building band ({band:.4}) and indoor ({indoor:.4}) fractions cover the plane; d_c too large"
        )));
    }
    let lambda_n = p.lambda_u * p.gamma_c * (1.0 - indoor) / band;
    let lambda_r = p.lambda_u * (1.0 - p.gamma_c) * (1.0 - indoor) / (1.0 - band - indoor);
    Ok((lambda_n, lambda_r))
}

/// Equivalent main-lobe thinning probability of the interferer field.
pub fn mainlobe_thinning_prob(theta: f64, g_s: f64, g_m: f64, alpha: f64) -> f64 {
    theta / (2.0 * PI) + (2.0 * PI - theta) / (2.0 * PI) * (g_s / g_m).powf(2.0 / alpha)
}

/// Raw region-1 D-BS area ratio, before clamping. Exceeds one for the
/// beamwidths of interest.
pub fn region1_dbs_ratio(theta: f64) -> f64 {
    ((PI - theta).powi(2) / (4.0 * theta.sin().powi(2)) + 1.0 / (4.0 * theta.tan()))
        * (8.0 * (theta / 2.0).tan().powi(2) / PI)
}

/// Probability that a BS in region 1 of a near-building UE's LOS half-disk
/// interferes with the main lobe. The area ratio is clamped to `[0, 1]`.
pub fn region1_interferer_prob(theta: f64, p_a: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < PI) {
        return Err(Error::Domain(format!("region-1 probability needs 0 < theta < pi, got {theta}")));
    }
    let q = region1_dbs_ratio(theta).clamp(0.0, 1.0);
    Ok(q * (1.0 - p_a) + p_a)
}

/// `int_a^b pi lambda_b r exp(-(pi/2) lambda_b r^2 x) dr` for constant `x`.
pub fn rayleigh_kernel(a: f64, b: f64, x: f64, lambda_b: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("kernel argument must be > 0, got {x}")));
    }
    if !(0.0 <= a && a <= b) {
        return Err(Error::Domain(format!("kernel limits must satisfy 0 <= a <= b, got [{a}, {b}]")));
    }
    let lam = lambda_b / M2_PER_KM2;
    let h = 0.5 * PI * lam * x;
    Ok(((-h * a * a).exp() - (-h * b * b).exp()) / x)
}

/// Noise power in dBm: thermal floor over the bandwidth plus noise figure.
pub fn noise_power_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    -174.0 + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

/// Coefficient `c` such that the Rayleigh SNR factor is `exp(-c r^alpha)`.
fn snr_coefficient(p: &ScenarioParams) -> f64 {
    let noise_mw = 10f64.powf(noise_power_dbm(p.bandwidth_w, p.noise_figure_db) / 10.0);
    let tx_mw = 10f64.powf(p.tx_power_dbm / 10.0);
    p.t * noise_mw / (tx_mw * p.g_m)
}

/// `P(SNR > t)` at serving distance `r` under Rayleigh fading.
pub fn snr_factor(p: &ScenarioParams, r: f64) -> f64 {
    (-snr_coefficient(p) * r.powf(p.alpha)).exp()
}

/// Round-off tolerance for probabilities produced by quadrature.
const PROBABILITY_SLACK: f64 = 1e-8;

fn clamp_probability(v: f64) -> Result<f64> {
    if v > 1.0 + PROBABILITY_SLACK || v < -PROBABILITY_SLACK || v.is_nan() {
        return Err(Error::ProbabilityOutOfRange { value: v });
    }
    Ok(v.clamp(0.0, 1.0))
}

/// Derived constants shared by both coverage integrals at one bias.
struct CoverageModel {
    lam: f64,
    r_l: f64,
    r_beta: f64,
    t: f64,
    p_a: f64,
    p_ell: f64,
    side: f64,
    snr: Option<f64>,
}

impl CoverageModel {
    fn new(p: &ScenarioParams, beta: f64, with_noise: bool) -> Result<Self> {
        if p.alpha != 2.0 {
            return Err(Error::Domain(format!(
                "analytic coverage is the alpha = 2 limit; got alpha = {} (use the simulator)",
                p.alpha
            )));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Domain(format!("beta must lie in [0, 1], got {beta}")));
        }
        let r_l = los_distance(p.lambda_ell, p.d_l, p.d_w)?;
        let r_beta = effective_mainlobe_radius(r_l, beta, p.d_l, p.theta)?;
        let p_a = mainlobe_thinning_prob(p.theta, p.g_s, p.g_m, p.alpha);
        Ok(Self {
            lam: p.lambda_b_m2(),
            r_l,
            r_beta,
            t: p.t,
            p_a,
            p_ell: region1_interferer_prob(p.theta, p_a)?,
            side: p.g_s * p.t / p.g_m,
            snr: with_noise.then(|| snr_coefficient(p)),
        })
    }

    fn snr(&self, r: f64) -> f64 {
        match self.snr {
            Some(c) => (-c * r * r).exp(),
            None => 1.0,
        }
    }

    fn far(&self, q: &QuadratureSettings) -> Result<f64> {
        let Self { lam, r_l, r_beta, t, p_a, side, .. } = *self;
        let inner = |r: f64| {
            if r <= 0.0 {
                return 0.0;
            }
            let r2 = r * r;
            let x = 1.0
                + p_a * t * ((t + r_beta * r_beta / r2) / (1.0 + t)).ln()
                + side * ((t + r_l * r_l / r2) / (t + r_beta * r_beta / r2)).ln();
            2.0 * PI * lam * r * (-PI * lam * r2 * x).exp() * self.snr(r)
        };
        let outer = |r: f64| {
            let r2 = r * r;
            let x = 1.0 + side * ((t + r_l * r_l / r2) / (t + 1.0)).ln();
            2.0 * PI * lam * r * (-PI * lam * r2 * x).exp() * self.snr(r)
        };
        let a = integrate(inner, 0.0, r_beta, q)?;
        let b = integrate(outer, r_beta, r_l, q)?;
        clamp_probability(a.value + b.value)
    }

    fn near(&self, q: &QuadratureSettings) -> Result<f64> {
        let Self { lam, r_l, r_beta, t, p_a, p_ell, side, .. } = *self;
        let r1_edge = (r_l - r_beta).min(0.5 * r_l);
        let mainlobe_edge = r_beta.max(0.5 * r_l);
        let inv_t = 1.0 / t;
        let u1 = |r2: f64| mainlobe_edge.powi(2).max(r2) / (r2 * t);
        let region1 = |r: f64| {
            if r <= 0.0 {
                return 0.0;
            }
            let r2 = r * r;
            let (u1, u2) = (u1(r2), r1_edge * r1_edge / (r2 * t));
            let x = 1.0
                + p_ell * t * ((1.0 + u2) / (1.0 + inv_t)).ln()
                + p_a * t * ((1.0 + u1) / (1.0 + u2)).ln()
                + side * ((1.0 + r_l * r_l / (r2 * t)) / (1.0 + u1)).ln();
            PI * lam * r * (-0.5 * PI * lam * r2 * x).exp() * self.snr(r)
        };
        let rest = |r: f64| {
            let r2 = r * r;
            let u1 = u1(r2);
            let x = 1.0
                + p_a * t * ((1.0 + u1) / (1.0 + inv_t)).ln()
                + side * ((1.0 + r_l * r_l / (r2 * t)) / (1.0 + u1)).ln();
            PI * lam * r * (-0.5 * PI * lam * r2 * x).exp() * self.snr(r)
        };
        let a = integrate(region1, 0.0, r1_edge, q)?;
        let b = integrate(rest, r1_edge, r_l, q)?;
        clamp_probability(a.value + b.value)
    }
}

/// SIR coverage of a typical UE far from buildings.
pub fn coverage_far(p: &ScenarioParams, beta: f64, q: &QuadratureSettings) -> Result<f64> {
    CoverageModel::new(p, beta, false)?.far(q)
}

/// SIR coverage of a typical UE attached to a building wall.
pub fn coverage_near(p: &ScenarioParams, beta: f64, q: &QuadratureSettings) -> Result<f64> {
    CoverageModel::new(p, beta, false)?.near(q)
}

/// Mixture SIR coverage `gamma_c S_n + (1 - gamma_c) S_r`.
pub fn coverage(p: &ScenarioParams, beta: f64, q: &QuadratureSettings) -> Result<f64> {
    let m = CoverageModel::new(p, beta, false)?;
    Ok(p.gamma_c * m.near(q)? + (1.0 - p.gamma_c) * m.far(q)?)
}

/// `(S_n, S_r)` with the Rayleigh SNR factor folded into each integrand.
pub fn coverage_parts_with_noise(p: &ScenarioParams, beta: f64, q: &QuadratureSettings) -> Result<(f64, f64)> {
    let m = CoverageModel::new(p, beta, true)?;
    Ok((m.near(q)?, m.far(q)?))
}

/// SINR coverage, treating the SNR and SIR events as independent.
pub fn coverage_with_noise(p: &ScenarioParams, beta: f64, q: &QuadratureSettings) -> Result<f64> {
    let (s_n, s_r) = coverage_parts_with_noise(p, beta, q)?;
    Ok(p.gamma_c * s_n + (1.0 - p.gamma_c) * s_r)
}

/// Average O-BS association area `A_c` and its far-from-building part `A_r`, m².
pub fn observed_cell_area(p: &ScenarioParams, beta: f64, trigger: LoadTrigger) -> Result<(f64, f64)> {
    let r_l = los_distance(p.lambda_ell, p.d_l, p.d_w)?;
    let rb = effective_mainlobe_radius(r_l, beta, p.d_l, p.theta)?;
    let lam_b = p.lambda_b_m2();
    let floor = PI * rb * rb;

    let a_c = floor.max(
        PI * r_l * r_l
            - 0.5 * beta * p.d_l * (PI * lam_b * r_l * (r_l * r_l - rb * rb) - 2.0 / 3.0 * PI * lam_b * (r_l.powi(3) - rb.powi(3))),
    );

    let reach = r_l - p.d_c;
    let a_r = if p.d_c > r_l - rb {
        PI * reach * reach
    } else {
        let (lam, inner_cube) = match trigger {
            LoadTrigger::BsDensity => (lam_b, rb.powi(3)),
            LoadTrigger::Printed => (p.lambda_u / M2_PER_KM2, (rb - p.d_c).powi(3)),
        };
        let shrink = 0.5 * beta * p.d_l * PI * lam
            * (reach * (reach * reach - rb * rb) - 2.0 * (reach.powi(3) - inner_cube) / 3.0);
        let a_r = floor.max(PI * reach * reach - shrink);
        match trigger {
            LoadTrigger::BsDensity => a_r.min(a_c),
            LoadTrigger::Printed => a_r,
        }
    };
    Ok((a_c, a_r))
}

/// Mean number of other UEs sharing the cell of a typical far-from-building UE.
pub fn mean_load_far(p: &ScenarioParams, beta: f64, trigger: LoadTrigger) -> Result<f64> {
    let r_l = los_distance(p.lambda_ell, p.d_l, p.d_w)?;
    let rb = effective_mainlobe_radius(r_l, beta, p.d_l, p.theta)?;
    let (lambda_n, lambda_r) = ue_densities(p)?;
    let (lam_n, lam_r) = (lambda_n / M2_PER_KM2, lambda_r / M2_PER_KM2);
    let lam_b = p.lambda_b_m2();

    let expands = match trigger {
        LoadTrigger::BsDensity => rb < 0.68 / lam_b.sqrt(),
        LoadTrigger::Printed => rb < 0.68 * (p.lambda_u / M2_PER_KM2).sqrt(),
    };
    let needs_radius = expands || trigger == LoadTrigger::Printed;
    if needs_radius && rb <= 0.0 {
        return Err(Error::Domain(format!(
            "mean load undefined: effective main-lobe radius vanishes at beta = {beta}"
        )));
    }
    if expands {
        let (a_c, a_r) = observed_cell_area(p, beta, trigger)?;
        Ok(1.28 * ((a_c - a_r) * lam_n + a_r * lam_r) / (lam_b * PI * rb * rb))
    } else {
        match trigger {
            LoadTrigger::BsDensity => Ok(1.28 * lam_r / lam_b),
            LoadTrigger::Printed => Ok(1.28 * lam_r / (PI * lam_b * rb * rb)),
        }
    }
}

/// `exp(-pi lambda_b a^2 / 2) - exp(-pi lambda_b b^2 / 2)`: probability that
/// the half-disk serving distance falls in `[a, b]`.
pub fn half_disk_shell(lambda_b: f64, a: f64, b: f64) -> f64 {
    let h = 0.5 * PI * lambda_b / M2_PER_KM2;
    (-h * a * a).exp() - (-h * b * b).exp()
}

/// `int_0^x pi lambda_b r^2 exp(-pi lambda_b r^2 / 2) dr` in closed form.
pub fn load_moment(lambda_b: f64, x: f64) -> f64 {
    let lam = lambda_b / M2_PER_KM2;
    libm::erf(x * (0.5 * PI * lam).sqrt()) / (2.0 * lam).sqrt() - x * (-0.5 * PI * lam * x * x).exp()
}

/// Mean number of other UEs sharing the cell of a typical near-building UE.
///
/// For serving distances below `min(R_L - R_beta, R_L / 2)` the server is a
/// D-BS with a triangular cell; beyond it the far-UE load applies. The band
/// term is integrated only up to `min(d_c, R_1)`.
pub fn mean_load_near(p: &ScenarioParams, beta: f64, trigger: LoadTrigger) -> Result<f64> {
    let r_l = los_distance(p.lambda_ell, p.d_l, p.d_w)?;
    let rb = effective_mainlobe_radius(r_l, beta, p.d_l, p.theta)?;
    let (lambda_n, lambda_r) = ue_densities(p)?;
    let (lam_n, lam_r) = (lambda_n / M2_PER_KM2, lambda_r / M2_PER_KM2);
    let n_r = mean_load_far(p, beta, trigger)?;

    let r1 = (r_l - rb).min(0.5 * r_l);
    let band = p.d_c.min(r1);
    let lb = p.lambda_b;
    let triangle = 0.64
        * beta
        * p.d_l
        * (lam_n * load_moment(lb, band)
            + (p.d_c * lam_n - 0.5 * p.d_c * lam_r) * half_disk_shell(lb, band, r1)
            + lam_r * (load_moment(lb, r1) - load_moment(lb, band)));
    let num = half_disk_shell(lb, r1, r_l) * n_r + triangle;
    Ok(num / half_disk_shell(lb, 0.0, r_l))
}

/// Spectral-efficiency-weighted per-class coverage and load at one bias.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RateTerms {
    s_n: f64,
    s_r: f64,
    n_n: f64,
    n_r: f64,
}

impl RateTerms {
    fn eval(p: &ScenarioParams, beta: f64, opts: &AnalyticOptions) -> Result<Self> {
        let (s_n, s_r) = if p.include_noise {
            coverage_parts_with_noise(p, beta, &opts.quadrature)?
        } else {
            let m = CoverageModel::new(p, beta, false)?;
            (m.near(&opts.quadrature)?, m.far(&opts.quadrature)?)
        };
        Ok(Self {
            s_n,
            s_r,
            n_n: mean_load_near(p, beta, opts.load_trigger)?,
            n_r: mean_load_far(p, beta, opts.load_trigger)?,
        })
    }

    fn objective(&self, gamma_c: f64) -> f64 {
        gamma_c * self.s_n / (1.0 + self.n_n) + (1.0 - gamma_c) * self.s_r / (1.0 + self.n_r)
    }
}

/// Average rate of a typical UE under the mean-load approximation.
pub fn average_rate(p: &ScenarioParams, beta: f64, opts: &AnalyticOptions) -> Result<f64> {
    let terms = RateTerms::eval(p, beta, opts)?;
    Ok(p.bandwidth_w * opts.log_base.log1p(p.t) * terms.objective(p.gamma_c))
}

/// Full analytic report at `p.beta`.
pub fn report(p: &ScenarioParams, opts: &AnalyticOptions) -> Result<AnalyticReport> {
    p.validate()?;
    let beta = p.beta;
    let r_l = los_distance(p.lambda_ell, p.d_l, p.d_w)?;
    let r_beta = effective_mainlobe_radius(r_l, beta, p.d_l, p.theta)?;
    let (lambda_n, lambda_r) = ue_densities(p)?;
    let p_a = mainlobe_thinning_prob(p.theta, p.g_s, p.g_m, p.alpha);
    let p_ell = region1_interferer_prob(p.theta, p_a)?;
    let m = CoverageModel::new(p, beta, false)?;
    let s_n = m.near(&opts.quadrature)?;
    let s_r = m.far(&opts.quadrature)?;
    let rate = average_rate(p, beta, opts)?;
    let sinr_coverage = if p.include_noise { Some(coverage_with_noise(p, beta, &opts.quadrature)?) } else { None };
    Ok(AnalyticReport {
        beta,
        r_l,
        r_beta,
        lambda_n,
        lambda_r,
        p_a,
        p_ell,
        s_n,
        s_r,
        s: p.gamma_c * s_n + (1.0 - p.gamma_c) * s_r,
        n_n: mean_load_near(p, beta, opts.load_trigger)?,
        n_r: mean_load_far(p, beta, opts.load_trigger)?,
        rate,
        sinr_coverage,
    })
}

/// Optimal bias and the objective value it attains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasOptimum {
    pub beta: f64,
    pub value: f64,
}

pub const SEARCH_GRID_POINTS: usize = 201;
pub const SEARCH_TOLERANCE: f64 = 1e-4;
/// Below this UE-to-BS density ratio the rate optimum is taken from the
/// coverage optimum, since both mean loads vanish.
pub const ULTRA_DENSE_RATIO: f64 = 1e-3;

fn coverage_objective<'a>(p: &'a ScenarioParams, opts: &AnalyticOptions) -> impl Fn(f64) -> Result<f64> + 'a {
    let q = opts.quadrature;
    move |beta| {
        if p.include_noise {
            coverage_with_noise(p, beta, &q)
        } else {
            coverage(p, beta, &q)
        }
    }
}

/// Coverage-maximizing bias.
///
/// When `R_L tan(theta/2) < d_l` the near-UE coverage freezes inside
/// `[0, 1]`, so coverage is non-decreasing beyond the freeze point and only
/// `[0, freeze]` plus the endpoint `beta = 1` need comparing.
pub fn optimal_bias_coverage(p: &ScenarioParams, opts: &AnalyticOptions) -> Result<BiasOptimum> {
    p.validate()?;
    let s = coverage_objective(p, opts);
    let freeze = near_freeze_bias(p)?;
    if freeze < 1.0 {
        let q = &opts.quadrature;
        let end = if p.include_noise {
            let (s_n, _) = coverage_parts_with_noise(p, freeze, q)?;
            let (_, s_r) = coverage_parts_with_noise(p, 1.0, q)?;
            p.gamma_c * s_n + (1.0 - p.gamma_c) * s_r
        } else {
            p.gamma_c * coverage_near(p, freeze, q)? + (1.0 - p.gamma_c) * coverage_far(p, 1.0, q)?
        };
        let inner = optimize::grid_then_golden(&s, 0.0, freeze, SEARCH_GRID_POINTS, SEARCH_TOLERANCE)?;
        if end > inner.value {
            return Ok(BiasOptimum { beta: 1.0, value: end });
        }
        return Ok(BiasOptimum { beta: inner.x, value: inner.value });
    }
    let Maximum { x, value } = optimize::grid_then_golden(&s, 0.0, 1.0, SEARCH_GRID_POINTS, SEARCH_TOLERANCE)?;
    Ok(BiasOptimum { beta: x, value })
}

/// The rate objective `gamma_c S_n/(1+N_n) + (1-gamma_c) S_r/(1+N_r)`.
/// Biases at which the mean load is undefined evaluate to `-inf`.
pub fn rate_objective(p: &ScenarioParams, beta: f64, opts: &AnalyticOptions) -> Result<f64> {
    match RateTerms::eval(p, beta, opts) {
        Ok(terms) => Ok(terms.objective(p.gamma_c)),
        Err(Error::Domain(_)) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Rate-maximizing bias by search over `[0, 1]`; returns the average rate.
pub fn optimal_bias_rate(p: &ScenarioParams, opts: &AnalyticOptions) -> Result<BiasOptimum> {
    p.validate()?;
    if p.lambda_u / p.lambda_b < ULTRA_DENSE_RATIO {
        let beta = optimal_bias_coverage(p, opts)?.beta;
        return Ok(BiasOptimum { beta, value: average_rate(p, beta, opts)? });
    }
    optimal_bias_rate_search(p, opts)
}

/// Rate optimum from the full search, without the ultra-dense shortcut.
pub fn optimal_bias_rate_search(p: &ScenarioParams, opts: &AnalyticOptions) -> Result<BiasOptimum> {
    let f = |beta| rate_objective(p, beta, opts);
    let m = optimize::grid_then_golden(f, 0.0, 1.0, SEARCH_GRID_POINTS, SEARCH_TOLERANCE)?;
    Ok(BiasOptimum { beta: m.x, value: average_rate(p, m.x, opts)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn q() -> QuadratureSettings {
        QuadratureSettings::default()
    }

    /// Composite Simpson rule; independent of the adaptive integrator.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + h * i as f64;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    fn base() -> ScenarioParams {
        ScenarioParams {
            lambda_b: 400.0,
            lambda_ell: 400.0,
            lambda_u: 2000.0,
            theta: PI / 6.0,
            ..Default::default()
        }
    }

    #[test]
    fn los_distance_examples() {
        let g = crate::scenario::preset("Gangnam").unwrap();
        assert_abs_diff_eq!(los_distance(g.lambda_ell, g.d_l, g.d_w).unwrap(), 62.4, epsilon = 1.0);
        assert_abs_diff_eq!(los_distance(400.0, 30.0, 10.0).unwrap(), 130.76, epsilon = 0.01);
        assert_eq!(los_distance(0.0, 30.0, 10.0), Err(Error::UnboundedLos));
        let mut prev = 0.0;
        for lam in [1000.0, 100.0, 10.0, 1.0, 0.1] {
            let r = los_distance(lam, 30.0, 10.0).unwrap();
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn effective_radius_examples() {
        assert_eq!(effective_mainlobe_radius(130.76, 0.0, 30.0, PI / 4.0).unwrap(), 130.76);
        assert_abs_diff_eq!(effective_mainlobe_radius(130.76, 0.5, 30.0, PI / 4.0).unwrap(), 112.65, epsilon = 0.01);
        assert_eq!(effective_mainlobe_radius(5.0, 1.0, 30.0, PI / 4.0).unwrap(), 0.0);
        assert!(effective_mainlobe_radius(100.0, 0.5, 30.0, PI).is_err());
    }

    #[test]
    fn ue_density_examples() {
        let p = ScenarioParams { lambda_u: 2000.0, gamma_c: 0.6, lambda_ell: 400.0, ..Default::default() };
        let (n, r) = ue_densities(&p).unwrap();
        assert_abs_diff_eq!(n, 16500.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r, 862.745_098, epsilon = 1e-5);
        let (band, indoor) = area_fractions(&p);
        let lhs = n * band + r * (1.0 - band - indoor);
        assert!((lhs - 2000.0 * (1.0 - indoor)).abs() <= 1e-9 * lhs);

        let p0 = ScenarioParams { gamma_c: 0.0, ..p.clone() };
        assert_eq!(ue_densities(&p0).unwrap().0, 0.0);
        let wide = ScenarioParams { d_c: 10_000.0, ..p };
        assert!(matches!(ue_densities(&wide), Err(Error::Domain(_))));
    }

    #[test]
    fn thinning_probability_examples() {
        assert_eq!(mainlobe_thinning_prob(PI / 4.0, 5.0, 5.0, 2.0), 1.0);
        assert_abs_diff_eq!(mainlobe_thinning_prob(2.0 * PI, 1.0, 100.0, 2.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mainlobe_thinning_prob(PI / 4.0, 1.0, 100.0, 2.0), 0.13375, epsilon = 1e-12);
    }

    #[test]
    fn region1_probability_clamps() {
        assert_abs_diff_eq!(region1_dbs_ratio(PI / 6.0), 1.3328, epsilon = 1e-3);
        assert_eq!(region1_interferer_prob(PI / 6.0, 0.1).unwrap(), 1.0);
        assert_eq!(region1_interferer_prob(PI / 3.0, 1.0).unwrap(), 1.0);
        assert!(region1_interferer_prob(PI, 0.2).is_err());
        for theta in [0.05, 0.3, 1.0, 2.0, 3.0] {
            let p_a = mainlobe_thinning_prob(theta, 1.0, 100.0, 2.0);
            let pl = region1_interferer_prob(theta, p_a).unwrap();
            assert!(pl >= p_a && pl <= 1.0);
        }
    }

    #[test]
    fn rayleigh_kernel_examples() {
        assert_eq!(rayleigh_kernel(5.0, 5.0, 1.3, 600.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            rayleigh_kernel(0.0, 100.0, 2.0, 600.0).unwrap(),
            (1.0 - (-6.0 * PI).exp()) / 2.0,
            epsilon = 1e-12
        );
        assert!(rayleigh_kernel(0.0, 1.0, 0.0, 600.0).is_err());
        let lam = 600.0 / M2_PER_KM2;
        let num = integrate(|r| PI * lam * r * (-0.5 * PI * lam * r * r * 2.0).exp(), 0.0, 100.0, &q()).unwrap();
        assert_abs_diff_eq!(num.value, rayleigh_kernel(0.0, 100.0, 2.0, 600.0).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn load_moment_matches_quadrature() {
        for (lb, x) in [(600.0, 2.0), (200.0, 80.0), (1500.0, 300.0)] {
            let lam = lb / M2_PER_KM2;
            let num = simpson(|r| PI * lam * r * r * (-0.5 * PI * lam * r * r).exp(), 0.0, x, 20_000);
            assert_abs_diff_eq!(load_moment(lb, x), num, epsilon = 1e-9);
        }
    }

    #[test]
    fn noise_power_for_500_mhz() {
        assert_abs_diff_eq!(noise_power_dbm(500e6, 10.0), -77.01, epsilon = 0.005);
    }

    #[test]
    fn coverage_threshold_limits() {
        let p = ScenarioParams { t: 1e-9, ..base() };
        let r_l = los_distance(p.lambda_ell, p.d_l, p.d_w).unwrap();
        let lam = p.lambda_b / M2_PER_KM2;
        let far = coverage_far(&p, 0.5, &q()).unwrap();
        assert_abs_diff_eq!(far, 1.0 - (-PI * lam * r_l * r_l).exp(), epsilon = 1e-6);
        let near = coverage_near(&p, 0.5, &q()).unwrap();
        assert_abs_diff_eq!(near, 1.0 - (-0.5 * PI * lam * r_l * r_l).exp(), epsilon = 1e-6);
    }

    #[test]
    fn far_coverage_without_bias_is_rsrp_baseline() {
        let p = base();
        let r_l = los_distance(p.lambda_ell, p.d_l, p.d_w).unwrap();
        let lam = p.lambda_b / M2_PER_KM2;
        let p_a = mainlobe_thinning_prob(p.theta, p.g_s, p.g_m, 2.0);
        let t = p.t;
        let oracle = simpson(
            |r| {
                if r == 0.0 {
                    return 0.0;
                }
                let x = 1.0 + p_a * t * ((t + r_l * r_l / (r * r)) / (1.0 + t)).ln();
                2.0 * PI * lam * r * (-PI * lam * r * r * x).exp()
            },
            0.0,
            r_l,
            200_000,
        );
        assert_abs_diff_eq!(coverage_far(&p, 0.0, &q()).unwrap(), oracle, epsilon = 1e-8);
    }

    #[test]
    fn near_coverage_freezes_past_threshold() {
        let p = ScenarioParams { lambda_ell: 1010.0, d_l: 22.41, d_w: 9.35, ..base() };
        let freeze = near_freeze_bias(&p).unwrap();
        assert!(freeze < 1.0);
        let at = coverage_near(&p, freeze, &q()).unwrap();
        for beta in [freeze + 0.01, 0.5 * (freeze + 1.0), 1.0] {
            assert_abs_diff_eq!(coverage_near(&p, beta, &q()).unwrap(), at, epsilon = 1e-9);
        }
    }

    #[test]
    fn mixture_coverage_is_convex_combination() {
        let p = base();
        let s_n = coverage_near(&p, 0.4, &q()).unwrap();
        let s_r = coverage_far(&p, 0.4, &q()).unwrap();
        let mix = |g: f64| coverage(&ScenarioParams { gamma_c: g, ..p.clone() }, 0.4, &q()).unwrap();
        assert_eq!(mix(0.0), s_r);
        assert_eq!(mix(1.0), s_n);
        assert_abs_diff_eq!(mix(0.6), 0.6 * s_n + 0.4 * s_r, epsilon = 1e-12);
    }

    #[test]
    fn analytic_path_rejects_other_exponents() {
        let p = ScenarioParams { alpha: 2.5, ..base() };
        assert!(matches!(coverage(&p, 0.2, &q()), Err(Error::Domain(_))));
    }

    #[test]
    fn noise_only_lowers_coverage() {
        let quiet = ScenarioParams { noise_figure_db: -300.0, ..base() };
        assert_abs_diff_eq!(
            coverage_with_noise(&quiet, 0.3, &q()).unwrap(),
            coverage(&quiet, 0.3, &q()).unwrap(),
            epsilon = 1e-12
        );
        // Weak transmitter so the SNR factor bites.
        let loud = ScenarioParams { tx_power_dbm: -60.0, ..base() };
        for beta in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let with = coverage_with_noise(&loud, beta, &q()).unwrap();
            let without = coverage(&loud, beta, &q()).unwrap();
            assert!(with <= without + 1e-12, "beta {beta}: {with} > {without}");
        }
        assert!(coverage_with_noise(&loud, 0.5, &q()).unwrap() < coverage(&loud, 0.5, &q()).unwrap() - 1e-3);
    }

    #[test]
    fn cell_area_without_bias() {
        let p = ScenarioParams { lambda_b: 600.0, lambda_ell: 300.0, ..Default::default() };
        let r_l = los_distance(p.lambda_ell, p.d_l, p.d_w).unwrap();
        let (a_c, a_r) = observed_cell_area(&p, 0.0, LoadTrigger::BsDensity).unwrap();
        assert_abs_diff_eq!(a_c, PI * r_l * r_l, epsilon = 1e-9);
        assert_abs_diff_eq!(a_r, PI * (r_l - p.d_c).powi(2), epsilon = 1e-9);
    }

    #[test]
    fn cell_area_matches_shrinkage_integral() {
        let p = ScenarioParams { lambda_b: 600.0, lambda_ell: 300.0, theta: PI / 4.0, d_c: 2.0, ..Default::default() };
        let beta = 0.5;
        let r_l = los_distance(p.lambda_ell, p.d_l, p.d_w).unwrap();
        let rb = effective_mainlobe_radius(r_l, beta, p.d_l, p.theta).unwrap();
        let lam = p.lambda_b / M2_PER_KM2;
        let shrink_c = simpson(|r| 2.0 * PI * lam * r * (r_l - r), rb, r_l, 2000);
        let shrink_r = simpson(|r| 2.0 * PI * lam * r * (r_l - p.d_c - r), rb, r_l - p.d_c, 2000);
        let a_c = (PI * rb * rb).max(PI * r_l * r_l - 0.5 * beta * p.d_l * shrink_c);
        let a_r = (PI * rb * rb).max(PI * (r_l - p.d_c).powi(2) - 0.5 * beta * p.d_l * shrink_r).min(a_c);
        let (got_c, got_r) = observed_cell_area(&p, beta, LoadTrigger::BsDensity).unwrap();
        assert_abs_diff_eq!(got_c, a_c, epsilon = 1e-6 * a_c);
        assert_abs_diff_eq!(got_r, a_r, epsilon = 1e-6 * a_r);
    }

    #[test]
    fn far_load_without_bias() {
        let p = ScenarioParams { lambda_b: 600.0, lambda_ell: 400.0, lambda_u: 2000.0, gamma_c: 0.6, ..Default::default() };
        assert_abs_diff_eq!(mean_load_far(&p, 0.0, LoadTrigger::BsDensity).unwrap(), 1.28 * 862.745_098 / 600.0, epsilon = 1e-6);
        assert_abs_diff_eq!(mean_load_far(&p, 0.0, LoadTrigger::BsDensity).unwrap(), 1.841, epsilon = 1e-3);
    }

    #[test]
    fn loads_vanish_with_ue_density() {
        let p = ScenarioParams { lambda_u: 1e-9, ..base() };
        for beta in [0.0, 0.5, 1.0] {
            assert!(mean_load_far(&p, beta, LoadTrigger::BsDensity).unwrap() < 1e-9);
            assert!(mean_load_near(&p, beta, LoadTrigger::BsDensity).unwrap() < 1e-9);
        }
    }

    #[test]
    fn near_load_equals_far_load_without_bias() {
        for lam_ell in [100.0, 400.0, 1000.0] {
            let p = ScenarioParams { lambda_ell: lam_ell, ..base() };
            let n_r = mean_load_far(&p, 0.0, LoadTrigger::BsDensity).unwrap();
            assert_abs_diff_eq!(mean_load_near(&p, 0.0, LoadTrigger::BsDensity).unwrap(), n_r, epsilon = 1e-12 * n_r);
        }
    }

    #[test]
    fn far_load_undefined_when_radius_vanishes() {
        let p = ScenarioParams { lambda_ell: 1500.0, theta: PI / 6.0, ..base() };
        assert!(matches!(mean_load_far(&p, 1.0, LoadTrigger::BsDensity), Err(Error::Domain(_))));
        assert_eq!(rate_objective(&p, 1.0, &AnalyticOptions::default()).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn printed_trigger_differs_from_default() {
        let p = base();
        let a = mean_load_far(&p, 0.3, LoadTrigger::BsDensity).unwrap();
        let b = mean_load_far(&p, 0.3, LoadTrigger::Printed).unwrap();
        assert!((a - b).abs() > 1e-6);
    }

    #[test]
    fn rate_reductions() {
        let opts = AnalyticOptions::default();
        let p = ScenarioParams { gamma_c: 0.0, ..base() };
        let beta = 0.4;
        let expect = p.bandwidth_w * coverage_far(&p, beta, &q()).unwrap() * (1.0 + p.t).log2()
            / (1.0 + mean_load_far(&p, beta, LoadTrigger::BsDensity).unwrap());
        assert_abs_diff_eq!(average_rate(&p, beta, &opts).unwrap(), expect, epsilon = 1e-6 * expect);

        let tiny = ScenarioParams { t: 1e-9, ..base() };
        assert!(average_rate(&tiny, 0.5, &opts).unwrap() < 1.0);
    }

    #[test]
    fn coverage_optimum_for_far_users_is_full_bias() {
        let opts = AnalyticOptions::default();
        for lam_ell in [200.0, 1010.0] {
            let p = ScenarioParams { gamma_c: 0.0, lambda_ell: lam_ell, ..base() };
            let best = optimal_bias_coverage(&p, &opts).unwrap();
            assert_eq!(best.beta, 1.0, "lambda_ell {lam_ell}");
        }
    }

    #[test]
    fn report_row_has_thirteen_columns() {
        let r = report(&base(), &AnalyticOptions::default()).unwrap();
        assert_eq!(r.csv_row().split(',').count(), 13);
        assert_eq!(AnalyticReport::CSV_HEADER.split(',').count(), 13);
        assert!(r.r_beta <= r.r_l);
        assert!(r.sinr_coverage.is_none());
    }
}
