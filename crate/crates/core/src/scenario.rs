//! Scenario parameters, validation, and the city building presets.
//!
//! Densities are carried per km², lengths in metres, angles in radians and
//! antenna gains as linear ratios. Decibels only appear in the config file
//! format (see [`ScenarioParams::from_config_str`]).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Every model constant for one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    /// BS density, per km².
    pub lambda_b: f64,
    /// Building density, per km².
    pub lambda_ell: f64,
    /// Total UE intensity, per km².
    pub lambda_u: f64,
    /// Building length, m.
    pub d_l: f64,
    /// Building width, m.
    pub d_w: f64,
    /// Width of the near-building band, m.
    pub d_c: f64,
    /// Fraction of UEs located in the near-building band.
    pub gamma_c: f64,
    /// Half-power beamwidth, rad.
    pub theta: f64,
    /// Main-lobe gain, linear.
    pub g_m: f64,
    /// Side-lobe gain, linear.
    pub g_s: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// SIR threshold, linear.
    pub t: f64,
    /// System bandwidth, Hz.
    pub bandwidth_w: f64,
    /// Association bias in [0, 1]; zero disables the building-aware scheme.
    pub beta: f64,
    pub tx_power_dbm: f64,
    pub include_noise: bool,
    pub noise_figure_db: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            lambda_b: 600.0,
            lambda_ell: 400.0,
            lambda_u: 2000.0,
            d_l: 30.0,
            d_w: 10.0,
            d_c: 2.0,
            gamma_c: 0.6,
            theta: PI / 4.0,
            g_m: db_to_linear(20.0),
            g_s: db_to_linear(0.0),
            alpha: 2.0,
            t: db_to_linear(10.0),
            bandwidth_w: 500.0e6,
            beta: 0.5,
            tx_power_dbm: 23.0,
            include_noise: false,
            noise_figure_db: 10.0,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// One violated constraint reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Result of [`validate`]: empty violation list means the scenario is usable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationOutcome {
    pub violations: Vec<Violation>,
}

impl ValidationOutcome {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Invalid(self.violations))
        }
    }
}

/// Checks every parameter constraint and lists all that fail.
pub fn validate(p: &ScenarioParams) -> ValidationOutcome {
    let mut out = Vec::new();
    let mut fail = |field: &'static str, message: String| out.push(Violation { field, message });

    let all = [
        ("lambda_b", p.lambda_b),
        ("lambda_ell", p.lambda_ell),
        ("lambda_u", p.lambda_u),
        ("d_l", p.d_l),
        ("d_w", p.d_w),
        ("d_c", p.d_c),
        ("gamma_c", p.gamma_c),
        ("theta", p.theta),
        ("g_m", p.g_m),
        ("g_s", p.g_s),
        ("alpha", p.alpha),
        ("t", p.t),
        ("bandwidth_w", p.bandwidth_w),
        ("beta", p.beta),
        ("tx_power_dbm", p.tx_power_dbm),
        ("noise_figure_db", p.noise_figure_db),
    ];
    for (name, v) in all {
        if !v.is_finite() {
            fail(name, format!("must be finite, got {v}"));
        }
    }

    for (name, v) in [
        ("lambda_b", p.lambda_b),
        ("lambda_ell", p.lambda_ell),
        ("lambda_u", p.lambda_u),
    ] {
        if v.is_finite() && v <= 0.0 {
            fail(name, format!("density must be > 0, got {v}"));
        }
    }
    if p.d_w <= 0.0 {
        fail("d_w", format!("must be > 0, got {}", p.d_w));
    }
    if p.d_l <= p.d_w {
        fail("d_l", format!("must exceed d_w ({} <= {})", p.d_l, p.d_w));
    }
    if p.d_c <= 0.0 {
        fail("d_c", format!("must be > 0, got {}", p.d_c));
    }
    let indoor = p.lambda_ell * p.d_l * p.d_w;
    if indoor >= crate::M2_PER_KM2 {
        fail(
            "lambda_ell",
            format!("indoor area fraction lambda_ell*d_l*d_w = {} must be < 1", indoor / crate::M2_PER_KM2),
        );
    }
    if !(0.0..=1.0).contains(&p.gamma_c) {
        fail("gamma_c", format!("must lie in [0, 1], got {}", p.gamma_c));
    }
    if !(0.0..=1.0).contains(&p.beta) {
        fail("beta", format!("must lie in [0, 1], got {}", p.beta));
    }
    if !(p.theta > 0.0 && p.theta <= 2.0 * PI) {
        fail("theta", format!("must lie in (0, 2pi], got {}", p.theta));
    }
    if p.g_m <= 0.0 {
        fail("g_m", format!("must be > 0, got {}", p.g_m));
    }
    if p.g_s < 0.0 {
        fail("g_s", format!("must be >= 0, got {}", p.g_s));
    }
    if p.g_s > p.g_m {
        fail("g_s", format!("side lobe exceeds main lobe ({} > {})", p.g_s, p.g_m));
    }
    if p.alpha < 2.0 {
        fail("alpha", format!("must be >= 2, got {}", p.alpha));
    }
    if p.t <= 0.0 {
        fail("t", format!("must be > 0, got {}", p.t));
    }
    if p.bandwidth_w <= 0.0 {
        fail("bandwidth_w", format!("must be > 0, got {}", p.bandwidth_w));
    }
    ValidationOutcome { violations: out }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        validate(self).into_result()
    }

    pub fn with_city(mut self, city: &CityPreset) -> Self {
        self.lambda_ell = city.lambda_ell;
        self.d_l = city.d_l;
        self.d_w = city.d_w;
        self
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self { beta, ..self.clone() }
    }

    /// Reads the flat `key = value` config format.
    ///
    /// Keys are the field names of this struct plus `city`, which applies a
    /// preset before the remaining keys regardless of where it appears.
    /// `g_m` and `g_s` are given in dB. Unknown keys and malformed lines are
    /// errors. The result is not validated.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            entries.push((line_no, key.trim().to_string(), value.trim().to_string()));
        }

        let mut params = ScenarioParams::default();
        for (line, key, value) in entries.iter().filter(|(_, k, _)| k == "city") {
            let city = preset(value).map_err(|e| Error::Config {
                line: *line,
                message: format!("{key}: {e}"),
            })?;
            params = params.with_city(&city);
        }
        for (line, key, value) in entries.iter().filter(|(_, k, _)| k != "city") {
            params
                .set_config_value(key, value)
                .map_err(|message| Error::Config { line: *line, message })?;
        }
        Ok(params)
    }

    fn set_config_value(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| format!("{key}: `{value}` is not a number"))
        };
        match key {
            "lambda_b" => self.lambda_b = num()?,
            "lambda_ell" => self.lambda_ell = num()?,
            "lambda_u" => self.lambda_u = num()?,
            "d_l" => self.d_l = num()?,
            "d_w" => self.d_w = num()?,
            "d_c" => self.d_c = num()?,
            "gamma_c" => self.gamma_c = num()?,
            "theta" => self.theta = num()?,
            "g_m" => self.g_m = db_to_linear(num()?),
            "g_s" => self.g_s = db_to_linear(num()?),
            "alpha" => self.alpha = num()?,
            "t" => self.t = num()?,
            "bandwidth_w" => self.bandwidth_w = num()?,
            "beta" => self.beta = num()?,
            "tx_power_dbm" => self.tx_power_dbm = num()?,
            "noise_figure_db" => self.noise_figure_db = num()?,
            "include_noise" => {
                self.include_noise = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(format!("{key}: `{value}` is not a boolean")),
                }
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Renders the config format; parsing the output yields `self` again.
    pub fn to_config_string(&self) -> String {
        self.config_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// `key=value` pairs in field order, gains in dB.
    pub fn config_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lambda_b", self.lambda_b.to_string()),
            ("lambda_ell", self.lambda_ell.to_string()),
            ("lambda_u", self.lambda_u.to_string()),
            ("d_l", self.d_l.to_string()),
            ("d_w", self.d_w.to_string()),
            ("d_c", self.d_c.to_string()),
            ("gamma_c", self.gamma_c.to_string()),
            ("theta", self.theta.to_string()),
            ("g_m", linear_to_db(self.g_m).to_string()),
            ("g_s", linear_to_db(self.g_s).to_string()),
            ("alpha", self.alpha.to_string()),
            ("t", self.t.to_string()),
            ("bandwidth_w", self.bandwidth_w.to_string()),
            ("beta", self.beta.to_string()),
            ("tx_power_dbm", self.tx_power_dbm.to_string()),
            ("include_noise", self.include_noise.to_string()),
            ("noise_figure_db", self.noise_figure_db.to_string()),
        ]
    }

    pub(crate) fn lambda_b_m2(&self) -> f64 {
        self.lambda_b / crate::M2_PER_KM2
    }

    pub(crate) fn lambda_ell_m2(&self) -> f64 {
        self.lambda_ell / crate::M2_PER_KM2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum City {
    Manhattan,
    Gangnam,
    Chicago,
}

impl City {
    pub const ALL: [City; 3] = [City::Manhattan, City::Gangnam, City::Chicago];

    pub fn name(self) -> &'static str {
        match self {
            City::Manhattan => "Manhattan",
            City::Gangnam => "Gangnam",
            City::Chicago => "Chicago",
        }
    }
}

impl FromStr for City {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        City::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Published building statistics for one city.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CityPreset {
    pub city: City,
    /// Buildings per km².
    pub lambda_ell: f64,
    /// Average building length, m.
    pub d_l: f64,
    /// Average building width, m.
    pub d_w: f64,
    /// Published average LOS distance, m.
    pub reference_los_m: f64,
}

impl CityPreset {
    pub fn name(&self) -> &'static str {
        self.city.name()
    }
}

const PRESETS: [CityPreset; 3] = [
    CityPreset { city: City::Manhattan, lambda_ell: 1467.0, d_l: 26.5, d_w: 20.83, reference_los_m: 23.12 },
    CityPreset { city: City::Gangnam, lambda_ell: 1010.0, d_l: 22.41, d_w: 9.35, reference_los_m: 62.40 },
    CityPreset { city: City::Chicago, lambda_ell: 474.0, d_l: 36.35, d_w: 21.48, reference_los_m: 69.74 },
];

/// All shipped presets, in table order (Manhattan, Gangnam, Chicago).
pub fn presets() -> &'static [CityPreset] {
    &PRESETS
}

pub fn preset(name: &str) -> Result<CityPreset> {
    let city: City = name.parse()?;
    Ok(*PRESETS.iter().find(|p| p.city == city).expect("every city has a preset"))
}
