//! Command-line frontend: analytic reports, simulations, parameter sweeps,
//! optimal-bias searches and the city preset table, all as CSV.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use mmwlab::analytic::{self, AnalyticOptions, AnalyticReport, LoadTrigger};
use mmwlab::scenario::{self, ScenarioParams};
use mmwlab::simulate::{self, EstimateSummary, SimMode, SimOptions};

pub const SCHEMA_VERSION: u32 = 1;
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "mmwlab", version, about = "Building-aware mmWave association: analysis and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic report at one bias.
    Analytic(AnalyticArgs),
    /// Monte Carlo estimate at one bias.
    Simulate(SimulateArgs),
    /// Sweep one parameter over a grid with one or more engines.
    Sweep(SweepArgs),
    /// Coverage- or rate-optimal association bias.
    OptimalBeta(OptimalArgs),
    /// The city building-statistics table.
    Presets(PresetArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Scenario file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Association bias, overriding the config.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Use the typeset reading of the O-BS expansion rule in the load model.
    #[arg(long)]
    pub literal_eq9: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    Losball,
}

impl From<ModeArg> for SimMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => SimMode::FullGeometry,
            ModeArg::Losball => SimMode::LosBall,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "full")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 10_000)]
    pub drops: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Plain max-RSRP association instead of the building-aware scheme.
    #[arg(long)]
    pub baseline: bool,
    /// Idle BSs interfere with a random or wall-facing beam.
    #[arg(long)]
    pub always_transmit: bool,
    /// Per-drop trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Coverage,
    Rate,
}

#[derive(Debug, Args)]
pub struct OptimalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "rate")]
    pub objective: ObjectiveArg,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    /// Machine-readable CSV instead of an aligned table.
    #[arg(long)]
    pub csv: bool,
    /// Header only.
    #[arg(long)]
    pub no_rows: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SweepKey {
    Beta,
    LambdaEll,
    Theta,
    GammaC,
    LambdaB,
    Alpha,
    T,
}

impl SweepKey {
    pub fn name(self) -> &'static str {
        match self {
            SweepKey::Beta => "beta",
            SweepKey::LambdaEll => "lambda_ell",
            SweepKey::Theta => "theta",
            SweepKey::GammaC => "gamma_c",
            SweepKey::LambdaB => "lambda_b",
            SweepKey::Alpha => "alpha",
            SweepKey::T => "t",
        }
    }

    pub fn apply(self, p: &mut ScenarioParams, v: f64) {
        match self {
            SweepKey::Beta => p.beta = v,
            SweepKey::LambdaEll => p.lambda_ell = v,
            SweepKey::Theta => p.theta = v,
            SweepKey::GammaC => p.gamma_c = v,
            SweepKey::LambdaB => p.lambda_b = v,
            SweepKey::Alpha => p.alpha = v,
            SweepKey::T => p.t = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Analytic,
    SimFull,
    SimLosball,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::SimFull => "sim-full",
            Engine::SimLosball => "sim-losball",
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub key: SweepKey,
    #[arg(long)]
    pub start: f64,
    #[arg(long)]
    pub stop: f64,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "analytic")]
    pub engines: Vec<Engine>,
    #[arg(long, default_value_t = 2_000)]
    pub drops: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add `rate(beta*) / rate(0)` per point.
    #[arg(long)]
    pub rate_gain: bool,
}

/// A failure carrying its process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }
}

impl From<mmwlab::Error> for CliError {
    fn from(e: mmwlab::Error) -> Self {
        let code = if e.is_numeric() { EXIT_NUMERIC } else { EXIT_CONFIG };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Output goes to `stdout` unless `--out` is given.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(stderr, "{e}") } else { write!(stdout, "{e}") };
            return code;
        }
    };
    match execute(&cli.command, stderr) {
        Ok((text, out)) => match emit(&text, out.as_deref(), stdout) {
            Ok(()) => EXIT_OK,
            Err(e) => report(stderr, e),
        },
        Err(e) => report(stderr, e),
    }
}

fn report(stderr: &mut dyn Write, e: CliError) -> i32 {
    let _ = writeln!(stderr, "error: {}", e.message);
    e.code
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn execute(cmd: &Command, stderr: &mut dyn Write) -> CliResult<(String, Option<PathBuf>)> {
    match cmd {
        Command::Analytic(a) => Ok((cmd_analytic(a)?, a.common.out.clone())),
        Command::Simulate(a) => Ok((cmd_simulate(a)?, a.common.out.clone())),
        Command::Sweep(a) => {
            let text = cmd_sweep(a)?;
            let rows = text.lines().filter(|l| !l.starts_with('#')).count().saturating_sub(1);
            let _ = writeln!(stderr, "sweep: {rows} rows");
            Ok((text, a.common.out.clone()))
        }
        Command::OptimalBeta(a) => Ok((cmd_optimal_beta(a)?, a.common.out.clone())),
        Command::Presets(a) => Ok((cmd_presets(a), None)),
    }
}

/// Loads the config (or defaults), applies `--beta` and validates.
pub fn load_params(common: &CommonArgs) -> CliResult<ScenarioParams> {
    let mut p = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ScenarioParams::from_config_str(&text)?
        }
        None => ScenarioParams::default(),
    };
    if let Some(b) = common.beta {
        p.beta = b;
    }
    p.validate()?;
    Ok(p)
}

fn analytic_options(common: &CommonArgs) -> AnalyticOptions {
    AnalyticOptions {
        load_trigger: if common.literal_eq9 { LoadTrigger::Printed } else { LoadTrigger::BsDensity },
        ..Default::default()
    }
}

/// The provenance comment line opening every CSV.
pub fn header_line(p: &ScenarioParams, seed: Option<u64>, extra: &[(&str, String)]) -> String {
    let mut s = format!("# mmwlab {} schema={}", env!("CARGO_PKG_VERSION"), SCHEMA_VERSION);
    match seed {
        Some(v) => {
            let _ = write!(s, " seed={v}");
        }
        None => s.push_str(" seed=none"),
    }
    for (k, v) in extra {
        let _ = write!(s, " {k}={v}");
    }
    for (k, v) in p.config_pairs() {
        let _ = write!(s, " {k}={v}");
    }
    s.push('\n');
    s
}

pub fn cmd_analytic(a: &AnalyticArgs) -> CliResult<String> {
    let p = load_params(&a.common)?;
    let opts = analytic_options(&a.common);
    let r = analytic::report(&p, &opts)?;
    let mut s = header_line(&p, None, &[("literal_eq9", a.common.literal_eq9.to_string())]);
    s.push_str(AnalyticReport::CSV_HEADER);
    s.push('\n');
    s.push_str(&r.csv_row());
    s.push('\n');
    Ok(s)
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<String> {
    let p = load_params(&a.common)?;
    if a.drops < 2 {
        return Err(CliError::config(format!("--drops must be at least 2, got {}", a.drops)));
    }
    let opts = SimOptions {
        mode: a.mode.into(),
        scheme: if a.baseline { simulate::Scheme::RsrpBaseline } else { simulate::Scheme::BuildingAware },
        always_transmit: a.always_transmit,
        analytic: analytic_options(&a.common),
        ..Default::default()
    };
    let samples = simulate::run_drops(&p, &opts, a.drops, a.seed)?;
    if let Some(path) = &a.trace {
        std::fs::write(path, simulate::trace_csv(&samples)).map_err(|e| CliError::io(path, e))?;
    }
    let summary = EstimateSummary::from_samples(&samples);
    let extra = [
        ("mode", format!("{:?}", a.mode).to_lowercase()),
        ("drops", a.drops.to_string()),
        ("baseline", a.baseline.to_string()),
        ("always_transmit", a.always_transmit.to_string()),
    ];
    let mut s = header_line(&p, Some(a.seed), &extra);
    let _ = writeln!(s, "beta,{}", EstimateSummary::CSV_HEADER);
    let _ = writeln!(s, "{},{}", p.beta, summary.csv_row());
    Ok(s)
}

pub fn cmd_optimal_beta(a: &OptimalArgs) -> CliResult<String> {
    let p = load_params(&a.common)?;
    let opts = analytic_options(&a.common);
    let (name, best) = match a.objective {
        ObjectiveArg::Coverage => ("coverage", analytic::optimal_bias_coverage(&p, &opts)?),
        ObjectiveArg::Rate => ("rate", analytic::optimal_bias_rate(&p, &opts)?),
    };
    let mut s = header_line(&p, None, &[("objective", name.to_string())]);
    s.push_str("objective,beta,value\n");
    let _ = writeln!(s, "{name},{},{}", best.beta, best.value);
    Ok(s)
}

pub fn cmd_presets(a: &PresetArgs) -> String {
    let mut s = String::new();
    if a.csv {
        s.push_str("city,lambda_ell,d_l,d_w,los_distance_m\n");
    } else {
        let _ = writeln!(s, "{:<10} {:>10} {:>8} {:>8} {:>14}", "city", "lambda_ell", "d_l", "d_w", "los_distance_m");
    }
    if a.no_rows {
        return s;
    }
    for c in scenario::presets() {
        if a.csv {
            let _ = writeln!(s, "{},{},{},{},{}", c.name(), c.lambda_ell, c.d_l, c.d_w, c.reference_los_m);
        } else {
            let _ = writeln!(
                s,
                "{:<10} {:>10} {:>8} {:>8} {:>14}",
                c.name(),
                c.lambda_ell,
                c.d_l,
                c.d_w,
                c.reference_los_m
            );
        }
    }
    s
}

pub const SWEEP_HEADER: &str = "key,value,engine,status,beta,s,s_se,rate,rate_se,rate_gain";

/// One sweep row's numbers; `None` renders as an empty field.
#[derive(Debug, Clone, Copy, Default)]
struct SweepCells {
    s: Option<f64>,
    s_se: Option<f64>,
    rate: Option<f64>,
    rate_se: Option<f64>,
    rate_gain: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sweep_point(p: &ScenarioParams, engine: Engine, a: &SweepArgs, opts: &AnalyticOptions) -> mmwlab::Result<SweepCells> {
    p.validate()?;
    let gain_beta = if a.rate_gain { Some(analytic::optimal_bias_rate(p, opts)?.beta) } else { None };
    match engine {
        Engine::Analytic => {
            let s = analytic::coverage(p, p.beta, &opts.quadrature)?;
            let rate = analytic::average_rate(p, p.beta, opts)?;
            let rate_gain = match gain_beta {
                Some(b) => Some(analytic::average_rate(p, b, opts)? / analytic::average_rate(p, 0.0, opts)?),
                None => None,
            };
            Ok(SweepCells { s: Some(s), rate: Some(rate), rate_gain, ..Default::default() })
        }
        Engine::SimFull | Engine::SimLosball => {
            let sim = SimOptions {
                mode: if engine == Engine::SimFull { SimMode::FullGeometry } else { SimMode::LosBall },
                analytic: *opts,
                ..Default::default()
            };
            let e = simulate::estimate(p, &sim, a.drops, a.seed)?;
            let rate_gain = match gain_beta {
                Some(b) => {
                    let at = simulate::estimate(&p.with_beta(b), &sim, a.drops, a.seed)?;
                    let zero = simulate::estimate(&p.with_beta(0.0), &sim, a.drops, a.seed)?;
                    Some(at.rate.mean / zero.rate.mean)
                }
                None => None,
            };
            Ok(SweepCells {
                s: Some(e.coverage.mean),
                s_se: Some(e.coverage.stderr),
                rate: Some(e.rate.mean),
                rate_se: Some(e.rate.stderr),
                rate_gain,
            })
        }
    }
}

pub fn cmd_sweep(a: &SweepArgs) -> CliResult<String> {
    let base = load_params(&a.common)?;
    if a.steps < 2 {
        return Err(CliError::config(format!("--steps must be at least 2, got {}", a.steps)));
    }
    if !(a.start < a.stop) {
        return Err(CliError::config(format!("--start ({}) must be below --stop ({})", a.start, a.stop)));
    }
    if a.engines.is_empty() {
        return Err(CliError::config("--engines must name at least one engine"));
    }
    if a.drops < 2 && a.engines.iter().any(|e| *e != Engine::Analytic) {
        return Err(CliError::config(format!("--drops must be at least 2, got {}", a.drops)));
    }
    let opts = analytic_options(&a.common);
    let values: Vec<f64> = (0..a.steps)
        .map(|i| if i + 1 == a.steps { a.stop } else { a.start + (a.stop - a.start) * i as f64 / (a.steps - 1) as f64 })
        .collect();
    let jobs: Vec<(f64, Engine)> = values.iter().flat_map(|&v| a.engines.iter().map(move |&e| (v, e))).collect();
    let results: Vec<(f64, Engine, ScenarioParams, mmwlab::Result<SweepCells>)> = jobs
        .par_iter()
        .map(|&(v, e)| {
            let mut p = base.clone();
            a.key.apply(&mut p, v);
            let r = sweep_point(&p, e, a, &opts);
            (v, e, p, r)
        })
        .collect();

    if let Some(first_err) = results.iter().find_map(|r| r.3.as_ref().err()) {
        if results.iter().all(|r| r.3.is_err()) {
            return Err(first_err.clone().into());
        }
    }

    let extra = [
        ("sweep_key", a.key.name().to_string()),
        ("start", a.start.to_string()),
        ("stop", a.stop.to_string()),
        ("steps", a.steps.to_string()),
        ("engines", a.engines.iter().map(|e| e.name()).collect::<Vec<_>>().join("+")),
        ("drops", a.drops.to_string()),
        ("rate_gain", a.rate_gain.to_string()),
        ("literal_eq9", a.common.literal_eq9.to_string()),
    ];
    let seed = a.engines.iter().any(|e| *e != Engine::Analytic).then_some(a.seed);
    let mut s = header_line(&base, seed, &extra);
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for (v, e, p, r) in &results {
        let (status, c) = match r {
            Ok(c) => ("ok".to_string(), *c),
            Err(err) => (format!("error: {}", err.to_string().replace([',', '\n'], ";")), SweepCells::default()),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            a.key.name(),
            v,
            e.name(),
            status,
            p.beta,
            cell(c.s),
            cell(c.s_se),
            cell(c.rate),
            cell(c.rate_se),
            cell(c.rate_gain)
        );
    }
    Ok(s)
}

/// Sizes the global worker pool from `MMWLAB_THREADS` when set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("MMWLAB_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}
