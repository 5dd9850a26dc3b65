//! Command-line front end: `rate`, `scan`, `optimize`, `simulate` and
//! `calibrate`.
//!
//! Every subcommand accepts `--config FILE` with flat `key=value` lines
//! (see [`config`]); flags on the command line override the file. Exit codes
//! are 0 on success, 2 for invalid input or domain errors and 3 for I/O
//! failures.

pub mod config;
pub mod csv;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bounds::{mutual_info_ab, RecastingParty, ScenarioSpec};
use crate::model::{ChannelParams, Direction, FiberModel, KeyRatePoint, ProtocolParams, STANDARD_ATTENUATION_DB_PER_KM};
use crate::scan::{evaluate_policy, run_scan, Flag, Geometry, ScanSpec, VariancePolicy};
use crate::simulate::{
    analytic_recast_variance, batch_moments, calibrate, empirical_mutual_info, estimate_channels, simulate_protocol,
    NoiseAllocation, SampleBatch,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn io_err(what: &str) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{what}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "cvmdi", version, about = "Continuous-variable MDI-QKD key rates and simulation")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Key-rate decomposition for one scenario.
    #[command(allow_negative_numbers = true)]
    Rate(RateArgs),
    /// Key rate over a distance grid, written as CSV.
    #[command(allow_negative_numbers = true)]
    Scan(ScanArgs),
    /// Optimal modulation variance for one scenario.
    #[command(allow_negative_numbers = true)]
    Optimize(RateArgs),
    /// Monte Carlo run with parameter estimation.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Local-oscillator phase calibration.
    #[command(allow_negative_numbers = true)]
    Calibrate(CalibrateArgs),
}

/// Protocol options shared by every key-rate command.
#[derive(Debug, Clone, Args)]
pub struct ProtocolArgs {
    /// Reconciliation direction: dr or rr.
    #[arg(long, default_value = "rr", value_parser = parse_direction)]
    pub dir: Direction,
    /// Reconciliation efficiency in (0, 1].
    #[arg(long, default_value_t = 0.95)]
    pub beta: f64,
    /// Relay detector efficiency in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Relay electronic noise, shot-noise units.
    #[arg(long = "v-el", default_value_t = 0.0)]
    pub v_el: f64,
    /// Party that recasts its data: alice or bob.
    #[arg(long, default_value = "bob", value_parser = parse_recaster)]
    pub recaster: RecastingParty,
    /// Fiber attenuation, dB/km.
    #[arg(long, default_value_t = STANDARD_ATTENUATION_DB_PER_KM)]
    pub attenuation: f64,
    /// Flat key=value file; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// One scenario. Each leg is given either by a transmission or by a fiber
/// length; `--symmetric-km` sets both legs to half the total distance.
#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Alice–Charlie transmission.
    #[arg(long)]
    pub t1: Option<f64>,
    /// Bob–Charlie transmission.
    #[arg(long)]
    pub t2: Option<f64>,
    /// Alice–Charlie fiber length, km.
    #[arg(long = "km-a")]
    pub km_a: Option<f64>,
    /// Bob–Charlie fiber length, km.
    #[arg(long = "km-b")]
    pub km_b: Option<f64>,
    /// Total distance with the relay in the middle, km.
    #[arg(long = "symmetric-km")]
    pub symmetric_km: Option<f64>,
    /// Excess noise on both channels.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long = "eps-a")]
    pub eps_a: Option<f64>,
    #[arg(long = "eps-b")]
    pub eps_b: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Total variance V, `optimal` or `asymptotic`.
    #[arg(long, default_value = "optimal", value_parser = parse_policy)]
    pub v: VariancePolicy,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// symmetric, near-alice, near-bob or custom:A:B.
    #[arg(long, default_value = "symmetric", value_parser = parse_geometry)]
    pub geometry: Geometry,
    /// Total distances: `start:stop:step` or a comma list, km.
    #[arg(long, default_value = "0:30:1", value_parser = parse_grid)]
    pub distances: Grid,
    /// Comma list of excess-noise values.
    #[arg(long = "eps-list", default_value = "0,0.005,0.01,0.015", value_parser = parse_list)]
    pub eps_list: Grid,
    /// Total variance V, `optimal` or `asymptotic`.
    #[arg(long, default_value = "optimal", value_parser = parse_policy)]
    pub v: VariancePolicy,
    /// Output CSV path; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Total variance V.
    #[arg(long, default_value_t = 11.0)]
    pub v: f64,
    /// Number of pulses.
    #[arg(long, default_value_t = 1_000_000)]
    pub count: usize,
    #[arg(long, env = "CVMDI_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Declare equal excess noise on both channels.
    #[arg(long = "symmetric-noise")]
    pub symmetric_noise: bool,
    /// Also recast with the estimated Bob–Charlie transmission.
    #[arg(long = "estimated-recast")]
    pub estimated_recast: bool,
    /// Per-pulse CSV dump.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// Alice's LO phase, radians; random when absent.
    #[arg(long = "theta-a")]
    pub theta_a: Option<f64>,
    /// Bob's LO phase, radians; random when absent.
    #[arg(long = "theta-b")]
    pub theta_b: Option<f64>,
    /// Bob's modulation phase, radians; random when absent.
    #[arg(long = "phi-b")]
    pub phi_b: Option<f64>,
    /// LO intensity |α|².
    #[arg(long, default_value_t = 1.0)]
    pub intensity: f64,
    /// Number of randomized rounds, seeds `seed..seed+trials`.
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
    #[arg(long, env = "CVMDI_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// A list of numbers given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn parse_direction(s: &str) -> Result<Direction, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_recaster(s: &str) -> Result<RecastingParty, String> {
    match s.to_ascii_lowercase().as_str() {
        "alice" => Ok(RecastingParty::Alice),
        "bob" => Ok(RecastingParty::Bob),
        _ => Err(format!("unknown recasting party `{s}` (use alice or bob)")),
    }
}

fn parse_geometry(s: &str) -> Result<Geometry, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<VariancePolicy, String> {
    match s.to_ascii_lowercase().as_str() {
        "optimal" => Ok(VariancePolicy::Optimal),
        "asymptotic" => Ok(VariancePolicy::Asymptotic),
        other => other
            .parse::<f64>()
            .map(VariancePolicy::Fixed)
            .map_err(|_| format!("expected a number, `optimal` or `asymptotic`, got `{s}`")),
    }
}

fn parse_list(s: &str) -> Result<Grid, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Grid(Vec::new()));
    }
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("invalid number `{}`", x.trim())))
        .collect::<Result<_, _>>()
        .map(Grid)
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return parse_list(s);
    }
    let p: Vec<f64> = parts
        .iter()
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("invalid number `{}`", x.trim())))
        .collect::<Result<_, _>>()?;
    let (start, stop, step) = (p[0], p[1], p[2]);
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(format!("invalid range `{s}`: need start <= stop and step > 0"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok(Grid((0..n).map(|i| start + step * i as f64).collect()))
}

impl ProtocolArgs {
    fn protocol(&self, v: f64) -> Result<ProtocolParams, CliError> {
        Ok(ProtocolParams::with_total_variance(v, self.beta, self.dir)?.with_detector(self.eta, self.v_el)?)
    }
}

impl ScenarioArgs {
    /// Both channels `(T, ε)`; a leg given as 0 km carries no excess noise.
    fn channels(&self) -> Result<(ChannelParams, ChannelParams), CliError> {
        let att = self.protocol.attenuation;
        let fiber = |km: f64| FiberModel::new(att, km).map(|f| f.transmission());
        let (ta, tb, from_fiber) = match self.symmetric_km {
            Some(d) => {
                let t = fiber(d / 2.0)?;
                (Some(t), Some(t), (true, true))
            }
            None => (
                self.km_a.map(fiber).transpose()?.or(self.t1),
                self.km_b.map(fiber).transpose()?.or(self.t2),
                (self.km_a.is_some(), self.km_b.is_some()),
            ),
        };
        let ta = ta.ok_or_else(|| CliError::Validation("Alice's channel needs --t1, --km-a or --symmetric-km".into()))?;
        let tb = tb.ok_or_else(|| CliError::Validation("Bob's channel needs --t2, --km-b or --symmetric-km".into()))?;
        let eps_a = self.eps_a.or(self.eps).unwrap_or(0.0);
        let eps_b = self.eps_b.or(self.eps).unwrap_or(0.0);
        let leg = |t: f64, eps: f64, fiber: bool| {
            let eps = if fiber && t >= 1.0 { 0.0 } else { eps };
            ChannelParams::new(t, eps)
        };
        Ok((leg(ta, eps_a, from_fiber.0)?, leg(tb, eps_b, from_fiber.1)?))
    }

    fn scenario(&self, v: f64) -> Result<ScenarioSpec, CliError> {
        let (a, b) = self.channels()?;
        Ok(ScenarioSpec::with_recaster(a, b, self.protocol.protocol(v)?, self.protocol.recaster)?)
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let code = match expand_config(args).and_then(|a| parse(a, out, err)) {
        Ok(Some(cli)) => execute(&cli, out).map(|_| EXIT_OK),
        Ok(None) => Ok(EXIT_OK),
        Err(e) => Err(e),
    };
    match code {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn parse(args: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> Result<Option<Cli>, CliError> {
    match Cli::try_parse_from(args) {
        Ok(cli) => Ok(Some(cli)),
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
                Err(CliError::Validation("invalid arguments".into()))
            } else {
                let _ = write!(out, "{text}");
                Ok(None)
            }
        }
    }
}

/// Splices the `--config` file's entries in right after the subcommand so
/// that later command-line flags override them.
fn expand_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let Some(sub) = args.iter().skip(1).position(|a| !a.starts_with('-')).map(|i| i + 1) else {
        return Ok(args);
    };
    let injected = config::to_args(&config::load(path.as_ref())?);
    let mut out = args[..=sub].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Rate(a) => cmd_rate(a, out),
        Command::Optimize(a) => cmd_optimize(a, out),
        Command::Scan(a) => cmd_scan(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Calibrate(a) => cmd_calibrate(a, out),
    }
}

fn value(x: f64) -> String {
    format!("{x:?}")
}

fn flag_list(flags: &[Flag]) -> String {
    if flags.is_empty() {
        "-".into()
    } else {
        flags.iter().map(ToString::to_string).collect::<Vec<_>>().join("|")
    }
}

fn write_rate(out: &mut dyn Write, s: &ScenarioSpec, v: f64, k: &KeyRatePoint, flags: &[Flag]) -> std::io::Result<()> {
    let (t1, n1, t2, n2) = s.cloner_params();
    writeln!(out, "direction={}", s.protocol().direction())?;
    writeln!(out, "T1={}", value(t1))?;
    writeln!(out, "N1={}", value(n1))?;
    writeln!(out, "T2={}", value(t2))?;
    writeln!(out, "N2={}", value(n2))?;
    writeln!(out, "V={}", value(v))?;
    writeln!(out, "beta={}", value(k.reconciliation_efficiency))?;
    writeln!(out, "I_AB'={}", value(k.mutual_info_ab))?;
    writeln!(out, "eve_shannon={}", value(k.eve_shannon))?;
    writeln!(out, "eve_holevo={}", value(k.eve_holevo))?;
    writeln!(out, "K={}", value(k.key_rate))?;
    writeln!(out, "flags={}", flag_list(flags))
}

/// Prints the key-rate decomposition.
pub fn cmd_rate(a: &RateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let template = a.scenario.scenario(2.0)?;
    let (v, k, flags) = evaluate_policy(&template, a.v)?;
    write_rate(out, &template, v, &k, &flags).map_err(io_err("stdout"))
}

/// Prints the optimal variance and the rate there.
pub fn cmd_optimize(a: &RateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let template = a.scenario.scenario(2.0)?;
    let (v, k, flags) = evaluate_policy(&template, VariancePolicy::Optimal)?;
    writeln!(out, "V_opt={}", value(v)).map_err(io_err("stdout"))?;
    writeln!(out, "V_S_opt={}", value(v - 1.0)).map_err(io_err("stdout"))?;
    write_rate(out, &template, v, &k, &flags).map_err(io_err("stdout"))
}

/// Writes the scan CSV to `--output` or stdout.
pub fn cmd_scan(a: &ScanArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let p = &a.protocol;
    let mut spec = ScanSpec::new(a.geometry, a.distances.0.clone(), a.eps_list.0.clone(), p.beta, a.v, p.dir);
    spec.attenuation_db_per_km = p.attenuation;
    spec.detector_efficiency = p.eta;
    spec.electronic_noise = p.v_el;
    spec.recaster = p.recaster;
    let result = run_scan(&spec)?;
    match &a.output {
        Some(path) => {
            let what = format!("cannot write {}", path.display());
            let f = File::create(path).map_err(io_err(&what))?;
            csv::write_scan(&mut BufWriter::new(f), &result.rows).map_err(io_err(&what))
        }
        None => csv::write_scan(out, &result.rows).map_err(io_err("stdout")),
    }
}

/// Runs the Monte Carlo batch and prints true against estimated values.
pub fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let s = a.scenario.scenario(a.v)?;
    let batch = simulate_protocol(&s, a.count, a.seed)?;
    if let Some(path) = &a.dump {
        let what = format!("cannot write {}", path.display());
        let f = File::create(path).map_err(io_err(&what))?;
        csv::write_pulses(&mut BufWriter::new(f), &batch).map_err(io_err(&what))?;
    }
    let allocation = if a.symmetric_noise {
        NoiseAllocation::Symmetric
    } else {
        NoiseAllocation::Unresolved
    };
    let est = estimate_channels(&batch, allocation)?;
    let (t1, n1, t2, n2) = s.cloner_params();
    let eps1 = ChannelParams::from_epr_variance(t1, n1)?.excess_noise();
    let eps2 = ChannelParams::from_epr_variance(t2, n2)?.excess_noise();
    let m = batch_moments(&batch)?;
    let vs = s.protocol().modulation_variance();

    let mut lines = vec![
        format!("pulses={} seed={}", batch.count, batch.rng_seed),
        format!("{:<22} {:>24} {:>24} {:>24}", "quantity", "true", "estimate", "std_error"),
    ];
    let mut row = |name: &str, truth: f64, est: Option<f64>, se: Option<f64>| {
        let est = est.map_or("unresolved".to_string(), value);
        let se = se.map_or("-".to_string(), value);
        lines.push(format!("{name:<22} {:>24} {est:>24} {se:>24}", value(truth)));
    };
    row("T_a", t1, Some(est.channel_a.t_hat), Some(est.channel_a.t_std_error));
    row("T_b", t2, Some(est.channel_b.t_hat), Some(est.channel_b.t_std_error));
    row("eps_a", eps1, est.channel_a.eps_hat, est.channel_a.eps_std_error);
    row("eps_b", eps2, est.channel_b.eps_hat, est.channel_b.eps_std_error);
    row(
        "excess_total",
        t1 * eps1 + t2 * eps2,
        Some(est.pooled_excess.value),
        Some(est.pooled_excess.std_error),
    );
    let bv = analytic_recast_variance(&s);
    row("var_recast_q", bv, Some(m.var_recast_q.value), Some(m.var_recast_q.std_error));
    row("var_recast_p", bv, Some(m.var_recast_p.value), Some(m.var_recast_p.std_error));
    row(
        "cov_broadcast_enc_a",
        t1.sqrt() * vs,
        Some(m.cov_broadcast_enc_a_q.value),
        Some(m.cov_broadcast_enc_a_q.std_error),
    );
    row("I_AB'", mutual_info_ab(&s), Some(empirical_mutual_info(&batch)?), None);
    if a.estimated_recast {
        let recast = batch.recast_with(est.channel_b.t_hat);
        let alt = SampleBatch {
            recast_b: recast,
            ..batch.clone()
        };
        row("I_AB'_estimated_recast", mutual_info_ab(&s), Some(empirical_mutual_info(&alt)?), None);
    }
    for l in lines {
        writeln!(out, "{l}").map_err(io_err("stdout"))?;
    }
    Ok(())
}

/// Largest residual tolerated after correction.
pub const CALIBRATION_RESIDUAL_TOL: f64 = 1e-9;

/// Runs one or more calibration rounds.
pub fn cmd_calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.trials == 0 {
        return Err(CliError::Validation("--trials must be >= 1".into()));
    }
    let mut worst: f64 = 0.0;
    writeln!(out, "seed,theta_a,theta_b,beta1,beta2,delta_theta,phi_b,corrected_phi_b,residual").map_err(io_err("stdout"))?;
    for seed in a.seed..a.seed + a.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |x: Option<f64>| x.unwrap_or_else(|| rng.random_range(0.0..std::f64::consts::TAU));
        let (ta, tb, phi) = (draw(a.theta_a), draw(a.theta_b), draw(a.phi_b));
        let c = calibrate(ta, tb, a.intensity, phi)?;
        worst = worst.max(c.residual);
        writeln!(
            out,
            "{seed},{},{},{},{},{},{},{},{}",
            value(ta),
            value(tb),
            value(c.outputs.0),
            value(c.outputs.1),
            value(c.delta_theta),
            value(phi),
            value(c.corrected_phase),
            value(c.residual)
        )
        .map_err(io_err("stdout"))?;
    }
    writeln!(out, "max_residual={}", value(worst)).map_err(io_err("stdout"))?;
    if worst >= CALIBRATION_RESIDUAL_TOL {
        return Err(CliError::Validation(format!("calibration residual {worst:e} exceeds {CALIBRATION_RESIDUAL_TOL:e}")));
    }
    Ok(())
}
