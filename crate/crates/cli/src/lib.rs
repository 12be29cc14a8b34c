//! `hom` command-line front end.
//!
//! [`run`] takes the arguments after the program name and returns the
//! process exit code: 0 on success, 2 for usage and validation errors, 3 for
//! numerical failures and 1 when an output cannot be written.

pub mod io;
mod reproduce;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hom_core::analytic::{fmt_sig, g2_full_curve, hbt_dot_curve, symmetric_grid, Response};
use hom_core::config::{self, SCHEMA_VERSION};
use hom_core::correlator::{correlate, dip_statistics};
use hom_core::fringe::{beat_period_uev, contrast_map_csv, fit_detuning, BeatModel, ContrastScan, MichelsonConfig};
use hom_core::inference::{fit_report, predict_optimum, VisibilityCurve};
use hom_core::mc::{simulate, McMode, McRunConfig, DEFAULT_RATE_PER_PS};
use hom_core::stream::TimestampStream;
use hom_core::SystemParams;

pub use reproduce::Figure;

/// Crate version followed by the config schema it reads and writes.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (config schema 1)");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] hom_core::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(_) => 2,
            CliError::Output { .. } => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    HbtDot,
    HbtLaser,
    TwoSource,
}

impl From<ModeArg> for McMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::HbtDot => McMode::HbtDot,
            ModeArg::HbtLaser => McMode::HbtLaser,
            ModeArg::TwoSource => McMode::TwoSource,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hom", version = VERSION, about = "Two-photon interference between a quantum dot and a laser")]
#[command(arg_required_else_help = true, propagate_version = true)]
struct Cli {
    /// Parameter file; the bundled paper-defaults profile when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file (directory for `reproduce`); stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[arg(long = "duration-ps", global = true, value_name = "X")]
    duration_ps: Option<f64>,
    /// Histogram bin width, or curve grid step for `curves` and `hbt`.
    #[arg(long = "bin-ps", global = true, value_name = "X")]
    bin_ps: Option<f64>,
    /// Overrides the polarization angle of the config.
    #[arg(long = "phi-deg", global = true, value_name = "X", allow_negative_numbers = true)]
    phi_deg: Option<f64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two-source g² curves, ideal and convolved.
    Curves(CurveArgs),
    /// Dot autocorrelation curves, ideal and convolved.
    Hbt(HbtArgs),
    /// Two-source fringe contrast over delay and detuning.
    FringeMap(FringeMapArgs),
    /// Locate zero detuning in a measured contrast scan.
    FringeFit(FringeFitArgs),
    /// Simulate detector clicks.
    Mc(McArgs),
    /// Histogram a click stream.
    Correlate(CorrelateArgs),
    /// Fit the wave-function overlap to visibility points.
    FitVisibility(InputArgs),
    /// Intensity ratio of maximum visibility.
    Optimum,
    /// Regenerate the data behind a figure.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
struct CurveArgs {
    /// η/α²; taken from the config when absent.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long = "half-span-ps", default_value_t = 6400.0)]
    half_span_ps: f64,
}

#[derive(Debug, Args)]
struct HbtArgs {
    #[arg(long = "half-span-ps", default_value_t = 6400.0)]
    half_span_ps: f64,
}

#[derive(Debug, Args)]
struct FringeMapArgs {
    #[arg(long = "delay-max-ps", default_value_t = 1200.0)]
    delay_max_ps: f64,
    #[arg(long = "delay-step-ps", default_value_t = 10.0)]
    delay_step_ps: f64,
    #[arg(long = "detuning-max-uev", default_value_t = 30.0)]
    detuning_max_uev: f64,
    #[arg(long = "detuning-step-uev", default_value_t = 0.25)]
    detuning_step_uev: f64,
}

#[derive(Debug, Args)]
struct FringeFitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "delay-ps", default_value_t = 380.0)]
    delay_ps: f64,
    /// Single-source contrast at zero delay.
    #[arg(long, default_value_t = 1.0)]
    a0: f64,
    /// `a,b` mapping piezo volts V to detuning a + b·V in µeV.
    #[arg(long, value_name = "A,B", allow_hyphen_values = true)]
    affine: Option<String>,
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::TwoSource)]
    mode: ModeArg,
    /// Laser rate (single-source rate in HBT modes); the dot runs at
    /// η/α² times this in two-source mode.
    #[arg(long = "rate-per-ps", default_value_t = DEFAULT_RATE_PER_PS)]
    rate_per_ps: f64,
    #[arg(long)]
    segments: Option<u32>,
    /// Label each click with its origin.
    #[arg(long)]
    tagged: bool,
    /// Treat dot background photons as distinguishable from the laser.
    #[arg(long = "background-distinguishable")]
    background_distinguishable: bool,
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "max-tau-ps", default_value_t = 6400.0)]
    max_tau_ps: f64,
    /// Compare against the analytic model of this mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(value_enum)]
    figure: Figure,
}

pub(crate) const DEFAULT_SEED: u64 = 1;
const DEFAULT_BIN_PS: f64 = 64.0;
const DEFAULT_MC_DURATION_PS: f64 = 1e11;

/// Global flags after parsing, with the parameters already validated.
pub(crate) struct Context {
    pub params: SystemParams,
    pub config_source: String,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub duration_ps: Option<f64>,
    pub bin_ps: Option<f64>,
    pub format: Option<Format>,
}

impl Context {
    pub fn emit(&self, bytes: &[u8]) -> CliResult<()> {
        match &self.out {
            Some(p) => write_file(p, bytes),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)
                    .and_then(|_| out.flush())
                    .map_err(|e| CliError::Output {
                        path: PathBuf::from("<stdout>"),
                        source: e,
                    })
            }
        }
    }

    fn require_csv(&self, what: &str) -> CliResult<()> {
        if self.format == Some(Format::Bin) {
            return Err(CliError::Usage(format!("{what} only writes CSV")));
        }
        Ok(())
    }

    pub fn bin_ps(&self) -> f64 {
        self.bin_ps.unwrap_or(DEFAULT_BIN_PS)
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    io::write_atomic(path, bytes).map_err(|e| CliError::Output {
        path: path.to_path_buf(),
        source: e,
    })
}

pub(crate) fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be finite and > 0, got {v}")))
    }
}

pub(crate) fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

fn load_params(cli: &Cli) -> CliResult<(SystemParams, String)> {
    let (mut p, source) = match &cli.config {
        Some(path) => (config::load(path)?, path.display().to_string()),
        None => (config::parse(config::PAPER_DEFAULTS)?, "paper-defaults".to_string()),
    };
    if let Some(phi) = cli.phi_deg {
        p = p.with_phi_deg(phi)?;
    }
    Ok((p, source))
}

/// Parses `args` (without the program name), runs the command and returns
/// the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("hom")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    eprint!("{e}");
                    2
                }
                _ => {
                    let msg = e.to_string();
                    eprintln!("{}", msg.lines().next().unwrap_or("usage error"));
                    eprintln!("run `hom --help` for usage");
                    2
                }
            };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    let (params, config_source) = load_params(cli)?;
    let ctx = Context {
        params,
        config_source,
        out: cli.out.clone(),
        seed: cli.seed,
        duration_ps: cli.duration_ps,
        bin_ps: cli.bin_ps,
        format: cli.format,
    };
    if let Some(d) = ctx.duration_ps {
        positive("duration-ps", d)?;
    }
    if let Some(b) = ctx.bin_ps {
        positive("bin-ps", b)?;
    }
    match &cli.command {
        Command::Curves(a) => curves(&ctx, a),
        Command::Hbt(a) => hbt(&ctx, a),
        Command::FringeMap(a) => fringe_map(&ctx, a),
        Command::FringeFit(a) => fringe_fit(&ctx, a),
        Command::Mc(a) => mc(&ctx, a),
        Command::Correlate(a) => correlate_cmd(&ctx, a),
        Command::FitVisibility(a) => fit_visibility(&ctx, a),
        Command::Optimum => optimum(&ctx),
        Command::Reproduce(a) => reproduce::run(&ctx, a.figure),
    }
}

fn curve_step(ctx: &Context) -> f64 {
    ctx.bin_ps.unwrap_or_else(|| {
        let fwhm = ctx.params.detector.pair_fwhm_ps();
        if fwhm > 0.0 {
            fwhm / 32.0
        } else {
            1.0
        }
    })
}

fn two_column_csv(header: &str, tau: &[f64], a: &[f64], b: &[f64]) -> String {
    let mut out = format!("{header}\n");
    for i in 0..tau.len() {
        out.push_str(&format!("{},{},{}\n", fmt_sig(tau[i], 9), fmt_sig(a[i], 9), fmt_sig(b[i], 9)));
    }
    out
}

fn curves(ctx: &Context, a: &CurveArgs) -> CliResult<()> {
    ctx.require_csv("curves")?;
    let p = match a.ratio {
        Some(r) => ctx.params.with_ratio(r)?,
        None => ctx.params,
    };
    let grid = symmetric_grid(positive("half-span-ps", a.half_span_ps)?, curve_step(ctx));
    let ideal = g2_full_curve(grid.clone(), &p, Response::Ideal)?;
    let conv = g2_full_curve(grid, &p, Response::Convolved)?;
    ctx.emit(two_column_csv("tau_ps,ideal,convolved", &ideal.tau_ps, &ideal.values, &conv.values).as_bytes())
}

fn hbt(ctx: &Context, a: &HbtArgs) -> CliResult<()> {
    ctx.require_csv("hbt")?;
    let half = positive("half-span-ps", a.half_span_ps)?;
    let step = curve_step(ctx);
    let ideal = hbt_dot_curve(half, Some(step), &ctx.params, Response::Ideal)?;
    let conv = hbt_dot_curve(half, Some(step), &ctx.params, Response::Convolved)?;
    ctx.emit(two_column_csv("tau_ps,ideal,convolved", &ideal.tau_ps, &ideal.values, &conv.values).as_bytes())
}

pub(crate) fn axis(max: f64, step: f64, symmetric: bool) -> Vec<f64> {
    let n = (max / step).round() as i64;
    let start = if symmetric { -n } else { 0 };
    (start..=n).map(|i| i as f64 * step).collect()
}

fn fringe_map(ctx: &Context, a: &FringeMapArgs) -> CliResult<()> {
    ctx.require_csv("fringe-map")?;
    let delays = axis(positive("delay-max-ps", a.delay_max_ps)?, positive("delay-step-ps", a.delay_step_ps)?, false);
    let detunings = axis(
        positive("detuning-max-uev", a.detuning_max_uev)?,
        positive("detuning-step-uev", a.detuning_step_uev)?,
        true,
    );
    let csv = contrast_map_csv(
        &delays,
        &detunings,
        ctx.params.quantum.tau_coh_ps(),
        ctx.params.coherent.tau_coh_laser_ps(),
    );
    ctx.emit(csv.as_bytes())
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| hom_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
    .into())
}

fn parse_affine(s: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("--affine expects `a,b`, got `{s}`"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let a = parts[0].parse::<f64>().map_err(|_| bad())?;
    let b = parts[1].parse::<f64>().map_err(|_| bad())?;
    Ok((a, b))
}

fn fringe_fit(ctx: &Context, a: &FringeFitArgs) -> CliResult<()> {
    let affine = a.affine.as_deref().map(parse_affine).transpose()?;
    let michelson = MichelsonConfig::new(a.a0, a.delay_ps, 0.0)?;
    let scan = ContrastScan::from_csv(&read_text(&a.input)?, affine)?;
    let model = BeatModel {
        michelson,
        tau_coh_dot_ps: ctx.params.quantum.tau_coh_ps(),
        tau_coh_laser_ps: ctx.params.coherent.tau_coh_laser_ps(),
    };
    let fit = fit_detuning(&scan, &model)?;
    let report = json!({
        "offset_ueV": fit.offset_uev,
        "offset_stderr_ueV": fit.offset_stderr_uev,
        "scale": fit.scale,
        "scale_stderr": fit.scale_stderr,
        "residual": fit.residual,
        "chi2_per_dof": fit.chi2_per_dof,
        "beat_period_ueV": beat_period_uev(a.delay_ps),
        "points": scan.len(),
    });
    ctx.emit(to_json(&report).as_bytes())
}

fn mc(ctx: &Context, a: &McArgs) -> CliResult<()> {
    let seed = ctx.seed.unwrap_or(DEFAULT_SEED);
    let duration = ctx.duration_ps.unwrap_or(DEFAULT_MC_DURATION_PS);
    let mut cfg = McRunConfig::new(ctx.params, a.mode.into(), a.rate_per_ps, duration, seed)?;
    if let Some(s) = a.segments {
        cfg = cfg.with_segments(s);
    }
    cfg.background_interferes = !a.background_distinguishable;
    cfg.validate()?;
    let stream = simulate(&cfg)?;

    let mut bytes = Vec::new();
    match ctx.format.unwrap_or(Format::Csv) {
        Format::Csv => bytes.extend_from_slice(stream.to_csv(a.tagged).as_bytes()),
        Format::Bin => stream
            .write_binary(&mut bytes, a.tagged)
            .expect("writing to memory cannot fail"),
    }
    let meta = format!(
        "# hom mc run\nversion = {}\nschema_version = {SCHEMA_VERSION}\nconfig = {}\nmode = {}\nseed = {seed}\nduration_ps = {duration:e}\ndot_rate_per_ps = {:e}\nlaser_rate_per_ps = {:e}\nsegments = {}\nbackground_interferes = {}\ntagged = {}\nclicks = {}\nconfig_hash = {:016x}\n",
        env!("CARGO_PKG_VERSION"),
        ctx.config_source,
        cfg.mode.name(),
        cfg.dot_rate_per_ps,
        cfg.laser_rate_per_ps,
        cfg.segments,
        cfg.background_interferes,
        a.tagged,
        stream.len(),
        cfg.config_hash(),
    );
    ctx.emit(&bytes)?;
    match &ctx.out {
        Some(p) => write_file(&io::meta_path(p), meta.as_bytes()),
        None => {
            eprintln!("seed = {seed}, duration_ps = {duration:e}");
            Ok(())
        }
    }
}

fn read_stream(path: &Path, duration_override: Option<f64>) -> CliResult<(TimestampStream, Vec<(String, String)>)> {
    let bytes = fs::read(path).map_err(|e| hom_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let meta = fs::read_to_string(io::meta_path(path))
        .map(|t| io::parse_meta(&t))
        .unwrap_or_default();
    let meta_duration = meta
        .iter()
        .find(|(k, _)| k == "duration_ps")
        .and_then(|(_, v)| v.parse::<f64>().ok());
    let duration = duration_override.or(meta_duration);
    let stream = if bytes.starts_with(hom_core::stream::MAGIC) {
        TimestampStream::read_binary(bytes.as_slice(), duration)?
    } else {
        let text = String::from_utf8(bytes).map_err(|_| hom_core::Error::Format("stream is neither PHTS nor UTF-8 CSV".into()))?;
        TimestampStream::from_csv(&text, duration)?
    };
    Ok((stream, meta))
}

fn correlate_cmd(ctx: &Context, a: &CorrelateArgs) -> CliResult<()> {
    ctx.require_csv("correlate")?;
    let (stream, meta) = read_stream(&a.input, ctx.duration_ps)?;
    let h = correlate(&stream, ctx.bin_ps(), a.max_tau_ps)?;
    let name = a.input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut text = format!("# correlation of {name}\n");
    for (k, v) in meta.iter().filter(|(k, _)| k == "seed" || k == "mode" || k == "config_hash") {
        text.push_str(&format!("source_{k} = {v}\n"));
    }
    text.push_str(&h.metadata_text());
    if let Some(mode) = a.mode {
        let mut cfg = McRunConfig::new(ctx.params, mode.into(), DEFAULT_RATE_PER_PS, 1.0, 0)?;
        cfg.background_interferes = !meta.iter().any(|(k, v)| k == "background_interferes" && v == "false");
        let model = cfg.model_curve((h.half_bins() as f64 + 1.0) * h.bin_width_ps())?;
        let dip = dip_statistics(&h, &model)?;
        text.push_str(&format!(
            "model = {}\ng2_zero = {}\ng2_zero_stderr = {}\nbaseline = {}\namplitude = {}\nchi2_per_dof = {}\ndof = {}\n",
            cfg.mode.name(),
            dip.g2_zero,
            dip.g2_zero_stderr,
            dip.baseline,
            dip.amplitude,
            dip.chi2_per_dof,
            dip.dof
        ));
    }
    ctx.emit(h.to_csv().as_bytes())?;
    match &ctx.out {
        Some(p) => write_file(&io::meta_path(p), text.as_bytes()),
        None => {
            eprint!("{text}");
            Ok(())
        }
    }
}

fn fit_visibility(ctx: &Context, a: &InputArgs) -> CliResult<()> {
    let curve = VisibilityCurve::from_csv(&read_text(&a.input)?)?;
    let report = fit_report(&curve.points, &ctx.params)?;
    ctx.emit(to_json(&report).as_bytes())
}

fn optimum(ctx: &Context) -> CliResult<()> {
    let opt = predict_optimum(&ctx.params)?;
    ctx.emit(to_json(&opt).as_bytes())
}
