//! Command-line front end.
//!
//! Every flag has a key in the JSON file passed with `--config`: the flag
//! name with `-` replaced by `_` (`--grid-step` is `grid_step`). Flags given
//! on the command line win over the file. `--levels A..B` is inclusive.
//!
//! Paths come either from files (`--omega`, `--phi`) or from the generator,
//! seeded by `--seed`: omega uses `derive_seed(seed, 0)`, an independent
//! Brownian phi uses `derive_seed(seed, 1)`, betting outcomes use `seed`.
//!
//! Exit codes: 0 success or converged, 1 tolerance failure, 2 input or
//! contract error. Errors are reported on stderr as
//! `{"kind": ..., "message": ...}`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::betting::{k29_capital, supermartingale_capital, symmetrized_supermartingale, BettingTranscript, Protocol};
use crate::dimension::{default_epsilons, dimension_estimate, resolution_floor, write_estimate_csv, DimensionEstimate};
use crate::error::{Error, Result};
use crate::integral::{convergence_report, ito_residual, write_levels_csv, BuiltinF, Ladder, Tolerances};
use crate::partition::{check_resolution, Rule};
use crate::paths::{
    derive_seed, generate, jump_envelope, read_path_file, tanaka_integrand, write_path, ClosedInterval,
    Constant, GeneratorKind, Integrand, IntervalSet, PathFormat, PathGeneratorConfig, PathMeta,
    PredictabilityEnvelope, Regime, SampledPath, TanakaIntegrand, TanakaKind,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "pathwise-ito", version, about = "Pathwise Itô integrals along stopping-time partitions")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Serialize)]
struct GlobalArgs {
    /// Base seed for generated paths and outcomes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    /// Inclusive level range, e.g. `4..9`.
    #[arg(long, global = true)]
    levels: Option<String>,
    #[arg(long, global = true)]
    tol_abs: Option<f64>,
    #[arg(long, global = true)]
    tol_rel: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Require `2^-n >= factor * max per-step oscillation`; 0 disables.
    #[arg(long, global = true)]
    resolution_factor: Option<f64>,
    /// JSON file with default values for any flag.
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a generated path, plus envelopes where they apply.
    Generate(GenerateArgs),
    /// Integral approximants over a level range and their convergence report.
    Integrate(IntegrateArgs),
    /// Quadratic-variation approximants over a level range.
    Qv(QvArgs),
    /// Itô-formula residuals for a built-in F.
    ItoCheck(ItoCheckArgs),
    /// Omega-adapted box dimension of a set.
    Dimension(DimensionArgs),
    /// Run a betting protocol and write its transcript.
    Betting(BettingArgs),
    /// Re-validate a transcript and write it back.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Serialize)]
struct GeneratorArgs {
    #[arg(long)]
    initial: Option<f64>,
    #[arg(long)]
    volatility: Option<f64>,
    #[arg(long)]
    jump_rate: Option<f64>,
    #[arg(long)]
    jump_bound: Option<f64>,
    /// Value of a constant path.
    #[arg(long)]
    value: Option<f64>,
    /// Polynomial coefficients `c0,c1,...` of a deterministic path.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    coefficients: Option<Vec<f64>>,
}

#[derive(Args, Debug, Serialize)]
struct OmegaArgs {
    /// Integrator path file; generated when absent.
    #[arg(long)]
    omega: Option<PathBuf>,
    /// Generator for omega when no file is given.
    #[arg(long, value_enum)]
    omega_kind: Option<GeneratorKind>,
    /// Regime assumed for CSV path files.
    #[arg(long, value_enum)]
    csv_regime: Option<Regime>,
    #[command(flatten)]
    #[serde(flatten)]
    generator: GeneratorArgs,
}

#[derive(Args, Debug, Serialize)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Option<GeneratorKind>,
    /// Base path of a tanaka integrand.
    #[arg(long)]
    base: Option<PathBuf>,
    /// Level `a` of a tanaka integrand.
    #[arg(long, allow_negative_numbers = true)]
    level_a: Option<f64>,
    /// Where to write the envelope; defaults to `<out>.envelope.json`.
    #[arg(long)]
    envelope_out: Option<PathBuf>,
    #[arg(long, value_enum)]
    csv_regime: Option<Regime>,
    #[command(flatten)]
    #[serde(flatten)]
    generator: GeneratorArgs,
}

#[derive(Args, Debug, Serialize)]
struct IntegrateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    omega: OmegaArgs,
    /// Integrand path file.
    #[arg(long)]
    phi: Option<PathBuf>,
    /// Integrand source; `file` when `--phi` is given, else `brownian`.
    #[arg(long, value_enum)]
    phi_kind: Option<PhiKind>,
    /// Value of a constant integrand.
    #[arg(long, allow_negative_numbers = true)]
    phi_value: Option<f64>,
    /// Level `a` of a tanaka integrand; defaults to `omega(0)`.
    #[arg(long, allow_negative_numbers = true)]
    level_a: Option<f64>,
    /// Also write the per-level approximant table as CSV here.
    #[arg(long)]
    levels_csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct QvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    omega: OmegaArgs,
}

#[derive(Args, Debug, Serialize)]
struct ItoCheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    omega: OmegaArgs,
    /// `x`, `x2`, `sin`, `exp` or `poly:c0,c1,...`.
    #[arg(long = "f")]
    function: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct DimensionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    omega: OmegaArgs,
    #[arg(long, value_enum)]
    set: Option<SetKind>,
    /// Level of the near-level set; defaults to `omega(0)`.
    #[arg(long, allow_negative_numbers = true)]
    level_a: Option<f64>,
    /// Half-width of the near-level set; defaults to the largest grid step
    /// oscillation.
    #[arg(long)]
    band: Option<f64>,
    /// Predictability envelope whose exception set is measured.
    #[arg(long)]
    envelope: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long)]
    eps_count: Option<usize>,
    /// Report tameness at `2 - delta`.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct BettingArgs {
    #[arg(long, value_enum)]
    protocol: Option<Protocol>,
    /// Outcomes as a JSON array or whitespace-separated numbers; drawn
    /// uniformly from `[-0.5, 0.5]` when absent.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct ReplayArgs {
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PhiKind {
    File,
    Brownian,
    Omega,
    Constant,
    TanakaIndicator,
    TanakaSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SetKind {
    /// `[0, t]`.
    Full,
    /// `{s <= t : |omega(s) - a| <= band}`.
    Level,
    /// The exception set of `--envelope`.
    Exception,
}

/// Merged settings of a run: defaults, then the config file, then flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Defaults to the end of an omega file, else 1.
    pub horizon: Option<f64>,
    pub grid_step: f64,
    pub levels: String,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub resolution_factor: f64,

    pub omega: Option<PathBuf>,
    pub omega_kind: GeneratorKind,
    pub csv_regime: Regime,
    pub initial: Option<f64>,
    pub volatility: Option<f64>,
    pub jump_rate: Option<f64>,
    pub jump_bound: Option<f64>,
    pub value: Option<f64>,
    pub coefficients: Option<Vec<f64>>,

    pub kind: Option<GeneratorKind>,
    pub base: Option<PathBuf>,
    pub level_a: Option<f64>,
    pub envelope_out: Option<PathBuf>,

    pub phi: Option<PathBuf>,
    pub phi_kind: Option<PhiKind>,
    pub phi_value: f64,
    pub levels_csv: Option<PathBuf>,

    pub function: String,

    pub set: SetKind,
    pub band: Option<f64>,
    pub envelope: Option<PathBuf>,
    pub epsilons: Option<Vec<f64>>,
    pub eps_count: usize,
    pub delta: Option<f64>,

    pub protocol: Protocol,
    pub outcomes: Option<PathBuf>,
    pub rounds: usize,

    pub transcript: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: None,
            grid_step: 1.0 / 65536.0,
            levels: "4..9".into(),
            tol_abs: Tolerances::default().tol_abs,
            tol_rel: Tolerances::default().tol_rel,
            out: None,
            format: None,
            resolution_factor: 4.0,
            omega: None,
            omega_kind: GeneratorKind::Brownian,
            csv_regime: Regime::ContinuousLinear,
            initial: None,
            volatility: None,
            jump_rate: None,
            jump_bound: None,
            value: None,
            coefficients: None,
            kind: None,
            base: None,
            level_a: None,
            envelope_out: None,
            phi: None,
            phi_kind: None,
            phi_value: 1.0,
            levels_csv: None,
            function: "sin".into(),
            set: SetKind::Full,
            band: None,
            envelope: None,
            epsilons: None,
            eps_count: 8,
            delta: None,
            protocol: Protocol::Bounded,
            outcomes: None,
            rounds: 1000,
            transcript: None,
        }
    }
}

impl ExperimentConfig {
    pub fn level_range(&self) -> Result<Vec<u32>> {
        parse_levels(&self.levels)
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            tol_abs: self.tol_abs,
            tol_rel: self.tol_rel,
        }
    }

    fn output_format(&self) -> OutputFormat {
        self.format.unwrap_or_else(|| match &self.out {
            Some(p) if PathFormat::from_extension(p) == PathFormat::Csv => OutputFormat::Csv,
            _ => OutputFormat::Json,
        })
    }

    fn generator(&self, kind: GeneratorKind, seed: u64, horizon: f64) -> PathGeneratorConfig {
        let mut cfg = PathGeneratorConfig::new(kind, seed, horizon, self.grid_step);
        let named = [
            ("initial", self.initial),
            ("volatility", self.volatility),
            ("jump_rate", self.jump_rate),
            ("jump_bound", self.jump_bound),
            ("value", self.value),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                cfg = cfg.with_param(k, v);
            }
        }
        for (i, &c) in self.coefficients.iter().flatten().enumerate() {
            cfg = cfg.with_param(&format!("c{i}"), c);
        }
        cfg
    }
}

/// Parses an inclusive level range `A..B` (also `A..=B`, or a single `A`).
pub fn parse_levels(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::Config(format!("levels must look like `A..B`, got `{s}`"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    let a: u32 = a.trim().parse().map_err(|_| bad())?;
    let b: u32 = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b < a {
        return Err(Error::Config(format!("empty or invalid level range `{s}`")));
    }
    Ok((a..=b).collect())
}

/// Entry point of the binary: parses `args` and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            report_error("usage", &e.to_string());
            return EXIT_ERROR;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            EXIT_ERROR
        }
    }
}

fn report_error(kind: &str, message: &str) {
    let line = json!({ "kind": kind, "message": message.trim_end() });
    eprintln!("{line}");
}

fn execute(cli: &Cli) -> Result<i32> {
    let mut merged = match &cli.global.config {
        Some(p) => match serde_json::from_reader(BufReader::new(fs::File::open(p)?))? {
            Value::Object(m) => m,
            _ => return Err(Error::Config("config file must hold a JSON object".into())),
        },
        None => Map::new(),
    };
    overlay(&mut merged, serde_json::to_value(&cli.global)?);
    let command_args = match &cli.command {
        Command::Generate(a) => serde_json::to_value(a)?,
        Command::Integrate(a) => serde_json::to_value(a)?,
        Command::Qv(a) => serde_json::to_value(a)?,
        Command::ItoCheck(a) => serde_json::to_value(a)?,
        Command::Dimension(a) => serde_json::to_value(a)?,
        Command::Betting(a) => serde_json::to_value(a)?,
        Command::Replay(a) => serde_json::to_value(a)?,
    };
    overlay(&mut merged, command_args);
    let cfg: ExperimentConfig = serde_json::from_value(Value::Object(merged))
        .map_err(|e| Error::Config(format!("config: {e}")))?;
    let output = match cli.command {
        Command::Generate(_) => cmd_generate(&cfg)?,
        Command::Integrate(_) => cmd_integrate(&cfg)?,
        Command::Qv(_) => cmd_qv(&cfg)?,
        Command::ItoCheck(_) => cmd_ito_check(&cfg)?,
        Command::Dimension(_) => cmd_dimension(&cfg)?,
        Command::Betting(_) => cmd_betting(&cfg)?,
        Command::Replay(_) => cmd_replay(&cfg)?,
    };
    output.emit(&cfg)
}

/// Copies the non-null fields of `flags` over `base`.
fn overlay(base: &mut Map<String, Value>, flags: Value) {
    if let Value::Object(m) = flags {
        for (k, v) in m {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
}

/// Everything a command produces; written once after the computation.
pub struct Output {
    /// Main artifact, to `--out` or stdout.
    pub body: Vec<u8>,
    /// Additional files.
    pub extra: Vec<(PathBuf, Vec<u8>)>,
    /// Short summary printed on stdout when the body goes to a file.
    pub summary: Option<Value>,
    pub code: i32,
}

impl Output {
    fn new(body: Vec<u8>, code: i32) -> Self {
        Self {
            body,
            extra: Vec::new(),
            summary: None,
            code,
        }
    }

    fn emit(self, cfg: &ExperimentConfig) -> Result<i32> {
        for (p, bytes) in &self.extra {
            fs::write(p, bytes)?;
        }
        let mut stdout = std::io::stdout().lock();
        match &cfg.out {
            Some(p) => {
                fs::write(p, &self.body)?;
                if let Some(s) = &self.summary {
                    writeln!(stdout, "{s}")?;
                }
            }
            None => stdout.write_all(&self.body)?,
        }
        stdout.flush()?;
        Ok(self.code)
    }
}

fn to_json_line<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec(value)?;
    v.push(b'\n');
    Ok(v)
}

fn path_bytes(path: &SampledPath, meta: &PathMeta, format: OutputFormat) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let f = match format {
        OutputFormat::Json => PathFormat::Json,
        OutputFormat::Csv => PathFormat::Csv,
    };
    write_path(&mut buf, path, meta, f)?;
    Ok(buf)
}

fn envelope_path(cfg: &ExperimentConfig) -> Option<PathBuf> {
    cfg.envelope_out
        .clone()
        .or_else(|| cfg.out.as_ref().map(|p| p.with_extension("envelope.json")))
}

pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Output> {
    let kind = cfg
        .kind
        .ok_or_else(|| Error::Config("generate needs --kind".into()))?;
    let format = cfg.output_format();
    match kind {
        GeneratorKind::TanakaIndicator | GeneratorKind::TanakaSign => {
            let base_file = cfg
                .base
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{} needs --base <path file>", kind.name())))?;
            let (base, _) = read_path_file(base_file, cfg.csv_regime)?;
            let level = cfg.level_a.unwrap_or(0.0);
            let tk = if kind == GeneratorKind::TanakaIndicator {
                TanakaKind::Indicator
            } else {
                TanakaKind::Sign
            };
            let integrand = tanaka_integrand(&base, level, tk)?;
            let mut params = BTreeMap::new();
            params.insert("kind".to_string(), json!(kind.name()));
            params.insert("level".to_string(), json!(level));
            params.insert("base".to_string(), json!(base_file.display().to_string()));
            let meta = PathMeta {
                generator: None,
                seed: None,
                params,
            };
            let mut out = Output::new(path_bytes(&integrand.to_sampled_path(), &meta, format)?, EXIT_OK);
            if let Some(p) = envelope_path(cfg) {
                out.extra.push((p, to_json_line(&integrand.envelope())?));
            }
            out.summary = Some(serde_json::to_value(&meta)?);
            Ok(out)
        }
        _ => {
            let gen = cfg.generator(kind, cfg.seed, cfg.horizon.unwrap_or(1.0));
            let path = generate(&gen)?;
            let meta = gen.meta();
            let mut out = Output::new(path_bytes(&path, &meta, format)?, EXIT_OK);
            if kind == GeneratorKind::PoissonJump {
                if let Some(p) = envelope_path(cfg) {
                    let env = jump_envelope(&path, gen.param("jump_bound", 0.1))?;
                    env.validate(&path)?;
                    out.extra.push((p, to_json_line(&env)?));
                }
            }
            out.summary = Some(serde_json::to_value(&meta)?);
            Ok(out)
        }
    }
}

fn load_omega(cfg: &ExperimentConfig) -> Result<(SampledPath, f64)> {
    match &cfg.omega {
        Some(p) => {
            let (path, _) = read_path_file(p, cfg.csv_regime)?;
            let horizon = cfg.horizon.unwrap_or(path.end());
            Ok((path, horizon))
        }
        None => {
            let horizon = cfg.horizon.unwrap_or(1.0);
            let gen = cfg.generator(cfg.omega_kind, derive_seed(cfg.seed, 0), horizon);
            Ok((generate(&gen)?, horizon))
        }
    }
}

enum Phi {
    Path(SampledPath),
    Constant(Constant),
    Tanaka(TanakaIntegrand, PredictabilityEnvelope),
}

fn load_phi(cfg: &ExperimentConfig, omega: &SampledPath, horizon: f64) -> Result<Phi> {
    let kind = cfg.phi_kind.unwrap_or(if cfg.phi.is_some() {
        PhiKind::File
    } else {
        PhiKind::Brownian
    });
    let tanaka = |k| -> Result<Phi> {
        let a = cfg.level_a.unwrap_or(omega.values()[0]);
        let integrand = tanaka_integrand(omega, a, k)?;
        let env = integrand.envelope();
        Ok(Phi::Tanaka(integrand, env))
    };
    match kind {
        PhiKind::File => {
            let p = cfg
                .phi
                .as_ref()
                .ok_or_else(|| Error::Config("phi kind `file` needs --phi".into()))?;
            Ok(Phi::Path(read_path_file(p, cfg.csv_regime)?.0))
        }
        PhiKind::Brownian => {
            let gen = PathGeneratorConfig::new(GeneratorKind::Brownian, derive_seed(cfg.seed, 1), horizon, cfg.grid_step);
            Ok(Phi::Path(generate(&gen)?))
        }
        PhiKind::Omega => Ok(Phi::Path(omega.clone())),
        PhiKind::Constant => Ok(Phi::Constant(Constant {
            value: cfg.phi_value,
            end: omega.end(),
        })),
        PhiKind::TanakaIndicator => tanaka(TanakaKind::Indicator),
        PhiKind::TanakaSign => tanaka(TanakaKind::Sign),
    }
}

fn check_floor(cfg: &ExperimentConfig, levels: &[u32], paths: &[&SampledPath]) -> Result<()> {
    match levels.last() {
        Some(&top) => check_resolution(top, paths, cfg.resolution_factor),
        None => Ok(()),
    }
}

pub fn cmd_integrate(cfg: &ExperimentConfig) -> Result<Output> {
    let levels = cfg.level_range()?;
    let (omega, horizon) = load_omega(cfg)?;
    let phi = load_phi(cfg, &omega, horizon)?;
    let (integrand, rule): (&dyn Integrand, Rule<'_>) = match &phi {
        Phi::Path(p) => {
            check_floor(cfg, &levels, &[&omega, p])?;
            (p, Rule::for_paths(&omega, p))
        }
        Phi::Constant(c) => {
            check_floor(cfg, &levels, &[&omega])?;
            (c, Rule::for_paths(&omega, &omega))
        }
        Phi::Tanaka(t, env) => {
            check_floor(cfg, &levels, &[&omega])?;
            (t, Rule::Predictable(env))
        }
    };
    let ladder = Ladder::build(&omega, integrand, rule, &levels, horizon)?;
    let report = convergence_report(&ladder.approximants, cfg.tolerances())?;
    let code = if report.converged { EXIT_OK } else { EXIT_TOLERANCE };
    let mut table = Vec::new();
    write_levels_csv(&mut table, &ladder.approximants)?;
    let body = match cfg.output_format() {
        OutputFormat::Json => to_json_line(&report)?,
        OutputFormat::Csv => table.clone(),
    };
    let mut out = Output::new(body, code);
    if let Some(p) = &cfg.levels_csv {
        out.extra.push((p.clone(), table));
    }
    out.summary = Some(json!({ "converged": report.converged, "fitted_rate": report.fitted_rate }));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvRow {
    pub level: u32,
    /// `A^n` at the horizon.
    pub qv: f64,
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvReport {
    pub horizon: f64,
    /// Sum of squared grid increments of omega up to the horizon.
    pub grid_qv: f64,
    pub rows: Vec<QvRow>,
}

pub fn cmd_qv(cfg: &ExperimentConfig) -> Result<Output> {
    let levels = cfg.level_range()?;
    let (omega, horizon) = load_omega(cfg)?;
    check_floor(cfg, &levels, &[&omega])?;
    let still = Constant {
        value: 0.0,
        end: omega.end(),
    };
    let ladder = Ladder::build(&omega, &still, Rule::for_paths(&omega, &omega), &levels, horizon)?;
    let qv = ladder.quadratic_variations(&omega)?;
    let report = QvReport {
        horizon,
        grid_qv: omega.grid_quadratic_variation(horizon),
        rows: qv
            .iter()
            .map(|a| QvRow {
                level: a.level,
                qv: a.last_value(),
                sup: a.sup_norm(),
            })
            .collect(),
    };
    let body = match cfg.output_format() {
        OutputFormat::Json => to_json_line(&report)?,
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_levels_csv(&mut buf, &qv)?;
            buf
        }
    };
    Ok(Output::new(body, EXIT_OK))
}

pub fn cmd_ito_check(cfg: &ExperimentConfig) -> Result<Output> {
    let levels = cfg.level_range()?;
    let f: BuiltinF = cfg.function.parse()?;
    let (omega, horizon) = load_omega(cfg)?;
    let phi = f.derivative_path(&omega);
    check_floor(cfg, &levels, &[&omega, &phi])?;
    let rows = levels
        .par_iter()
        .map(|&n| ito_residual(&f, &omega, &phi, n, horizon))
        .collect::<Result<Vec<_>>>()?;
    let last = rows.last().expect("level range is non-empty");
    let tol = cfg.tol_abs + cfg.tol_rel * last.increment.abs();
    let code = if last.residual.abs() <= tol { EXIT_OK } else { EXIT_TOLERANCE };
    let body = match cfg.output_format() {
        OutputFormat::Json => to_json_line(&rows)?,
        OutputFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                wtr.serialize(r)?;
            }
            wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?
        }
    };
    Ok(Output::new(body, code))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub set: SetKind,
    pub t: f64,
    pub intervals: usize,
    pub estimate: DimensionEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tame: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

pub fn cmd_dimension(cfg: &ExperimentConfig) -> Result<Output> {
    let (omega, t) = load_omega(cfg)?;
    let e = match cfg.set {
        SetKind::Full => IntervalSet::new(vec![ClosedInterval::new(0.0, t)?])?,
        SetKind::Level => {
            let a = cfg.level_a.unwrap_or(omega.values()[0]);
            let band = cfg.band.unwrap_or_else(|| omega.max_step_oscillation());
            IntervalSet::band(&omega, a, band)?.clip(0.0, t)
        }
        SetKind::Exception => {
            let p = cfg
                .envelope
                .as_ref()
                .ok_or_else(|| Error::Config("set `exception` needs --envelope".into()))?;
            let raw: PredictabilityEnvelope = serde_json::from_reader(BufReader::new(fs::File::open(p)?))?;
            let env = PredictabilityEnvelope::new(raw.lower, raw.upper, raw.exception_set)?;
            env.exception_set.clip(0.0, t)
        }
    };
    let epsilons = match &cfg.epsilons {
        Some(eps) => eps.clone(),
        None => default_epsilons(&omega, t, cfg.eps_count)?,
    };
    let estimate = dimension_estimate(&omega, &e, &epsilons)?;
    let tame = cfg.delta.map(|d| estimate.slope < 2.0 - d);
    let report = DimensionReport {
        set: cfg.set,
        t,
        intervals: e.len(),
        estimate,
        tame,
        delta: cfg.delta,
    };
    let body = match cfg.output_format() {
        OutputFormat::Json => to_json_line(&report)?,
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_estimate_csv(&mut buf, &report.estimate)?;
            buf
        }
    };
    let mut out = Output::new(body, EXIT_OK);
    out.summary = Some(json!({
        "slope": report.estimate.slope,
        "resolution_floor": resolution_floor(&omega),
    }));
    Ok(out)
}

fn read_outcomes(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text)?);
    }
    text.split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| Error::Config(format!("bad outcome `{s}`: {e}")))
        })
        .collect()
}

fn json_only(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.output_format() == OutputFormat::Csv {
        return Err(Error::Config("transcripts are written as JSON lines only".into()));
    }
    Ok(())
}

pub fn cmd_betting(cfg: &ExperimentConfig) -> Result<Output> {
    json_only(cfg)?;
    let outcomes = match &cfg.outcomes {
        Some(p) => read_outcomes(p)?,
        None => {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
            (0..cfg.rounds).map(|_| rng.random_range(-0.5..=0.5)).collect()
        }
    };
    let transcript = match cfg.protocol {
        Protocol::BoundedBelow => supermartingale_capital(&outcomes)?,
        Protocol::Bounded => symmetrized_supermartingale(&outcomes)?,
        Protocol::Arbitrary => k29_capital(&outcomes)?,
    };
    transcript.validate()?;
    let mut body = Vec::new();
    transcript.write_jsonl(&mut body)?;
    let mut out = Output::new(body, EXIT_OK);
    out.summary = Some(summary(&transcript));
    Ok(out)
}

fn summary(t: &BettingTranscript) -> Value {
    json!({
        "protocol": t.protocol,
        "rounds": t.rounds.len(),
        "final_capital": t.capitals().last(),
    })
}

pub fn cmd_replay(cfg: &ExperimentConfig) -> Result<Output> {
    json_only(cfg)?;
    let p = cfg
        .transcript
        .as_ref()
        .ok_or_else(|| Error::Config("replay needs --transcript".into()))?;
    let transcript = BettingTranscript::read_jsonl(BufReader::new(fs::File::open(p)?))?;
    transcript.validate()?;
    let mut body = Vec::new();
    transcript.write_jsonl(&mut body)?;
    let mut out = Output::new(body, EXIT_OK);
    out.summary = Some(summary(&transcript));
    Ok(out)
}
