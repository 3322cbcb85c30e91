//! Command-line front end for the vacuum-noise Langevin toolkit.
//!
//! Subcommands map one-to-one onto the library surface: closed forms
//! (`analytic`), the quadrature oracle (`quadrature`), synthesized-noise
//! statistics (`noise-check`), ensemble runs (`simulate`), response
//! function reports (`fdt`), laboratory-scale estimates (`estimate-si`)
//! and the identity suite (`verify`).
//!
//! Exit codes are a stable contract:
//!   0  success
//!   1  a verification ran to completion and failed
//!   2  bad flags or configuration
//!   3  a numerical or I/O failure at runtime
//!
//! Every run that writes files also writes `manifest.json` listing each
//! output with its SHA-256, so reruns can be compared hash against hash.
//! All printed floats carry 12 significant digits, and JSON reports are
//! rounded to the same 12 digits before serialization so identical runs
//! produce identical bytes.

mod verify;

use std::fs;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use qvlab_core::analytic::{
    fdt_susceptibility, msd, v2_charge, v2_fdt, v2_mirror_exact, v2_mirror_small_gamma,
    v2_mirror_small_gamma_limit, MsdCurve,
};
use qvlab_core::langevin::{equilibrium_v2_target, fit_regimes, run_ensemble, SimConfig, SimError};
use qvlab_core::noise::{
    empirical_covariance, substream_seed, synthesize, target_covariance, NoiseError,
};
use qvlab_core::params::{derive_constants, estimate_si, ParamError, ParticleKind, ParticleParams};
use qvlab_core::quadrature::{integrate_1d_auto, v2_charge_quad, v2_mirror_quad, QuadError};
use qvlab_core::sig12;

#[derive(Parser)]
#[command(
    name = "qvlab",
    version,
    about = "Langevin dynamics driven by quantum-vacuum noise in 1+1 dimensions"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON config file; keys mirror the long flag names and override them.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed for every pseudo-random draw (default 0).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for ensemble batches (default: hardware count).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Directory for output files and the run manifest (default qvlab-out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print the report as JSON on stdout instead of the plain table.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form constants, equilibrium variance and curve samples.
    Analytic(ParticleArgs),
    /// Cross-check the closed forms against adaptive quadrature.
    Quadrature(ParticleArgs),
    /// Compare synthesized noise covariance against its spectral target.
    NoiseCheck(NoiseCheckArgs),
    /// Integrate a Langevin ensemble and write its statistics.
    Simulate(SimulateArgs),
    /// Susceptibility samples and fluctuation-dissipation identities.
    Fdt(ParticleArgs),
    /// Laboratory scales for SI inputs (mass in kg, rates in 1/s).
    EstimateSi(EstimateSiArgs),
    /// Run the identity suite; exit 1 if any check fails.
    Verify(VerifyArgs),
}

#[derive(Args, Clone, Default)]
struct ParticleArgs {
    /// Point charge: q=<strength> m=<mass> [lambda=<cutoff>] [v0=<velocity>] [z2-0=<variance>]
    #[arg(long, value_name = "KEY=VALUE", num_args = 1.., conflicts_with = "mirror")]
    charge: Option<Vec<String>>,
    /// Mirror: omega-p=<plasma> m=<mass>, or gamma-ratio=<ratio> [m=<mass>] [v0=..] [z2-0=..]
    #[arg(long, value_name = "KEY=VALUE", num_args = 1..)]
    mirror: Option<Vec<String>>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    particle: ParticleArgs,
    /// Time step (default: the bound min(0.01/gamma, pi/(5 omega_max))).
    #[arg(long, value_name = "DT")]
    dt: Option<f64>,
    /// Run length (default: 30 relaxation times).
    #[arg(long = "t-end", value_name = "T")]
    t_end: Option<f64>,
    /// Number of ensemble paths (default 1000).
    #[arg(long, value_name = "P")]
    paths: Option<usize>,
    /// Record every STRIDE-th step (default 1).
    #[arg(long, value_name = "STRIDE")]
    stride: Option<usize>,
    /// Draw initial velocities from the stationary distribution.
    #[arg(long)]
    equilibrium_start: bool,
    /// Initial velocity; the mirror also relaxes towards this value.
    #[arg(long, value_name = "V")]
    v0: Option<f64>,
}

#[derive(Args)]
struct NoiseCheckArgs {
    #[command(flatten)]
    particle: ParticleArgs,
    /// Paths in the covariance ensemble (default 64).
    #[arg(long, value_name = "P")]
    paths: Option<usize>,
    /// Samples per path (default 1024).
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Sample spacing (default: the spectral bound pi/(5 omega_max)).
    #[arg(long, value_name = "DT")]
    dt: Option<f64>,
}

#[derive(Args)]
struct EstimateSiArgs {
    #[command(flatten)]
    particle: ParticleArgs,
    /// Target distance in meters for the spreading-time estimate (default 0.01).
    #[arg(long, value_name = "METERS")]
    distance: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Multiply the exact mirror variance by (1 + EPS) inside the
    /// closed-vs-quadrature check, to prove the suite catches a broken form.
    #[arg(long = "perturb-exact", value_name = "EPS")]
    perturb_exact: Option<f64>,
}

#[derive(Debug)]
enum CliError {
    /// Bad flags or configuration; exit 2.
    Usage(String),
    /// Numerical or I/O failure after a valid configuration; exit 3.
    Runtime(String),
    /// A verification ran to completion and failed; exit 1.
    VerifyFailed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::VerifyFailed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

const USAGE_HINT: &str = "usage: qvlab [--config PATH] [--seed U64] [--threads N] [--out DIR] [--json] \
     <analytic|quadrature|noise-check|simulate|fdt|estimate-si|verify> [flags]";

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => {
                    eprintln!("error: {msg}");
                    eprintln!("{USAGE_HINT}");
                    eprintln!("run `qvlab <subcommand> --help` for the full flag list");
                }
                CliError::Runtime(msg) => eprintln!("error: {msg}"),
                CliError::VerifyFailed(msg) => eprintln!("verification failed: {msg}"),
            }
            ExitCode::from(e.code())
        }
    }
}

/// Everything a subcommand needs after the global flags and the config
/// file have been merged. The config file wins over flags throughout.
struct Ctx {
    cfg: ConfigFile,
    seed: u64,
    json: bool,
    out_dir: PathBuf,
    started: Instant,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let cfg = load_config(cli.global.config.as_deref())?;
    let seed = cfg.seed.or(cli.global.seed).unwrap_or(0);
    let json = cfg.json.unwrap_or(cli.global.json);
    let out_dir = cfg
        .out
        .as_ref()
        .map(PathBuf::from)
        .or(cli.global.out)
        .unwrap_or_else(|| PathBuf::from("qvlab-out"));
    if let Some(n) = cfg.threads.or(cli.global.threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads needs at least 1".into()));
        }
        qvlab_core::configure_threads(n);
    }
    let ctx = Ctx { cfg, seed, json, out_dir, started };
    match cli.command {
        Command::Analytic(a) => cmd_analytic(&ctx, &a),
        Command::Quadrature(a) => cmd_quadrature(&ctx, &a),
        Command::NoiseCheck(a) => cmd_noise_check(&ctx, &a),
        Command::Simulate(a) => cmd_simulate(&ctx, &a),
        Command::Fdt(a) => cmd_fdt(&ctx, &a),
        Command::EstimateSi(a) => cmd_estimate_si(&ctx, &a),
        Command::Verify(a) => cmd_verify(&ctx, &a),
    }
}

// ---------------------------------------------------------------------------
// Configuration file

/// Flat key schema mirroring the long flag names. Unknown keys are
/// rejected so a typo cannot silently fall back to a default.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ConfigFile {
    kind: Option<String>,
    q: Option<f64>,
    m: Option<f64>,
    omega_p: Option<f64>,
    gamma_ratio: Option<f64>,
    lambda: Option<f64>,
    v0: Option<f64>,
    #[serde(rename = "z2-0")]
    z2_0: Option<f64>,
    dt: Option<f64>,
    t_end: Option<f64>,
    paths: Option<usize>,
    stride: Option<usize>,
    equilibrium_start: Option<bool>,
    samples: Option<usize>,
    distance: Option<f64>,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<String>,
    json: Option<bool>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Particle resolution

/// Field pool a particle is assembled from, in increasing precedence:
/// dedicated flags, then key=value tokens, then the config file.
#[derive(Debug, Default, Clone)]
struct ParticleInput {
    kind: Option<ParticleKind>,
    q: Option<f64>,
    m: Option<f64>,
    omega_p: Option<f64>,
    gamma_ratio: Option<f64>,
    lambda: Option<f64>,
    v0: Option<f64>,
    z2_0: Option<f64>,
}

enum ResolvedParticle {
    Full(ParticleParams),
    /// Mirror given only by its dimensionless ratio; enough for the
    /// dimensionless closed forms, nothing else.
    RatioOnly { gamma_ratio: f64 },
}

fn parse_kv(token: &str) -> Result<(&str, f64), CliError> {
    let Some((k, v)) = token.split_once('=') else {
        return Err(CliError::Usage(format!("expected key=value, got `{token}`")));
    };
    let x: f64 = v
        .parse()
        .map_err(|_| CliError::Usage(format!("field `{k}` needs a number, got `{v}`")))?;
    Ok((k, x))
}

fn particle_input(
    args: &ParticleArgs,
    v0_flag: Option<f64>,
    cfg: &ConfigFile,
) -> Result<ParticleInput, CliError> {
    let mut input = ParticleInput { v0: v0_flag, ..ParticleInput::default() };
    if let Some(tokens) = &args.charge {
        input.kind = Some(ParticleKind::Charge);
        for t in tokens {
            let (k, x) = parse_kv(t)?;
            match k {
                "q" => input.q = Some(x),
                "m" => input.m = Some(x),
                "lambda" => input.lambda = Some(x),
                "v0" => input.v0 = Some(x),
                "z2-0" => input.z2_0 = Some(x),
                _ => {
                    return Err(CliError::Usage(format!(
                        "unknown --charge field `{k}`; expected q=, m=, lambda=, v0=, z2-0="
                    )))
                }
            }
        }
    }
    if let Some(tokens) = &args.mirror {
        input.kind = Some(ParticleKind::Mirror);
        for t in tokens {
            let (k, x) = parse_kv(t)?;
            match k {
                "omega-p" => input.omega_p = Some(x),
                "gamma-ratio" => input.gamma_ratio = Some(x),
                "m" => input.m = Some(x),
                "v0" => input.v0 = Some(x),
                "z2-0" => input.z2_0 = Some(x),
                _ => {
                    return Err(CliError::Usage(format!(
                        "unknown --mirror field `{k}`; expected omega-p=, gamma-ratio=, m=, v0=, z2-0="
                    )))
                }
            }
        }
    }
    if let Some(kind) = &cfg.kind {
        input.kind = Some(match kind.as_str() {
            "charge" => ParticleKind::Charge,
            "mirror" => ParticleKind::Mirror,
            other => {
                return Err(CliError::Usage(format!(
                    "config kind must be \"charge\" or \"mirror\", got \"{other}\""
                )))
            }
        });
    }
    if cfg.q.is_some() {
        input.q = cfg.q;
    }
    if cfg.m.is_some() {
        input.m = cfg.m;
    }
    if cfg.omega_p.is_some() {
        input.omega_p = cfg.omega_p;
    }
    if cfg.gamma_ratio.is_some() {
        input.gamma_ratio = cfg.gamma_ratio;
    }
    if cfg.lambda.is_some() {
        input.lambda = cfg.lambda;
    }
    if cfg.v0.is_some() {
        input.v0 = cfg.v0;
    }
    if cfg.z2_0.is_some() {
        input.z2_0 = cfg.z2_0;
    }
    Ok(input)
}

fn resolve_particle(input: &ParticleInput, ratio_only_ok: bool) -> Result<ResolvedParticle, CliError> {
    let kind = input.kind.ok_or_else(|| {
        CliError::Usage(
            "pick a particle: --charge q=.. m=.. or --mirror omega-p=.. m=.. (or gamma-ratio=..)"
                .into(),
        )
    })?;
    match kind {
        ParticleKind::Charge => {
            if input.omega_p.is_some() || input.gamma_ratio.is_some() {
                return Err(CliError::Usage(
                    "omega-p= and gamma-ratio= describe the mirror, not the charge".into(),
                ));
            }
            let q = input
                .q
                .ok_or_else(|| CliError::Usage("the charge needs q=<strength>".into()))?;
            let m = input.m.ok_or_else(|| {
                CliError::Usage("the charge needs m=<mass> (a rate in natural units)".into())
            })?;
            let mut p = ParticleParams::charge(q, m);
            if let Some(l) = input.lambda {
                p = p.with_cutoff(l);
            }
            finish_particle(p, input)
        }
        ParticleKind::Mirror => {
            if input.q.is_some() || input.lambda.is_some() {
                return Err(CliError::Usage(
                    "q= and lambda= describe the charge, not the mirror".into(),
                ));
            }
            match (input.omega_p, input.gamma_ratio) {
                (Some(_), Some(_)) => Err(CliError::Usage(
                    "give omega-p= or gamma-ratio=, not both".into(),
                )),
                (Some(w), None) => {
                    let m = input.m.ok_or_else(|| {
                        CliError::Usage("the mirror needs m=<mass> alongside omega-p=".into())
                    })?;
                    finish_particle(ParticleParams::mirror(w, m), input)
                }
                (None, Some(g)) => {
                    if let Some(m) = input.m {
                        // gamma/omega_p = omega_p/(pi m) pins the plasma frequency
                        finish_particle(ParticleParams::mirror(PI * m * g, m), input)
                    } else if ratio_only_ok {
                        if !(g > 0.0) || !g.is_finite() {
                            return Err(CliError::Usage(format!(
                                "gamma-ratio must be positive and finite, got {g:e}"
                            )));
                        }
                        Ok(ResolvedParticle::RatioOnly { gamma_ratio: g })
                    } else {
                        Err(CliError::Usage(
                            "this subcommand needs dimensional parameters: add m=<mass>, \
                             and omega-p follows from gamma-ratio"
                                .into(),
                        ))
                    }
                }
                (None, None) => Err(CliError::Usage(
                    "the mirror needs omega-p=<plasma frequency> and m=<mass>, or gamma-ratio="
                        .into(),
                )),
            }
        }
    }
}

fn finish_particle(mut p: ParticleParams, input: &ParticleInput) -> Result<ResolvedParticle, CliError> {
    if let Some(v) = input.v0 {
        p = p.with_initial_velocity(v);
    }
    if let Some(z) = input.z2_0 {
        p = p.with_position_variance(z);
    }
    p.validate().map_err(param_error)?;
    Ok(ResolvedParticle::Full(p))
}

fn require_full(r: ResolvedParticle) -> ParticleParams {
    match r {
        ResolvedParticle::Full(p) => p,
        // resolve_particle only returns RatioOnly when asked to allow it
        ResolvedParticle::RatioOnly { .. } => unreachable!("dimensional particle required"),
    }
}

/// Subcommands that integrate or synthesize have nothing to do at zero
/// coupling, where drag and noise both vanish.
fn require_coupling(p: &ParticleParams, what: &str) -> Result<(), CliError> {
    if p.coupling == 0.0 {
        return Err(CliError::Usage(format!(
            "a zero coupling leaves nothing to {what}; give a positive q or omega-p"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Error mapping onto the exit-code contract

fn param_error(e: ParamError) -> CliError {
    CliError::Usage(e.to_string())
}

fn quad_error(e: QuadError) -> CliError {
    CliError::Runtime(e.to_string())
}

fn noise_error(e: NoiseError) -> CliError {
    match e {
        NoiseError::StepTooCoarse { .. }
        | NoiseError::TooFewSamples { .. }
        | NoiseError::GridTooFine { .. } => CliError::Usage(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    }
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Param(_)
        | SimError::StepTooLarge { .. }
        | SimError::TooFewPaths { .. }
        | SimError::ZeroStride
        | SimError::RunTooShort { .. } => CliError::Usage(e.to_string()),
        SimError::Noise(n) => noise_error(n),
        other => CliError::Runtime(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Output files and the run manifest

struct RunOutput {
    dir: PathBuf,
    records: Vec<Value>,
}

impl RunOutput {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| {
            CliError::Runtime(format!("cannot create output directory {}: {e}", dir.display()))
        })?;
        Ok(RunOutput { dir: dir.to_path_buf(), records: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.records.push(json!({
            "path": name,
            "sha": hex::encode(Sha256::digest(bytes)),
        }));
        Ok(())
    }

    fn write_json(&mut self, name: &str, report: &Value) -> Result<(), CliError> {
        self.write(name, to_pretty(report).as_bytes())
    }

    /// Write `manifest.json`. The manifest lists every other output with
    /// its hash; it is not listed itself.
    fn finish(self, subcommand: &str, params: Value, ctx: &Ctx) -> Result<(), CliError> {
        let manifest = json!({
            "subcommand": subcommand,
            "params": params,
            "seed": ctx.seed,
            "outputs": self.records,
            "duration_s": round12(ctx.started.elapsed().as_secs_f64()),
        });
        let path = self.dir.join("manifest.json");
        fs::write(&path, to_pretty(&manifest))
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}

fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report values always serialize");
    s.push('\n');
    s
}

/// A float as a JSON number carrying 12 significant digits, the same
/// view [`sig12`] prints. Non-finite values become null.
fn round12(x: f64) -> Value {
    match sig12(x).parse::<f64>() {
        Ok(y) => serde_json::Number::from_f64(y).map(Value::Number).unwrap_or(Value::Null),
        Err(_) => Value::Null,
    }
}

/// Round every float in a JSON tree to 12 significant digits. Integers
/// (counts, seeds) pass through untouched.
fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                n.as_f64().map(round12).unwrap_or(Value::Number(n))
            } else {
                Value::Number(n)
            }
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, round_floats(v))).collect())
        }
        other => other,
    }
}

fn to_value<T: serde::Serialize>(t: &T) -> Value {
    round_floats(serde_json::to_value(t).expect("report values always serialize"))
}

fn print_report(report: &Value) {
    println!("{}", to_pretty(report).trim_end());
}

// ---------------------------------------------------------------------------
// analytic

fn cmd_analytic(ctx: &Ctx, args: &ParticleArgs) -> Result<(), CliError> {
    let input = particle_input(args, None, &ctx.cfg)?;
    let particle = resolve_particle(&input, true)?;
    let report = analytic_report(&particle)?;

    if ctx.json {
        print_report(&report);
    } else {
        print_analytic(&report);
    }

    let params = match &particle {
        ResolvedParticle::Full(p) => to_value(p),
        ResolvedParticle::RatioOnly { gamma_ratio } => {
            json!({"kind": "mirror", "gamma-ratio": round12(*gamma_ratio)})
        }
    };
    let mut out = RunOutput::create(&ctx.out_dir)?;
    out.write_json("analytic.json", &report)?;
    out.finish("analytic", params, ctx)
}

fn analytic_report(particle: &ResolvedParticle) -> Result<Value, CliError> {
    match particle {
        ResolvedParticle::RatioOnly { gamma_ratio } => {
            let exact = v2_mirror_exact(*gamma_ratio)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(json!({
                "kind": "mirror",
                "gamma-ratio": round12(*gamma_ratio),
                "v2": {
                    "exact": round12(exact),
                    "small-ratio-limit": round12(v2_mirror_small_gamma_limit(*gamma_ratio)),
                    "saturation": round12(0.125),
                },
                "note": "dimensionless form; add m=<mass> for dimensional output",
            }))
        }
        ResolvedParticle::Full(p) => {
            let derived = derive_constants(p).map_err(param_error)?;
            if p.coupling == 0.0 {
                return Ok(json!({
                    "kind": to_value(&p.kind),
                    "m": round12(p.mass),
                    "gamma": round12(0.0),
                    "note": "free particle: zero drag and zero noise",
                }));
            }
            let gamma = derived.gamma;
            let mut report = json!({
                "kind": to_value(&p.kind),
                "m": round12(p.mass),
                "gamma": round12(gamma),
                "relaxation-time": round12(derived.relaxation_time),
                "v0": round12(p.initial_velocity),
            });
            let obj = report.as_object_mut().expect("report is an object");
            let v2_eq = match p.kind {
                ParticleKind::Charge => {
                    let cutoff = derived.cutoff.expect("charges carry a cutoff");
                    let v2 = v2_charge(gamma, p.mass, cutoff);
                    obj.insert("q".into(), round12(p.coupling));
                    obj.insert("cutoff".into(), round12(cutoff));
                    obj.insert(
                        "v2".into(),
                        json!({
                            "closed-form": round12(v2),
                            "fdt-route": round12(v2_fdt(gamma, p.mass, cutoff)),
                        }),
                    );
                    v2
                }
                ParticleKind::Mirror => {
                    let ratio = derived.gamma_ratio.expect("mirrors carry a ratio");
                    let exact = v2_mirror_exact(ratio)
                        .map_err(|e| CliError::Usage(e.to_string()))?;
                    obj.insert("omega-p".into(), round12(p.coupling));
                    obj.insert("gamma-ratio".into(), round12(ratio));
                    obj.insert(
                        "v2".into(),
                        json!({
                            "exact": round12(exact),
                            "small-ratio-limit": round12(v2_mirror_small_gamma_limit(ratio)),
                            "dissipation-scale": round12(v2_mirror_small_gamma(gamma, p.mass)),
                            "saturation": round12(0.125),
                        }),
                    );
                    exact
                }
            };

            let curve = MsdCurve { gamma, v2_eq, z2_0: p.initial_position_variance };
            let msd_samples: Vec<Value> = (0..=24)
                .map(|j| {
                    let t = j as f64 * (6.0 / gamma) / 24.0;
                    json!({"t": round12(t), "z2": round12(msd(t, &curve))})
                })
                .collect();
            let alpha_samples: Vec<Value> = (0..=24)
                .map(|j| {
                    let omega = j as f64 * (5.0 * gamma) / 24.0;
                    let a = fdt_susceptibility(omega, gamma, p.mass);
                    json!({
                        "omega": round12(omega),
                        "real": round12(a.real),
                        "imag": round12(a.imag),
                    })
                })
                .collect();
            obj.insert("msd".into(), Value::Array(msd_samples));
            obj.insert("susceptibility".into(), Value::Array(alpha_samples));
            Ok(report)
        }
    }
}

fn print_analytic(report: &Value) {
    let kind = report["kind"].as_str().unwrap_or("?");
    match kind {
        "charge" => {
            println!(
                "charge: q = {}   m = {}",
                report["q"].as_f64().map(sig12).unwrap_or_default(),
                report["m"].as_f64().map(sig12).unwrap_or_default()
            );
            print_field(report, "gamma", "gamma");
            print_field(report, "relaxation-time", "relaxation time");
            print_field(report, "cutoff", "cutoff");
            if report["v2"].is_object() {
                print_field(&report["v2"], "closed-form", "<v^2> closed form");
                print_field(&report["v2"], "fdt-route", "<v^2> fdt route");
            }
        }
        "mirror" => {
            if let Some(w) = report["omega-p"].as_f64() {
                println!(
                    "mirror: omega_p = {}   m = {}",
                    sig12(w),
                    report["m"].as_f64().map(sig12).unwrap_or_default()
                );
                print_field(report, "gamma", "gamma");
                print_field(report, "relaxation-time", "relaxation time");
            } else {
                println!("mirror, dimensionless form");
            }
            print_field(report, "gamma-ratio", "gamma ratio");
            if report["v2"].is_object() {
                print_field(&report["v2"], "exact", "<v^2> exact");
                print_field(&report["v2"], "small-ratio-limit", "<v^2> small-ratio limit");
                print_field(&report["v2"], "dissipation-scale", "<v^2> dissipation scale");
                print_field(&report["v2"], "saturation", "<v^2> saturation (large ratio)");
            }
        }
        _ => {}
    }
    if let Some(note) = report["note"].as_str() {
        println!("note: {note}");
    }
    if report["msd"].is_array() {
        println!("msd and susceptibility samples included in analytic.json");
    }
}

fn print_field(report: &Value, key: &str, label: &str) {
    if let Some(x) = report[key].as_f64() {
        println!("{label} = {}", sig12(x));
    }
}

// ---------------------------------------------------------------------------
// quadrature

fn cmd_quadrature(ctx: &Ctx, args: &ParticleArgs) -> Result<(), CliError> {
    let input = particle_input(args, None, &ctx.cfg)?;
    let p = require_full(resolve_particle(&input, false)?);
    require_coupling(&p, "integrate")?;
    let derived = derive_constants(&p).map_err(param_error)?;

    let report = match p.kind {
        ParticleKind::Charge => {
            let cutoff = derived.cutoff.expect("charges carry a cutoff");
            let closed = v2_charge(derived.gamma, p.mass, cutoff);
            let oracle = v2_charge_quad(derived.gamma, p.mass, cutoff).map_err(quad_error)?;
            let rel = (closed - oracle.value).abs() / oracle.value.abs().max(f64::MIN_POSITIVE);
            json!({
                "kind": "charge",
                "gamma": round12(derived.gamma),
                "cutoff": round12(cutoff),
                "closed-form": round12(closed),
                "quadrature": to_value(&oracle),
                "relative-difference": round12(rel),
            })
        }
        ParticleKind::Mirror => {
            let ratio = derived.gamma_ratio.expect("mirrors carry a ratio");
            let closed = v2_mirror_exact(ratio).map_err(|e| CliError::Usage(e.to_string()))?;
            let mq = v2_mirror_quad(derived.gamma, p.mass, p.coupling).map_err(quad_error)?;
            let spec = mq.spectrum_route.value;
            let rel_closed = (closed - spec).abs() / spec.abs().max(f64::MIN_POSITIVE);
            let rel_routes = (mq.double_integral.value - spec).abs() / spec.abs().max(f64::MIN_POSITIVE);
            json!({
                "kind": "mirror",
                "gamma": round12(derived.gamma),
                "gamma-ratio": round12(ratio),
                "closed-form": round12(closed),
                "double-integral": to_value(&mq.double_integral),
                "spectrum-route": to_value(&mq.spectrum_route),
                "relative-difference": {
                    "closed-vs-spectrum": round12(rel_closed),
                    "double-vs-spectrum": round12(rel_routes),
                },
            })
        }
    };

    if ctx.json {
        print_report(&report);
    } else {
        match p.kind {
            ParticleKind::Charge => {
                print_field(&report, "gamma", "charge: gamma");
                print_field(&report, "closed-form", "closed form");
                println!(
                    "quadrature = {}  (± {}, {} evaluations)",
                    report["quadrature"]["value"].as_f64().map(sig12).unwrap_or_default(),
                    report["quadrature"]["abs_error_estimate"].as_f64().map(sig12).unwrap_or_default(),
                    report["quadrature"]["evaluations"]
                );
                print_field(&report, "relative-difference", "relative difference");
            }
            ParticleKind::Mirror => {
                print_field(&report, "gamma-ratio", "mirror: gamma ratio");
                print_field(&report, "closed-form", "closed form");
                for (key, label) in [("double-integral", "double integral"), ("spectrum-route", "spectrum route")] {
                    println!(
                        "{label} = {}  (± {}, {} evaluations)",
                        report[key]["value"].as_f64().map(sig12).unwrap_or_default(),
                        report[key]["abs_error_estimate"].as_f64().map(sig12).unwrap_or_default(),
                        report[key]["evaluations"]
                    );
                }
                print_field(&report["relative-difference"], "closed-vs-spectrum", "closed vs spectrum");
                print_field(&report["relative-difference"], "double-vs-spectrum", "double vs spectrum");
            }
        }
    }

    let mut out = RunOutput::create(&ctx.out_dir)?;
    out.write_json("quadrature.json", &report)?;
    out.finish("quadrature", to_value(&p), ctx)
}

// ---------------------------------------------------------------------------
// noise-check

fn cmd_noise_check(ctx: &Ctx, args: &NoiseCheckArgs) -> Result<(), CliError> {
    let input = particle_input(&args.particle, None, &ctx.cfg)?;
    let p = require_full(resolve_particle(&input, false)?);
    require_coupling(&p, "synthesize")?;

    let spectrum = p.spectrum();
    let omega_max = spectrum.max_frequency();
    let dt = args.dt.or(ctx.cfg.dt).unwrap_or(PI / (5.0 * omega_max));
    let n = args.samples.or(ctx.cfg.samples).unwrap_or(1024);
    let n_paths = args.paths.or(ctx.cfg.paths).unwrap_or(64);
    if n_paths < 2 {
        return Err(CliError::Usage("the covariance estimate needs at least 2 paths".into()));
    }

    let paths: Vec<_> = (0..n_paths)
        .map(|k| synthesize(&spectrum, dt, n, substream_seed(ctx.seed, k as u64, 0)))
        .collect::<Result<_, _>>()
        .map_err(noise_error)?;

    let lags: Vec<usize> = [0usize, 1, 2, 3, 5, 8, 13, 21].iter().copied().filter(|&l| l < n).collect();
    let mut rows = Vec::new();
    let mut all_pass = true;
    for &lag in &lags {
        let (emp, se) = empirical_covariance(&paths, lag).map_err(noise_error)?;
        let target = target_covariance(&spectrum, lag as f64 * dt).map_err(quad_error)?.value;
        let z = if se > 0.0 {
            (emp - target) / se
        } else if emp == target {
            0.0
        } else {
            f64::INFINITY
        };
        let pass = z.abs() <= 3.0;
        all_pass &= pass;
        rows.push(json!({
            "lag": lag,
            "tau": round12(lag as f64 * dt),
            "empirical": round12(emp),
            "se": round12(se),
            "target": round12(target),
            "z": round12(z),
            "pass": pass,
        }));
    }

    let report = json!({
        "spectrum": to_value(&spectrum),
        "dt": round12(dt),
        "samples": n,
        "paths": n_paths,
        "rows": rows,
        "pass": all_pass,
    });

    if ctx.json {
        print_report(&report);
    } else {
        println!(
            "covariance of the synthesized force: {} paths x {} samples, dt = {}",
            n_paths,
            n,
            sig12(dt)
        );
        println!("{:>4}  {:>18}  {:>18}  {:>18}  {:>8}", "lag", "empirical", "target", "se", "z");
        for row in report["rows"].as_array().expect("rows is an array") {
            println!(
                "{:>4}  {:>18}  {:>18}  {:>18}  {:>8.2}  {}",
                row["lag"].as_u64().unwrap_or(0),
                row["empirical"].as_f64().map(sig12).unwrap_or_default(),
                row["target"].as_f64().map(sig12).unwrap_or_default(),
                row["se"].as_f64().map(sig12).unwrap_or_default(),
                row["z"].as_f64().unwrap_or(f64::NAN),
                if row["pass"].as_bool() == Some(true) { "ok" } else { "FAIL" }
            );
        }
    }

    let params = json!({
        "particle": to_value(&p),
        "dt": round12(dt),
        "samples": n,
        "paths": n_paths,
    });
    let mut out = RunOutput::create(&ctx.out_dir)?;
    out.write_json("noise_check.json", &report)?;
    out.finish("noise-check", params, ctx)?;

    if all_pass {
        println!("covariance within 3 sigma of the target at all {} lags", lags.len());
        Ok(())
    } else {
        Err(CliError::VerifyFailed(
            "synthesized covariance deviates from its target beyond 3 sigma".into(),
        ))
    }
}

// ---------------------------------------------------------------------------
// simulate

fn cmd_simulate(ctx: &Ctx, args: &SimulateArgs) -> Result<(), CliError> {
    let input = particle_input(&args.particle, args.v0, &ctx.cfg)?;
    let p = require_full(resolve_particle(&input, false)?);
    let derived = derive_constants(&p).map_err(param_error)?;

    let omega_max = p.spectrum().max_frequency();
    let drag_bound = if derived.gamma > 0.0 { 0.01 / derived.gamma } else { f64::INFINITY };
    let spectral_bound = if omega_max > 0.0 { PI / (5.0 * omega_max) } else { f64::INFINITY };
    let default_dt = drag_bound.min(spectral_bound);

    let dt = match args.dt.or(ctx.cfg.dt) {
        Some(dt) => dt,
        None if default_dt.is_finite() => default_dt,
        None => {
            return Err(CliError::Usage(
                "the free particle sets no time scale; give --dt and --t-end explicitly".into(),
            ))
        }
    };
    let t_end = match args.t_end.or(ctx.cfg.t_end) {
        Some(t) => t,
        None if derived.relaxation_time.is_finite() => 30.0 * derived.relaxation_time,
        None => {
            return Err(CliError::Usage(
                "the free particle sets no time scale; give --dt and --t-end explicitly".into(),
            ))
        }
    };
    let n_paths = args.paths.or(ctx.cfg.paths).unwrap_or(1000);
    let stride = args.stride.or(ctx.cfg.stride).unwrap_or(1);
    let eq_start = ctx.cfg.equilibrium_start.unwrap_or(args.equilibrium_start);

    let sim = SimConfig::new(p, dt, t_end, n_paths, ctx.seed, stride)
        .with_equilibrium_start(eq_start);
    let stats = run_ensemble(&sim).map_err(sim_error)?;
    let fit = fit_regimes(&stats, derived.gamma).ok();

    let mut csv = Vec::new();
    stats
        .write_csv(&mut csv)
        .map_err(|e| CliError::Runtime(format!("cannot render stats.csv: {e}")))?;

    let stats_json = json!({
        "config": to_value(&sim),
        "stats": to_value(&stats),
        "regime-fit": fit.as_ref().map(to_value).unwrap_or(Value::Null),
    });

    let mut out = RunOutput::create(&ctx.out_dir)?;
    out.write("stats.csv", &csv)?;
    out.write_json("stats.json", &stats_json)?;
    out.finish("simulate", to_value(&sim), ctx)?;

    let summary = json!({
        "gamma": round12(derived.gamma),
        "dt": round12(dt),
        "t-end": round12(t_end),
        "paths": n_paths,
        "recorded-points": stats.times.len(),
        "equilibrium": stats.equilibrium.as_ref().map(to_value).unwrap_or(Value::Null),
        "regime-fit": fit.as_ref().map(to_value).unwrap_or(Value::Null),
        "files": ["stats.csv", "stats.json", "manifest.json"],
    });

    if ctx.json {
        print_report(&summary);
        return Ok(());
    }

    println!(
        "simulated {} paths to t = {} at dt = {} (gamma = {})",
        n_paths,
        sig12(t_end),
        sig12(dt),
        sig12(derived.gamma)
    );
    match &stats.equilibrium {
        Some(eq) => {
            println!(
                "equilibrium <(v - v_ref)^2> = {} ± {}",
                sig12(eq.v2_centered),
                sig12(eq.v2_centered_se)
            );
            println!("analytic target             = {}", sig12(eq.analytic_target));
            if eq.analytic_target > 0.0 && eq.v2_centered_se > 0.0 {
                let z = (eq.v2_centered - eq.analytic_target) / eq.v2_centered_se;
                println!(
                    "ratio = {}   ({} sigma from the target)",
                    sig12(eq.v2_centered / eq.analytic_target),
                    sig12(z)
                );
            }
            println!(
                "mean velocity (tail) = {} ± {}   v_ref = {}",
                sig12(eq.mean_v),
                sig12(eq.mean_v_se),
                sig12(eq.v_ref)
            );
        }
        None => println!(
            "equilibrium window not reached: gamma t_end = {} is below 20",
            sig12(derived.gamma * t_end)
        ),
    }
    if let Some(f) = &fit {
        println!(
            "ballistic <z^2>/t^2 = {} ± {}   ({} points)",
            sig12(f.ballistic),
            sig12(f.ballistic_se),
            f.n_ballistic
        );
        println!(
            "diffusive slope = {} ± {}   intercept = {} ± {}   ({} points)",
            sig12(f.diffusive),
            sig12(f.diffusive_se),
            sig12(f.intercept),
            sig12(f.intercept_se),
            f.n_diffusive
        );
    }
    println!("wrote stats.csv, stats.json, manifest.json in {}", ctx.out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// fdt

fn cmd_fdt(ctx: &Ctx, args: &ParticleArgs) -> Result<(), CliError> {
    let input = particle_input(args, None, &ctx.cfg)?;
    let p = require_full(resolve_particle(&input, false)?);
    require_coupling(&p, "probe")?;
    let derived = derive_constants(&p).map_err(param_error)?;
    let gamma = derived.gamma;
    let m = p.mass;

    let samples: Vec<Value> = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&x| {
            let omega = x * gamma;
            let a = fdt_susceptibility(omega, gamma, m);
            json!({
                "omega": round12(omega),
                "real": round12(a.real),
                "imag": round12(a.imag),
            })
        })
        .collect();

    // Static Kramers-Kronig closure: (2/pi) int alpha''(w)/w dw = alpha'(0).
    // Quadrature carries the integral to 50 gamma, the Lorentzian tail is
    // closed analytically from there.
    let head = integrate_1d_auto(
        |w| gamma / (m * (gamma * gamma + w * w)),
        0.0,
        50.0 * gamma,
    )
    .map_err(quad_error)?;
    let tail = (PI / 2.0 - 50.0f64.atan()) / m;
    let kk_static = (2.0 / PI) * (head.value + tail);
    let alpha0 = fdt_susceptibility(0.0, gamma, m).real;
    let kk_residual = (kk_static - alpha0).abs() / alpha0.abs().max(f64::MIN_POSITIVE);

    let mut report = json!({
        "kind": to_value(&p.kind),
        "gamma": round12(gamma),
        "m": round12(m),
        "alpha-static": round12(alpha0),
        "alpha-peak": round12(fdt_susceptibility(gamma, gamma, m).imag),
        "alpha-peak-expected": round12(0.5 / m),
        "kramers-kronig-static": round12(kk_static),
        "kramers-kronig-residual": round12(kk_residual),
        "susceptibility": samples,
    });
    let obj = report.as_object_mut().expect("report is an object");

    match p.kind {
        ParticleKind::Charge => {
            let cutoff = derived.cutoff.expect("charges carry a cutoff");
            let direct = v2_charge(gamma, m, cutoff);
            let via_alpha = v2_fdt(gamma, m, cutoff);
            let oracle = v2_charge_quad(gamma, m, cutoff).map_err(quad_error)?;
            obj.insert(
                "v2".into(),
                json!({
                    "spectral-route": round12(direct),
                    "response-route": round12(via_alpha),
                    "bitwise-identical": direct.to_bits() == via_alpha.to_bits(),
                    "quadrature": round12(oracle.value),
                }),
            );
        }
        ParticleKind::Mirror => {
            let ratio = derived.gamma_ratio.expect("mirrors carry a ratio");
            let exact = v2_mirror_exact(ratio).map_err(|e| CliError::Usage(e.to_string()))?;
            let target = equilibrium_v2_target(&p).map_err(sim_error)?;
            obj.insert(
                "v2".into(),
                json!({
                    "exact": round12(exact),
                    "spectrum-quadrature": round12(target),
                }),
            );
        }
    }

    if ctx.json {
        print_report(&report);
    } else {
        print_field(&report, "gamma", "gamma");
        println!(
            "alpha'(0) = {}   (1/m = {})",
            sig12(alpha0),
            sig12(1.0 / m)
        );
        println!(
            "alpha''(gamma) = {}   (1/2m = {})",
            report["alpha-peak"].as_f64().map(sig12).unwrap_or_default(),
            sig12(0.5 / m)
        );
        println!(
            "kramers-kronig static closure = {}   (relative residual {})",
            sig12(kk_static),
            sig12(kk_residual)
        );
        if report["v2"].is_object() {
            let v2 = &report["v2"];
            print_field(v2, "spectral-route", "<v^2> spectral route");
            print_field(v2, "response-route", "<v^2> response route");
            print_field(v2, "quadrature", "<v^2> quadrature");
            print_field(v2, "exact", "<v^2> exact");
            print_field(v2, "spectrum-quadrature", "<v^2> spectrum quadrature");
            if let Some(b) = v2["bitwise-identical"].as_bool() {
                println!("routes bitwise identical: {b}");
            }
        }
    }

    let mut out = RunOutput::create(&ctx.out_dir)?;
    out.write_json("fdt.json", &report)?;
    out.finish("fdt", to_value(&p), ctx)
}

// ---------------------------------------------------------------------------
// estimate-si

fn cmd_estimate_si(ctx: &Ctx, args: &EstimateSiArgs) -> Result<(), CliError> {
    let input = particle_input(&args.particle, None, &ctx.cfg)?;
    if input.gamma_ratio.is_some() {
        return Err(CliError::Usage(
            "estimate-si takes omega-p in 1/s; gamma-ratio is already dimensionless".into(),
        ));
    }
    if input.lambda.is_some() {
        return Err(CliError::Usage("lambda does not enter the SI estimates".into()));
    }
    let p = require_full(resolve_particle(&input, false)?);
    let distance = args.distance.or(ctx.cfg.distance).unwrap_or(0.01);
    let est = estimate_si(&p, distance).map_err(param_error)?;

    let report = json!({
        "kind": to_value(&p.kind),
        "coupling_per_s": round12(p.coupling),
        "estimates": to_value(&est),
    });

    if ctx.json {
        print_report(&report);
    } else {
        println!(
            "mass = {} kg   distance = {} m",
            sig12(est.mass_kg),
            sig12(est.distance_m)
        );
        println!("gamma = {} 1/s", sig12(est.gamma_per_s));
        if let Some(r) = est.gamma_ratio {
            println!("gamma ratio = {}", sig12(r));
        }
        println!("relaxation time = {} s", sig12(est.relaxation_time_s));
        println!("position-spreading time = {} s", sig12(est.diffusion_time_s));
    }

    let mut out = RunOutput::create(&ctx.out_dir)?;
    out.write_json("estimate_si.json", &report)?;
    out.finish("estimate-si", to_value(&p), ctx)
}

// ---------------------------------------------------------------------------
// verify

fn cmd_verify(ctx: &Ctx, args: &VerifyArgs) -> Result<(), CliError> {
    let verdict = verify::run_suite(ctx.seed, args.perturb_exact).map_err(CliError::Runtime)?;
    let pass = verdict.checks.iter().all(|c| c.pass());

    let worst = verdict
        .checks
        .iter()
        .filter(|c| !c.pass())
        .max_by(|a, b| a.severity().total_cmp(&b.severity()));

    let report = json!({
        "pass": pass,
        "checks": verdict
            .checks
            .iter()
            .map(|c| json!({
                "name": c.name,
                "measured": round12(c.measured),
                "bound": round12(c.bound),
                "pass": c.pass(),
            }))
            .collect::<Vec<_>>(),
        "findings": verdict
            .findings
            .iter()
            .map(|f| json!({
                "name": f.name,
                "value": round12(f.value),
                "note": f.note,
            }))
            .collect::<Vec<_>>(),
        "worst-offender": worst.map(|c| Value::from(c.name)).unwrap_or(Value::Null),
    });

    if ctx.json {
        print_report(&report);
    } else {
        for c in &verdict.checks {
            println!(
                "{}  {:<38} measured {}  bound {}",
                if c.pass() { "PASS" } else { "FAIL" },
                c.name,
                sig12(c.measured),
                sig12(c.bound)
            );
        }
        for f in &verdict.findings {
            println!("INFO  {:<38} value {}  ({})", f.name, sig12(f.value), f.note);
        }
        if pass {
            println!("all {} checks passed", verdict.checks.len());
        } else if let Some(w) = worst {
            println!(
                "FAILED {} of {} checks; worst offender: {} (measured {} vs bound {})",
                verdict.checks.iter().filter(|c| !c.pass()).count(),
                verdict.checks.len(),
                w.name,
                sig12(w.measured),
                sig12(w.bound)
            );
        }
    }

    if pass {
        Ok(())
    } else {
        let w = worst.expect("a failed verdict names its worst check");
        Err(CliError::VerifyFailed(format!(
            "worst offender: {} (measured {} vs bound {})",
            w.name,
            sig12(w.measured),
            sig12(w.bound)
        )))
    }
}
