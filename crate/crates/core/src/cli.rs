//! The `rfcw` command line: `analyze`, `exact`, `mc`, `rates`, `verify`.
//!
//! Exit codes: 0 on success or a passing verification, 1 when a
//! verification misses a tolerance, 2 on usage or input errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact_engine::exact_log_pmf;
use crate::field_dist::{sample_fields, FieldDistribution};
use crate::g_analysis::{GFunction, MinimumInfo, Phase, DEFAULT_SEARCH_BOUND};
use crate::json::{fmt17, to_json};
use crate::mc_engine::{run_chains, summarize, ChainConfig, SampleSummary};
use crate::rate_theory::{ldp_rate, mdp_rate, RateSpec};
use crate::verifier::{run_experiment, Config, Experiment};

/// Version of the key=value config layout accepted by `verify`.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (config schema 1)");

#[derive(Debug, Parser)]
#[command(name = "rfcw", version = VERSION, about = "Random field Curie-Weiss numerical laboratory")]
pub struct Cli {
    /// Upper bound on worker threads
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minima, their classification and the phase of G
    Analyze(AnalyzeArgs),
    /// Exact law of the total magnetization for one field realization
    Exact(ExactArgs),
    /// Glauber dynamics samples of the total magnetization
    Mc(McArgs),
    /// CSV of large and moderate deviation rates on an x grid
    Rates(RatesArgs),
    /// Run a verification experiment from a key=value config
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub nu: String,
    #[arg(long)]
    pub beta: f64,
    /// Minima are searched in [-bound, bound]
    #[arg(long, default_value_t = DEFAULT_SEARCH_BOUND)]
    pub bound: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub nu: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub nu: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Total sweeps per chain, burn-in included (default: burn-in + 10000)
    #[arg(long)]
    pub sweeps: Option<u64>,
    /// Burn-in sweeps per chain (default: 10 n)
    #[arg(long)]
    pub burn_in: Option<u64>,
    /// Single-site updates between retained samples (default: n)
    #[arg(long)]
    pub thin: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Seed of the field realization (default: --seed)
    #[arg(long)]
    pub field_seed: Option<u64>,
    /// JSON summary; samples go to `<out>.samples.bin`
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    #[arg(long)]
    pub nu: String,
    #[arg(long)]
    pub beta: f64,
    /// Location of the minimum for the moderate deviation rate (default: largest global minimum)
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub x_min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub x_max: f64,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub experiment: String,
    /// key=value file; omitted keys take their defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Outcome of a successful command.
enum Outcome {
    Done(String),
    Failed(String),
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match dispatch(cli.command) {
        Ok(Outcome::Done(summary)) => {
            eprintln!("{summary}");
            0
        }
        Ok(Outcome::Failed(summary)) => {
            eprintln!("{summary}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Analyze(a) => analyze(a),
        Command::Exact(a) => exact(a),
        Command::Mc(a) => mc(a),
        Command::Rates(a) => rates(a),
        Command::Verify(a) => verify(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = to_json(value)?;
    text.push('\n');
    emit(out, &text)
}

#[derive(Serialize)]
struct AnalyzeOutput {
    beta: f64,
    nu_spec: String,
    minima: Vec<MinimumInfo>,
    phase: Phase,
}

fn analyze(a: AnalyzeArgs) -> Result<Outcome> {
    let nu: FieldDistribution = a.nu.parse()?;
    let g = GFunction::new(a.beta, nu.clone())?;
    let minima = g.classify_all(a.bound)?;
    let phase = g.classify_phase()?.phase;
    let summary = format!(
        "analyze: {} minima, {} global, phase {phase}",
        minima.len(),
        minima.iter().filter(|m| m.is_global).count()
    );
    emit_json(
        a.out.as_deref(),
        &AnalyzeOutput {
            beta: a.beta,
            nu_spec: nu.to_string(),
            minima,
            phase,
        },
    )?;
    Ok(Outcome::Done(summary))
}

#[derive(Serialize)]
struct ExactOutput {
    n: usize,
    beta: f64,
    nu_spec: String,
    seed: u64,
    #[serde(rename = "log_Z")]
    log_z: f64,
    pmf: Vec<(i64, f64)>,
}

fn exact(a: ExactArgs) -> Result<Outcome> {
    if a.n == 0 {
        return Err(Error::InvalidArgument("--n must be positive".into()));
    }
    let nu: FieldDistribution = a.nu.parse()?;
    let fields = sample_fields(&nu, a.n, a.seed)?;
    let pmf = exact_log_pmf(&fields, a.beta)?;
    let summary = format!("exact: n = {}, log Z = {}", pmf.n, fmt17(pmf.log_z));
    emit_json(
        a.out.as_deref(),
        &ExactOutput {
            n: pmf.n,
            beta: a.beta,
            nu_spec: nu.to_string(),
            seed: a.seed,
            log_z: pmf.log_z,
            pmf: pmf.iter().collect(),
        },
    )?;
    Ok(Outcome::Done(summary))
}

#[derive(Serialize)]
struct McConfigOutput {
    n: usize,
    beta: f64,
    nu_spec: String,
    seed: u64,
    field_seed: u64,
    sweeps: u64,
    burn_in: u64,
    thin: u64,
    chains: usize,
    generator: &'static str,
}

#[derive(Serialize)]
struct McOutput {
    config: McConfigOutput,
    samples_path: String,
    summary: SampleSummary,
}

/// Where `mc` writes its raw samples for a given `--out`.
pub fn samples_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".samples.bin");
    PathBuf::from(s)
}

fn mc(a: McArgs) -> Result<Outcome> {
    if a.n == 0 {
        return Err(Error::InvalidArgument("--n must be positive".into()));
    }
    let nu: FieldDistribution = a.nu.parse()?;
    let field_seed = a.field_seed.unwrap_or(a.seed);
    let fields = sample_fields(&nu, a.n, field_seed)?;
    let mut cfg = ChainConfig::new(fields, a.beta, 10_000, a.seed);
    if let Some(b) = a.burn_in {
        cfg.burn_in = b;
    }
    if let Some(t) = a.thin {
        cfg.thin = t;
    }
    cfg.sweeps = a.sweeps.unwrap_or(cfg.burn_in + 10_000);
    let samples: Vec<i32> = run_chains(&cfg, a.chains)?.concat();
    let bin = samples_path(&a.out);
    let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
    fs::write(&bin, bytes)?;
    let summary = summarize(&samples, a.n)?;
    let line = format!(
        "mc: {} samples, mean S_n = {}, var = {}",
        samples.len(),
        fmt17(summary.mean),
        fmt17(summary.var)
    );
    let output = McOutput {
        config: McConfigOutput {
            n: a.n,
            beta: a.beta,
            nu_spec: nu.to_string(),
            seed: a.seed,
            field_seed,
            sweeps: cfg.sweeps,
            burn_in: cfg.burn_in,
            thin: cfg.thin,
            chains: a.chains,
            generator: "ChaCha8Rng",
        },
        samples_path: bin.to_string_lossy().into_owned(),
        summary,
    };
    emit_json(Some(&a.out), &output)?;
    Ok(Outcome::Done(line))
}

fn rates(a: RatesArgs) -> Result<Outcome> {
    let nu: FieldDistribution = a.nu.parse()?;
    let g = GFunction::new(a.beta, nu)?;
    if a.points < 2 || !(a.x_max > a.x_min) {
        return Err(Error::InvalidArgument("need x_max > x_min and at least 2 points".into()));
    }
    let info = match a.m {
        Some(m) => g.classify_minimum(m)?,
        None => g
            .global_minima()?
            .into_iter()
            .max_by(|p, q| p.location.total_cmp(&q.location))
            .ok_or_else(|| Error::InvalidArgument("G has no global minimum".into()))?,
    };
    let spec = RateSpec::from_minimum(&info, a.beta)?;
    let mut csv = String::from("x,ldp_rate,mdp_rate\n");
    let last = (a.points - 1) as f64;
    for i in 0..a.points {
        let x = a.x_min + (a.x_max - a.x_min) * i as f64 / last;
        // the large deviation rate only exists on [-1, 1]
        let ldp = if x.abs() <= 1.0 { ldp_rate(&g, x)? } else { f64::NAN };
        csv.push_str(&format!("{},{},{}\n", fmt17(x), fmt17(ldp), fmt17(mdp_rate(&spec, x))));
    }
    emit(a.out.as_deref(), &csv)?;
    Ok(Outcome::Done(format!(
        "rates: {} points around m = {} (type {}, strength {})",
        a.points,
        fmt17(info.location),
        info.kind,
        fmt17(info.strength)
    )))
}

fn verify(a: VerifyArgs) -> Result<Outcome> {
    let experiment: Experiment = a.experiment.parse()?;
    let cfg = match &a.config {
        Some(p) => Config::parse(&fs::read_to_string(p)?)?,
        None => Config::new(),
    };
    let report = run_experiment(experiment, &cfg)?;
    emit_json(a.out.as_deref(), &report)?;
    let asserted = report.checks.iter().filter(|c| c.asserted).count();
    let failed: Vec<&str> = report.failed_checks().map(|c| c.name.as_str()).collect();
    let line = format!(
        "verify {experiment}: {} ({} of {asserted} checks passed, {:.2} s){}",
        if report.pass { "PASS" } else { "FAIL" },
        asserted - failed.len(),
        report.runtime_secs,
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {}", failed.join(", "))
        }
    );
    Ok(if report.pass {
        Outcome::Done(line)
    } else {
        Outcome::Failed(line)
    })
}
