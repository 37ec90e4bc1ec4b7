//! Experiments that compare finite-`n` laws with their limits and produce
//! self-contained JSON reports.
//!
//! Each experiment reads a flat `key=value` [`Config`]; every key it uses,
//! including defaulted ones, is echoed into `inputs`, so a report can be
//! re-run from its own inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_engine::{
    exact_log_pmf, gaussian_convolve, hs_log_density, lattice_interval_log_prob, Interval,
    MIN_CONDITION_LOG_PROB,
};
use crate::field_dist::{sample_fields, FieldDistribution, FieldRealization};
use crate::g_analysis::{GFunction, MinimumInfo, Phase};
use crate::mc_engine::{empirical_pmf, run_chains, ChainConfig};
use crate::numeric::{bisect, log_add_exp, log_trapezoid};
use crate::rate_theory::{hs_rate, ldp_rate, mdp_rate, scaling, RateSpec};

// ---------------------------------------------------------------- config

/// Flat `key=value` configuration; `#` starts a comment line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config(BTreeMap<String, String>);

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let k = k.trim().to_string();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if map.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key {k:?}")));
            }
        }
        Ok(Self(map))
    }

    pub fn set(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

impl From<BTreeMap<String, String>> for Config {
    fn from(map: BTreeMap<String, String>) -> Self {
        Self(map)
    }
}

/// Typed access with defaults; records the resolved value of every key read.
struct Params<'a> {
    cfg: &'a Config,
    inputs: BTreeMap<String, String>,
}

impl<'a> Params<'a> {
    fn new(cfg: &'a Config) -> Self {
        Self {
            cfg,
            inputs: BTreeMap::new(),
        }
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.cfg.get(key)
    }

    fn parse_err(key: &str, value: &str) -> Error {
        Error::Config(format!("cannot parse {key}={value}"))
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = match self.raw(key) {
            Some(s) => s.parse::<f64>().map_err(|_| Self::parse_err(key, s))?,
            None => default,
        };
        if !v.is_finite() {
            return Err(Error::Config(format!("{key} must be finite")));
        }
        self.inputs.insert(key.into(), v.to_string());
        Ok(v)
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64> {
        let v = match self.raw(key) {
            Some(s) => s.parse::<u64>().map_err(|_| Self::parse_err(key, s))?,
            None => default,
        };
        self.inputs.insert(key.into(), v.to_string());
        Ok(v)
    }

    fn text(&mut self, key: &str, default: &str) -> String {
        let v = self.raw(key).unwrap_or(default).to_string();
        self.inputs.insert(key.into(), v.clone());
        v
    }

    fn nu(&mut self, key: &str, default: &str) -> Result<FieldDistribution> {
        let s = self.raw(key).unwrap_or(default);
        let nu: FieldDistribution = s.parse()?;
        self.inputs.insert(key.into(), nu.to_string());
        Ok(nu)
    }

    fn list<T: FromStr + ToString>(&mut self, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T: Clone,
    {
        let v: Vec<T> = match self.raw(key) {
            Some(s) => s
                .split(',')
                .map(|p| p.trim())
                .filter(|p| !p.is_empty())
                .map(|p| p.parse::<T>().map_err(|_| Self::parse_err(key, s)))
                .collect::<Result<_>>()?,
            None => default.to_vec(),
        };
        if v.is_empty() {
            return Err(Error::Config(format!("{key} must not be empty")));
        }
        let joined = v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        self.inputs.insert(key.into(), joined);
        Ok(v)
    }

    /// `auto` or a number.
    fn auto_or_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None | Some("auto") => {
                self.inputs.insert(key.into(), "auto".into());
                Ok(None)
            }
            Some(s) => {
                let v: f64 = s.parse().map_err(|_| Self::parse_err(key, s))?;
                if !v.is_finite() {
                    return Err(Error::Config(format!("{key} must be finite")));
                }
                self.inputs.insert(key.into(), v.to_string());
                Ok(Some(v))
            }
        }
    }

    fn finish(self, known: &[&str]) -> Result<BTreeMap<String, String>> {
        let known: BTreeSet<&str> = known.iter().copied().collect();
        if let Some(k) = self.cfg.0.keys().find(|k| !known.contains(k.as_str())) {
            return Err(Error::Config(format!(
                "unknown key {k:?}; accepted keys: {}",
                known.into_iter().collect::<Vec<_>>().join(", ")
            )));
        }
        Ok(self.inputs)
    }
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(with = "crate::json::ext_real")]
    pub value: f64,
    #[serde(with = "crate::json::ext_real")]
    pub target: f64,
    #[serde(with = "crate::json::ext_real")]
    pub error: f64,
    #[serde(with = "crate::json::ext_real")]
    pub tol: f64,
    pub pass: bool,
    /// Diagnostics are reported but do not affect the verdict.
    pub asserted: bool,
}

impl Check {
    /// `|value − target| / |target| ≤ tol`
    pub fn relative(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        let error = ((value - target) / target).abs();
        Self::build(name, value, target, error, tol)
    }

    /// `|value − target| / max(1, |target|) ≤ tol`
    pub fn scaled(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        let error = (value - target).abs() / target.abs().max(1.0);
        Self::build(name, value, target, error, tol)
    }

    /// `|value − target| ≤ tol`
    pub fn absolute(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Self::build(name, value, target, (value - target).abs(), tol)
    }

    /// `value ≤ limit`; `target` holds the limit.
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        let mut c = Self::build(name, value, limit, value, limit);
        c.pass = value <= limit;
        c
    }

    /// `value < limit`
    pub fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        let mut c = Self::at_most(name, value, limit);
        c.pass = value < limit;
        c
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::build(name, ok as u8 as f64, 1.0, (!ok) as u8 as f64, 0.0)
    }

    fn build(name: impl Into<String>, value: f64, target: f64, error: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            error,
            tol,
            pass: error <= tol,
            asserted: true,
        }
    }

    pub fn diagnostic(mut self) -> Self {
        self.asserted = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    #[serde(with = "crate::json::ext_real_vec")]
    pub x: Vec<f64>,
    #[serde(with = "crate::json::ext_real_vec")]
    pub y: Vec<f64>,
}

impl Curve {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { name: name.into(), x, y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub experiment: Experiment,
    pub inputs: BTreeMap<String, String>,
    pub curves: Vec<Curve>,
    pub checks: Vec<Check>,
    pub pass: bool,
    /// Wall-clock time; kept out of the JSON so reruns are byte-identical.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl VerificationReport {
    fn new(experiment: Experiment, inputs: BTreeMap<String, String>, curves: Vec<Curve>, checks: Vec<Check>) -> Self {
        let pass = checks.iter().filter(|c| c.asserted).all(|c| c.pass);
        Self {
            experiment,
            inputs,
            curves,
            checks,
            pass,
            runtime_secs: 0.0,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn curve(&self, name: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.name == name)
    }

    /// The inputs as a config that reproduces this report.
    pub fn config(&self) -> Config {
        Config::from(self.inputs.clone())
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.asserted && !c.pass)
    }
}

// ---------------------------------------------------------------- dispatch

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    HsConsistency,
    UniformConvergence,
    Rate,
    Counterexample,
    PhaseFormulas,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::HsConsistency,
        Experiment::UniformConvergence,
        Experiment::Rate,
        Experiment::Counterexample,
        Experiment::PhaseFormulas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::HsConsistency => "hs_consistency",
            Experiment::UniformConvergence => "uniform_convergence",
            Experiment::Rate => "rate",
            Experiment::Counterexample => "counterexample",
            Experiment::PhaseFormulas => "phase_formulas",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|e| e.name()).collect();
                Error::Config(format!("unknown experiment {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

pub fn run_experiment(experiment: Experiment, cfg: &Config) -> Result<VerificationReport> {
    let start = Instant::now();
    let mut report = match experiment {
        Experiment::HsConsistency => verify_hs_consistency(cfg),
        Experiment::UniformConvergence => verify_uniform_convergence(cfg),
        Experiment::Rate => verify_rate(cfg),
        Experiment::Counterexample => verify_counterexample(cfg),
        Experiment::PhaseFormulas => verify_phase_formulas(cfg),
    }?;
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

// ---------------------------------------------------------------- helpers

/// `auto` picks the global minimum with the largest location.
fn select_minimum(g: &GFunction, m: Option<f64>) -> Result<MinimumInfo> {
    match m {
        Some(v) => g.classify_minimum(v),
        None => g
            .global_minima()?
            .into_iter()
            .max_by(|a, b| a.location.total_cmp(&b.location))
            .ok_or_else(|| Error::InvalidArgument("G has no global minimum".into())),
    }
}

fn uniform_grid(lo: f64, hi: f64, points: u64) -> Result<Vec<f64>> {
    if points < 2 || !(hi > lo) {
        return Err(Error::Config(format!("bad grid [{lo}, {hi}] with {points} points")));
    }
    let last = (points - 1) as f64;
    Ok((0..points).map(|i| lo + (hi - lo) * i as f64 / last).collect())
}

/// Number of steps along the sequence where the value goes up.
fn increases(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] > w[0]).count()
}

fn fields_for(nu: &FieldDistribution, n: usize, seed: u64) -> Result<FieldRealization> {
    sample_fields(nu, n, seed)
}

fn fmt_n(n: usize) -> String {
    format!("n={n}")
}

// ---------------------------------------------------------------- hs_consistency

const HS_KEYS: &[&str] = &[
    "n", "beta", "nu", "seed", "alpha", "m", "grid_lo", "grid_hi", "grid_points", "tol",
];

pub fn verify_hs_consistency(cfg: &Config) -> Result<VerificationReport> {
    let mut p = Params::new(cfg);
    let n = p.u64("n", 200)? as usize;
    let beta = p.f64("beta", 1.2)?;
    let nu = p.nu("nu", "two_point 0.3 0.5")?;
    let seed = p.u64("seed", 42)?;
    let alpha = p.f64("alpha", 0.75)?;
    let m_spec = p.auto_or_f64("m")?;
    let lo = p.f64("grid_lo", -8.0)?;
    let hi = p.f64("grid_hi", 8.0)?;
    let points = p.u64("grid_points", 2001)?;
    let tol = p.f64("tol", 1e-6)?;
    let inputs = p.finish(HS_KEYS)?;
    if n == 0 || n > 10_000 {
        return Err(Error::InvalidArgument(format!("n must lie in 1..=10000, got {n}")));
    }
    let m = match m_spec {
        Some(v) => v,
        None => select_minimum(&GFunction::new(beta, nu.clone())?, None)?.location,
    };
    let grid = uniform_grid(lo, hi, points)?;
    let fields = fields_for(&nu, n, seed)?;
    let pmf = exact_log_pmf(&fields, beta)?;
    let conv = gaussian_convolve(&pmf, m, alpha, &grid)?;
    let hs = hs_log_density(&fields, beta, m, alpha, &grid)?;
    let max_rel = conv
        .iter()
        .zip(&hs.log_density)
        .map(|(a, b)| (a - b).exp_m1().abs())
        .fold(0.0, f64::max);
    let mass = log_trapezoid(&grid, &hs.log_density).exp();
    let checks = vec![
        Check::at_most("max_relative_error", max_rel, tol),
        Check::absolute("grid_mass", mass, 1.0, 1e-8).diagnostic(),
        Check::absolute("m_used", m, m, 0.0).diagnostic(),
    ];
    let curves = vec![
        Curve::new("log_density_convolution", grid.clone(), conv),
        Curve::new("log_density_hs", grid, hs.log_density),
    ];
    Ok(VerificationReport::new(Experiment::HsConsistency, inputs, curves, checks))
}

// ---------------------------------------------------------------- uniform_convergence

const UC_KEYS: &[&str] = &[
    "nu", "beta", "seed", "alpha", "m", "n_list", "s_lo", "s_hi", "s_points", "tol", "delta",
    "bound_points",
];

/// `n^{2k(1−α)} (G_n(m + s n^{α−1}) − G_n(m))`
pub fn rescaled_delta_g(gn: &GFunction, n: usize, m: f64, k: usize, alpha: f64, s: f64) -> f64 {
    let nf = n as f64;
    let base = gn.value(m);
    nf.powf(2.0 * k as f64 * (1.0 - alpha)) * (gn.value(m + s * nf.powf(alpha - 1.0)) - base)
}

/// `λ s^{2k}/(2(2k)!) − Σ_{i=1}^{2k−1} |s|^i`
pub fn lower_bound_polynomial(k: usize, lambda: f64, s: f64) -> f64 {
    let a = s.abs();
    let slack: f64 = (1..2 * k).map(|i| a.powi(i as i32)).sum();
    0.5 * hs_rate(k, lambda, s) - slack
}

pub fn verify_uniform_convergence(cfg: &Config) -> Result<VerificationReport> {
    let mut p = Params::new(cfg);
    let nu = p.nu("nu", "two_point 0.3 0.5")?;
    let beta = p.f64("beta", 1.2)?;
    let seed = p.u64("seed", 11)?;
    let alpha = p.f64("alpha", 0.75)?;
    let m_spec = p.auto_or_f64("m")?;
    let n_list: Vec<usize> = p.list("n_list", &[1000, 10_000, 100_000])?;
    let s_lo = p.f64("s_lo", -3.0)?;
    let s_hi = p.f64("s_hi", 3.0)?;
    let s_points = p.u64("s_points", 601)?;
    let tol = p.f64("tol", 0.05)?;
    let delta_spec = p.auto_or_f64("delta")?;
    let bound_points = p.u64("bound_points", 2001)?;
    let mut inputs = p.finish(UC_KEYS)?;

    let g = GFunction::new(beta, nu.clone())?;
    let info = select_minimum(&g, m_spec)?;
    let (m, k, lambda) = (info.location, info.kind, info.strength);
    for &n in &n_list {
        scaling(k, alpha, n as u64)?;
    }
    let delta = match delta_spec {
        Some(d) if d > 0.0 => d,
        Some(d) => return Err(Error::Config(format!("delta must be positive, got {d}"))),
        None => {
            // keep the Taylor remainder below half the leading term
            let mut worst: f64 = 0.0;
            for i in 0..=200 {
                let y = m - 1.0 + 0.01 * i as f64;
                worst = worst.max(g.g_deriv(2 * k + 1, y)?.abs());
            }
            let d = if worst > 0.0 {
                (2 * k + 1) as f64 * lambda / (2.0 * worst)
            } else {
                1.0
            };
            d.min(1.0)
        }
    };
    inputs.insert("delta_resolved".into(), delta.to_string());
    let s_grid = uniform_grid(s_lo, s_hi, s_points)?;
    let theory: Vec<f64> = s_grid.iter().map(|&s| hs_rate(k, lambda, s)).collect();

    struct PerN {
        n: usize,
        values: Vec<f64>,
        sup: f64,
        violations: usize,
        worst_margin: f64,
    }
    let per_n: Vec<PerN> = n_list
        .par_iter()
        .map(|&n| -> Result<PerN> {
            let fields = fields_for(&nu, n, seed)?;
            let gn = GFunction::from_realization(&fields, beta)?;
            let values: Vec<f64> = s_grid
                .iter()
                .map(|&s| rescaled_delta_g(&gn, n, m, k, alpha, s))
                .collect();
            let sup = values
                .iter()
                .zip(&theory)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let reach = delta * (n as f64).powf(1.0 - alpha);
            let mut violations = 0;
            let mut worst_margin = f64::INFINITY;
            for s in uniform_grid(-reach, reach, bound_points)? {
                let margin = rescaled_delta_g(&gn, n, m, k, alpha, s) - lower_bound_polynomial(k, lambda, s);
                worst_margin = worst_margin.min(margin);
                if margin < 0.0 {
                    violations += 1;
                }
            }
            Ok(PerN {
                n,
                values,
                sup,
                violations,
                worst_margin,
            })
        })
        .collect::<Result<_>>()?;

    let mut curves = vec![Curve::new("theory", s_grid.clone(), theory)];
    let mut checks = vec![
        Check::absolute("minimum_location", m, m, 0.0).diagnostic(),
        Check::absolute("minimum_strength", lambda, lambda, 0.0).diagnostic(),
    ];
    let sups: Vec<f64> = per_n.iter().map(|r| r.sup).collect();
    for (idx, r) in per_n.iter().enumerate() {
        curves.push(Curve::new(format!("rescaled_delta_g {}", fmt_n(r.n)), s_grid.clone(), r.values.clone()));
        let sup = Check::below(format!("sup_error {}", fmt_n(r.n)), r.sup, tol);
        checks.push(if idx + 1 == per_n.len() { sup } else { sup.diagnostic() });
        checks.push(Check::at_most(format!("lower_bound_violations {}", fmt_n(r.n)), r.violations as f64, 0.0));
        checks.push(Check::absolute(format!("lower_bound_worst_margin {}", fmt_n(r.n)), r.worst_margin, 0.0, f64::INFINITY).diagnostic());
    }
    curves.push(Curve::new(
        "sup_error",
        per_n.iter().map(|r| r.n as f64).collect(),
        sups.clone(),
    ));
    let strict_decreases = sups.windows(2).filter(|w| w[1] >= w[0]).count();
    checks.push(Check::at_most("sup_error_non_decreasing_steps", strict_decreases as f64, 0.0));
    Ok(VerificationReport::new(Experiment::UniformConvergence, inputs, curves, checks))
}

// ---------------------------------------------------------------- rate

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    MdpConditioned,
    MdpUnconditioned,
    Ldp,
}

impl FromStr for RateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mdp_conditioned" => Ok(RateKind::MdpConditioned),
            "mdp_unconditioned" => Ok(RateKind::MdpUnconditioned),
            "ldp" => Ok(RateKind::Ldp),
            _ => Err(Error::Config(format!(
                "unknown rate kind {s:?}; expected mdp_conditioned, mdp_unconditioned or ldp"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Engine {
    Exact,
    Mc,
}

const RATE_KEYS: &[&str] = &[
    "kind", "nu", "beta", "seed", "m", "alpha", "a", "n_list", "x_grid", "engine", "tol",
    "mc_samples", "mc_chains", "mc_thin_sweeps", "mc_burn_in_sweeps", "mc_seed",
];

struct McParams {
    samples: u64,
    chains: u64,
    thin_sweeps: u64,
    burn_in_sweeps: Option<u64>,
    seed: u64,
}

/// `ln P(S_n = 2i − n)` from the chosen engine.
fn lattice_law(fields: &FieldRealization, beta: f64, engine: Engine, mc: &Option<McParams>) -> Result<Vec<f64>> {
    match engine {
        Engine::Exact => Ok(exact_log_pmf(fields, beta)?.log_p),
        Engine::Mc => {
            let mc = mc.as_ref().expect("mc parameters resolved for the mc engine");
            let n = fields.n;
            let per_chain = mc.samples.div_ceil(mc.chains);
            let mut cfg = ChainConfig::new(fields.clone(), beta, per_chain, mc.seed);
            if let Some(b) = mc.burn_in_sweeps {
                cfg.burn_in = b;
            }
            cfg.thin = mc.thin_sweeps * n as u64;
            cfg.sweeps = cfg.burn_in + per_chain * mc.thin_sweeps;
            let samples: Vec<i32> = run_chains(&cfg, mc.chains as usize)?.concat();
            Ok(empirical_pmf(&samples, n)?.log_p)
        }
    }
}

/// `ln P(S_n/n ∈ cond)`, failing when the event is negligible.
fn condition_log_prob(n: usize, log_p: &[f64], cond: Interval) -> Result<f64> {
    let lp = lattice_interval_log_prob(n, log_p, 0.0, 1.0, cond, None)?;
    if lp == f64::NEG_INFINITY {
        return Err(Error::ZeroProbabilityCondition);
    }
    if lp < MIN_CONDITION_LOG_PROB {
        return Err(Error::ConditionTooSmall(lp));
    }
    Ok(lp)
}

/// Log-probabilities of `{X ≥ x}`, `{X < −x}` and their union for
/// `X = (S_n − nm)/n^α`, optionally conditioned on `S_n/n`.
fn tail_log_probs(n: usize, log_p: &[f64], m: f64, alpha: f64, x: f64, cond: Option<Interval>) -> Result<(f64, f64, f64)> {
    let up = lattice_interval_log_prob(n, log_p, m, alpha, Interval::at_least(x), cond)?;
    let down = lattice_interval_log_prob(n, log_p, m, alpha, Interval::below(-x), cond)?;
    Ok((up, down, log_add_exp(up, down)))
}

pub fn verify_rate(cfg: &Config) -> Result<VerificationReport> {
    let mut p = Params::new(cfg);
    let kind: RateKind = p.text("kind", "mdp_conditioned").parse()?;
    let nu = p.nu("nu", "dirac 0.2")?;
    let beta = p.f64("beta", 0.8)?;
    let seed = p.u64("seed", 0)?;
    let m_spec = p.auto_or_f64("m")?;
    let alpha = if kind == RateKind::Ldp { 1.0 } else { p.f64("alpha", 0.75)? };
    let a_spec = if kind == RateKind::MdpConditioned { p.auto_or_f64("a")? } else { None };
    let n_list: Vec<usize> = p.list("n_list", &[2048, 8192, 32768])?;
    let x_grid: Vec<f64> = p.list("x_grid", &[0.5, 1.0])?;
    let engine = match p.text("engine", "exact").as_str() {
        "exact" => Engine::Exact,
        "mc" => Engine::Mc,
        other => return Err(Error::Config(format!("unknown engine {other:?}; expected exact or mc"))),
    };
    let tol = p.f64("tol", 0.2)?;
    let mc = if engine == Engine::Mc {
        Some(McParams {
            samples: p.u64("mc_samples", 100_000)?,
            chains: p.u64("mc_chains", 100)?.max(1),
            thin_sweeps: p.u64("mc_thin_sweeps", 5)?.max(1),
            burn_in_sweeps: p.auto_or_f64("mc_burn_in_sweeps")?.map(|v| v as u64),
            seed: p.u64("mc_seed", 0)?,
        })
    } else {
        None
    };
    let mut inputs = p.finish(RATE_KEYS)?;
    if x_grid.iter().any(|&x| !(x > 0.0)) && kind != RateKind::Ldp {
        return Err(Error::Config("x_grid entries must be positive".into()));
    }

    let g = GFunction::new(beta, nu.clone())?;
    let info = select_minimum(&g, m_spec)?;
    let m = info.location;
    let globals = g.global_minima()?;
    let mut checks = vec![Check::absolute("minimum_location", m, m, 0.0).diagnostic()];
    let mut curves = Vec::new();

    // theory and speed per kind
    let spec = if kind == RateKind::Ldp {
        None
    } else {
        Some(RateSpec::from_minimum(&info, beta)?)
    };
    let condition = match kind {
        RateKind::MdpConditioned => {
            let radius = info.conditioning_radius;
            let a = match a_spec {
                Some(a) => a,
                None => (0.5 * radius).min(0.5),
            };
            inputs.insert("a_resolved".into(), a.to_string());
            if !(a > 0.0 && a < radius) {
                return Err(Error::InvalidArgument(format!(
                    "a = {a} must lie in (0, conditioning radius = {radius})"
                )));
            }
            Some(Interval::new(m - a, m + a))
        }
        RateKind::MdpUnconditioned => {
            if globals.len() != 1 || (globals[0].location - m).abs() > 1e-9 {
                return Err(Error::InvalidArgument(
                    "the unconditioned moderate deviation needs a unique global minimum at m".into(),
                ));
            }
            None
        }
        RateKind::Ldp => None,
    };
    let m_lo = globals.first().map_or(m, |i| i.location);
    let m_hi = globals.last().map_or(m, |i| i.location);
    let theory: Vec<f64> = x_grid
        .iter()
        .map(|&x| match spec {
            Some(ref s) => Ok(mdp_rate(s, x)),
            None => {
                if x > m_lo && x < m_hi || x == m_lo || x == m_hi {
                    Err(Error::Config(format!("ldp x = {x} must lie outside the global minima")))
                } else {
                    ldp_rate(&g, x)
                }
            }
        })
        .collect::<Result<_>>()?;
    curves.push(Curve::new("theory", x_grid.clone(), theory.clone()));

    struct PerN {
        n: usize,
        rates: Vec<f64>,
        upper: Vec<f64>,
        lower: Vec<f64>,
        unconditioned: Option<Vec<f64>>,
    }
    let per_n: Vec<PerN> = n_list
        .par_iter()
        .map(|&n| -> Result<PerN> {
            let speed = match spec {
                Some(ref s) => scaling(s.k, alpha, n as u64)?.speed,
                None => n as f64,
            };
            let fields = fields_for(&nu, n, seed)?;
            let log_p = lattice_law(&fields, beta, engine, &mc)?;
            if let Some(c) = condition {
                condition_log_prob(n, &log_p, c)?;
            }
            let mut rates = Vec::new();
            let mut upper = Vec::new();
            let mut lower = Vec::new();
            let mut uncond = Vec::new();
            for &x in &x_grid {
                if kind == RateKind::Ldp {
                    let event = if x > m_hi { Interval::at_least(x) } else { Interval::below(x) };
                    let lp = lattice_interval_log_prob(n, &log_p, 0.0, 1.0, event, None)?;
                    rates.push(-lp / speed);
                } else {
                    let (up, down, both) = tail_log_probs(n, &log_p, m, alpha, x, condition)?;
                    rates.push(-both / speed);
                    upper.push(-up / speed);
                    lower.push(-down / speed);
                    if condition.is_some() && globals.len() == 1 {
                        uncond.push(-tail_log_probs(n, &log_p, m, alpha, x, None)?.2 / speed);
                    }
                }
            }
            Ok(PerN {
                n,
                rates,
                upper,
                lower,
                unconditioned: (!uncond.is_empty()).then_some(uncond),
            })
        })
        .collect::<Result<_>>()?;

    let last = per_n.len() - 1;
    for (idx, r) in per_n.iter().enumerate() {
        let tag = fmt_n(r.n);
        curves.push(Curve::new(format!("empirical_rate {tag}"), x_grid.clone(), r.rates.clone()));
        if !r.upper.is_empty() {
            curves.push(Curve::new(format!("empirical_rate_upper {tag}"), x_grid.clone(), r.upper.clone()));
            curves.push(Curve::new(format!("empirical_rate_lower {tag}"), x_grid.clone(), r.lower.clone()));
        }
        for (j, &x) in x_grid.iter().enumerate() {
            let c = Check::relative(format!("rate {tag} x={x}"), r.rates[j], theory[j], tol);
            checks.push(if idx == last { c } else { c.diagnostic() });
            if !r.upper.is_empty() {
                checks.push(Check::relative(format!("rate_upper {tag} x={x}"), r.upper[j], theory[j], tol).diagnostic());
                checks.push(Check::relative(format!("rate_lower {tag} x={x}"), r.lower[j], theory[j], tol).diagnostic());
            }
        }
        if let Some(u) = &r.unconditioned {
            let diff = u.iter().zip(&r.rates).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            checks.push(Check::at_most(format!("conditioned_vs_unconditioned {tag}"), diff, 1e-6).diagnostic());
        }
    }
    for (j, &x) in x_grid.iter().enumerate() {
        let errors: Vec<f64> = per_n
            .iter()
            .map(|r| ((r.rates[j] - theory[j]) / theory[j]).abs())
            .collect();
        curves.push(Curve::new(
            format!("relative_error x={x}"),
            per_n.iter().map(|r| r.n as f64).collect(),
            errors.clone(),
        ));
        checks.push(Check::at_most(format!("error_increases x={x}"), increases(&errors) as f64, 1.0));
    }
    Ok(VerificationReport::new(Experiment::Rate, inputs, curves, checks))
}

// ---------------------------------------------------------------- counterexample

const CE_KEYS: &[&str] = &["beta", "alpha", "n_list", "a", "threshold", "tol"];

/// Positive root of `m = tanh(βm)` for `β > 1`.
pub fn curie_weiss_magnetization(beta: f64) -> Result<f64> {
    if !(beta > 1.0) {
        return Err(Error::InvalidArgument(format!("beta must exceed 1, got {beta}")));
    }
    bisect(|m| (beta * m).tanh() - m, 1e-9, 1.0)
        .ok_or_else(|| Error::Bracket("no positive root of m = tanh(beta m)".into()))
}

pub fn verify_counterexample(cfg: &Config) -> Result<VerificationReport> {
    let mut p = Params::new(cfg);
    let beta = p.f64("beta", 2.0)?;
    let alpha = p.f64("alpha", 0.75)?;
    let n_list: Vec<usize> = p.list("n_list", &[16384])?;
    let a = p.f64("a", 0.5)?;
    let threshold = p.f64("threshold", 0.05)?;
    let tol = p.f64("tol", 0.2)?;
    let inputs = p.finish(CE_KEYS)?;
    if !(beta > 1.0) {
        return Err(Error::InvalidArgument(format!("beta must exceed 1, got {beta}")));
    }
    let nu = FieldDistribution::Dirac { h: 0.0 };
    let g = GFunction::new(beta, nu)?;
    let info = select_minimum(&g, None)?;
    let m = info.location;
    let spec = RateSpec::from_minimum(&info, beta)?;
    let sigma2 = spec.sigma2.expect("type-1 minimum of the Curie-Weiss G");
    let target = 1.0 / (2.0 * sigma2);

    let m_fp = curie_weiss_magnetization(beta)?;
    let sigma2_fp = (1.0 - m_fp * m_fp) / (1.0 - beta * (1.0 - m_fp * m_fp));
    let mut checks = vec![
        Check::scaled("m_vs_fixed_point", m, m_fp, 1e-10),
        Check::relative("sigma2_vs_fixed_point", sigma2, sigma2_fp, 1e-8),
    ];
    if !(a > 0.0 && a < info.conditioning_radius) {
        return Err(Error::InvalidArgument(format!(
            "a = {a} must lie in (0, conditioning radius = {})",
            info.conditioning_radius
        )));
    }
    let cond = Interval::new(m - a, m + a);

    struct PerN {
        n: usize,
        unconditioned: f64,
        conditioned: f64,
        asymmetry: f64,
    }
    let per_n: Vec<PerN> = n_list
        .par_iter()
        .map(|&n| -> Result<PerN> {
            let speed = scaling(1, alpha, n as u64)?.speed;
            let fields = FieldRealization::from_values(vec![0.0; n])?;
            let log_p = exact_log_pmf(&fields, beta)?.log_p;
            // lattice points never sit exactly at |X| = 1 since m is irrational
            let (_, _, both) = tail_log_probs(n, &log_p, m, alpha, 1.0, None)?;
            condition_log_prob(n, &log_p, cond)?;
            let (_, _, both_c) = tail_log_probs(n, &log_p, m, alpha, 1.0, Some(cond))?;
            let pos = lattice_interval_log_prob(n, &log_p, 0.0, 1.0, Interval::at_least(0.5 / n as f64), None)?;
            let neg = lattice_interval_log_prob(n, &log_p, 0.0, 1.0, Interval::below(0.0), None)?;
            Ok(PerN {
                n,
                unconditioned: -both / speed,
                conditioned: -both_c / speed,
                asymmetry: (pos - neg).abs(),
            })
        })
        .collect::<Result<_>>()?;

    let last = per_n.len() - 1;
    for (idx, r) in per_n.iter().enumerate() {
        let tag = fmt_n(r.n);
        let mut group = vec![
            Check::below(format!("unconditioned_rate {tag}"), r.unconditioned, threshold * target),
            Check::relative(format!("conditioned_rate {tag}"), r.conditioned, target, tol),
        ];
        if idx != last {
            group = group.into_iter().map(Check::diagnostic).collect();
        }
        checks.extend(group);
        checks.push(Check::at_most(format!("sign_symmetry {tag}"), r.asymmetry, 1e-12));
    }
    let ns: Vec<f64> = per_n.iter().map(|r| r.n as f64).collect();
    let curves = vec![
        Curve::new("unconditioned_rate", ns.clone(), per_n.iter().map(|r| r.unconditioned).collect()),
        Curve::new("conditioned_rate", ns.clone(), per_n.iter().map(|r| r.conditioned).collect()),
        Curve::new("theory", ns.clone(), vec![target; ns.len()]),
    ];
    Ok(VerificationReport::new(Experiment::Counterexample, inputs, curves, checks))
}

// ---------------------------------------------------------------- phase_formulas

/// The dichotomous law `½δ_h + ½δ_{−h}`.
pub fn dichotomous(h: f64) -> Result<FieldDistribution> {
    FieldDistribution::TwoPoint { h, t: 0.5 }.validated()
}

/// `β − β²(1−t²)`, `t = tanh βh`: strength of the minimum at 0.
pub fn lambda1(beta: f64, h: f64) -> f64 {
    let t2 = (beta * h).tanh().powi(2);
    beta - beta * beta * (1.0 - t2)
}

/// `(1−t²)/(1−β(1−t²))`
pub fn sigma1_sq(beta: f64, h: f64) -> f64 {
    let u = 1.0 - (beta * h).tanh().powi(2);
    u / (1.0 - beta * u)
}

/// `β − 2mβ²(coth(2βm) − m)` at the positive minimum `m`.
pub fn lambda2(beta: f64, m: f64) -> f64 {
    beta - 2.0 * m * beta * beta * (1.0 / (2.0 * beta * m).tanh() - m)
}

/// `1/λ₂ − 1/β` written out: `2m(coth(2βm) − m)/(1 − 2mβ(coth(2βm) − m))`.
pub fn sigma2_sq(beta: f64, m: f64) -> f64 {
    let c = 1.0 / (2.0 * beta * m).tanh() - m;
    2.0 * m * c / (1.0 - 2.0 * m * beta * c)
}

/// The variant printed in the literature, `2m(coth(2βm) − 1)/(2mβ(coth(2βm) − m) − 1)`;
/// reported only.
pub fn sigma2_sq_printed(beta: f64, m: f64) -> f64 {
    let coth = 1.0 / (2.0 * beta * m).tanh();
    2.0 * m * (coth - 1.0) / (2.0 * m * beta * (coth - m) - 1.0)
}

/// `2β⁴(1 − 4t² + 3t⁴)`: fourth derivative of `G` at 0.
pub fn lambda3(beta: f64, h: f64) -> f64 {
    let t2 = (beta * h).tanh().powi(2);
    2.0 * beta.powi(4) * (1.0 - 4.0 * t2 + 3.0 * t2 * t2)
}

/// `8β⁶(−2 + 17t² − 30t⁴ + 15t⁶)`: sixth derivative of `G` at 0.
pub fn lambda4(beta: f64, h: f64) -> f64 {
    let t2 = (beta * h).tanh().powi(2);
    8.0 * beta.powi(6) * (-2.0 + 17.0 * t2 - 30.0 * t2 * t2 + 15.0 * t2 * t2 * t2)
}

/// The variant with `t⁸` in the last term; reported only.
pub fn lambda4_printed(beta: f64, h: f64) -> f64 {
    let t = (beta * h).tanh();
    8.0 * beta.powi(6) * (-2.0 + 17.0 * t.powi(2) - 30.0 * t.powi(4) + 15.0 * t.powi(8))
}

/// Largest root in `(0, 1)` of `2m = tanh(β(m+h)) + tanh(β(m−h))`.
pub fn dichotomous_magnetization(beta: f64, h: f64) -> Result<f64> {
    let f = |m: f64| (beta * (m + h)).tanh() + (beta * (m - h)).tanh() - 2.0 * m;
    let step = 1e-3;
    let mut hi = 1.0;
    while hi > step {
        let lo = hi - step;
        if f(lo) > 0.0 {
            return bisect(f, lo, hi).ok_or_else(|| Error::Bracket("fixed point".into()));
        }
        hi = lo;
    }
    Err(Error::Bracket(format!("no positive fixed point at beta = {beta}, h = {h}")))
}

/// Second-order line: smallest `β` with `β sech²(βh) = 1` (valid up to `h_c`).
pub fn second_order_beta(h: f64) -> Result<f64> {
    if h == 0.0 {
        return Ok(1.0);
    }
    // β sech²(βh) increases up to βh ≈ 0.7717
    let hi = 0.771_680_110_203_2 / h;
    bisect(|b| b / (b * h).cosh().powi(2) - 1.0, 0.0, hi)
        .ok_or_else(|| Error::Bracket(format!("no second-order root at h = {h}")))
}

/// First-order line: the `β` at which the positive minimum and 0 have equal depth.
pub fn first_order_beta(h: f64) -> Result<f64> {
    let nu = dichotomous(h)?;
    // G(0) − G(m₊); negative when no positive minimum exists
    let depth = |beta: f64| -> Result<f64> {
        let g = GFunction::new(beta, nu.clone())?;
        let minima = g.find_minima(2.0)?;
        Ok(match minima.iter().copied().filter(|&m| m > 1e-6).last() {
            Some(m) => g.value(0.0) - g.value(m),
            None => -1.0,
        })
    };
    let mut lo = 1.0;
    let mut hi = 2.0;
    while depth(hi)? <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Bracket(format!("no ferromagnetic beta found at h = {h}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if depth(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Tricritical field: where `G⁽⁴⁾(0)` vanishes along the second-order line.
pub fn tricritical_field() -> Result<f64> {
    let q = |h: f64| -> f64 {
        let beta = match second_order_beta(h) {
            Ok(b) => b,
            Err(_) => return f64::NAN,
        };
        match dichotomous(h).and_then(|nu| GFunction::new(beta, nu)).and_then(|g| g.g_deriv(4, 0.0)) {
            Ok(v) => v,
            Err(_) => f64::NAN,
        }
    };
    bisect(q, 0.3, 0.447).ok_or_else(|| Error::Bracket("tricritical field".into()))
}

/// `(2/3) arcosh √(3/2)`
pub fn tricritical_field_formula() -> f64 {
    2.0 / 3.0 * 1.5f64.sqrt().acosh()
}

/// The critical curve `f(h)` on `[0, 1/2)`.
pub fn critical_beta(h: f64, h_c: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&h) {
        return Err(Error::InvalidArgument(format!("h must lie in [0, 1/2), got {h}")));
    }
    if h <= h_c {
        second_order_beta(h)
    } else {
        first_order_beta(h)
    }
}

const PF_KEYS: &[&str] = &["h_grid", "audit_beta", "audit_h", "tol", "tol_f0", "tol_hc", "tol_f02"];

/// Root of `β sech²(0.2β) = 1` from an independent Brent solve.
const F_AT_0_2: f64 = 1.044_256_792_400_949;

const AUDIT_BETA: [f64; 10] = [1.2, 1.5, 2.0, 1.3, 2.5, 3.0, 1.8, 4.0, 1.1, 2.2];
const AUDIT_H: [f64; 10] = [0.0, 0.1, 0.2, 0.3, 0.35, 0.4, 0.25, 0.45, 0.05, 0.15];

pub fn verify_phase_formulas(cfg: &Config) -> Result<VerificationReport> {
    let mut p = Params::new(cfg);
    let h_grid: Vec<f64> = p.list("h_grid", &[0.0, 0.1, 0.2, 0.3, 0.4, 0.45, 0.47])?;
    let audit_beta: Vec<f64> = p.list("audit_beta", &AUDIT_BETA)?;
    let audit_h: Vec<f64> = p.list("audit_h", &AUDIT_H)?;
    let tol = p.f64("tol", 1e-8)?;
    let tol_f0 = p.f64("tol_f0", 1e-6)?;
    let tol_hc = p.f64("tol_hc", 1e-3)?;
    let tol_f02 = p.f64("tol_f02", 1e-9)?;
    let inputs = p.finish(PF_KEYS)?;
    if h_grid.iter().any(|h| !(0.0..0.5).contains(h)) {
        return Err(Error::InvalidArgument("h_grid must lie in [0, 1/2)".into()));
    }
    if audit_beta.len() != audit_h.len() {
        return Err(Error::Config("audit_beta and audit_h differ in length".into()));
    }

    let h_c = tricritical_field()?;
    let h_c_formula = tricritical_field_formula();
    let f_curve: Vec<f64> = h_grid
        .par_iter()
        .map(|&h| critical_beta(h, h_c))
        .collect::<Result<_>>()?;
    let mut checks = vec![
        Check::absolute("f(0)", critical_beta(0.0, h_c)?, 1.0, tol_f0),
        Check::absolute("f(0.2)", critical_beta(0.2, h_c)?, F_AT_0_2, tol_f02),
        Check::absolute("f(0.2)_rounded", critical_beta(0.2, h_c)?, 1.0447, 1e-4).diagnostic(),
        Check::absolute("h_c", h_c, h_c_formula, tol_hc),
    ];
    let mut order = h_grid.iter().copied().zip(f_curve.iter().copied()).collect::<Vec<_>>();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = order.windows(2).all(|w| w[0].0 == w[1].0 || w[1].1 > w[0].1);
    checks.push(Check::flag("f_increasing", monotone));

    // closed forms against the Q-polynomial derivatives
    for (&beta, &h) in audit_beta.iter().zip(&audit_h) {
        let tag = format!("beta={beta} h={h}");
        let g = GFunction::new(beta, dichotomous(h)?)?;
        let d = g.derivatives(0.0, 6)?;
        checks.push(Check::scaled(format!("lambda1 {tag}"), lambda1(beta, h), d[2], tol));
        checks.push(Check::scaled(format!("sigma1_sq {tag}"), sigma1_sq(beta, h), 1.0 / d[2] - 1.0 / beta, tol));
        checks.push(Check::scaled(format!("lambda3 {tag}"), lambda3(beta, h), d[4], tol));
        checks.push(Check::scaled(format!("lambda4 {tag}"), lambda4(beta, h), d[6], tol).diagnostic());
        checks.push(Check::scaled(format!("lambda4_printed {tag}"), lambda4_printed(beta, h), d[6], tol).diagnostic());
        let m = dichotomous_magnetization(beta, h)?;
        let located = g
            .find_minima(2.0)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::scaled(format!("fixed_point_m {tag}"), located, m, 1e-10));
        let g2 = g.g_deriv(2, m)?;
        checks.push(Check::scaled(format!("lambda2 {tag}"), lambda2(beta, m), g2, tol));
        checks.push(Check::scaled(format!("sigma2_sq {tag}"), sigma2_sq(beta, m), 1.0 / g2 - 1.0 / beta, tol));
        checks.push(
            Check::scaled(format!("sigma2_sq_printed {tag}"), sigma2_sq_printed(beta, m), 1.0 / g2 - 1.0 / beta, tol)
                .diagnostic(),
        );
    }

    // one representative point per regime
    let regimes = [
        (Phase::Paramagnetic, 0.8, 0.2),
        (Phase::Ferromagnetic, 2.0, 0.2),
        (Phase::SecondOrder, second_order_beta(0.2)?, 0.2),
        (Phase::Tricritical, second_order_beta(h_c)?, h_c),
        (Phase::FirstOrder, first_order_beta(0.47)?, 0.47),
    ];
    for (expected, beta, h) in regimes {
        let got = GFunction::new(beta, dichotomous(h)?)?.classify_phase()?.phase;
        let mut c = Check::flag(format!("phase {expected} beta={beta} h={h}"), got == expected);
        c.value = got as u8 as f64;
        c.target = expected as u8 as f64;
        checks.push(c);
    }
    let curves = vec![Curve::new("f", h_grid, f_curve)];
    Ok(VerificationReport::new(Experiment::PhaseFormulas, inputs, curves, checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let c = Config::parse("# comment\n n = 5 \nbeta=1.5\n\n").unwrap();
        assert_eq!(c.get("n"), Some("5"));
        assert_eq!(c.get("beta"), Some("1.5"));
        assert!(Config::parse("n=1\nn=2").is_err());
        assert!(Config::parse("novalue").is_err());
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_experiments_rejected() {
        let cfg = Config::new().set("bogus", 1);
        assert!(matches!(verify_hs_consistency(&cfg), Err(Error::Config(_))));
        assert!("nope".parse::<Experiment>().is_err());
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
    }

    #[test]
    fn hs_consistency_default_point() {
        let cfg = Config::new().set("m", 0);
        let r = verify_hs_consistency(&cfg).unwrap();
        assert!(r.pass, "{:?}", r.checks);
        assert!(r.check("max_relative_error").unwrap().value < 1e-6);
    }

    #[test]
    fn hs_consistency_single_spin() {
        let cfg = Config::new()
            .set("n", 1)
            .set("beta", 1)
            .set("nu", "dirac 0")
            .set("alpha", 0.5)
            .set("m", 0)
            .set("grid_lo", -6)
            .set("grid_hi", 6)
            .set("grid_points", 241)
            .set("tol", 1e-12);
        let r = verify_hs_consistency(&cfg).unwrap();
        assert!(r.pass, "{:?}", r.checks);
    }

    #[test]
    fn hs_consistency_shifted_center() {
        let base = Config::new().set("n", 100);
        let a = verify_hs_consistency(&base.clone().set("m", 0)).unwrap();
        let b = verify_hs_consistency(&base.set("m", 0.5)).unwrap();
        assert!(a.pass && b.pass);
    }

    #[test]
    fn report_reruns_from_its_inputs() {
        let r = verify_hs_consistency(&Config::new().set("n", 50)).unwrap();
        let again = verify_hs_consistency(&r.config()).unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
        assert!(!serde_json::to_string(&r).unwrap().contains("runtime"));
    }

    #[test]
    fn deterministic_fields_converge() {
        let cfg = Config::new()
            .set("nu", "dirac 0.1")
            .set("beta", 0.9)
            .set("n_list", "1000,10000,100000");
        let r = verify_uniform_convergence(&cfg).unwrap();
        let sup = r.curve("sup_error").unwrap();
        assert!(sup.y.windows(2).all(|w| w[1] < w[0]));
        // the k = 1 Taylor error is O(n^{α−1})
        let ratio = sup.y[2] / sup.y[1];
        assert!((ratio - 10f64.powf(-0.25)).abs() < 0.02, "ratio {ratio}");
        assert_eq!(r.check("lower_bound_violations n=100000").unwrap().value, 0.0);
    }

    #[test]
    fn conditioned_matches_unconditioned_in_paramagnetic_phase() {
        let cfg = Config::new().set("n_list", 4096).set("a", 0.3);
        let r = verify_rate(&cfg).unwrap();
        let c = r.check("conditioned_vs_unconditioned n=4096").unwrap();
        assert!(c.value < 1e-6, "{c:?}");
    }

    #[test]
    fn unconditioned_needs_a_pure_law() {
        let cfg = Config::new()
            .set("kind", "mdp_unconditioned")
            .set("nu", "dirac 0")
            .set("beta", 2)
            .set("n_list", 64);
        assert!(verify_rate(&cfg).is_err());
    }

    #[test]
    fn conditioning_radius_enforced() {
        let cfg = Config::new()
            .set("nu", "dirac 0")
            .set("beta", 2)
            .set("a", 5)
            .set("n_list", 64);
        assert!(matches!(verify_rate(&cfg), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ldp_rate_against_exact_tails() {
        let cfg = Config::new()
            .set("kind", "ldp")
            .set("nu", "dirac 0")
            .set("beta", 0.5)
            .set("n_list", "2048,8192,32768")
            .set("x_grid", "0.2,0.4")
            .set("tol", 0.1);
        let r = verify_rate(&cfg).unwrap();
        assert!(r.pass, "{:#?}", r.failed_checks().collect::<Vec<_>>());
    }

    #[test]
    fn mc_engine_rate_small_system() {
        let cfg = Config::new()
            .set("kind", "mdp_unconditioned")
            .set("engine", "mc")
            .set("n_list", "64,256")
            .set("x_grid", "0.3")
            .set("mc_samples", 20000)
            .set("mc_chains", 4)
            .set("mc_thin_sweeps", 1)
            .set("tol", 1.0);
        let r = verify_rate(&cfg).unwrap();
        let exact = verify_rate(&cfg.clone().set("engine", "exact")).unwrap();
        let a = r.check("rate n=256 x=0.3").unwrap().value;
        let b = exact.check("rate n=256 x=0.3").unwrap().value;
        assert!((a - b).abs() < 0.1 * b, "{a} vs {b}");
        assert!(r.inputs.contains_key("mc_samples") && !exact.inputs.contains_key("mc_samples"));
    }

    #[test]
    fn counterexample_symmetry_and_unconditioned_collapse() {
        let cfg = Config::new().set("n_list", "1024,4096");
        let r = verify_counterexample(&cfg).unwrap();
        assert!(r.check("sign_symmetry n=4096").unwrap().pass);
        assert!(r.check("unconditioned_rate n=4096").unwrap().pass);
        assert!(r.check("sigma2_vs_fixed_point").unwrap().pass);
        assert!(verify_counterexample(&Config::new().set("beta", 0.9)).is_err());
    }

    #[test]
    fn dichotomous_closed_forms() {
        assert!((tricritical_field_formula() - 0.438986).abs() < 1e-6);
        assert!((second_order_beta(0.0).unwrap() - 1.0).abs() < 1e-15);
        let b = second_order_beta(0.2).unwrap();
        assert!((b / (0.2 * b).cosh().powi(2) - 1.0).abs() < 1e-14);
        assert!((b - F_AT_0_2).abs() < 1e-12);
        // second-order point: t² = 1/3 at the tricritical field
        let hc = tricritical_field_formula();
        let t = (1.5 * hc).tanh();
        assert!((t * t - 1.0 / 3.0).abs() < 1e-12);
        assert!(lambda3(1.5, hc).abs() < 1e-12);
        assert!((second_order_beta(hc).unwrap() - 1.5).abs() < 1e-12);
        let m = dichotomous_magnetization(2.0, 0.2).unwrap();
        assert!(((2.0f64 * (m + 0.2)).tanh() + (2.0 * (m - 0.2)).tanh() - 2.0 * m).abs() < 1e-14);
        assert!(sigma2_sq(2.0, m) > 0.0 && sigma2_sq_printed(2.0, m) < 0.0);
    }

    #[test]
    fn first_order_line_has_three_equal_minima() {
        let beta = first_order_beta(0.47).unwrap();
        assert!(beta > 1.5);
        let g = GFunction::new(beta, dichotomous(0.47).unwrap()).unwrap();
        assert_eq!(g.global_minima().unwrap().len(), 3);
    }

    #[test]
    fn phase_formulas_report() {
        let r = verify_phase_formulas(&Config::new()).unwrap();
        assert!(r.pass, "{:#?}", r.failed_checks().collect::<Vec<_>>());
        assert!(r.check("lambda4_printed beta=1.5 h=0.1").is_some());
        assert!(verify_phase_formulas(&Config::new().set("h_grid", "0.6")).is_err());
    }
}
