//! The random-field marginal ν: parsing, expectations of the observables
//! that enter G and its derivatives, and seeded field realizations.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ln_cosh, poly_eval, HermiteRule};

/// Tolerance on the total mass of a discrete law.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Successive Gauss-Hermite estimates must agree to this (absolute, scaled by max(1, |I|)).
pub const QUADRATURE_TOL: f64 = 1e-12;
const MIN_NODES: usize = 16;
const MAX_NODES: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub enum FieldDistribution {
    Dirac { h: f64 },
    /// `t δ_h + (1 − t) δ_{−h}`
    TwoPoint { h: f64, t: f64 },
    Gaussian { mean: f64, sd: f64 },
    Discrete { points: Vec<f64>, weights: Vec<f64> },
    /// Uniform atomic law over the samples. `source` is kept only to print the spec back.
    Empirical {
        samples: Vec<f64>,
        source: Option<PathBuf>,
    },
}

fn spec_err(msg: impl Into<String>) -> Error {
    Error::DistributionSpec(msg.into())
}

fn parse_f64(tok: &str) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| spec_err(format!("not a number: {tok:?}")))?;
    if !v.is_finite() {
        return Err(spec_err(format!("non-finite parameter: {tok:?}")));
    }
    Ok(v)
}

fn bracket_groups(s: &str) -> Result<Vec<Vec<f64>>> {
    let mut groups = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        if !rest.starts_with('[') {
            return Err(spec_err(format!("expected '[' at {rest:?}")));
        }
        let close = rest
            .find(']')
            .ok_or_else(|| spec_err("unterminated '['"))?;
        let inner = &rest[1..close];
        let vals = if inner.trim().is_empty() {
            Vec::new()
        } else {
            inner.split(',').map(parse_f64).collect::<Result<Vec<_>>>()?
        };
        groups.push(vals);
        rest = rest[close + 1..].trim_start();
    }
    Ok(groups)
}

fn read_samples(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| spec_err(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(parse_f64)
        .collect()
}

impl FromStr for FieldDistribution {
    type Err = Error;

    /// Grammar: `dirac <h>`, `two_point <h> <t>`, `gaussian <mean> <sd>`,
    /// `discrete [<p1>,…] [<w1>,…]`, `empirical <path>`.
    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (kind, rest) = spec
            .split_once(char::is_whitespace)
            .map(|(k, r)| (k, r.trim()))
            .unwrap_or((spec, ""));
        let nums = || -> Result<Vec<f64>> { rest.split_whitespace().map(parse_f64).collect() };
        let dist = match kind {
            "dirac" => match nums()?.as_slice() {
                [h] => FieldDistribution::Dirac { h: *h },
                _ => return Err(spec_err("dirac takes one parameter")),
            },
            "two_point" => match nums()?.as_slice() {
                [h, t] => FieldDistribution::TwoPoint { h: *h, t: *t },
                _ => return Err(spec_err("two_point takes two parameters")),
            },
            "gaussian" => match nums()?.as_slice() {
                [mean, sd] => FieldDistribution::Gaussian { mean: *mean, sd: *sd },
                _ => return Err(spec_err("gaussian takes two parameters")),
            },
            "discrete" => {
                let mut groups = bracket_groups(rest)?;
                if groups.len() != 2 {
                    return Err(spec_err("discrete takes [points] [weights]"));
                }
                let weights = groups.pop().unwrap();
                let points = groups.pop().unwrap();
                FieldDistribution::Discrete { points, weights }
            }
            "empirical" => {
                if rest.is_empty() {
                    return Err(spec_err("empirical takes a path"));
                }
                let path = PathBuf::from(rest);
                FieldDistribution::Empirical {
                    samples: read_samples(&path)?,
                    source: Some(path),
                }
            }
            other => return Err(spec_err(format!("unknown kind {other:?}"))),
        };
        dist.validated()
    }
}

impl fmt::Display for FieldDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            FieldDistribution::Dirac { h } => write!(f, "dirac {h:?}"),
            FieldDistribution::TwoPoint { h, t } => write!(f, "two_point {h:?} {t:?}"),
            FieldDistribution::Gaussian { mean, sd } => write!(f, "gaussian {mean:?} {sd:?}"),
            FieldDistribution::Discrete { points, weights } => {
                write!(f, "discrete [{}] [{}]", list(points), list(weights))
            }
            FieldDistribution::Empirical { source: Some(p), .. } => {
                write!(f, "empirical {}", p.display())
            }
            FieldDistribution::Empirical { samples, source: None } => {
                write!(f, "empirical <{} inline samples>", samples.len())
            }
        }
    }
}

impl Serialize for FieldDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FieldDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn hermite_rule(n: usize) -> Arc<HermiteRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<HermiteRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("hermite cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(HermiteRule::new(n)))
        .clone()
}

/// Merge equal atoms and drop zero weights; output sorted by location.
fn merge_atoms(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    atoms.retain(|&(_, w)| w > 0.0);
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (p, w) in atoms {
        match out.last_mut() {
            Some(last) if last.0 == p => last.1 += w,
            _ => out.push((p, w)),
        }
    }
    out
}

impl FieldDistribution {
    /// Empirical law of a realization; this is how `G_n^h` is built from `G`.
    pub fn empirical(samples: Vec<f64>) -> Result<Self> {
        FieldDistribution::Empirical {
            samples,
            source: None,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        match &self {
            FieldDistribution::Dirac { h } if !h.is_finite() => return Err(spec_err("non-finite h")),
            FieldDistribution::TwoPoint { h, t } => {
                if !(h.is_finite() && *h >= 0.0) {
                    return Err(spec_err("two_point requires h >= 0"));
                }
                if !(0.0..=1.0).contains(t) {
                    return Err(spec_err("two_point requires t in [0, 1]"));
                }
            }
            FieldDistribution::Gaussian { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() {
                    return Err(spec_err("non-finite gaussian parameter"));
                }
                if *sd <= 0.0 {
                    return Err(spec_err("gaussian requires sd > 0"));
                }
            }
            FieldDistribution::Discrete { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return Err(spec_err("discrete needs equally many (nonzero) points and weights"));
                }
                if points.iter().chain(weights).any(|v| !v.is_finite()) {
                    return Err(spec_err("non-finite discrete parameter"));
                }
                if weights.iter().any(|&w| w < 0.0) {
                    return Err(spec_err("negative weight"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(spec_err(format!("weights sum to {total}, not 1")));
                }
            }
            FieldDistribution::Empirical { samples, .. } => {
                if samples.is_empty() {
                    return Err(spec_err("empirical law needs at least one sample"));
                }
                if samples.iter().any(|v| !v.is_finite()) {
                    return Err(spec_err("non-finite empirical sample"));
                }
            }
            _ => {}
        }
        Ok(self)
    }

    /// Atoms `(location, weight)`, merged and sorted; `None` for continuous laws.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        let raw = match self {
            FieldDistribution::Dirac { h } => vec![(*h, 1.0)],
            FieldDistribution::TwoPoint { h, t } => vec![(*h, *t), (-*h, 1.0 - *t)],
            FieldDistribution::Gaussian { .. } => return None,
            FieldDistribution::Discrete { points, weights } => {
                points.iter().copied().zip(weights.iter().copied()).collect()
            }
            FieldDistribution::Empirical { samples, .. } => {
                let w = 1.0 / samples.len() as f64;
                // counts first, so a repeated value gets weight count/n exactly
                let mut sorted = samples.clone();
                sorted.sort_by(f64::total_cmp);
                let mut out: Vec<(f64, f64)> = Vec::new();
                let mut i = 0;
                while i < sorted.len() {
                    let mut j = i;
                    while j < sorted.len() && sorted[j] == sorted[i] {
                        j += 1;
                    }
                    out.push((sorted[i], (j - i) as f64 * w));
                    i = j;
                }
                return Some(out);
            }
        };
        Some(merge_atoms(raw))
    }

    pub fn is_atomic(&self) -> bool {
        !matches!(self, FieldDistribution::Gaussian { .. })
    }

    pub fn mean(&self) -> f64 {
        match self {
            FieldDistribution::Gaussian { mean, .. } => *mean,
            _ => self.atoms().unwrap().iter().map(|(p, w)| p * w).sum(),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            FieldDistribution::Gaussian { mean, sd } => mean * mean + sd * sd,
            _ => self.atoms().unwrap().iter().map(|(p, w)| p * p * w).sum(),
        }
    }

    /// Largest `|h|` in the support, infinite for the Gaussian.
    pub fn support_bound(&self) -> f64 {
        match self {
            FieldDistribution::Gaussian { .. } => f64::INFINITY,
            _ => self
                .atoms()
                .unwrap()
                .iter()
                .map(|(p, _)| p.abs())
                .fold(0.0, f64::max),
        }
    }

    /// The image law under `h ↦ −h`.
    pub fn mirror(&self) -> Self {
        match self {
            FieldDistribution::Dirac { h } => FieldDistribution::Dirac { h: -h },
            FieldDistribution::TwoPoint { h, t } => FieldDistribution::TwoPoint { h: *h, t: 1.0 - t },
            FieldDistribution::Gaussian { mean, sd } => FieldDistribution::Gaussian {
                mean: -mean,
                sd: *sd,
            },
            FieldDistribution::Discrete { points, weights } => FieldDistribution::Discrete {
                points: points.iter().map(|p| -p).collect(),
                weights: weights.clone(),
            },
            FieldDistribution::Empirical { samples, .. } => FieldDistribution::Empirical {
                samples: samples.iter().map(|p| -p).collect(),
                source: None,
            },
        }
    }

    /// Invariance under `h ↦ −h`.
    pub fn is_symmetric(&self) -> bool {
        match self {
            FieldDistribution::Gaussian { mean, .. } => *mean == 0.0,
            _ => {
                let a = self.atoms().unwrap();
                let b = self.mirror().atoms().unwrap();
                a.len() == b.len()
                    && a.iter()
                        .zip(&b)
                        .all(|(x, y)| x.0 == y.0 && (x.1 - y.1).abs() <= 1e-15)
            }
        }
    }

    /// `E_ν f(h)`: exact weighted sum for atomic laws, Gauss-Hermite with
    /// node doubling for the Gaussian.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        match self {
            FieldDistribution::Gaussian { mean, sd } => {
                let mut nodes = MIN_NODES;
                let mut prev = hermite_rule(nodes).expect_normal(*mean, *sd, &f);
                let mut delta = f64::INFINITY;
                while nodes < MAX_NODES {
                    nodes *= 2;
                    let cur = hermite_rule(nodes).expect_normal(*mean, *sd, &f);
                    delta = (cur - prev).abs();
                    if !cur.is_finite() {
                        break;
                    }
                    if delta <= QUADRATURE_TOL * cur.abs().max(1.0) {
                        return Ok(cur);
                    }
                    prev = cur;
                }
                Err(Error::QuadratureNonConvergence { nodes, delta })
            }
            _ => Ok(self.atoms().unwrap().iter().map(|&(p, w)| w * f(p)).sum()),
        }
    }

    /// Smallest Gauss-Hermite rule (power of two) that resolves every probe
    /// function to the quadrature tolerance; `None` for atomic laws.
    pub(crate) fn fixed_rule<F: Fn(f64, f64) -> f64>(
        &self,
        probe_points: &[f64],
        f: F,
    ) -> Result<Option<Arc<HermiteRule>>> {
        let FieldDistribution::Gaussian { mean, sd } = self else {
            return Ok(None);
        };
        let mut nodes = MIN_NODES;
        let eval = |rule: &HermiteRule| -> Vec<f64> {
            probe_points
                .iter()
                .map(|&x| rule.expect_normal(*mean, *sd, |h| f(x, h)))
                .collect()
        };
        let mut prev = eval(&hermite_rule(nodes));
        let mut worst = f64::INFINITY;
        while nodes < MAX_NODES {
            nodes *= 2;
            let rule = hermite_rule(nodes);
            let cur = eval(&rule);
            worst = cur
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
                .fold(0.0, f64::max);
            // one extra doubling beyond the first agreement keeps the kept rule
            // strictly inside its convergence region
            if worst <= 0.1 * QUADRATURE_TOL {
                return Ok(Some(rule));
            }
            prev = cur;
        }
        Err(Error::QuadratureNonConvergence {
            nodes,
            delta: worst,
        })
    }

    /// Draws `n` i.i.d. field values; a pure function of `(self, n, seed)`.
    pub fn sample_fields(&self, n: usize, seed: u64) -> Result<FieldRealization> {
        sample_fields(self, n, seed)
    }
}

/// `E_ν[ln cosh(β(x + h))]`.
pub fn expect_lncosh(nu: &FieldDistribution, beta: f64, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("x"));
    }
    check_beta(beta)?;
    nu.expect(|h| ln_cosh(beta * (x + h)))
}

/// `E_ν[P(tanh(β(x + h)))]` with `P` given by ascending coefficients.
pub fn expect_tanh_poly(nu: &FieldDistribution, coeffs: &[f64], beta: f64, x: f64) -> Result<f64> {
    if coeffs.is_empty() {
        return Err(Error::InvalidArgument("empty polynomial".into()));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("x"));
    }
    check_beta(beta)?;
    nu.expect(|h| poly_eval(coeffs, (beta * (x + h)).tanh()))
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")))
    }
}

/// One quenched draw of the random fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRealization {
    pub values: Vec<f64>,
    pub seed: u64,
    pub n: usize,
}

impl FieldRealization {
    /// A fixed field vector that did not come from a sampler (seed recorded as 0).
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty field vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field value"));
        }
        Ok(Self {
            n: values.len(),
            values,
            seed: 0,
        })
    }

    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|h| -h).collect(),
            seed: self.seed,
            n: self.n,
        }
    }

    /// The empirical law of the realization.
    pub fn empirical_law(&self) -> FieldDistribution {
        FieldDistribution::Empirical {
            samples: self.values.clone(),
            source: None,
        }
    }
}

/// Seeded i.i.d. sampling with ChaCha8 (`seed_from_u64`), so a given
/// `(ν, n, seed)` reproduces bit-identical values on every platform.
pub fn sample_fields(nu: &FieldDistribution, n: usize, seed: u64) -> Result<FieldRealization> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = match nu {
        FieldDistribution::Dirac { h } => vec![*h; n],
        FieldDistribution::TwoPoint { h, t } => (0..n)
            .map(|_| if rng.random::<f64>() < *t { *h } else { -*h })
            .collect(),
        FieldDistribution::Gaussian { mean, sd } => {
            let normal = Normal::new(*mean, *sd)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
        FieldDistribution::Discrete { points, weights } => {
            let cumulative: Vec<f64> = weights
                .iter()
                .scan(0.0, |acc, w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect();
            (0..n)
                .map(|_| {
                    let u = rng.random::<f64>() * cumulative[cumulative.len() - 1];
                    let idx = cumulative.partition_point(|&c| c <= u).min(points.len() - 1);
                    points[idx]
                })
                .collect()
        }
        FieldDistribution::Empirical { samples, .. } => (0..n)
            .map(|_| samples[rng.random_range(0..samples.len())])
            .collect(),
    };
    Ok(FieldRealization { values, seed, n })
}
