//! The function `G(x) = βx²/2 − E_ν ln cosh(β(x+h))`, its derivatives of any
//! order, and the classification of its minima and of the phase.
//!
//! Derivatives use `dⁿ/dxⁿ ln cosh(β(x+h)) = βⁿ Q_n(tanh(β(x+h)))` with
//! `Q_1(t) = t`, `Q_{n+1}(t) = Q_n'(t)(1 − t²)`.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_dist::{check_beta, FieldDistribution, FieldRealization};
use crate::numeric::{bisect, ln_cosh, poly_eval, HermiteRule};

/// Highest derivative order (and so classification depth `2k ≤ 16`).
pub const MAX_ORDER: usize = 16;
/// Uniform step of the sign scan of `G'`.
pub const SCAN_STEP: f64 = 1e-3;
/// Outward march step used to bracket the broadness.
pub const BROADNESS_STEP: f64 = 1e-3;
/// Relative zero tolerance: `|G^{(j)}(m)| < 1e-7 · max(1, β^j)` counts as zero.
pub const ZERO_TOL: f64 = 1e-7;
/// Minima whose height is below this (scaled by `max(1, |inf G|)`) are global.
pub const GLOBAL_TOL: f64 = 1e-11;
/// Default half-width of the minima search: every critical point lies in (−1, 1).
pub const DEFAULT_SEARCH_BOUND: f64 = 2.0;

/// Coefficients (ascending in `t`) of `Q_order`. Exact integers.
pub fn q_polynomial(order: usize) -> Result<Vec<f64>> {
    if order == 0 {
        return Err(Error::InvalidArgument("Q_n is defined for n >= 1".into()));
    }
    if order > MAX_ORDER {
        return Err(Error::OrderTooHigh(order));
    }
    Ok(q_table()[order].clone())
}

fn q_table() -> &'static [Vec<f64>] {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = vec![Vec::new()];
        let mut q: Vec<i128> = vec![0, 1];
        for _ in 1..=MAX_ORDER {
            out.push(q.iter().map(|&c| c as f64).collect());
            let deriv: Vec<i128> = (1..q.len()).map(|i| i as i128 * q[i]).collect();
            let mut next = vec![0i128; deriv.len() + 2];
            for (i, &c) in deriv.iter().enumerate() {
                next[i] += c;
                next[i + 2] -= c;
            }
            while next.len() > 1 && *next.last().unwrap() == 0 {
                next.pop();
            }
            q = next;
        }
        out
    })
}

/// `G` for a given inverse temperature and field law. Built from an empirical
/// law (see [`GFunction::from_realization`]) it is the finite-volume `G_n^h`.
#[derive(Debug, Clone)]
pub struct GFunction {
    beta: f64,
    nu: FieldDistribution,
    atoms: Option<Vec<(f64, f64)>>,
    rule: Option<Arc<HermiteRule>>,
}

/// A minimum of `G` together with its local data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimumInfo {
    #[serde(rename = "m")]
    pub location: f64,
    #[serde(rename = "k")]
    pub kind: usize,
    #[serde(rename = "lambda")]
    pub strength: f64,
    pub height: f64,
    #[serde(with = "crate::json::ext_real")]
    pub broadness: f64,
    #[serde(rename = "cond_radius", with = "crate::json::ext_real")]
    pub conditioning_radius: f64,
    #[serde(rename = "global")]
    pub is_global: bool,
    #[serde(rename = "mdp_ok")]
    pub mdp_condition_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Paramagnetic,
    Ferromagnetic,
    FirstOrder,
    SecondOrder,
    Tricritical,
    Other,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::Paramagnetic => "paramagnetic",
            Phase::Ferromagnetic => "ferromagnetic",
            Phase::FirstOrder => "first_order",
            Phase::SecondOrder => "second_order",
            Phase::Tricritical => "tricritical",
            Phase::Other => "other",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseClassification {
    pub phase: Phase,
    /// Global minima only.
    pub minima: Vec<MinimumInfo>,
}

#[derive(Debug, Clone, Copy)]
struct Critical {
    location: f64,
    kind: usize,
    strength: f64,
}

impl GFunction {
    pub fn new(beta: f64, nu: FieldDistribution) -> Result<Self> {
        check_beta(beta)?;
        let atoms = nu.atoms();
        // probe the integrands on the physical window to fix one rule for all x
        let probes: Vec<f64> = (0..=12).map(|i| -3.0 + 0.5 * i as f64).collect();
        let rule = nu.fixed_rule(&probes, |x, h| {
            let y = beta * (x + h);
            let t = y.tanh();
            ln_cosh(y) + 3.0 * t + 5.0 * t.powi(4) - 7.0 * t.powi(7)
        })?;
        Ok(Self {
            beta,
            nu,
            atoms,
            rule,
        })
    }

    /// `G_n^h` for one field realization.
    pub fn from_realization(fields: &FieldRealization, beta: f64) -> Result<Self> {
        Self::new(beta, fields.empirical_law())
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nu(&self) -> &FieldDistribution {
        &self.nu
    }

    #[inline]
    fn expect<F: Fn(f64) -> f64>(&self, x: f64, f: F) -> f64 {
        match (&self.atoms, &self.rule, &self.nu) {
            (Some(atoms), _, _) => atoms.iter().map(|&(p, w)| w * f(self.beta * (x + p))).sum(),
            (None, Some(rule), FieldDistribution::Gaussian { mean, sd }) => {
                rule.expect_normal(*mean, *sd, |h| f(self.beta * (x + h)))
            }
            _ => unreachable!("continuous law without a quadrature rule"),
        }
    }

    /// `G(x)` without input checks.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        0.5 * self.beta * x * x - self.expect(x, ln_cosh)
    }

    /// `G'(x) = βx − β E tanh(β(x+h))`.
    #[inline]
    pub fn first_derivative(&self, x: f64) -> f64 {
        self.beta * x - self.beta * self.expect(x, f64::tanh)
    }

    fn deriv_unchecked(&self, order: usize, x: f64) -> f64 {
        match order {
            0 => self.value(x),
            1 => self.first_derivative(x),
            _ => {
                let q = &q_table()[order];
                let e = self.expect(x, |y| poly_eval(q, y.tanh()));
                let bp = self.beta.powi(order as i32);
                if order == 2 {
                    self.beta - bp * e
                } else {
                    -bp * e
                }
            }
        }
    }

    /// `G^{(order)}(x)` for `0 ≤ order ≤ 16`.
    pub fn g_deriv(&self, order: usize, x: f64) -> Result<f64> {
        if order > MAX_ORDER {
            return Err(Error::OrderTooHigh(order));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("x"));
        }
        Ok(self.deriv_unchecked(order, x))
    }

    /// `[G(x), G'(x), …, G^{(max_order)}(x)]` in one pass over the law.
    pub fn derivatives(&self, x: f64, max_order: usize) -> Result<Vec<f64>> {
        if max_order > MAX_ORDER {
            return Err(Error::OrderTooHigh(max_order));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("x"));
        }
        let table = q_table();
        let mut acc = vec![0.0; max_order + 1];
        let mut add = |w: f64, y: f64| {
            let t = y.tanh();
            acc[0] += w * ln_cosh(y);
            for (j, a) in acc.iter_mut().enumerate().skip(1) {
                *a += w * poly_eval(&table[j], t);
            }
        };
        match (&self.atoms, &self.rule, &self.nu) {
            (Some(atoms), _, _) => {
                for &(p, w) in atoms {
                    add(w, self.beta * (x + p));
                }
            }
            (None, Some(rule), FieldDistribution::Gaussian { mean, sd }) => {
                let scale = std::f64::consts::SQRT_2 * sd;
                let norm = std::f64::consts::PI.sqrt();
                for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
                    add(w / norm, self.beta * (x + mean + scale * z));
                }
            }
            _ => unreachable!("continuous law without a quadrature rule"),
        }
        let b = self.beta;
        Ok(acc
            .iter()
            .enumerate()
            .map(|(j, &e)| match j {
                0 => 0.5 * b * x * x - e,
                1 => b * x - b * e,
                2 => b - b * b * e,
                _ => -b.powi(j as i32) * e,
            })
            .collect())
    }

    fn zero_tol(&self, order: usize) -> f64 {
        ZERO_TOL * self.beta.powi(order as i32).max(1.0)
    }

    /// Root of `G^{(order)}` near `x0`: bisection on the window when it brackets
    /// a sign change, then Newton polishing kept inside the window.
    fn refine_root(&self, order: usize, x0: f64, lo: f64, hi: f64) -> f64 {
        let f = |x: f64| self.deriv_unchecked(order, x);
        let start = match bisect(f, lo, hi) {
            Some(r) => r,
            None => x0,
        };
        let mut x = start;
        for _ in 0..100 {
            let fx = f(x);
            if fx == 0.0 {
                return x;
            }
            let d = self.deriv_unchecked(order + 1, x);
            if d == 0.0 || !d.is_finite() {
                break;
            }
            let next = x - fx / d;
            if !(lo..=hi).contains(&next) {
                return start;
            }
            if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
                return next;
            }
            x = next;
        }
        x
    }

    /// Type and strength of the critical point bracketed in `[lo, hi]`.
    fn polish(&self, x0: f64, lo: f64, hi: f64) -> Result<Critical> {
        for k in 1..=MAX_ORDER / 2 {
            let m = self.refine_root(2 * k - 1, x0, lo, hi);
            let d = self.derivatives(m, 2 * k)?;
            let lower_vanish = (1..2 * k).all(|i| d[i].abs() < self.zero_tol(i));
            if !lower_vanish {
                continue;
            }
            let lead = d[2 * k];
            if lead > self.zero_tol(2 * k) {
                return Ok(Critical {
                    location: m,
                    kind: k,
                    strength: lead,
                });
            }
            if lead < -self.zero_tol(2 * k) {
                return Err(Error::NotAMinimum(m));
            }
        }
        Err(Error::ClassificationDepthExceeded(x0))
    }

    fn locate(&self, search_bound: f64) -> Result<Vec<Critical>> {
        if !(search_bound.is_finite() && search_bound > 0.0) {
            return Err(Error::InvalidArgument("search bound must be positive".into()));
        }
        let b = search_bound;
        if !(self.first_derivative(-b) < 0.0 && self.first_derivative(b) > 0.0) {
            return Err(Error::SearchBoundTooSmall(b));
        }
        let steps = (2.0 * b / SCAN_STEP).ceil() as usize;
        let h = 2.0 * b / steps as f64;
        let mut brackets = Vec::new();
        let mut last: Option<(f64, f64)> = None;
        for i in 0..=steps {
            let x = -b + h * i as f64;
            let s = self.first_derivative(x);
            if s == 0.0 {
                continue;
            }
            if let Some((xl, sl)) = last {
                if sl < 0.0 && s > 0.0 {
                    brackets.push((xl, x));
                }
            }
            last = Some((x, s));
        }
        let mut out: Vec<Critical> = Vec::with_capacity(brackets.len());
        for (lo, hi) in brackets {
            let x0 = bisect(|x| self.first_derivative(x), lo, hi).unwrap_or(0.5 * (lo + hi));
            let (wlo, whi) = (lo - h, hi + h);
            let c = self.polish(x0, wlo, whi)?;
            if !(wlo..=whi).contains(&c.location) {
                return Err(Error::GridTooCoarse(x0));
            }
            if let Some(prev) = out.last() {
                if (c.location - prev.location).abs() < 1e-9 {
                    continue;
                }
            }
            out.push(c);
        }
        Ok(out)
    }

    /// All local minima in `[−search_bound, search_bound]`, ascending.
    pub fn find_minima(&self, search_bound: f64) -> Result<Vec<f64>> {
        Ok(self.locate(search_bound)?.iter().map(|c| c.location).collect())
    }

    /// Every local minimum with its type, strength, height, broadness,
    /// conditioning radius and the local-minimum MDP condition.
    pub fn classify_all(&self, search_bound: f64) -> Result<Vec<MinimumInfo>> {
        let crits = self.locate(search_bound)?;
        let heights: Vec<f64> = crits.iter().map(|c| self.value(c.location)).collect();
        let inf_g = heights.iter().copied().fold(f64::INFINITY, f64::min);
        let global_tol = GLOBAL_TOL * inf_g.abs().max(1.0);
        let mut out = Vec::with_capacity(crits.len());
        for (i, c) in crits.iter().enumerate() {
            let mut height = heights[i] - inf_g;
            let is_global = height <= global_tol;
            if is_global {
                height = 0.0;
            }
            let broadness = if is_global {
                f64::INFINITY
            } else {
                self.broadness(c.location, heights[i], search_bound)
            };
            let nearest_other = crits
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, o)| (o.location - c.location).abs())
                .fold(f64::INFINITY, f64::min);
            let mdp_condition_ok = broadness.is_infinite() || self.beta > 2.0 * height / (broadness * broadness);
            let upper = if broadness.is_infinite() {
                f64::INFINITY
            } else {
                0.5 * (broadness - (2.0 * height / self.beta).sqrt())
            };
            let conditioning_radius = if upper > 0.0 { upper.min(nearest_other) } else { 0.0 };
            out.push(MinimumInfo {
                location: c.location,
                kind: c.kind,
                strength: c.strength,
                height,
                broadness,
                conditioning_radius,
                is_global,
                mdp_condition_ok,
            });
        }
        Ok(out)
    }

    /// Distance from `m` to the nearest point where `G` drops strictly below `G(m)`.
    fn broadness(&self, m: f64, gm: f64, bound: f64) -> f64 {
        let below = |y: f64| self.value(y) - gm;
        let mut best = f64::INFINITY;
        for dir in [1.0, -1.0] {
            let mut prev = m;
            let mut y = m + dir * BROADNESS_STEP;
            while y.abs() <= bound {
                if below(y) < 0.0 {
                    let (a, b) = if dir > 0.0 { (prev, y) } else { (y, prev) };
                    let edge = bisect(below, a, b).unwrap_or(y);
                    best = best.min((edge - m).abs());
                    break;
                }
                prev = y;
                y += dir * BROADNESS_STEP;
            }
        }
        best
    }

    /// Classification of the minimum nearest to `m` (which must lie within
    /// `1e-4` of a located minimum).
    pub fn classify_minimum(&self, m: f64) -> Result<MinimumInfo> {
        if !m.is_finite() {
            return Err(Error::NonFinite("m"));
        }
        let all = self.classify_all(DEFAULT_SEARCH_BOUND.max(m.abs() + 1.0))?;
        all.into_iter()
            .min_by(|a, b| (a.location - m).abs().total_cmp(&(b.location - m).abs()))
            .filter(|info| (info.location - m).abs() <= 1e-4)
            .ok_or(Error::NotAMinimum(m))
    }

    pub fn global_minima(&self) -> Result<Vec<MinimumInfo>> {
        Ok(self
            .classify_all(DEFAULT_SEARCH_BOUND)?
            .into_iter()
            .filter(|m| m.is_global)
            .collect())
    }

    /// `inf G` over the real line.
    pub fn infimum(&self) -> Result<f64> {
        Ok(self
            .find_minima(DEFAULT_SEARCH_BOUND)?
            .iter()
            .map(|&m| self.value(m))
            .fold(f64::INFINITY, f64::min))
    }

    pub fn classify_phase(&self) -> Result<PhaseClassification> {
        let minima = self.global_minima()?;
        let phase = phase_of(&minima);
        Ok(PhaseClassification { phase, minima })
    }
}

fn phase_of(global: &[MinimumInfo]) -> Phase {
    let all_type = |k: usize| global.iter().all(|m| m.kind == k);
    match global.len() {
        1 => match global[0].kind {
            1 => Phase::Paramagnetic,
            2 => Phase::SecondOrder,
            3 => Phase::Tricritical,
            _ => Phase::Other,
        },
        2 if all_type(1) => Phase::Ferromagnetic,
        l if l >= 3 && all_type(1) => Phase::FirstOrder,
        _ => Phase::Other,
    }
}

/// Free-function form of [`GFunction::g_deriv`].
pub fn g_deriv(g: &GFunction, order: usize, x: f64) -> Result<f64> {
    g.g_deriv(order, x)
}

pub fn find_minima(g: &GFunction, search_bound: f64) -> Result<Vec<f64>> {
    g.find_minima(search_bound)
}

pub fn classify_minimum(g: &GFunction, m: f64) -> Result<MinimumInfo> {
    g.classify_minimum(m)
}

pub fn classify_phase(g: &GFunction) -> Result<PhaseClassification> {
    g.classify_phase()
}
