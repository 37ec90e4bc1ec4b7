//! Exact quenched law of `S_n` for a fixed field realization.
//!
//! `P(S_n = s) ∝ exp(βs²/(2n)) · C(s)` where `C(s) = Σ_{σ: Σσ=s} exp(βΣ h_i σ_i)`
//! is built spin by spin in log space, O(n²) time and O(n) memory.
//! The Gaussian-smoothed variable `(S_n − nm)/n^α + W/n^{α−1/2}` is handled two
//! ways: through its closed-form density `∝ exp(−n G_n(m + n^{α−1}s))` and by
//! convolving the exact lattice law with the Gaussian; the two must agree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_dist::{check_beta, FieldRealization};
use crate::g_analysis::GFunction;
use crate::numeric::{log_add_exp, log_sum_exp, log_trapezoid};

/// Largest system the DP accepts.
pub const MAX_N: usize = 1 << 20;
/// Below this log-probability a conditioning event is treated as unusable.
pub const MIN_CONDITION_LOG_PROB: f64 = -700.0;

/// Exact law of `S_n` on `{−n, −n+2, …, n}`; `log_p[i]` belongs to `s = 2i − n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPmf {
    pub n: usize,
    pub beta: f64,
    pub fields: FieldRealization,
    pub log_p: Vec<f64>,
    pub log_z: f64,
}

impl LogPmf {
    #[inline]
    pub fn magnetization(&self, index: usize) -> i64 {
        2 * index as i64 - self.n as i64
    }

    /// `ln P(S_n = s)`; `-inf` off the lattice.
    pub fn log_prob(&self, s: i64) -> f64 {
        let n = self.n as i64;
        if s.abs() > n || (s + n) % 2 != 0 {
            return f64::NEG_INFINITY;
        }
        self.log_p[((s + n) / 2) as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.log_p
            .iter()
            .enumerate()
            .map(|(i, &lp)| (self.magnetization(i), lp))
    }
}

/// Half-open interval `[lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "crate::json::ext_real")]
    pub lo: f64,
    #[serde(with = "crate::json::ext_real")]
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn all() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn at_least(lo: f64) -> Self {
        Self::new(lo, f64::INFINITY)
    }

    pub fn below(hi: f64) -> Self {
        Self::new(f64::NEG_INFINITY, hi)
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }
}

pub fn exact_log_pmf(fields: &FieldRealization, beta: f64) -> Result<LogPmf> {
    check_beta(beta)?;
    let n = fields.values.len();
    if n == 0 || n != fields.n {
        return Err(Error::InvalidArgument("field realization is empty or inconsistent".into()));
    }
    if n > MAX_N {
        return Err(Error::InvalidArgument(format!("n = {n} exceeds the limit {MAX_N}")));
    }
    // c[i] = ln C_j(2i − j) after j spins
    let mut c = vec![f64::NEG_INFINITY; n + 1];
    c[0] = 0.0;
    for (j, &h) in fields.values.iter().enumerate() {
        let up = beta * h;
        let j = j + 1;
        c[j] = c[j - 1] + up;
        for i in (1..j).rev() {
            c[i] = log_add_exp(c[i - 1] + up, c[i] - up);
        }
        c[0] -= up;
    }
    let nf = n as f64;
    let weights: Vec<f64> = c
        .iter()
        .enumerate()
        .map(|(i, &lc)| {
            let s = (2 * i) as f64 - nf;
            beta * s * s / (2.0 * nf) + lc
        })
        .collect();
    let log_z = log_sum_exp(weights.iter().copied());
    let log_p: Vec<f64> = weights.iter().map(|w| w - log_z).collect();
    if !log_z.is_finite() || log_p.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite entry in the exact law".into()));
    }
    Ok(LogPmf {
        n,
        beta,
        fields: fields.clone(),
        log_p,
        log_z,
    })
}

/// `ln P((S_n − nm)/n^α ∈ event | S_n/n ∈ condition)` for any lattice law
/// given as `ln P(S_n = 2i − n)`.
pub fn lattice_interval_log_prob(
    n: usize,
    log_p: &[f64],
    m: f64,
    alpha: f64,
    event: Interval,
    condition: Option<Interval>,
) -> Result<f64> {
    if log_p.len() != n + 1 {
        return Err(Error::InvalidArgument("law does not match n".into()));
    }
    let nf = n as f64;
    let scale = nf.powf(alpha);
    let mut joint = Vec::new();
    let mut cond = Vec::new();
    for (i, &lp) in log_p.iter().enumerate() {
        let s = (2 * i) as f64 - nf;
        let in_cond = condition.is_none_or(|c| c.contains(s / nf));
        if !in_cond {
            continue;
        }
        cond.push(lp);
        if event.contains((s - nf * m) / scale) {
            joint.push(lp);
        }
    }
    let log_cond = log_sum_exp(cond.iter().copied());
    if log_cond == f64::NEG_INFINITY {
        return Err(Error::ZeroProbabilityCondition);
    }
    let log_joint = log_sum_exp(joint.iter().copied());
    Ok(if condition.is_some() {
        log_joint - log_cond
    } else {
        log_joint
    })
}

pub fn interval_log_prob(
    pmf: &LogPmf,
    m: f64,
    alpha: f64,
    event: Interval,
    condition: Option<Interval>,
) -> Result<f64> {
    lattice_interval_log_prob(pmf.n, &pmf.log_p, m, alpha, event, condition)
}

/// Normalized log density of `(S_n − nm)/n^α + W/n^{α−1/2}` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsDensity {
    pub m: f64,
    pub alpha: f64,
    pub grid: Vec<f64>,
    pub log_density: Vec<f64>,
    /// `n^{1−2α}/β`, the variance of `W/n^{α−1/2}`.
    pub gauss_variance: f64,
    /// `ln ∫ exp(−n(G_n(m + n^{α−1}s) − G_n(m))) ds`.
    pub log_normalizer: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn hs_log_density(
    fields: &FieldRealization,
    beta: f64,
    m: f64,
    alpha: f64,
    grid: &[f64],
) -> Result<HsDensity> {
    check_alpha(alpha)?;
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("grid must be finite and strictly increasing".into()));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("m"));
    }
    let gn = GFunction::from_realization(fields, beta)?;
    let nf = fields.n as f64;
    let shrink = nf.powf(alpha - 1.0);
    let g_at_m = gn.value(m);
    let log_kernel = |s: f64| -nf * (gn.value(m + shrink * s) - g_at_m);

    // the curvature of the exponent in s never exceeds β n^{2α−1}
    let width = 1.0 / (beta * nf.powf(2.0 * alpha - 1.0)).sqrt();
    let step = 0.05 * width;
    let (mut lo, mut hi) = (grid[0], grid[grid.len() - 1]);
    let mut previous: Option<f64> = None;
    let mut log_normalizer = f64::NAN;
    let mut converged = false;
    for _ in 0..200 {
        let count = ((hi - lo) / step).ceil().max(2.0) as usize;
        let xs: Vec<f64> = (0..=count).map(|i| lo + (hi - lo) * i as f64 / count as f64).collect();
        let vals: Vec<f64> = xs.iter().map(|&s| log_kernel(s)).collect();
        let peak = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        log_normalizer = log_trapezoid(&xs, &vals);
        let tails_small = vals[0] <= peak - 40.0 && vals[count] <= peak - 40.0;
        if let Some(prev) = previous {
            if tails_small && (log_normalizer - prev).abs() < 1e-12 {
                converged = true;
                break;
            }
        }
        previous = Some(log_normalizer);
        let pad = 0.2 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
    if !converged {
        return Err(Error::GridTooNarrow(format!(
            "mass not captured within [{lo}, {hi}] after repeated extension"
        )));
    }
    let log_density = grid.iter().map(|&s| log_kernel(s) - log_normalizer).collect();
    Ok(HsDensity {
        m,
        alpha,
        grid: grid.to_vec(),
        log_density,
        gauss_variance: nf.powf(1.0 - 2.0 * alpha) / beta,
        log_normalizer,
    })
}

/// `ln f(y)` where `f` is the exact lattice law of `(S_n − nm)/n^α`
/// convolved with `N(0, n^{1−2α}/β)`.
pub fn gaussian_convolve(pmf: &LogPmf, m: f64, alpha: f64, eval_points: &[f64]) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if eval_points.iter().any(|v| !v.is_finite()) || !m.is_finite() {
        return Err(Error::NonFinite("evaluation point"));
    }
    let nf = pmf.n as f64;
    let var = nf.powf(1.0 - 2.0 * alpha) / pmf.beta;
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
    let scale = nf.powf(alpha);
    let atoms: Vec<(f64, f64)> = pmf
        .iter()
        .map(|(s, lp)| ((s as f64 - nf * m) / scale, lp))
        .collect();
    Ok(eval_points
        .iter()
        .map(|&y| {
            let terms = atoms.iter().map(|&(x, lp)| {
                let d = y - x;
                lp - d * d / (2.0 * var) + log_norm
            });
            log_sum_exp(terms)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_dist::sample_fields;

    /// Exhaustive enumeration of all 2ⁿ configurations.
    pub(crate) fn brute_force(fields: &[f64], beta: f64) -> Vec<f64> {
        let n = fields.len();
        let mut by_s = vec![Vec::new(); n + 1];
        for mask in 0u32..(1u32 << n) {
            let mut s = 0i64;
            let mut hs = 0.0;
            for (i, h) in fields.iter().enumerate() {
                let sigma = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                s += sigma as i64;
                hs += h * sigma;
            }
            let sf = s as f64;
            let w = beta / (2.0 * n as f64) * sf * sf + beta * hs;
            by_s[((s + n as i64) / 2) as usize].push(w);
        }
        let logs: Vec<f64> = by_s.into_iter().map(log_sum_exp).collect();
        let z = log_sum_exp(logs.iter().copied());
        logs.into_iter().map(|l| l - z).collect()
    }

    #[test]
    fn single_spin() {
        let (h, beta) = (0.37, 1.3);
        let pmf = exact_log_pmf(&FieldRealization::from_values(vec![h]).unwrap(), beta).unwrap();
        let expected = (beta * h).exp() / (2.0 * (beta * h).cosh());
        assert!((pmf.log_prob(1).exp() - expected).abs() < 1e-15);
    }

    #[test]
    fn two_free_spins() {
        let pmf = exact_log_pmf(&FieldRealization::from_values(vec![0.0, 0.0]).unwrap(), 1.0).unwrap();
        let expected = 1.0 / (1.0 + std::f64::consts::E);
        assert!((pmf.log_prob(0).exp() - expected).abs() < 1e-15);
        assert!((pmf.log_prob(0).exp() - 0.268941).abs() < 1e-6);
    }

    #[test]
    fn ten_spins_match_enumeration() {
        let nu = "gaussian 0.1 0.6".parse().unwrap();
        let fields = sample_fields(&nu, 10, 3).unwrap();
        let pmf = exact_log_pmf(&fields, 1.4).unwrap();
        let oracle = brute_force(&fields.values, 1.4);
        for (a, b) in pmf.log_p.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_and_finite_at_large_n() {
        let fields = sample_fields(&"two_point 0.3 0.5".parse().unwrap(), 3000, 1).unwrap();
        let pmf = exact_log_pmf(&fields, 1.5).unwrap();
        assert!(log_sum_exp(pmf.log_p.iter().copied()).abs() < 1e-10);
        assert!(pmf.log_p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn negated_fields_mirror_the_law() {
        let fields = sample_fields(&"gaussian 0 1".parse().unwrap(), 40, 8).unwrap();
        let a = exact_log_pmf(&fields, 0.9).unwrap();
        let b = exact_log_pmf(&fields.negated(), 0.9).unwrap();
        for s in (-40..=40).step_by(2) {
            assert!((a.log_prob(s) - b.log_prob(-s)).abs() < 1e-10);
        }
        let zero = exact_log_pmf(&FieldRealization::from_values(vec![0.0; 31]).unwrap(), 1.7).unwrap();
        for s in (-31..=31).step_by(2) {
            assert_eq!(zero.log_prob(s), zero.log_prob(-s));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let f = FieldRealization::from_values(vec![0.1]).unwrap();
        assert!(exact_log_pmf(&f, 0.0).is_err());
        assert!(exact_log_pmf(&f, f64::NAN).is_err());
    }

    #[test]
    fn interval_total_mass() {
        let fields = sample_fields(&"dirac 0.1".parse().unwrap(), 50, 0).unwrap();
        let pmf = exact_log_pmf(&fields, 1.1).unwrap();
        let all = interval_log_prob(&pmf, 0.2, 0.75, Interval::all(), None).unwrap();
        assert!(all.abs() < 1e-12);
        let cond = Some(Interval::new(0.0, 0.5));
        let c = interval_log_prob(&pmf, 0.2, 0.75, Interval::all(), cond).unwrap();
        assert!(c.abs() < 1e-12);
        let impossible = Some(Interval::new(1.5, 2.0));
        assert_eq!(
            interval_log_prob(&pmf, 0.2, 0.75, Interval::all(), impossible),
            Err(Error::ZeroProbabilityCondition)
        );
    }

    #[test]
    fn conditional_probability_matches_enumeration() {
        let fields = sample_fields(&"two_point 0.4 0.5".parse().unwrap(), 10, 5).unwrap();
        let (beta, m, alpha) = (1.2, 0.3, 0.8);
        let pmf = exact_log_pmf(&fields, beta).unwrap();
        let oracle = brute_force(&fields.values, beta);
        let event = Interval::new(-0.5, 1.2);
        let cond = Interval::new(-0.2, 0.9);
        let scale = 10f64.powf(alpha);
        let (mut num, mut den) = (0.0, 0.0);
        for (i, lp) in oracle.iter().enumerate() {
            let s = 2.0 * i as f64 - 10.0;
            if cond.contains(s / 10.0) {
                den += lp.exp();
                if event.contains((s - 10.0 * m) / scale) {
                    num += lp.exp();
                }
            }
        }
        let got = interval_log_prob(&pmf, m, alpha, event, Some(cond)).unwrap();
        assert!((got - (num / den).ln()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_convolve_two_atoms() {
        let pmf = exact_log_pmf(&FieldRealization::from_values(vec![0.0]).unwrap(), 1.0).unwrap();
        let ys: Vec<f64> = (-30..=30).map(|i| 0.2 * i as f64).collect();
        let got = gaussian_convolve(&pmf, 0.0, 0.5, &ys).unwrap();
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        for (y, lf) in ys.iter().zip(got) {
            let f = 0.5 * phi(y - 1.0) + 0.5 * phi(y + 1.0);
            assert!((lf.exp() - f).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_convolve_integrates_to_one() {
        let fields = sample_fields(&"two_point 0.3 0.5".parse().unwrap(), 60, 2).unwrap();
        let pmf = exact_log_pmf(&fields, 1.2).unwrap();
        let ys: Vec<f64> = (0..=8000).map(|i| -20.0 + 0.005 * i as f64).collect();
        let lf = gaussian_convolve(&pmf, 0.0, 0.75, &ys).unwrap();
        assert!(log_trapezoid(&ys, &lf).abs() < 1e-8);
    }

    #[test]
    fn hs_density_single_spin_formula() {
        let fields = FieldRealization::from_values(vec![0.0]).unwrap();
        let grid: Vec<f64> = (0..=800).map(|i| -12.0 + 0.03 * i as f64).collect();
        let d = hs_log_density(&fields, 1.0, 0.0, 0.5, &grid).unwrap();
        // ∝ exp(−(s²/2 − ln cosh s)), even
        let raw: Vec<f64> = grid.iter().map(|s| -(s * s / 2.0 - s.cosh().ln())).collect();
        let shift = d.log_density[400] - raw[400];
        for i in 0..grid.len() {
            assert!((d.log_density[i] - raw[i] - shift).abs() < 1e-12);
            assert!((d.log_density[i] - d.log_density[800 - i]).abs() < 1e-12);
        }
        assert!(log_trapezoid(&grid, &d.log_density).abs() < 1e-8);
        assert!((d.gauss_variance - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hs_density_peak_at_rescaled_minimizer() {
        let fields = sample_fields(&"two_point 0.3 0.5".parse().unwrap(), 400, 9).unwrap();
        let (beta, alpha) = (1.2, 0.75);
        let gn = GFunction::from_realization(&fields, beta).unwrap();
        let m_n = *gn.find_minima(2.0).unwrap().last().unwrap();
        let grid: Vec<f64> = (0..=2000).map(|i| -10.0 + 0.01 * i as f64).collect();
        let d = hs_log_density(&fields, beta, 0.0, alpha, &grid).unwrap();
        let (imax, _) = d
            .log_density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let target = m_n / 400f64.powf(alpha - 1.0);
        // symmetric pair of peaks: compare magnitudes
        assert!((grid[imax].abs() - target.abs()).abs() <= 0.01 + 1e-12);
    }

    #[test]
    fn hs_density_matches_convolution() {
        let fields = sample_fields(&"two_point 0.3 0.5".parse().unwrap(), 200, 42).unwrap();
        let (beta, alpha, m) = (1.2, 0.75, 0.0);
        let grid: Vec<f64> = (0..=2000).map(|i| -8.0 + 0.008 * i as f64).collect();
        let pmf = exact_log_pmf(&fields, beta).unwrap();
        let conv = gaussian_convolve(&pmf, m, alpha, &grid).unwrap();
        let hs = hs_log_density(&fields, beta, m, alpha, &grid).unwrap();
        let worst = conv
            .iter()
            .zip(&hs.log_density)
            .map(|(a, b)| (a - b).exp_m1().abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn hs_density_rejects_bad_grid() {
        let fields = FieldRealization::from_values(vec![0.0; 3]).unwrap();
        assert!(hs_log_density(&fields, 1.0, 0.0, 0.5, &[0.0, 0.0]).is_err());
        assert!(hs_log_density(&fields, 1.0, 0.0, 1.5, &[0.0, 1.0]).is_err());
    }
}
