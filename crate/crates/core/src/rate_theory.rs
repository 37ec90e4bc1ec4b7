//! Rate functions and scaling exponents for large and moderate deviations
//! of `S_n/n` around a minimum of type `k` and strength `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::g_analysis::{GFunction, MinimumInfo};
use crate::numeric::grid_golden_max;

/// Highest type for which scaling exponents are tabulated.
pub const MAX_TYPE: usize = 8;
const LDP_STEP: f64 = 1e-3;
const REFINE_TOL: f64 = 1e-10;
const NEG_CLAMP: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub k: usize,
    pub lambda: f64,
    pub beta: f64,
    /// `1/λ − 1/β`, present only for `k = 1`.
    pub sigma2: Option<f64>,
}

impl RateSpec {
    pub fn new(k: usize, lambda: f64, beta: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::RateSpec("type must be at least 1".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::RateSpec(format!(
                "lambda and beta must be positive and finite (lambda = {lambda}, beta = {beta})"
            )));
        }
        let sigma2 = if k == 1 {
            if lambda >= beta {
                return Err(Error::RateSpec(format!(
                    "type 1 needs lambda < beta for a positive variance (lambda = {lambda}, beta = {beta})"
                )));
            }
            Some(1.0 / lambda - 1.0 / beta)
        } else {
            None
        };
        Ok(Self { k, lambda, beta, sigma2 })
    }

    pub fn from_minimum(info: &MinimumInfo, beta: f64) -> Result<Self> {
        Self::new(info.kind, info.strength, beta)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `λ x^{2k} / (2k)!`
pub fn hs_rate(k: usize, lambda: f64, x: f64) -> f64 {
    lambda * x.powi(2 * k as i32) / factorial(2 * k)
}

/// Moderate deviation rate: `x²/(2σ²)` for type 1, `λ x^{2k}/(2k)!` otherwise.
pub fn mdp_rate(spec: &RateSpec, x: f64) -> f64 {
    match spec.sigma2 {
        Some(s2) => x * x / (2.0 * s2),
        None => hs_rate(spec.k, spec.lambda, x),
    }
}

fn clamp_rate(v: f64) -> f64 {
    if (NEG_CLAMP..0.0).contains(&v) {
        0.0
    } else {
        v
    }
}

/// Large deviation rate `sup_y {G(y) − β(x−y)²/2} − inf G` for `|x| ≤ 1`.
pub fn ldp_rate(g: &GFunction, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("x"));
    }
    if x.abs() > 1.0 {
        return Err(Error::InvalidArgument(format!("|x| must not exceed 1, got {x}")));
    }
    let beta = g.beta();
    let inf = g.infimum()?;
    if x.abs() == 1.0 {
        // the objective increases towards y → ±∞ with this limit
        let limit = std::f64::consts::LN_2 - beta * x * g.nu().mean() - beta / 2.0;
        return Ok(clamp_rate(limit - inf));
    }
    // concave in y since G'' ≤ β
    let objective = |y: f64| g.value(y) - 0.5 * beta * (x - y) * (x - y);
    let mut half = 2.0;
    loop {
        let (arg, best) = grid_golden_max(objective, -half, half, LDP_STEP, REFINE_TOL);
        if half - arg.abs() > 2.0 * LDP_STEP {
            return Ok(clamp_rate(best - inf));
        }
        half *= 2.0;
        if half > 1e6 {
            return Err(Error::InvalidArgument(format!("no interior maximizer for x = {x}")));
        }
    }
}

/// `sup_x {λx²/2 − β(x−y)²/2}` computed on a grid; equals `y²/(2σ²)`.
pub fn inf_convolution_k1(lambda: f64, beta: f64, y: f64) -> Result<f64> {
    RateSpec::new(1, lambda, beta)?;
    if !y.is_finite() {
        return Err(Error::NonFinite("y"));
    }
    let objective = |x: f64| hs_rate(1, lambda, x) - 0.5 * beta * (x - y) * (x - y);
    let mut half = 4.0 * y.abs() + 4.0;
    loop {
        let (arg, best) = grid_golden_max(objective, -half, half, 1e-3 * half, REFINE_TOL);
        if half - arg.abs() > 2e-3 * half {
            return Ok(best);
        }
        half *= 2.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingInfo {
    pub k: usize,
    pub alpha: f64,
    /// `1 − 2k(1−α)`
    pub speed_exponent: f64,
    /// `1 − 1/(2(2k−1))`
    pub alpha_min: f64,
    /// `1 − 1/(2(2k−1))`, the fluctuation scale exponent.
    pub clt_exponent: f64,
    /// `n^{speed_exponent}`
    pub speed: f64,
}

pub fn alpha_min(k: usize) -> f64 {
    1.0 - 1.0 / (2.0 * (2 * k - 1) as f64)
}

pub fn scaling(k: usize, alpha: f64, n: u64) -> Result<ScalingInfo> {
    if k == 0 || k > MAX_TYPE {
        return Err(Error::InvalidArgument(format!("type must lie in 1..={MAX_TYPE}, got {k}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let amin = alpha_min(k);
    if !(alpha > amin && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange { alpha, alpha_min: amin });
    }
    let speed_exponent = 1.0 - 2.0 * k as f64 * (1.0 - alpha);
    Ok(ScalingInfo {
        k,
        alpha,
        speed_exponent,
        alpha_min: amin,
        clt_exponent: amin,
        speed: (n as f64).powf(speed_exponent),
    })
}
