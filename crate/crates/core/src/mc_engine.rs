//! Glauber (heat-bath) sampler for the quenched Gibbs measure.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`; chain `c` of a multi-chain run uses stream `c`.
//! Each step picks a uniform site and redraws its spin from the exact
//! conditional law; the diagonal `i = j` interaction terms cancel there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_dist::{check_beta, FieldRealization};

/// Chain length and sampling schedule. `sweeps` and `burn_in` count sweeps of
/// `n` single-site updates; `thin` counts single-site updates between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n: usize,
    pub beta: f64,
    pub fields: FieldRealization,
    pub sweeps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
}

impl ChainConfig {
    /// Defaults: burn-in of `10·n` sweeps, one sample per sweep.
    pub fn new(fields: FieldRealization, beta: f64, samples: u64, seed: u64) -> Self {
        let n = fields.n;
        let burn_in = 10 * n as u64;
        Self {
            n,
            beta,
            fields,
            sweeps: burn_in + samples,
            burn_in,
            thin: n as u64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if self.n == 0 || self.n != self.fields.values.len() {
            return Err(Error::InvalidArgument("n must match a nonempty field realization".into()));
        }
        if self.n > i32::MAX as usize {
            return Err(Error::InvalidArgument("n does not fit the 32-bit sample format".into()));
        }
        if self.sweeps <= self.burn_in {
            return Err(Error::InvalidArgument("sweeps must exceed burn_in".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of samples one chain returns.
    pub fn retained(&self) -> u64 {
        (self.sweeps - self.burn_in) * self.n as u64 / self.thin
    }
}

/// A single heat-bath chain; exposed for step-level diagnostics.
#[derive(Debug, Clone)]
pub struct GlauberChain<'a> {
    fields: &'a [f64],
    beta: f64,
    inv_n: f64,
    spins: Vec<i8>,
    total: i64,
    rng: ChaCha8Rng,
}

impl<'a> GlauberChain<'a> {
    /// Starts from independent fair spins drawn from the chain's own stream.
    pub fn new(fields: &'a [f64], beta: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let spins: Vec<i8> = (0..fields.len())
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        let total = spins.iter().map(|&s| s as i64).sum();
        Self {
            fields,
            beta,
            inv_n: 1.0 / fields.len() as f64,
            spins,
            total,
            rng,
        }
    }

    #[inline]
    pub fn magnetization(&self) -> i64 {
        self.total
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Probability that site `i` is set to +1 given the other spins.
    #[inline]
    pub fn up_probability(&self, i: usize) -> f64 {
        let rest = (self.total - self.spins[i] as i64) as f64;
        let local = 2.0 * self.beta * (rest * self.inv_n + self.fields[i]);
        1.0 / (1.0 + (-local).exp())
    }

    /// One single-site update; returns the site visited.
    #[inline]
    pub fn step(&mut self) -> usize {
        let i = self.rng.random_range(0..self.spins.len());
        let p = self.up_probability(i);
        let new = if self.rng.random::<f64>() < p { 1 } else { -1 };
        self.total += (new - self.spins[i]) as i64;
        self.spins[i] = new;
        i
    }
}

fn run_stream(cfg: &ChainConfig, stream: u64) -> Vec<i32> {
    let mut chain = GlauberChain::new(&cfg.fields.values, cfg.beta, cfg.seed, stream);
    let n = cfg.n as u64;
    for _ in 0..cfg.burn_in * n {
        chain.step();
    }
    let mut out = Vec::with_capacity(cfg.retained() as usize);
    for _ in 0..cfg.retained() {
        for _ in 0..cfg.thin {
            chain.step();
        }
        out.push(chain.magnetization() as i32);
    }
    out
}

/// Thinned post-burn-in series of `S_n`; chain stream 0.
pub fn run_glauber(cfg: &ChainConfig) -> Result<Vec<i32>> {
    cfg.validate()?;
    Ok(run_stream(cfg, 0))
}

/// Independent chains on streams `0..chains`, run in parallel and
/// concatenated in stream order.
pub fn run_chains(cfg: &ChainConfig, chains: usize) -> Result<Vec<Vec<i32>>> {
    cfg.validate()?;
    if chains == 0 {
        return Err(Error::InvalidArgument("at least one chain is required".into()));
    }
    Ok((0..chains as u64)
        .into_par_iter()
        .map(|c| run_stream(cfg, c))
        .collect())
}

/// Histogram estimate of the law of `S_n` indexed like [`crate::exact_engine::LogPmf`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPmf {
    pub n: usize,
    pub total: u64,
    pub counts: Vec<u64>,
    /// `ln(count/total)`; `-inf` for empty bins.
    #[serde(with = "crate::json::ext_real_vec")]
    pub log_p: Vec<f64>,
    /// Wilson half-width at one standard error.
    pub std_err: Vec<f64>,
    /// Empty bins: `ln` of the 95% Wilson upper bound.
    #[serde(with = "crate::json::ext_real_vec")]
    pub log_upper_bound: Vec<f64>,
    pub zero_count: Vec<bool>,
}

impl EmpiricalPmf {
    pub fn prob(&self, index: usize) -> f64 {
        self.counts[index] as f64 / self.total as f64
    }
}

fn wilson(count: u64, total: u64, z: f64) -> (f64, f64) {
    let nn = total as f64;
    let p = count as f64 / nn;
    let z2 = z * z;
    let denom = 1.0 + z2 / nn;
    let center = (p + z2 / (2.0 * nn)) / denom;
    let half = z / denom * (p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)).sqrt();
    (center, half)
}

pub fn empirical_pmf(samples: &[i32], n: usize) -> Result<EmpiricalPmf> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let ni = n as i64;
    let mut counts = vec![0u64; n + 1];
    for &s in samples {
        let s = s as i64;
        if s.abs() > ni || (s + ni) % 2 != 0 {
            return Err(Error::ParityViolation { sample: s, n });
        }
        counts[((s + ni) / 2) as usize] += 1;
    }
    let total = samples.len() as u64;
    let mut log_p = Vec::with_capacity(n + 1);
    let mut std_err = Vec::with_capacity(n + 1);
    let mut log_upper_bound = Vec::with_capacity(n + 1);
    let mut zero_count = Vec::with_capacity(n + 1);
    for &c in &counts {
        log_p.push((c as f64 / total as f64).ln());
        std_err.push(wilson(c, total, 1.0).1);
        if c == 0 {
            let (center, half) = wilson(0, total, 1.96);
            log_upper_bound.push((center + half).ln());
            zero_count.push(true);
        } else {
            log_upper_bound.push(f64::NEG_INFINITY);
            zero_count.push(false);
        }
    }
    Ok(EmpiricalPmf {
        n,
        total,
        counts,
        log_p,
        std_err,
        log_upper_bound,
        zero_count,
    })
}

/// Total variation distance between an exact law (log scale) and a histogram.
pub fn tv_distance(exact_log_p: &[f64], emp: &EmpiricalPmf) -> Result<f64> {
    if exact_log_p.len() != emp.counts.len() {
        return Err(Error::InvalidArgument("laws live on different lattices".into()));
    }
    Ok(0.5
        * exact_log_p
            .iter()
            .enumerate()
            .map(|(i, lp)| (lp.exp() - emp.prob(i)).abs())
            .sum::<f64>())
}

/// Mean, variance and histogram of a sample series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub mean: f64,
    pub var: f64,
    /// `[s, count]` for every visited value of `S_n`.
    pub histogram: Vec<(i64, u64)>,
}

pub fn summarize(samples: &[i32], n: usize) -> Result<SampleSummary> {
    let emp = empirical_pmf(samples, n)?;
    let len = samples.len() as f64;
    let mean = samples.iter().map(|&s| s as f64).sum::<f64>() / len;
    let var = samples.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / len;
    let histogram = emp
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (2 * i as i64 - n as i64, c))
        .collect();
    Ok(SampleSummary { mean, var, histogram })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_engine::exact_log_pmf;
    use crate::field_dist::sample_fields;

    fn dichotomous(n: usize, seed: u64) -> FieldRealization {
        sample_fields(&"two_point 0.3 0.5".parse().unwrap(), n, seed).unwrap()
    }

    #[test]
    fn same_config_same_series() {
        let cfg = ChainConfig::new(dichotomous(30, 1), 1.1, 500, 9);
        assert_eq!(run_glauber(&cfg).unwrap(), run_glauber(&cfg).unwrap());
        let chains = run_chains(&cfg, 3).unwrap();
        assert_eq!(chains[0], run_glauber(&cfg).unwrap());
        assert_ne!(chains[0], chains[1]);
        let mut other = cfg.clone();
        other.seed = 10;
        assert_ne!(run_glauber(&other).unwrap(), chains[0]);
    }

    #[test]
    fn validation() {
        let mut cfg = ChainConfig::new(dichotomous(10, 1), 1.0, 10, 0);
        cfg.thin = 0;
        assert!(run_glauber(&cfg).is_err());
        let mut cfg = ChainConfig::new(dichotomous(10, 1), 1.0, 10, 0);
        cfg.sweeps = cfg.burn_in;
        assert!(run_glauber(&cfg).is_err());
        let cfg = ChainConfig::new(dichotomous(10, 1), -1.0, 10, 0);
        assert!(run_glauber(&cfg).is_err());
    }

    #[test]
    fn retained_count_and_parity() {
        let mut cfg = ChainConfig::new(dichotomous(11, 2), 0.7, 40, 3);
        cfg.thin = 5;
        let s = run_glauber(&cfg).unwrap();
        assert_eq!(s.len() as u64, 40 * 11 / 5);
        assert!(s.iter().all(|v| (v + 11) % 2 == 0 && v.abs() <= 11));
    }

    #[test]
    fn infinite_temperature_mean() {
        let n = 50;
        let fields = FieldRealization::from_values(vec![0.0; n]).unwrap();
        let cfg = ChainConfig::new(fields, 1e-12, 20_000, 5);
        let s = run_glauber(&cfg).unwrap();
        let mean = s.iter().map(|&v| v as f64).sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 4.0 * (n as f64).sqrt() / (s.len() as f64).sqrt());
    }

    #[test]
    fn heat_bath_flux_balances() {
        // full configuration space for n = 4: compare empirical flux a→b with
        // the exact stationary weight times the heat-bath kernel
        let fields = [0.3, -0.1, 0.25, -0.4];
        let beta = 0.9;
        let n = fields.len();
        let energy = |mask: usize| {
            let mut s = 0.0;
            let mut hs = 0.0;
            for (i, h) in fields.iter().enumerate() {
                let sigma = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                s += sigma;
                hs += h * sigma;
            }
            beta * s * s / (2.0 * n as f64) + beta * hs
        };
        let w: Vec<f64> = (0..1 << n).map(|m| energy(m).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut chain = GlauberChain::new(&fields, beta, 77, 0);
        let mask_of = |sp: &[i8]| sp.iter().enumerate().fold(0, |m, (i, &v)| m | (((v == 1) as usize) << i));
        let steps = 2_000_000u64;
        let mut flux = vec![[0u64; 4]; 1 << n];
        let mut visits = vec![0u64; 1 << n];
        let mut a = mask_of(chain.spins());
        for _ in 0..steps {
            let i = chain.step();
            let b = mask_of(chain.spins());
            visits[a] += 1;
            if b != a {
                flux[a][i] += 1;
            }
            a = b;
        }
        for a in 0..1usize << n {
            let pa = w[a] / z;
            assert!((visits[a] as f64 / steps as f64 - pa).abs() < 5.0 * (pa / steps as f64).sqrt() + 2e-3);
            for i in 0..n {
                let b = a ^ (1 << i);
                let forward = flux[a][i] as f64;
                let backward = flux[b][i] as f64;
                let sd = (forward + backward).sqrt().max(1.0);
                assert!((forward - backward).abs() < 5.0 * sd, "a={a} i={i}");
                let expected = steps as f64 * pa * w[b] / (w[a] + w[b]) / n as f64;
                assert!((forward - expected).abs() < 5.0 * expected.sqrt() + 5.0);
            }
        }
    }

    #[test]
    fn empirical_pmf_basics() {
        let e = empirical_pmf(&[4, 4, 4], 4).unwrap();
        assert_eq!(e.log_p[4], 0.0);
        assert!(e.zero_count[0] && !e.zero_count[4]);
        assert!(e.log_upper_bound[0] < 0.0 && e.log_upper_bound[0].is_finite());
        let e = empirical_pmf(&[-2, 2, 2, 2], 4).unwrap();
        assert!((e.prob(1) - 0.25).abs() < 1e-15 && (e.prob(3) - 0.75).abs() < 1e-15);
        assert_eq!(empirical_pmf(&[3], 4), Err(Error::ParityViolation { sample: 3, n: 4 }));
        assert!(empirical_pmf(&[6], 4).is_err());
        assert!(empirical_pmf(&[], 4).is_err());
    }

    #[test]
    fn matches_exact_law_at_n_100() {
        let fields = dichotomous(100, 42);
        let beta = 1.2;
        let exact = exact_log_pmf(&fields, beta).unwrap();
        // many short chains average out the slow hopping between the two wells
        let mut cfg = ChainConfig::new(fields, beta, 1000, 42);
        cfg.thin = 500;
        cfg.sweeps = cfg.burn_in + 5000;
        let samples: Vec<i32> = run_chains(&cfg, 100).unwrap().concat();
        assert_eq!(samples.len(), 100_000);
        let emp = empirical_pmf(&samples, 100).unwrap();
        let tv = tv_distance(&exact.log_p, &emp).unwrap();
        assert!(tv < 0.02, "tv = {tv}");
        let mut populated = 0;
        let mut outside = 0;
        for i in 0..=100 {
            if emp.counts[i] >= 5 {
                populated += 1;
                if (emp.prob(i) - exact.log_p[i].exp()).abs() > 3.0 * emp.std_err[i] {
                    outside += 1;
                }
            }
        }
        assert!(outside as f64 <= 0.01 * populated as f64, "{outside} of {populated} bins");
    }
}
