//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rfcw::exact_engine::exact_log_pmf;
use rfcw::field_dist::sample_fields;
use rfcw::mc_engine::{empirical_pmf, run_chains, tv_distance, ChainConfig};
use rfcw::numeric::log_sum_exp;
use rfcw::rate_theory::{inf_convolution_k1, mdp_rate, RateSpec};
use rfcw::verifier::{
    self, dichotomous, dichotomous_magnetization, lambda1, lambda2, lambda3, lambda4, sigma1_sq, sigma2_sq, Config,
    VerificationReport,
};
use rfcw::{FieldDistribution, GFunction};

/// Prints the verdict line outside the test harness capture, then asserts.
fn verdict(id: u32, title: &str, ok: bool, detail: &str, start: Instant, budget_secs: f64) {
    let secs = start.elapsed().as_secs_f64();
    let in_time = secs < budget_secs;
    let pass = ok && in_time;
    let _ = writeln!(
        std::io::stderr(),
        "criterion {id} [{title}]: {} | {detail} | {secs:.2} s of {budget_secs} s",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {id} missed its tolerance: {detail}");
    assert!(in_time, "criterion {id} took {secs:.2} s, budget {budget_secs} s");
}

fn failures(r: &VerificationReport) -> String {
    let failed: Vec<String> = r
        .failed_checks()
        .map(|c| format!("{} = {:.6} (target {:.6})", c.name, c.value, c.target))
        .collect();
    if failed.is_empty() {
        "all checks pass".into()
    } else {
        failed.join("; ")
    }
}

fn enumerate(fields: &[f64], beta: f64) -> Vec<f64> {
    let n = fields.len();
    let mut by_s = vec![Vec::new(); n + 1];
    for mask in 0u32..(1u32 << n) {
        let (mut s, mut hs) = (0i64, 0.0);
        for (i, h) in fields.iter().enumerate() {
            let sigma = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
            s += sigma as i64;
            hs += h * sigma;
        }
        let sf = s as f64;
        by_s[((s + n as i64) / 2) as usize].push(beta * sf * sf / (2.0 * n as f64) + beta * hs);
    }
    let logs: Vec<f64> = by_s.into_iter().map(log_sum_exp).collect();
    let z = log_sum_exp(logs.iter().copied());
    logs.into_iter().map(|l| l - z).collect()
}

#[test]
fn criterion_1_exhaustive_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let n = rng.random_range(1..=12usize);
        let beta = rng.random_range(0.1..3.0);
        let nu: FieldDistribution = match case % 4 {
            0 => format!("dirac {}", rng.random_range(-1.0..1.0)),
            1 => format!("two_point {} {}", rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)),
            2 => format!("gaussian {} {}", rng.random_range(-0.5..0.5), rng.random_range(0.1..1.5)),
            _ => "discrete [-0.8,0.1,0.6] [0.3,0.3,0.4]".to_string(),
        }
        .parse()
        .unwrap();
        let fields = sample_fields(&nu, n, rng.random()).unwrap();
        let pmf = exact_log_pmf(&fields, beta).unwrap();
        let oracle = enumerate(&fields.values, beta);
        for (a, b) in pmf.log_p.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(1, "exhaustive oracle", worst < 1e-12, &format!("max |Δ log p| = {worst:.3e}"), start, 5.0);
}

#[test]
fn criterion_2_smoothed_density_identity() {
    let start = Instant::now();
    let r = verifier::verify_hs_consistency(&Config::new()).unwrap();
    let err = r.check("max_relative_error").unwrap().value;
    verdict(
        2,
        "Gaussian convolution vs smoothed density",
        r.pass,
        &format!("max relative error {err:.3e} at m = {}", r.check("m_used").unwrap().value),
        start,
        10.0,
    );
}

/// Richardson-extrapolated central difference of `f` at `x`.
fn derivative(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let h = 1e-3;
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

#[test]
fn criterion_3_derivative_audit() {
    let start = Instant::now();
    let laws = [
        ("dirac 0.3", 1.3),
        ("two_point 0.3 0.5", 1.2),
        ("two_point 0.5 0.3", 0.9),
        ("gaussian 0.1 0.8", 1.5),
        ("discrete [-0.5,0,0.7] [0.2,0.5,0.3]", 2.0),
    ];
    let mut worst_fd: f64 = 0.0;
    for (spec, beta) in laws {
        let g = GFunction::new(beta, spec.parse().unwrap()).unwrap();
        for i in 0..50 {
            let x = -1.5 + 3.0 * i as f64 / 49.0;
            for order in 1..=6 {
                let analytic = g.g_deriv(order, x).unwrap();
                let fd = if order == 1 {
                    derivative(|y| g.value(y), x)
                } else {
                    derivative(|y| g.g_deriv(order - 1, y).unwrap(), x)
                };
                worst_fd = worst_fd.max((fd - analytic).abs() / analytic.abs().max(1.0));
            }
        }
    }

    let pairs = [
        (1.2, 0.0),
        (1.5, 0.1),
        (2.0, 0.2),
        (1.3, 0.3),
        (2.5, 0.35),
        (3.0, 0.4),
        (1.8, 0.25),
        (4.0, 0.45),
        (1.1, 0.05),
        (2.2, 0.15),
    ];
    let mut worst_closed: f64 = 0.0;
    let mut worst_l4: f64 = 0.0;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    for (beta, h) in pairs {
        let g = GFunction::new(beta, dichotomous(h).unwrap()).unwrap();
        let d = g.derivatives(0.0, 6).unwrap();
        let m = dichotomous_magnetization(beta, h).unwrap();
        let g2m = g.g_deriv(2, m).unwrap();
        for e in [
            rel(lambda1(beta, h), d[2]),
            rel(sigma1_sq(beta, h), 1.0 / d[2] - 1.0 / beta),
            rel(lambda3(beta, h), d[4]),
            rel(lambda2(beta, m), g2m),
            rel(sigma2_sq(beta, m), 1.0 / g2m - 1.0 / beta),
        ] {
            worst_closed = worst_closed.max(e);
        }
        worst_l4 = worst_l4.max(rel(lambda4(beta, h), d[6]));
    }
    let ok = worst_fd < 1e-6 && worst_closed < 1e-8;
    verdict(
        3,
        "derivative audit",
        ok,
        &format!(
            "finite differences {worst_fd:.3e}; closed forms {worst_closed:.3e}; sixth-order form (reported) {worst_l4:.3e}"
        ),
        start,
        5.0,
    );
}

#[test]
fn criterion_4_paramagnetic_moderate_deviations() {
    let start = Instant::now();
    let r = verifier::verify_rate(&Config::new()).unwrap();
    let errs: Vec<String> = [0.5, 1.0]
        .iter()
        .map(|x| {
            let c = r.curve(&format!("relative_error x={x}")).unwrap();
            format!("x={x}: {:?}", c.y.iter().map(|e| format!("{e:.3}")).collect::<Vec<_>>())
        })
        .collect();
    verdict(
        4,
        "paramagnetic moderate deviations",
        r.pass,
        &format!("relative errors along n {}; {}", errs.join(", "), failures(&r)),
        start,
        60.0,
    );
}

#[test]
fn criterion_5_counterexample() {
    let start = Instant::now();
    let r = verifier::verify_counterexample(&Config::new()).unwrap();
    let u = r.check("unconditioned_rate n=16384").unwrap();
    let c = r.check("conditioned_rate n=16384").unwrap();
    verdict(
        5,
        "unconditioned failure exhibited",
        r.pass,
        &format!(
            "unconditioned {:.4} (limit {:.4}); conditioned {:.4} vs {:.4} (rel err {:.3}); {}",
            u.value,
            u.target,
            c.value,
            c.target,
            c.error,
            failures(&r)
        ),
        start,
        30.0,
    );
}

#[test]
fn criterion_6_phase_diagram() {
    let start = Instant::now();
    let r = verifier::verify_phase_formulas(&Config::new()).unwrap();
    verdict(
        6,
        "phase diagram",
        r.pass,
        &format!(
            "f(0) = {:.9}, h_c = {:.9} vs {:.9}; {}",
            r.check("f(0)").unwrap().value,
            r.check("h_c").unwrap().value,
            r.check("h_c").unwrap().target,
            failures(&r)
        ),
        start,
        30.0,
    );
}

#[test]
fn criterion_7_rescaled_taylor_limit() {
    let start = Instant::now();
    let r = verifier::verify_uniform_convergence(&Config::new()).unwrap();
    let sup = r.curve("sup_error").unwrap();
    verdict(
        7,
        "rescaled Taylor limit",
        r.pass,
        &format!(
            "sup errors {:?} along n = {:?}; {}",
            sup.y.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>(),
            sup.x,
            failures(&r)
        ),
        start,
        10.0,
    );
}

#[test]
fn criterion_8_glauber_validity() {
    let start = Instant::now();
    let fields = sample_fields(&"two_point 0.3 0.5".parse().unwrap(), 100, 42).unwrap();
    let beta = 1.2;
    let exact = exact_log_pmf(&fields, beta).unwrap();
    let mut cfg = ChainConfig::new(fields, beta, 1000, 42);
    cfg.thin = 500;
    cfg.sweeps = cfg.burn_in + 5000;
    let samples: Vec<i32> = run_chains(&cfg, 100).unwrap().concat();
    let emp = empirical_pmf(&samples, 100).unwrap();
    let tv = tv_distance(&exact.log_p, &emp).unwrap();
    verdict(
        8,
        "Glauber sampler vs exact law",
        tv < 0.02 && samples.len() == 100_000,
        &format!("TV distance {tv:.4} from {} samples", samples.len()),
        start,
        60.0,
    );
}

#[test]
fn criterion_9_inf_convolution() {
    let start = Instant::now();
    let pairs = [(1.0, 2.0), (1.66726, 2.0), (0.3, 0.8), (0.5, 3.0), (2.9, 3.0)];
    let mut worst: f64 = 0.0;
    for (lambda, beta) in pairs {
        let spec = RateSpec::new(1, lambda, beta).unwrap();
        for i in 0..=60 {
            let y = -3.0 + 0.1 * i as f64;
            let v = inf_convolution_k1(lambda, beta, y).unwrap();
            worst = worst.max((v - mdp_rate(&spec, y)).abs());
        }
    }
    verdict(9, "inf-convolution identity", worst < 1e-8, &format!("max deviation {worst:.3e}"), start, 1.0);
}
