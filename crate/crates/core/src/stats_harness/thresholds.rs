//! Experiments around the threshold times: absorption-time fluctuations,
//! Poisson counts of small trees, and expectation scaling.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::statistics::{
    chi_square_gof, gumbel_cdf, ks_critical_value, ks_one_sample, mean, ols_slope, poisson_pmf, poisson_two_sided_tail,
    variance,
};
use super::{run_replicas, ExperimentReport, ALPHA};
use crate::error::{domain, Error, Result};
use crate::fluid_limit::{gumbel_shift, threshold_time};
use crate::simulator::GraphState;
use crate::special_functions::{digamma, ln_factorial, EULER_GAMMA};

const TAG_GELATION: u32 = 4;
const TAG_TREE_COUNT: u32 = 5;
const TAG_EXPECTATION: u32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GelationConfig {
    pub p: f64,
    pub n: usize,
    pub replicas: usize,
    pub k: usize,
    /// Allowance added to the KS critical value for finite-n bias.
    pub ks_slack: f64,
    /// Lower bound on the frequency of `A^{(k+)} = A^{(k)}`, applied for `k >= 2`.
    pub equality_threshold: f64,
}

impl Default for GelationConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            n: 100_000,
            replicas: 500,
            k: 1,
            ks_slack: 0.03,
            equality_threshold: 0.9,
        }
    }
}

/// Standardizes `A^{(k+)}` per replica and KS-tests it against the standard
/// Gumbel law.
pub fn gelation_experiment(cfg: &GelationConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if cfg.k == 0 || cfg.replicas == 0 {
        return Err(domain("gelation experiment", "need k >= 1 and replicas"));
    }
    let k = cfg.k as u64;
    let thr = threshold_time(cfg.p, k, cfg.n as u64)?;
    let shift = gumbel_shift(cfg.p, k)?;
    let nf = cfg.n as f64;
    let rows = run_replicas(seed, TAG_GELATION, cfg.replicas, |_, rng| {
        let mut s = GraphState::new(cfg.n, cfg.p, cfg.k)?;
        s.advance_discrete(rng, u64::MAX, |s| s.is_absorbed());
        let (a_k, a_plus) = s.absorption_times();
        let a_plus = a_plus[cfg.k - 1].ok_or(Error::Config(format!("no tree of size >= {k} ever formed")))?;
        let a_k = a_k[cfg.k - 1].unwrap_or(f64::NAN);
        let x = (a_plus / nf - thr.value / 2.0 - shift.location) / shift.scale;
        Ok(vec![a_plus, a_k, x])
    })?;
    let xs: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    let reps = xs.len();
    let ks = ks_one_sample(&xs, gumbel_cdf);
    let crit = ks_critical_value(reps, ALPHA) + cfg.ks_slack;
    let equal = rows.iter().filter(|r| r[0] == r[1]).count() as f64 / reps as f64;
    let mut report =
        ExperimentReport::new("gelation", cfg, seed).with_columns(&["replica", "A_k_plus", "A_k", "standardized"]);
    for (i, r) in rows.into_iter().enumerate() {
        report.row(vec![i as f64, r[0], r[1], r[2]]);
    }
    report.stat("threshold time", thr.value, 1);
    report.stat("mean standardized statistic (Gumbel mean 0.5772)", mean(&xs), reps);
    report.stat("KS p-value", ks.p_value, reps);
    report.check_at_most("KS statistic vs Gumbel", ks.statistic, reps, crit);
    if cfg.k >= 2 {
        report.check_at_least("frequency of A^(k+) = A^(k)", equal, reps, cfg.equality_threshold);
    } else {
        report.stat("frequency of A^(k+) = A^(k)", equal, reps);
    }
    Ok(report.finish(start))
}

/// Mean of the limiting Poisson law of `N^{(k)}` at `t^{(k)} + c`.
pub fn threshold_poisson_mean(p: f64, k: u64, c: f64) -> Result<f64> {
    let kf = k as f64;
    let psi = digamma(1.0 / p)? + EULER_GAMMA;
    let ln = (kf - 2.0) * kf.ln() - ln_factorial(k) - kf * p * c - kf * psi;
    Ok(ln.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeCountConfig {
    pub p: f64,
    pub n: usize,
    pub k: usize,
    pub c: f64,
    pub replicas: usize,
    /// Allowed relative error of the empirical mean.
    pub mean_tolerance: f64,
}

impl Default for TreeCountConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            n: 100_000,
            k: 1,
            c: 0.0,
            replicas: 2000,
            mean_tolerance: 0.15,
        }
    }
}

/// Samples `N^{(k)}` at step `floor(n (t^{(k)} + c)/2)` and compares it with
/// the limiting Poisson law by chi-square.
pub fn tree_count_poisson_experiment(cfg: &TreeCountConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if cfg.k == 0 || cfg.replicas == 0 {
        return Err(domain("tree-count experiment", "need k >= 1 and replicas"));
    }
    let k = cfg.k as u64;
    let step = threshold_time(cfg.p, k, cfg.n as u64)?.step(cfg.c);
    let lambda = threshold_poisson_mean(cfg.p, k, cfg.c)?;
    let counts = run_replicas(seed, TAG_TREE_COUNT, cfg.replicas, |_, rng| {
        let mut s = GraphState::new(cfg.n, cfg.p, 1)?;
        s.advance_discrete(rng, step, |_| false);
        Ok(s.tree_count(cfg.k))
    })?;
    let reps = counts.len();
    let top = counts
        .iter()
        .copied()
        .max()
        .unwrap_or(0)
        .max((lambda + 10.0 * lambda.sqrt() + 10.0) as u64);
    let mut observed = vec![0u64; top as usize + 2];
    for &c in &counts {
        observed[c as usize] += 1;
    }
    let mut probs: Vec<f64> = (0..=top).map(|j| poisson_pmf(lambda, j)).collect();
    probs.push((1.0 - probs.iter().sum::<f64>()).max(0.0));
    let chi = chi_square_gof(&observed, &probs);
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let m = mean(&xs);
    let mut report = ExperimentReport::new("tree-count-poisson", cfg, seed).with_columns(&["replica", "N_k"]);
    for (i, &x) in xs.iter().enumerate() {
        report.row(vec![i as f64, x]);
    }
    report.stat("step", step as f64, 1);
    report.stat("lambda", lambda, 1);
    report.stat("empirical variance", variance(&xs), reps);
    report.stat("chi-square statistic", chi.statistic, reps);
    report.check_at_least("chi-square p-value", chi.p_value, reps, ALPHA);
    report.check_at_most(
        "relative error of the mean",
        (m - lambda).abs() / lambda,
        reps,
        cfg.mean_tolerance,
    );
    Ok(report.finish(start))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpectationBoundConfig {
    pub p: f64,
    pub k: usize,
    pub k_prime: usize,
    pub c: f64,
    pub ns: Vec<usize>,
    pub replicas: usize,
    pub slope_tolerance: f64,
}

impl Default for ExpectationBoundConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            k: 2,
            k_prime: 1,
            c: 0.0,
            ns: vec![1_000, 10_000, 100_000],
            replicas: 200,
            slope_tolerance: 0.3,
        }
    }
}

/// Measures `E[N^{(k')}]` at the size-`k` threshold for several `n` and fits
/// its log-log slope against `n / ln n`, expected to be `1 - k'/k`.
pub fn expectation_bound_experiment(cfg: &ExpectationBoundConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if cfg.k == 0 || cfg.k_prime == 0 || cfg.ns.len() < 2 || cfg.replicas == 0 {
        return Err(domain(
            "expectation-bound experiment",
            "need k, k' >= 1, two sizes and replicas",
        ));
    }
    let mut report = ExperimentReport::new("expectation-bound", cfg, seed).with_columns(&["n", "replica", "N_kprime"]);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut means = Vec::new();
    for (idx, &n) in cfg.ns.iter().enumerate() {
        let step = threshold_time(cfg.p, cfg.k as u64, n as u64)?.step(cfg.c);
        let counts = run_replicas(seed, TAG_EXPECTATION + ((idx as u32) << 8), cfg.replicas, |_, rng| {
            let mut s = GraphState::new(n, cfg.p, 1)?;
            s.advance_discrete(rng, step, |_| false);
            Ok(s.tree_count(cfg.k_prime) as f64)
        })?;
        for (i, &c) in counts.iter().enumerate() {
            report.row(vec![n as f64, i as f64, c]);
        }
        let m = mean(&counts);
        means.push(m);
        report.stat(&format!("mean N^(k') at n = {n}"), m, counts.len());
        if m > 0.0 {
            let nf = n as f64;
            xs.push((nf / nf.ln()).ln());
            ys.push(m.ln());
        }
    }
    let expected = 1.0 - cfg.k_prime as f64 / cfg.k as f64;
    report.stat("expected slope", expected, 1);
    if xs.len() >= 2 {
        let slope = ols_slope(&xs, &ys);
        report.check(
            "|log-log slope - (1 - k'/k)|",
            (slope - expected).abs(),
            cfg.replicas,
            cfg.slope_tolerance,
            (slope - expected).abs() <= cfg.slope_tolerance,
        );
    } else {
        // Too few positive means to fit a slope: only decay can be judged.
        let decays = expected < 0.0 && means.windows(2).all(|w| w[1] <= w[0]);
        report.check(
            "means non-increasing in n (slope not estimable)",
            decays as u8 as f64,
            cfg.replicas,
            1.0,
            decays,
        );
    }
    Ok(report.finish(start))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoissonConcentrationConfig {
    pub lambdas: Vec<f64>,
    /// Deviations tested are `a = lambda^exponent`.
    pub exponent: f64,
}

impl Default for PoissonConcentrationConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![10.0, 1000.0],
            exponent: 0.8,
        }
    }
}

/// Checks `P(|Y - lambda| >= a) <= lambda / a^3` for Poisson `Y` by exact
/// summation of the mass function.
pub fn poisson_concentration_check(cfg: &PoissonConcentrationConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report =
        ExperimentReport::new("poisson-concentration", cfg, 0).with_columns(&["lambda", "a", "tail", "bound"]);
    for &lambda in &cfg.lambdas {
        if !(lambda > 0.0) {
            return Err(domain("Poisson concentration", format!("lambda = {lambda}")));
        }
        let a = lambda.powf(cfg.exponent);
        let tail = poisson_two_sided_tail(lambda, a);
        let bound = lambda / a.powi(3);
        report.row(vec![lambda, a, tail, bound]);
        report.check_at_most(&format!("P(|Y - {lambda}| >= {a:.3})"), tail, 1, bound);
    }
    Ok(report.finish(start))
}
