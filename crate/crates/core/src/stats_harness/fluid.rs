//! Fluid-limit experiments: trajectories, discrete against Poissonized
//! time, and the gel tail after half-gelation.

use std::time::Instant;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::statistics::{ks_two_sample, mean, median, variance};
use super::{default_tolerance, run_replicas, ExperimentReport, ALPHA};
use crate::error::{domain, Result};
use crate::fluid_limit::GelCurve;
use crate::simulator::GraphState;

const TAG_TRAJECTORY: u32 = 1;
const TAG_DEPOISSON: u32 = 2;
const TAG_GEL_TAIL: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    pub p: f64,
    pub n: usize,
    pub replicas: usize,
    /// Final fluid time `T`; the run stops at step `floor(n T)`.
    pub horizon: f64,
    pub grid_points: usize,
    pub k_max: usize,
    /// Bound on the median sup-norm deviations; `5 n^{-1/4}` when unset.
    pub tolerance: Option<f64>,
    /// Bound on the pointwise median of the tree-density deviation sum.
    pub tree_tolerance: Option<f64>,
    /// Whether `|R - r_p|` enters the verdict or is only reported.
    pub check_ratio: bool,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            n: 100_000,
            replicas: 20,
            horizon: 3.0,
            grid_points: 301,
            k_max: 10,
            tolerance: None,
            tree_tolerance: None,
            check_ratio: true,
        }
    }
}

/// Deviations of one replica from the fluid limit.
struct TrajectoryDeviation {
    sup: [f64; 4],
    tree_sums: Vec<f64>,
}

/// Runs the discrete model to `floor(n T)` and measures how far the
/// rescaled counters stray from `g_p`, `d_p`, `e_p`, `r_p` and the tree
/// densities `k t_{p,k}`.
pub fn trajectory_experiment(cfg: &TrajectoryConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if !(cfg.horizon >= 0.0) || cfg.grid_points < 1 || cfg.replicas == 0 {
        return Err(domain(
            "trajectory experiment",
            "need horizon >= 0, a grid and replicas",
        ));
    }
    let curve = GelCurve::new(cfg.p)?;
    let nf = cfg.n as f64;
    let steps: Vec<u64> = (0..cfg.grid_points)
        .map(|i| {
            let t = if cfg.grid_points == 1 {
                cfg.horizon
            } else {
                cfg.horizon * i as f64 / (cfg.grid_points - 1) as f64
            };
            (nf * t).floor() as u64
        })
        .collect();
    let mut fluid = Vec::with_capacity(steps.len());
    for &m in &steps {
        let t = m as f64 / nf;
        let trees = (1..=cfg.k_max as u64)
            .map(|k| curve.t_pk(k, t).map(|x| k as f64 * x))
            .collect::<Result<Vec<f64>>>()?;
        fluid.push(([curve.g(t)?, curve.d(t)?, curve.e(t)?, curve.r(t)?], trees));
    }
    let devs = run_replicas(seed, TAG_TRAJECTORY, cfg.replicas, |_, rng| {
        let mut state = GraphState::new(cfg.n, cfg.p, 1)?;
        let mut sup = [0.0f64; 4];
        let mut tree_sums = Vec::with_capacity(steps.len());
        for (&m, (lim, trees)) in steps.iter().zip(&fluid) {
            state.advance_discrete(rng, m, |_| false);
            let c = state.counters();
            let r = if c.v > 0 { c.e as f64 / c.v as f64 } else { 0.0 };
            let obs = [c.g as f64 / nf, c.d as f64 / nf, c.e as f64 / nf, r];
            for j in 0..4 {
                sup[j] = sup[j].max((obs[j] - lim[j]).abs());
            }
            let s: f64 = trees
                .iter()
                .enumerate()
                .map(|(i, &kt)| {
                    let k = (i + 1) as f64;
                    (k * state.tree_count(i + 1) as f64 / nf - kt).abs()
                })
                .sum();
            tree_sums.push(s);
        }
        Ok(TrajectoryDeviation { sup, tree_sums })
    })?;

    let tol = cfg.tolerance.unwrap_or_else(|| default_tolerance(cfg.n));
    let tree_tol = cfg.tree_tolerance.unwrap_or(tol);
    let mut report = ExperimentReport::new("trajectory", cfg, seed).with_columns(&[
        "replica",
        "sup_G",
        "sup_D",
        "sup_E",
        "sup_R",
        "max_tree_sum",
    ]);
    for (i, d) in devs.iter().enumerate() {
        let max_tree = d.tree_sums.iter().cloned().fold(0.0, f64::max);
        report.row(vec![i as f64, d.sup[0], d.sup[1], d.sup[2], d.sup[3], max_tree]);
    }
    let reps = devs.len();
    for (j, name) in ["G", "D", "E", "R"].iter().enumerate() {
        let med = median(&devs.iter().map(|d| d.sup[j]).collect::<Vec<_>>());
        if j == 3 {
            if cfg.check_ratio {
                report.check_at_most("median sup |R - limit|", med, reps, tol);
            } else {
                report.stat("median sup |R - limit|", med, reps);
            }
        } else {
            report.check_at_most(&format!("median sup |{name}/n - limit|"), med, reps, tol);
        }
    }
    let pointwise_max = (0..steps.len())
        .map(|i| median(&devs.iter().map(|d| d.tree_sums[i]).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    report.check_at_most(
        "max over grid of median sum_k |k N_k/n - k t_pk|",
        pointwise_max,
        reps,
        tree_tol,
    );
    Ok(report.finish(start))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DePoissonConfig {
    pub p: f64,
    pub n: usize,
    pub replicas: usize,
    /// Poissonized times at which the gel sizes are compared.
    pub times: Vec<f64>,
}

impl Default for DePoissonConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            n: 10_000,
            replicas: 1000,
            times: vec![0.8, 1.5, 3.0],
        }
    }
}

/// Compares the Poissonized gel size at time `t` with the discrete gel size
/// after a Poisson((n-1)t/2) number of steps, by two-sample KS. The strict
/// semantics (rings on present edges ignored) is run alongside and its
/// deviation reported.
pub fn discrete_vs_poissonized_experiment(cfg: &DePoissonConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    let times = cfg.times.clone();
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|&t| !(t > 0.0)) {
        return Err(domain(
            "de-Poissonization experiment",
            "times must be positive and increasing",
        ));
    }
    let rate = (cfg.n as f64 - 1.0) / 2.0;
    let pairs = run_replicas(seed, TAG_DEPOISSON, cfg.replicas, |_, rng| {
        let mut cont = GraphState::new(cfg.n, cfg.p, 1)?;
        let mut a = Vec::with_capacity(times.len());
        for &t in &times {
            cont.advance_poissonized(rng, t, |_| false);
            a.push(cont.gel() as f64);
        }
        let mut strict = GraphState::new(cfg.n, cfg.p, 1)?.with_strict_ppp();
        let mut c = Vec::with_capacity(times.len());
        for &t in &times {
            strict.advance_poissonized(rng, t, |_| false);
            c.push(strict.gel() as f64);
        }
        let mut disc = GraphState::new(cfg.n, cfg.p, 1)?;
        let mut b = Vec::with_capacity(times.len());
        let mut steps = 0u64;
        let mut prev = 0.0;
        for &t in &times {
            let extra: f64 = Poisson::new(rate * (t - prev))
                .map_err(|e| domain("Poisson count", e.to_string()))?
                .sample(rng);
            steps += extra as u64;
            prev = t;
            disc.advance_discrete(rng, steps, |_| false);
            b.push(disc.gel() as f64);
        }
        Ok((a, b, c))
    })?;
    let mut report = ExperimentReport::new("de-poissonization", cfg, seed).with_columns(&[
        "replica",
        "time",
        "G_poissonized",
        "G_discrete",
        "G_strict",
    ]);
    for (i, (a, b, c)) in pairs.iter().enumerate() {
        for (j, &t) in times.iter().enumerate() {
            report.row(vec![i as f64, t, a[j], b[j], c[j]]);
        }
    }
    for (j, &t) in times.iter().enumerate() {
        let a: Vec<f64> = pairs.iter().map(|(a, _, _)| a[j]).collect();
        let b: Vec<f64> = pairs.iter().map(|(_, b, _)| b[j]).collect();
        let c: Vec<f64> = pairs.iter().map(|(_, _, c)| c[j]).collect();
        report.stat(
            &format!("mean (G_strict - G)/n at t = {t}"),
            (mean(&c) - mean(&a)) / cfg.n as f64,
            a.len(),
        );
        report.stat(
            &format!("KS statistic strict vs default at t = {t}"),
            ks_two_sample(&a, &c).statistic,
            a.len(),
        );
        let ks = ks_two_sample(&a, &b);
        report.stat(&format!("KS statistic at t = {t}"), ks.statistic, a.len());
        report.check_at_least(&format!("KS p-value at t = {t}"), ks.p_value, a.len(), ALPHA);
    }
    Ok(report.finish(start))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GelTailConfig {
    pub p: f64,
    pub n: usize,
    pub replicas: usize,
    pub t_max: f64,
    pub t_step: f64,
}

impl Default for GelTailConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            n: 10_000,
            replicas: 400,
            t_max: 12.0,
            t_step: 0.5,
        }
    }
}

/// Estimates `k_n(t) = E[1 - G(t + sigma(1/2))/n]` in Poissonized time,
/// where `sigma(1/2)` is the first time the gel holds half the vertices,
/// and checks `k_n(t) <= e^{-pt/2}` up to three standard errors.
pub fn gel_tail_experiment(cfg: &GelTailConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if !(cfg.t_step > 0.0) || !(cfg.t_max >= 0.0) || cfg.replicas < 2 {
        return Err(domain(
            "gel tail experiment",
            "need t_step > 0, t_max >= 0, replicas >= 2",
        ));
    }
    let grid: Vec<f64> = (0..)
        .map(|i| i as f64 * cfg.t_step)
        .take_while(|&t| t <= cfg.t_max + 1e-12)
        .collect();
    let nf = cfg.n as f64;
    let half = (cfg.n as u64).div_ceil(2);
    let rows = run_replicas(seed, TAG_GEL_TAIL, cfg.replicas, |_, rng| {
        let mut s = GraphState::new(cfg.n, cfg.p, 1)?;
        let mut horizon = 1.0;
        while s.gel() < half {
            s.advance_poissonized(rng, horizon, |s| s.gel() >= half);
            horizon *= 2.0;
        }
        let sigma = s.time();
        let mut out = Vec::with_capacity(grid.len() + 1);
        out.push(sigma);
        for &t in &grid {
            s.advance_poissonized(rng, sigma + t, |_| false);
            out.push(1.0 - s.gel() as f64 / nf);
        }
        Ok(out)
    })?;
    let mut columns = vec!["replica".to_string(), "sigma_half".to_string()];
    columns.extend(grid.iter().map(|t| format!("k_at_{t}")));
    let mut report = ExperimentReport::new("gel-tail", cfg, seed);
    report.columns = columns;
    for (i, r) in rows.iter().enumerate() {
        let mut row = vec![i as f64];
        row.extend_from_slice(r);
        report.row(row);
    }
    let reps = rows.len();
    report.stat(
        "mean sigma(1/2)",
        mean(&rows.iter().map(|r| r[0]).collect::<Vec<_>>()),
        reps,
    );
    let mut worst = f64::NEG_INFINITY;
    let mut all_ok = true;
    for (j, &t) in grid.iter().enumerate() {
        let xs: Vec<f64> = rows.iter().map(|r| r[j + 1]).collect();
        let se = (variance(&xs) / reps as f64).sqrt();
        let excess = mean(&xs) - (-cfg.p * t / 2.0).exp() - 3.0 * se;
        worst = worst.max(excess);
        all_ok &= excess <= 0.0;
    }
    report.check("max over grid of k_n(t) - e^{-pt/2} - 3 SE", worst, reps, 0.0, all_ok);
    Ok(report.finish(start))
}
