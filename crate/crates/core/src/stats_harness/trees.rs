//! Experiments on the forest part: largest and typical trees, and the
//! one-step transition kernel.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::statistics::{chi_square_gof, ks_one_sample, median};
use super::{run_replicas, ExperimentReport, ALPHA};
use crate::error::{domain, Result};
use crate::fluid_limit::{largest_tree_constant, GelCurve};
use crate::forest_counts::{
    count_forests_exact, discard_prob, for_each_forest, gel_jump_pmf, ForestCounter, KernelState,
};
use crate::forest_sampler::ForestSampler;
use crate::simulator::{GraphState, StepOutcome};
use crate::special_functions::MuX;

const TAG_LARGEST: u32 = 7;
const TAG_TYPICAL: u32 = 8;
const TAG_KERNEL: u32 = 9;
const TAG_UNIFORM: u32 = 10;

/// Half-width of the critical window around `t = 1/2` excluded from the
/// largest-tree experiment.
pub const GUARD_BAND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LargestTreeConfig {
    pub p: f64,
    pub n: usize,
    pub t: f64,
    pub replicas: usize,
    /// Rank of the tree followed (1 = largest).
    pub rank: usize,
    /// Allowed relative error of the median ratio.
    pub tolerance: f64,
}

impl Default for LargestTreeConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            n: 100_000,
            t: 0.25,
            replicas: 50,
            rank: 1,
            tolerance: 0.25,
        }
    }
}

/// Median of the largest of `count` i.i.d. `mu_x` sizes with the given
/// `theta`: the size a uniform forest with that many trees would show.
pub fn iid_max_median(theta: f64, count: f64) -> Result<f64> {
    let mu = MuX::from_theta(theta.min(1.0))?;
    let mut below = 0.0;
    for k in 1..1_000_000u64 {
        below += mu.pmf(k);
        let tail = (1.0 - below).max(0.0);
        if count * (-tail).ln_1p() >= -std::f64::consts::LN_2 {
            return Ok(k as f64);
        }
    }
    Ok(f64::INFINITY)
}

/// Size of the `rank`-th largest tree at step `floor(n t)`, compared with
/// `ln n` times the limiting constant.
pub fn largest_tree_experiment(cfg: &LargestTreeConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if (cfg.t - 0.5).abs() <= GUARD_BAND {
        return Err(domain(
            "largest-tree experiment",
            format!("t = {} lies in the critical window [0.45, 0.55]", cfg.t),
        ));
    }
    if cfg.rank == 0 || cfg.replicas == 0 {
        return Err(domain("largest-tree experiment", "need rank >= 1 and replicas"));
    }
    let curve = GelCurve::new(cfg.p)?;
    let constant = largest_tree_constant(&curve, cfg.t)?;
    let step = (cfg.n as f64 * cfg.t).floor() as u64;
    let ln_n = (cfg.n as f64).ln();
    let sizes = run_replicas(seed, TAG_LARGEST, cfg.replicas, |_, rng| {
        let mut s = GraphState::new(cfg.n, cfg.p, 1)?;
        s.advance_discrete(rng, step, |_| false);
        let c = s.counters();
        Ok((s.ith_largest_tree(cfg.rank) as f64, (c.v - c.e) as f64))
    })?;
    let ratios: Vec<f64> = sizes.iter().map(|(l, _)| l / ln_n).collect();
    let med = median(&ratios);
    let trees = median(&sizes.iter().map(|s| s.1).collect::<Vec<_>>());
    let theta = 2.0 * curve.r(cfg.t)?;
    let mut report = ExperimentReport::new("largest-tree", cfg, seed).with_columns(&["replica", "size", "trees"]);
    for (i, (l, tr)) in sizes.iter().enumerate() {
        report.row(vec![i as f64, *l, *tr]);
    }
    report.stat("limiting constant", constant, 1);
    if cfg.rank == 1 {
        report.stat(
            "finite-n median of the largest of i.i.d. tree sizes / ln n",
            iid_max_median(theta, trees)? / ln_n,
            1,
        );
    }
    report.stat("median size / ln n", med, ratios.len());
    report.check_at_most(
        "relative error of the median",
        (med - constant).abs() / constant,
        ratios.len(),
        cfg.tolerance,
    );
    Ok(report.finish(start))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TypicalTreeConfig {
    pub p: f64,
    pub n: usize,
    pub t: f64,
    pub replicas: usize,
    /// Sizes above this are pooled into one cell.
    pub max_size: usize,
}

impl Default for TypicalTreeConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            n: 10_000,
            t: 0.25,
            replicas: 2000,
            max_size: 20,
        }
    }
}

/// Law of the component of vertex 1 at step `floor(n t)` given that it is a
/// tree, against `k t_{p,k}(t) / (1 - g_p(t))`; and law of the entrance
/// time of vertex 1 into the gel, rescaled by `n`, against `g_p`.
pub fn typical_tree_experiment(cfg: &TypicalTreeConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if !(cfg.t >= 0.0) || cfg.max_size == 0 || cfg.replicas == 0 {
        return Err(domain(
            "typical-tree experiment",
            "need t >= 0, max_size >= 1 and replicas",
        ));
    }
    let curve = GelCurve::new(cfg.p)?;
    let nf = cfg.n as f64;
    let step = (nf * cfg.t).floor() as u64;
    let rows = run_replicas(seed, TAG_TYPICAL, cfg.replicas, |_, rng| {
        let mut s = GraphState::new(cfg.n, cfg.p, 1)?;
        s.watch_vertex(0);
        s.advance_discrete(rng, step, |_| false);
        let (size, frozen) = s.component_of(0);
        s.advance_discrete(rng, u64::MAX, |s| s.watch_frozen_at().is_some());
        let entrance = s.watch_frozen_at().unwrap_or(f64::NAN);
        Ok([if frozen { 0.0 } else { size as f64 }, entrance / nf])
    })?;
    let tf = step as f64 / nf;
    let w = 1.0 - curve.g(tf)?;
    let mut probs = Vec::with_capacity(cfg.max_size + 1);
    for k in 1..=cfg.max_size as u64 {
        probs.push(k as f64 * curve.t_pk(k, tf)? / w);
    }
    probs.push((1.0 - probs.iter().sum::<f64>()).max(0.0));
    let mut observed = vec![0u64; cfg.max_size + 1];
    for r in &rows {
        if r[0] > 0.0 {
            observed[(r[0] as usize).min(cfg.max_size + 1) - 1] += 1;
        }
    }
    let trees: u64 = observed.iter().sum();
    let mut report =
        ExperimentReport::new("typical-tree", cfg, seed).with_columns(&["replica", "tree_size", "entrance_time"]);
    for (i, r) in rows.iter().enumerate() {
        report.row(vec![i as f64, r[0], r[1]]);
    }
    report.stat(
        "fraction of replicas with vertex 1 in a tree",
        trees as f64 / rows.len() as f64,
        rows.len(),
    );
    report.stat("limit of that fraction", w, 1);
    if trees > 0 {
        let chi = chi_square_gof(&observed, &probs);
        report.stat("size chi-square statistic", chi.statistic, trees as usize);
        report.check_at_least("size chi-square p-value", chi.p_value, trees as usize, ALPHA);
    }
    let entrance: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let ks = ks_one_sample(&entrance, |x| curve.g(x).unwrap_or(f64::NAN));
    report.stat("entrance-time KS statistic", ks.statistic, entrance.len());
    report.check_at_least("entrance-time KS p-value", ks.p_value, entrance.len(), ALPHA);
    Ok(report.finish(start))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub p: f64,
    /// Every admissible state with `2 <= n <= n_max` is tested.
    pub n_max: usize,
    pub draws: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            n_max: 8,
            draws: 1_000_000,
        }
    }
}

/// From each small state, draws a uniform forest of `W(v, e)`, adds the gel,
/// performs one simulator step and tallies the outcome; the frequencies of
/// gel jumps of each size, discards, and the remaining steps are tested
/// against the exact kernel.
pub fn kernel_experiment(cfg: &KernelConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if cfg.n_max < 2 || cfg.draws == 0 {
        return Err(domain("kernel experiment", "need n_max >= 2 and draws"));
    }
    let mut counter = ForestCounter::new();
    let mut jobs = Vec::new();
    for n in 2..=cfg.n_max as u64 {
        for state in KernelState::all(n) {
            if state.v == 0 || (state.e == 0 && state.g == 0) {
                continue;
            }
            let mut probs: Vec<f64> = (1..=state.v)
                .map(|k| gel_jump_pmf(cfg.p, state, k, &mut counter))
                .collect();
            probs.push(discard_prob(cfg.p, n, state.g));
            probs.push((1.0 - probs.iter().sum::<f64>()).max(0.0));
            jobs.push((state, probs));
        }
    }
    let results = run_replicas(seed, TAG_KERNEL, jobs.len(), |j, rng| {
        let (state, probs) = &jobs[j];
        let sampler = ForestSampler::new(state.v as usize, state.e as usize)?;
        let mut counts = vec![0u64; probs.len()];
        let forest = sampler.sample(rng);
        let mut sim = GraphState::inject(cfg.p, &forest, state.g as usize, 1)?;
        let v = state.v as usize;
        for _ in 0..cfg.draws {
            let forest = sampler.sample(rng);
            sim.reset_from_forest(&forest, state.g as usize)?;
            let cell = match sim.step_discrete(rng) {
                StepOutcome::Freeze(k) | StepOutcome::GlueToGel(k) => k as usize - 1,
                StepOutcome::Discard => v,
                StepOutcome::TreeMerge | StepOutcome::Ignored => v + 1,
            };
            counts[cell] += 1;
        }
        Ok(chi_square_gof(&counts, probs))
    })?;
    let mut report =
        ExperimentReport::new("kernel", cfg, seed).with_columns(&["n", "v", "e", "g", "chi_square", "dof", "p_value"]);
    let mut min_p: f64 = 1.0;
    for ((state, _), r) in jobs.iter().zip(&results) {
        report.row(vec![
            state.n as f64,
            state.v as f64,
            state.e as f64,
            state.g as f64,
            r.statistic,
            r.size,
            r.p_value,
        ]);
        min_p = min_p.min(r.p_value);
    }
    let failing = results.iter().filter(|r| !(r.p_value > ALPHA)).count();
    report.stat("states tested", jobs.len() as f64, jobs.len());
    report.stat("smallest p-value", min_p, cfg.draws);
    report.check(
        "states with chi-square p-value <= 0.001",
        failing as f64,
        jobs.len(),
        0.0,
        failing == 0,
    );
    Ok(report.finish(start))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerUniformityConfig {
    /// `(N, M)` pairs; each `W(N, M)` is enumerated in full.
    pub cases: Vec<(usize, usize)>,
    pub samples: usize,
}

impl Default for SamplerUniformityConfig {
    fn default() -> Self {
        Self {
            cases: vec![(4, 2), (5, 3)],
            samples: 300_000,
        }
    }
}

/// Chi-square test of the forest sampler against the uniform law on every
/// forest of `W(N, M)`.
pub fn sampler_uniformity_experiment(cfg: &SamplerUniformityConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report = ExperimentReport::new("sampler-uniformity", cfg, seed).with_columns(&[
        "N",
        "M",
        "forests",
        "chi_square",
        "p_value",
    ]);
    for (case, &(n, m)) in cfg.cases.iter().enumerate() {
        if n == 0 || m >= n || n > 9 {
            return Err(domain(
                "sampler uniformity",
                format!("need 0 <= M < N <= 9, got ({n}, {m})"),
            ));
        }
        let mut index = HashMap::new();
        for_each_forest(n, m, |edges| {
            let mut key: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
            key.sort_unstable();
            let next = index.len();
            index.insert(key, next);
        });
        let total = count_forests_exact(n as u64, m as u64);
        if total != (index.len() as u64).into() {
            return Err(domain(
                "sampler uniformity",
                format!("enumerated {} forests, expected {total}", index.len()),
            ));
        }
        let sampler = ForestSampler::new(n, m)?;
        let keys = run_replicas(seed, TAG_UNIFORM + case as u32 * 100, cfg.samples, |_, rng| {
            let key: Vec<(usize, usize)> = sampler
                .sample(rng)
                .canonical_edges()
                .into_iter()
                .map(|(a, b)| (a - 1, b - 1))
                .collect();
            Ok(key)
        })?;
        let mut counts = vec![0u64; index.len()];
        for key in &keys {
            let cell = index.get(key).ok_or_else(|| {
                domain(
                    "sampler uniformity",
                    format!("sampled edge set {key:?} is not a forest of W({n}, {m})"),
                )
            })?;
            counts[*cell] += 1;
        }
        let probs = vec![1.0 / index.len() as f64; index.len()];
        let r = chi_square_gof(&counts, &probs);
        report.row(vec![n as f64, m as f64, index.len() as f64, r.statistic, r.p_value]);
        report.check_at_least(&format!("W({n},{m}) chi-square p-value"), r.p_value, cfg.samples, ALPHA);
    }
    Ok(report.finish(start))
}
