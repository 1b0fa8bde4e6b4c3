//! The exact expression of `P_n^{(k)}(l, t)`, the probability that `l`
//! given disjoint trees of size `k` are components at Poissonized time `t`,
//! and the factorial moments of `k N^{(k)}(t)` built from it. Both hold for
//! the strict Poisson semantics, where rings on present edges are ignored.
//!
//! Pairs outside the pinned trees ring at rate `1/n`, so the outside graph
//! is a model on `n' = n - l k` vertices run at time `u n'/n`. The formula
//! is evaluated with that time change; without it, it is only correct to
//! first order in `l k / n`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::statistics::{mean, variance};
use super::{run_replicas, ExperimentReport};
use crate::error::{domain, Result};
use crate::rng::SimRng;
use crate::simulator::GraphState;
use crate::special_functions::ln_factorial;

const TAG_PNK_LHS: u32 = 10;
const TAG_PNK_RHS: u32 = 11;
const TAG_FACTORIAL_LHS: u32 = 12;
const TAG_FACTORIAL_RHS: u32 = 13;

/// `x (x-1) ... (x-j+1)`.
pub fn falling_factorial(x: f64, j: usize) -> f64 {
    (0..j).map(|i| x - i as f64).product()
}

/// Exact prefactor and exponent rate of the formula for `P_n^{(k)}(l, t)`:
/// the probability equals `prefactor * E[exp(-rate * int_0^t (1 - G(u)/n') du)]`
/// with `G` the gel of an independent model on `n' = n - l k` vertices.
fn pnk_parts(p: f64, n: usize, k: usize, ell: usize, t: f64) -> (f64, f64) {
    let (nf, lk) = (n as f64, (ell * k) as f64);
    let tree_edges = (ell * (k - 1)) as f64;
    let inner_non_edges = lk * (lk - 1.0) / 2.0 - tree_edges;
    let ring = -(-t / nf).exp_m1();
    let pref = ring.powf(tree_edges) * (-inner_non_edges * t / nf - lk * (nf - lk) * p * t / nf).exp();
    (pref, lk * (nf - lk) * (1.0 - p) / nf)
}

/// `int_0^t (1 - G(u c)/n') du` for one strict-semantics run on `n'`
/// vertices, with clock factor `c` (`n'/n` for the exact formula).
fn free_time(p: f64, n_rest: usize, t: f64, clock: f64, rng: &mut SimRng) -> Result<f64> {
    if n_rest < 2 {
        return Ok(t);
    }
    let mut s = GraphState::new(n_rest, p, 1)?.with_strict_ppp();
    s.advance_poissonized(rng, t * clock, |_| false);
    Ok(t - s.gel_integral() / (n_rest as f64 * clock))
}

/// Monte-Carlo evaluation of the formula for `P_n^{(k)}(l, t)` from the
/// given samples of `int_0^t (1 - G/n') du`; returns estimate and standard
/// error.
pub fn pnk_formula(p: f64, n: usize, k: usize, ell: usize, t: f64, free_times: &[f64]) -> (f64, f64) {
    let (pref, rate) = pnk_parts(p, n, k, ell, t);
    if rate == 0.0 || free_times.is_empty() {
        let w = (-rate * t).exp();
        return (pref * w, 0.0);
    }
    let ws: Vec<f64> = free_times.iter().map(|&f| pref * (-rate * f).exp()).collect();
    let se = if ws.len() > 1 {
        (variance(&ws) / ws.len() as f64).sqrt()
    } else {
        0.0
    };
    (mean(&ws), se)
}

/// Nested Monte Carlo for the right side: `replicas` runs of the model on
/// `n - l k` vertices, with the exact time change unless `literal` is set.
#[allow(clippy::too_many_arguments)]
fn pnk_rhs(
    p: f64,
    n: usize,
    k: usize,
    ell: usize,
    t: f64,
    replicas: usize,
    seed: u64,
    tag: u32,
    literal: bool,
) -> Result<(f64, f64)> {
    let n_rest = n - ell * k;
    let clock = if literal { 1.0 } else { n_rest as f64 / n as f64 };
    let free = run_replicas(seed, tag, replicas, |_, rng| free_time(p, n_rest, t, clock, rng))?;
    Ok(pnk_formula(p, n, k, ell, t, &free))
}

/// Natural log of the number of ordered `l`-tuples of disjoint labelled
/// trees of size `k` on `n` vertices.
fn ln_tree_tuples(n: usize, k: usize, ell: usize) -> f64 {
    let kf = k as f64;
    ln_factorial(n as u64) - ln_factorial((n - ell * k) as u64) - ell as f64 * ln_factorial(k as u64)
        + ell as f64 * (kf - 2.0) * kf.ln()
}

/// Partitions of `j` into at most `max_len` parts, each at most `max_part`,
/// as non-increasing sequences.
fn partitions(j: usize, max_part: usize, max_len: usize) -> Vec<Vec<usize>> {
    fn go(rest: usize, cap: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        if left == 0 {
            return;
        }
        for part in (1..=cap.min(rest)).rev() {
            cur.push(part);
            go(rest - part, part, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(j, max_part, max_len, &mut Vec::new(), &mut out);
    out
}

/// Coefficients `c_l` with `E[prod_{i<j} (k N^{(k)} - i)] = sum_l c_l P(l, t)`,
/// one entry `(l, c_l)` per length occurring among the admissible partitions
/// of `j`. Empty when `j > n`, where the moment vanishes.
pub fn partition_sum(n: usize, k: usize, j: usize) -> Vec<(usize, f64)> {
    if j > n || k == 0 {
        return Vec::new();
    }
    let kf = k as f64;
    let mut by_len: Vec<f64> = vec![0.0; j + 1];
    for parts in partitions(j, k, n / k) {
        let ell = parts.len();
        let mut ln = ln_factorial(n as u64) - ln_factorial((n - k * ell) as u64) + ln_factorial(j as u64);
        let mut mult = vec![0u64; j + 1];
        for &part in &parts {
            ln -= ln_factorial(part as u64) + ln_factorial((k - part) as u64);
            mult[part] += 1;
        }
        for &m in &mult {
            ln -= ln_factorial(m);
        }
        ln += ell as f64 * (kf - 2.0) * kf.ln();
        by_len[ell] += ln.exp();
    }
    by_len.into_iter().enumerate().filter(|&(_, c)| c > 0.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PnkConfig {
    pub p: f64,
    pub n: usize,
    pub k: usize,
    pub ell: usize,
    pub t: f64,
    /// Runs of the full model for the left side.
    pub replicas: usize,
    /// Runs of the reduced model for the right side.
    pub inner_replicas: usize,
    pub max_z: f64,
}

impl Default for PnkConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            n: 100,
            k: 2,
            ell: 1,
            t: 2.0,
            replicas: 100_000,
            inner_replicas: 20_000,
            max_z: 3.0,
        }
    }
}

/// Compares a direct estimate of `P_n^{(k)}(l, t)` with the formula. The
/// direct side is estimated twice: by pinning `l` paths on the vertex
/// blocks `{ik, ..., ik + k - 1}`, and by exchangeability from the falling
/// factorial of `N^{(k)}(t)`.
pub fn pnk_formula_experiment(cfg: &PnkConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if cfg.k == 0 || cfg.ell == 0 || cfg.ell * cfg.k > cfg.n || cfg.n < 2 || !(cfg.t >= 0.0) || cfg.replicas < 2 {
        return Err(domain(
            "P_n^(k) experiment",
            "need k, l >= 1, l k <= n, t >= 0, replicas >= 2",
        ));
    }
    let (k, ell) = (cfg.k, cfg.ell);
    let (rhs, rhs_se) = pnk_rhs(
        cfg.p,
        cfg.n,
        k,
        ell,
        cfg.t,
        cfg.inner_replicas,
        seed,
        TAG_PNK_RHS,
        false,
    )?;
    let (literal, _) = pnk_rhs(cfg.p, cfg.n, k, ell, cfg.t, cfg.inner_replicas, seed, TAG_PNK_RHS, true)?;
    let rows = run_replicas(seed, TAG_PNK_LHS, cfg.replicas, |_, rng| {
        let mut s = GraphState::new(cfg.n, cfg.p, 1)?.with_strict_ppp().with_edge_log();
        s.advance_poissonized(rng, cfg.t, |_| false);
        let edges = s.forest_edges().unwrap_or_default();
        let mut pinned = true;
        for b in 0..ell {
            let lo = b * k;
            let (size, frozen) = s.component_of(lo);
            if frozen || size != k || s.members(lo).iter().any(|&x| x < lo || x >= lo + k) {
                pinned = false;
                break;
            }
            let path = (lo..lo + k - 1).all(|x| edges.contains(&(x, x + 1)));
            if !path {
                pinned = false;
                break;
            }
        }
        Ok([pinned as u8 as f64, falling_factorial(s.tree_count(k) as f64, ell)])
    })?;
    let reps = rows.len() as f64;
    let pinned = mean(&rows.iter().map(|r| r[0]).collect::<Vec<_>>());
    let pinned_se = (rhs * (1.0 - rhs) / reps).max(0.0).sqrt();
    let ff: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let scale = (-ln_tree_tuples(cfg.n, k, ell)).exp();
    let exch = mean(&ff) * scale;
    let exch_se = (variance(&ff) / reps).sqrt() * scale;
    let z_pinned = (pinned - rhs) / (pinned_se.powi(2) + rhs_se.powi(2)).sqrt();
    let z_exch = (exch - rhs) / (exch_se.powi(2) + rhs_se.powi(2)).sqrt();
    let mut report =
        ExperimentReport::new("pnk-formula", cfg, seed).with_columns(&["replica", "pinned_hit", "falling_factorial"]);
    for (i, r) in rows.iter().enumerate() {
        report.row(vec![i as f64, r[0], r[1]]);
    }
    report.stat("formula estimate", rhs, cfg.inner_replicas);
    report.stat("formula standard error", rhs_se, cfg.inner_replicas);
    report.stat("formula estimate without the time change", literal, cfg.inner_replicas);
    report.stat("pinned estimate", pinned, cfg.replicas);
    report.stat("exchangeable estimate", exch, cfg.replicas);
    report.stat("exchangeable standard error", exch_se, cfg.replicas);
    report.check_at_most("|z| pinned vs formula", z_pinned.abs(), cfg.replicas, cfg.max_z);
    report.check_at_most("|z| exchangeable vs formula", z_exch.abs(), cfg.replicas, cfg.max_z);
    Ok(report.finish(start))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorialMomentConfig {
    pub p: f64,
    pub n: usize,
    pub k: usize,
    pub j: usize,
    pub t: f64,
    pub replicas: usize,
    pub inner_replicas: usize,
    pub max_z: f64,
}

impl Default for FactorialMomentConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            n: 40,
            k: 2,
            j: 2,
            t: 2.0,
            replicas: 200_000,
            inner_replicas: 20_000,
            max_z: 3.0,
        }
    }
}

/// Compares the empirical `j`-th factorial moment of `k N^{(k)}(t)` with the
/// partition sum over `P_n^{(k)}(l, t)`, each term evaluated by the formula.
pub fn factorial_moment_experiment(cfg: &FactorialMomentConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if cfg.k == 0 || cfg.j == 0 || cfg.n < 2 || !(cfg.t >= 0.0) || cfg.replicas < 2 {
        return Err(domain(
            "factorial-moment experiment",
            "need k, j >= 1, n >= 2, t >= 0, replicas >= 2",
        ));
    }
    let mut rhs = 0.0;
    let mut rhs_var = 0.0;
    let mut report = ExperimentReport::new("factorial-moment", cfg, seed).with_columns(&["replica", "moment_sample"]);
    for (ell, c) in partition_sum(cfg.n, cfg.k, cfg.j) {
        let tag = TAG_FACTORIAL_RHS + ((ell as u32) << 8);
        let (pl, se) = pnk_rhs(cfg.p, cfg.n, cfg.k, ell, cfg.t, cfg.inner_replicas, seed, tag, false)?;
        report.stat(&format!("P(l = {ell}) by the formula"), pl, cfg.inner_replicas);
        rhs += c * pl;
        rhs_var += (c * se).powi(2);
    }
    let samples = run_replicas(seed, TAG_FACTORIAL_LHS, cfg.replicas, |_, rng| {
        let mut s = GraphState::new(cfg.n, cfg.p, 1)?.with_strict_ppp();
        s.advance_poissonized(rng, cfg.t, |_| false);
        Ok(falling_factorial((cfg.k as u64 * s.tree_count(cfg.k)) as f64, cfg.j))
    })?;
    for (i, &x) in samples.iter().enumerate() {
        report.row(vec![i as f64, x]);
    }
    let lhs = mean(&samples);
    let lhs_se = (variance(&samples) / samples.len() as f64).sqrt();
    let se = (lhs_se.powi(2) + rhs_var).sqrt();
    let z = if se > 0.0 {
        (lhs - rhs) / se
    } else if lhs == rhs {
        0.0
    } else {
        f64::INFINITY
    };
    report.stat("empirical factorial moment", lhs, samples.len());
    report.stat("partition-sum value", rhs, cfg.inner_replicas);
    report.check_at_most("|z| empirical vs partition sum", z.abs(), samples.len(), cfg.max_z);
    Ok(report.finish(start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest_counts::{component_sizes, count_forests_exact, for_each_forest, ln_big};

    #[test]
    fn partitions_are_enumerated() {
        assert_eq!(partitions(4, 4, 4).len(), 5);
        assert_eq!(partitions(4, 2, 4), vec![vec![2, 2], vec![2, 1, 1], vec![1, 1, 1, 1]]);
        assert_eq!(partitions(4, 4, 2), vec![vec![4], vec![3, 1], vec![2, 2]]);
    }

    #[test]
    fn first_moment_is_expected_count() {
        // j = 1 gives k E[N] = n C(n-1, k-1) k^{k-2} P(1, t).
        for (n, k) in [(10usize, 1usize), (10, 3), (40, 2)] {
            let c = partition_sum(n, k, 1);
            assert_eq!(c.len(), 1);
            let kf = k as f64;
            let binom = (ln_factorial(n as u64 - 1) - ln_factorial(k as u64 - 1) - ln_factorial((n - k) as u64)).exp();
            let want = n as f64 * binom * kf.powf(kf - 2.0);
            assert!((c[0].1 - want).abs() < 1e-9 * want, "{n} {k}");
        }
        assert!(partition_sum(3, 1, 4).is_empty());
    }

    /// The partition identity only uses exchangeability, so it holds for a
    /// uniform forest of `W(N, M)`, where `P(l)` is a ratio of counts.
    #[test]
    fn partition_identity_on_uniform_forests() {
        let (nv, m) = (7usize, 3usize);
        let total = ln_big(&count_forests_exact(nv as u64, m as u64));
        for k in 1..=4usize {
            let mut counts = Vec::new();
            for_each_forest(nv, m, |edges| {
                let trees = component_sizes(nv, edges).into_iter().filter(|&s| s == k).count();
                counts.push((k * trees) as f64);
            });
            for j in 1..=4usize {
                let lhs = counts.iter().map(|&x| falling_factorial(x, j)).sum::<f64>() / counts.len() as f64;
                let rhs: f64 = partition_sum(nv, k, j)
                    .into_iter()
                    .map(|(ell, c)| {
                        let used = ell * (k - 1);
                        if used > m || ell * k > nv {
                            return 0.0;
                        }
                        let rest = count_forests_exact((nv - ell * k) as u64, (m - used) as u64);
                        let rest = if nv == ell * k {
                            if m == used {
                                0.0
                            } else {
                                f64::NEG_INFINITY
                            }
                        } else {
                            ln_big(&rest)
                        };
                        c * (rest - total).exp()
                    })
                    .sum();
                assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1.0), "k {k} j {j}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn formula_at_time_zero() {
        let (pref, _) = pnk_parts(0.5, 50, 1, 1, 0.0);
        assert_eq!(pref, 1.0);
        let (est, se) = pnk_formula(0.5, 50, 1, 1, 0.0, &[0.0, 0.0]);
        assert_eq!((est, se), (1.0, 0.0));
        let (pref, _) = pnk_parts(0.5, 50, 2, 1, 0.0);
        assert_eq!(pref, 0.0);
    }

    #[test]
    fn single_vertex_early_time() {
        // l = k = 1 at small t: both sides are close to exp(-t) since G = 0.
        let (n, t) = (100, 0.2);
        let (est, _) = pnk_formula(0.3, n, 1, 1, t, &[t]);
        let want = (-t * (n - 1) as f64 / n as f64).exp();
        assert!((est - want).abs() < 1e-12);
    }
}
