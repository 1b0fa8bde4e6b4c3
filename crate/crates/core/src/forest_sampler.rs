//! Exact uniform sampling from `W(N, M)`, the labelled forests on `N`
//! vertices with `M` edges.
//!
//! Tree sizes are the increments of a random walk with step law `mu_x`
//! conditioned to hit `N` after `N - M` steps; labels are then split
//! uniformly and each block receives a uniform Cayley tree.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{domain, Result};
use crate::special_functions::MuX;

/// Above this many vertices the conditioned walk is sampled by rejection.
pub const DP_MAX_N: usize = 5000;

/// A forest on the labels `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forest {
    pub n: usize,
    /// Vertex sets of the trees.
    pub components: Vec<Vec<usize>>,
    /// Edges `(u, v)` grouped by component, each with `u < v`.
    pub edges: Vec<Vec<(usize, usize)>>,
}

impl Forest {
    pub fn num_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn component_sizes(&self) -> Vec<usize> {
        self.components.iter().map(Vec::len).collect()
    }

    /// Sorted edge list, a canonical key for the labelled forest.
    pub fn canonical_edges(&self) -> Vec<(usize, usize)> {
        let mut all: Vec<(usize, usize)> = self.edges.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Text form: one `u v` line per edge, an isolated vertex as a line `u`,
    /// components separated by blank lines.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, (comp, edges)) in self.components.iter().zip(&self.edges).enumerate() {
            if i > 0 {
                out.push('\n');
            }
            if edges.is_empty() {
                out.push_str(&format!("{}\n", comp[0]));
            }
            for (u, v) in edges {
                out.push_str(&format!("{u} {v}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Method {
    /// Every tree is a single vertex or the whole forest is one tree.
    Trivial,
    /// `rows[j][i] = P(S_j = j + i) / scale_j`, steps `nu[l] = mu(l + 1)`.
    Table {
        nu: Vec<f64>,
        rows: Vec<Vec<f64>>,
        ln_scale: Vec<f64>,
    },
    Rejection {
        cdf: Vec<f64>,
    },
}

/// Precomputed sampler for one `(N, M)` pair.
#[derive(Debug, Clone)]
pub struct ForestSampler {
    n: usize,
    m: usize,
    mu: Option<MuX>,
    method: Method,
}

impl ForestSampler {
    /// Uses `theta = 2M/N` clamped to `(0, 1]`.
    pub fn new(n: usize, m: usize) -> Result<Self> {
        let theta = if n == 0 {
            1.0
        } else {
            (2.0 * m as f64 / n as f64).clamp(1e-3, 1.0)
        };
        Self::with_theta(n, m, theta)
    }

    pub fn with_theta(n: usize, m: usize, theta: f64) -> Result<Self> {
        if n == 0 || m >= n {
            return Err(domain(
                "forest sampler",
                format!("need 0 <= M < N, got N = {n}, M = {m}"),
            ));
        }
        let c = n - m;
        if m == 0 || c == 1 {
            return Ok(Self {
                n,
                m,
                mu: None,
                method: Method::Trivial,
            });
        }
        let mu = MuX::from_theta(theta)?;
        let nu: Vec<f64> = (0..=m).map(|l| mu.pmf(l as u64 + 1)).collect();
        let method = if n <= DP_MAX_N {
            let mut rows = Vec::with_capacity(c + 1);
            let mut ln_scale = Vec::with_capacity(c + 1);
            let mut first = vec![0.0; m + 1];
            first[0] = 1.0;
            rows.push(first);
            ln_scale.push(0.0);
            for j in 1..=c {
                let prev = &rows[j - 1];
                let mut row = vec![0.0; m + 1];
                for (i, slot) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for l in 0..=i {
                        acc += nu[l] * prev[i - l];
                    }
                    *slot = acc;
                }
                let peak = row.iter().cloned().fold(0.0, f64::max);
                for v in &mut row {
                    *v /= peak;
                }
                ln_scale.push(ln_scale[j - 1] + peak.ln());
                rows.push(row);
            }
            Method::Table { nu, rows, ln_scale }
        } else {
            let mut cdf = Vec::with_capacity(m + 1);
            let mut acc = 0.0;
            for w in &nu {
                acc += w;
                cdf.push(acc);
            }
            Method::Rejection { cdf }
        };
        Ok(Self {
            n,
            m,
            mu: Some(mu),
            method,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn theta(&self) -> Option<f64> {
        self.mu.map(|mu| mu.theta)
    }

    /// Tree sizes in walk order; they sum to `N` and there are `N - M`.
    pub fn sample_sizes<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let c = self.n - self.m;
        match &self.method {
            Method::Trivial => {
                if c == 1 {
                    vec![self.n]
                } else {
                    vec![1; self.n]
                }
            }
            Method::Table { nu, rows, ln_scale } => {
                let mut sizes = Vec::with_capacity(c);
                let mut i = self.m;
                for j in (1..=c).rev() {
                    let prev = &rows[j - 1];
                    let total = rows[j][i] * (ln_scale[j] - ln_scale[j - 1]).exp();
                    let target = rng.random::<f64>() * total;
                    let mut acc = 0.0;
                    let mut pick = None;
                    for l in 0..=i {
                        let w = nu[l] * prev[i - l];
                        if w > 0.0 {
                            pick = Some(l);
                            acc += w;
                            if acc >= target {
                                break;
                            }
                        }
                    }
                    let l = pick.expect("conditioned walk has positive mass");
                    sizes.push(l + 1);
                    i -= l;
                }
                sizes.reverse();
                sizes
            }
            Method::Rejection { cdf } => {
                let top = *cdf.last().unwrap();
                loop {
                    let mut sizes = Vec::with_capacity(c);
                    let mut sum = 0usize;
                    for j in 0..c {
                        let u = rng.random::<f64>() * top;
                        let l = cdf.partition_point(|&x| x < u).min(self.m);
                        sum += l + 1;
                        if sum + (c - j - 1) > self.n {
                            break;
                        }
                        sizes.push(l + 1);
                    }
                    if sizes.len() == c && sum == self.n {
                        return sizes;
                    }
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Forest {
        let sizes = self.sample_sizes(rng);
        let mut labels: Vec<usize> = (1..=self.n).collect();
        labels.shuffle(rng);
        let mut components = Vec::with_capacity(sizes.len());
        let mut edges = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for k in sizes {
            let mut block = labels[start..start + k].to_vec();
            start += k;
            edges.push(sample_cayley_tree(&block, rng));
            block.sort_unstable();
            components.push(block);
        }
        Forest {
            n: self.n,
            components,
            edges,
        }
    }
}

pub fn sample_component_sizes<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    Ok(ForestSampler::new(n, m)?.sample_sizes(rng))
}

pub fn sample_forest<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Forest> {
    Ok(ForestSampler::new(n, m)?.sample(rng))
}

/// Uniform labelled tree on `labels` via a random Pruefer sequence. Edges
/// are returned with the smaller label first.
pub fn sample_cayley_tree<R: Rng + ?Sized>(labels: &[usize], rng: &mut R) -> Vec<(usize, usize)> {
    let k = labels.len();
    let ordered = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    match k {
        0 | 1 => return Vec::new(),
        2 => return vec![ordered(labels[0], labels[1])],
        _ => {}
    }
    let code: Vec<usize> = (0..k - 2).map(|_| rng.random_range(0..k)).collect();
    let mut degree = vec![1usize; k];
    for &x in &code {
        degree[x] += 1;
    }
    let mut edges = Vec::with_capacity(k - 1);
    let mut ptr = degree.iter().position(|&d| d == 1).unwrap();
    let mut leaf = ptr;
    for &x in &code {
        edges.push(ordered(labels[leaf], labels[x]));
        degree[x] -= 1;
        if degree[x] == 1 && x < ptr {
            leaf = x;
        } else {
            ptr += 1;
            while degree[ptr] != 1 {
                ptr += 1;
            }
            leaf = ptr;
        }
    }
    edges.push(ordered(labels[leaf], labels[k - 1]));
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest_counts::{component_sizes, for_each_forest};
    use crate::rng::master_rng;
    use crate::stats_harness::statistics::{chi_square_gof, ks_two_sample, median};
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn check_forest(f: &Forest, n: usize, m: usize) {
        assert_eq!(f.num_edges(), m);
        let mut all: Vec<usize> = f.components.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (1..=n).collect::<Vec<_>>());
        for (comp, edges) in f.components.iter().zip(&f.edges) {
            assert_eq!(edges.len() + 1, comp.len());
            let zero: Vec<(usize, usize)> = edges
                .iter()
                .map(|&(u, v)| (comp.binary_search(&u).unwrap(), comp.binary_search(&v).unwrap()))
                .collect();
            assert_eq!(component_sizes(comp.len(), &zero), vec![comp.len()]);
        }
    }

    /// Chi-square of sampled forests against every forest of W(n, m).
    fn uniformity_p_value(n: usize, m: usize, samples: usize, seed: u64) -> (usize, f64) {
        let mut index = HashMap::new();
        for_each_forest(n, m, |edges| {
            let key: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (a + 1, b + 1)).collect();
            let len = index.len();
            index.insert(key, len);
        });
        let sampler = ForestSampler::new(n, m).unwrap();
        let mut rng = master_rng(seed);
        let mut counts = vec![0u64; index.len()];
        for _ in 0..samples {
            let f = sampler.sample(&mut rng);
            counts[index[&f.canonical_edges()]] += 1;
        }
        let probs = vec![1.0 / counts.len() as f64; counts.len()];
        (counts.len(), chi_square_gof(&counts, &probs).p_value)
    }

    #[test]
    fn cayley_trees_uniform() {
        let mut rng = master_rng(11);
        let mut counts: HashMap<Vec<(usize, usize)>, u64> = HashMap::new();
        for _ in 0..300_000 {
            let mut t = sample_cayley_tree(&[1, 2, 3, 4], &mut rng);
            t.sort_unstable();
            *counts.entry(t).or_default() += 1;
        }
        assert_eq!(counts.len(), 16);
        let obs: Vec<u64> = counts.values().copied().collect();
        assert!(chi_square_gof(&obs, &[1.0 / 16.0; 16]).p_value > 0.001);
        assert!(sample_cayley_tree(&[5], &mut rng).is_empty());
        assert_eq!(sample_cayley_tree(&[9, 2], &mut rng), vec![(2, 9)]);
    }

    #[test]
    fn uniform_on_small_spaces() {
        let (bins, p) = uniformity_p_value(4, 2, 300_000, 1);
        assert_eq!(bins, 15);
        assert!(p > 0.001, "p = {p}");
        let (bins, p) = uniformity_p_value(5, 3, 300_000, 2);
        assert_eq!(bins, 110);
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn size_law_on_w42() {
        let sampler = ForestSampler::new(4, 2).unwrap();
        let mut rng = master_rng(3);
        let n = 150_000;
        let mut three = 0u64;
        for _ in 0..n {
            let mut s = sampler.sample_sizes(&mut rng);
            s.sort_unstable();
            if s == vec![1, 3] {
                three += 1;
            } else {
                assert_eq!(s, vec![2, 2]);
            }
        }
        let freq = three as f64 / n as f64;
        let sd = (0.8f64 * 0.2 / n as f64).sqrt();
        assert!((freq - 0.8).abs() < 4.0 * sd);
    }

    #[test]
    fn degenerate_shapes() {
        let mut rng = master_rng(4);
        let f = sample_forest(6, 0, &mut rng).unwrap();
        assert_eq!(f.components.len(), 6);
        assert_eq!(f.num_edges(), 0);
        let f = sample_forest(7, 6, &mut rng).unwrap();
        check_forest(&f, 7, 6);
        assert!(sample_forest(4, 4, &mut rng).is_err());
        assert!(sample_forest(0, 0, &mut rng).is_err());
    }

    #[test]
    fn rejection_path_matches_table_path() {
        let table = ForestSampler::with_theta(60, 20, 0.6).unwrap();
        let mut rej = ForestSampler::with_theta(60, 20, 0.6).unwrap();
        let nu: Vec<f64> = (0..=20).map(|l| rej.mu.unwrap().pmf(l as u64 + 1)).collect();
        let mut acc = 0.0;
        rej.method = Method::Rejection {
            cdf: nu
                .iter()
                .map(|w| {
                    acc += w;
                    acc
                })
                .collect(),
        };
        let mut rng = master_rng(5);
        let largest = |s: &ForestSampler, rng: &mut crate::rng::SimRng| -> Vec<f64> {
            (0..20_000)
                .map(|_| *s.sample_sizes(rng).iter().max().unwrap() as f64)
                .collect()
        };
        let a = largest(&table, &mut rng);
        let b = largest(&rej, &mut rng);
        assert!(ks_two_sample(&a, &b).p_value > 0.001);
    }

    #[test]
    fn theta_does_not_change_the_law() {
        let a_s = ForestSampler::new(200, 60).unwrap();
        let b_s = ForestSampler::with_theta(200, 60, 0.5).unwrap();
        let mut rng = master_rng(6);
        let a: Vec<f64> = (0..100_000)
            .map(|_| *a_s.sample_sizes(&mut rng).iter().max().unwrap() as f64)
            .collect();
        let b: Vec<f64> = (0..100_000)
            .map(|_| *b_s.sample_sizes(&mut rng).iter().max().unwrap() as f64)
            .collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.001);
    }

    /// Largest tree at (N, M) = (2000, 600) against the median of the
    /// maximum of N - M independent mu_x draws.
    #[test]
    fn largest_tree_finite_n() {
        let (n, m) = (2000usize, 600usize);
        let c = (n - m) as f64;
        let mu = MuX::from_theta(2.0 * m as f64 / n as f64).unwrap();
        let mut below = 0.0;
        let mut predicted = 0;
        for k in 1..=m + 1 {
            below += mu.pmf(k as u64);
            if below.powf(c) >= 0.5 {
                predicted = k;
                break;
            }
        }
        let sampler = ForestSampler::new(n, m).unwrap();
        let mut rng = master_rng(8);
        let l1: Vec<f64> = (0..400)
            .map(|_| *sampler.sample_sizes(&mut rng).iter().max().unwrap() as f64)
            .collect();
        let med = median(&l1);
        assert!(
            (med / predicted as f64 - 1.0).abs() < 0.25,
            "median {med} vs {predicted}"
        );
    }

    #[test]
    fn subcritical_largest_tree_tail_shape() {
        // 2M - N = -0.4 N: the tail of L1 stays below C N^2/B^2 e^{-eps^2 B/2}.
        let (n, m, eps) = (2000usize, 600usize, 0.4f64);
        let sampler = ForestSampler::new(n, m).unwrap();
        let mut rng = master_rng(12);
        let reps = 4000;
        let l1: Vec<usize> = (0..reps)
            .map(|_| *sampler.sample_sizes(&mut rng).iter().max().unwrap())
            .collect();
        let tail = |b: usize| l1.iter().filter(|&&x| x >= b).count();
        let shape = |b: usize| {
            let bf = b as f64;
            tail(b) as f64 / reps as f64 * bf * bf * (eps * eps * bf / 2.0).exp() / (n * n) as f64
        };
        let b0 = median(&l1.iter().map(|&x| x as f64).collect::<Vec<_>>()) as usize;
        let mut last = usize::MAX;
        let mut b = b0;
        while tail(b) >= 20 {
            assert!(tail(b) <= last);
            assert!(shape(b) <= shape(b0) * 1.5, "B = {b}: {} vs {}", shape(b), shape(b0));
            last = tail(b);
            b += 1;
        }
        assert!(b > b0 + 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn sampled_forests_are_valid(n in 1usize..80, frac in 0.0f64..1.0, seed in any::<u64>()) {
            let m = ((n - 1) as f64 * frac) as usize;
            let mut rng = master_rng(seed);
            let f = sample_forest(n, m, &mut rng).unwrap();
            check_forest(&f, n, m);
            prop_assert_eq!(f.components.len(), n - m);
        }
    }
}
