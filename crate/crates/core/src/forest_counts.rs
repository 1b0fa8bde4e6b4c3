//! Exact and asymptotic counts of labelled forests, `#W(N, M)` = number of
//! forests on `N` labelled vertices with `M` edges, and the one-step law of
//! the gel size built on them.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::special_functions::{ln_factorial, stable_density_p1, MuX};

/// Lazily filled table of forest counts indexed by number of trees `c` and
/// edges `m` (so `N = c + m`). Rows are extended on demand.
#[derive(Debug, Clone, Default)]
pub struct ForestCounter {
    rows: Vec<Vec<BigUint>>,
    cayley: Vec<BigUint>,
}

impl ForestCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// `(i + 1)^(i - 1)`, the number of labelled trees on `i + 1` vertices.
    fn cayley(&mut self, i: usize) -> &BigUint {
        while self.cayley.len() <= i {
            let j = self.cayley.len();
            let v = if j == 0 {
                BigUint::one()
            } else {
                BigUint::from(j as u64 + 1).pow(j as u32 - 1)
            };
            self.cayley.push(v);
        }
        &self.cayley[i]
    }

    fn ensure(&mut self, c: usize, m: usize) {
        if self.rows.is_empty() {
            self.rows.push(vec![BigUint::one()]);
        }
        while self.rows.len() <= c {
            self.rows.push(Vec::new());
        }
        self.cayley(m);
        for row in 0..=c {
            let have = self.rows[row].len();
            if have > m {
                continue;
            }
            for mm in have..=m {
                let value = if row == 0 {
                    BigUint::zero()
                } else {
                    // The tree holding the smallest label has i + 1 vertices.
                    let n1 = (row - 1 + mm) as u64;
                    let mut binom = BigUint::one();
                    let mut acc = BigUint::zero();
                    for i in 0..=mm {
                        if i > 0 {
                            binom *= n1 - (i as u64 - 1);
                            binom /= i as u64;
                        }
                        let rest = &self.rows[row - 1][mm - i];
                        if !rest.is_zero() {
                            acc += &binom * &self.cayley[i] * rest;
                        }
                    }
                    acc
                };
                self.rows[row].push(value);
            }
        }
    }

    /// `#W(n, m)`: forests on `n` labelled vertices with `m` edges.
    pub fn count(&mut self, n: u64, m: u64) -> BigUint {
        if m > n || (m == n && n > 0) {
            return BigUint::zero();
        }
        let (c, m) = ((n - m) as usize, m as usize);
        self.ensure(c, m);
        self.rows[c][m].clone()
    }

    /// `#W(n, m)` with `#W(n, m) = 0` whenever either argument is negative.
    pub fn count_signed(&mut self, n: i64, m: i64) -> BigUint {
        if n < 0 || m < 0 {
            return BigUint::zero();
        }
        self.count(n as u64, m as u64)
    }
}

/// Immutable table of `#W(n, m)` for all `n <= max_n`.
#[derive(Debug, Clone)]
pub struct ForestCountTable {
    max_n: u64,
    counts: Vec<Vec<BigUint>>,
}

impl ForestCountTable {
    pub fn build(max_n: u64) -> Self {
        let mut counter = ForestCounter::new();
        let counts = (0..=max_n)
            .map(|n| (0..=n).map(|m| counter.count(n, m)).collect())
            .collect();
        Self { max_n, counts }
    }

    pub fn max_n(&self) -> u64 {
        self.max_n
    }

    pub fn get(&self, n: u64, m: u64) -> Option<&BigUint> {
        self.counts.get(n as usize)?.get(m as usize)
    }
}

pub fn count_forests_exact(n: u64, m: u64) -> BigUint {
    ForestCounter::new().count(n, m)
}

/// Natural logarithm of a positive big integer.
pub fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// `P(S_c = s)` for `s <= n_max`, where `S_c` sums `c` independent draws
/// from `mu`, returned as natural logs (`-inf` for impossible values).
pub fn walk_log_probs(mu: &MuX, c: usize, n_max: usize) -> Vec<f64> {
    let step: Vec<f64> = (0..=n_max).map(|k| mu.pmf(k as u64)).collect();
    let mut row = vec![0.0; n_max + 1];
    row[0] = 1.0;
    let mut log_scale = 0.0;
    for _ in 0..c {
        let mut next = vec![0.0; n_max + 1];
        for (s, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for k in 1..=(n_max - s) {
                next[s + k] += w * step[k];
            }
        }
        let peak = next.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            for v in &mut next {
                *v /= peak;
            }
            log_scale += peak.ln();
        }
        row = next;
    }
    row.iter()
        .map(|&v| if v > 0.0 { v.ln() + log_scale } else { f64::NEG_INFINITY })
        .collect()
}

/// Relative deviation between `#W(N, M)` and the random-walk identity
/// `N!/(N-M)! T(x)^{N-M} x^{-N} P(S_{N-M} = N)` at `x = theta e^{-theta}`.
pub fn count_identity_check(counter: &mut ForestCounter, n: u64, m: u64, theta: f64) -> Result<f64> {
    if n == 0 || m >= n {
        return Err(domain(
            "walk identity",
            format!("need 0 <= M < N, got N = {n}, M = {m}"),
        ));
    }
    let mu = MuX::from_theta(theta)?;
    let c = (n - m) as usize;
    let ln_p = walk_log_probs(&mu, c, n as usize)[n as usize];
    let ln_rhs = ln_factorial(n) - ln_factorial(n - m) + c as f64 * mu.t.ln() - n as f64 * mu.x.ln() + ln_p;
    let exact = counter.count(n, m);
    Ok((ln_rhs - ln_big(&exact)).exp_m1().abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Subcritical,
    NearCritical,
    Supercritical,
}

/// Asymptotic estimate of `ln #W(N, M)`. When `|omega|` lies in the overlap
/// band `[0.5, 2]`, `overlap` carries the estimate of the adjacent regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BritikovEstimate {
    pub omega: f64,
    pub regime: Regime,
    pub log_estimate: f64,
    pub overlap: Option<(Regime, f64)>,
}

pub const DEFAULT_REGIME_CUTOFF: f64 = 1.0;

fn britikov_log(regime: Regime, n: u64, m: u64, omega: f64) -> Result<f64> {
    let (nf, mf) = (n as f64, m as f64);
    match regime {
        Regime::Subcritical => {
            if 2 * m >= n {
                return Err(domain("subcritical estimate", "needs 2M < N"));
            }
            Ok(2.0 * mf * nf.ln() - mf * std::f64::consts::LN_2 - ln_factorial(m) + 0.5 * (1.0 - 2.0 * mf / nf).ln())
        }
        Regime::NearCritical => Ok((nf - 1.0 / 6.0) * nf.ln()
            - (nf - mf) * std::f64::consts::LN_2
            - ln_factorial(n - m)
            + 0.5 * (2.0 * std::f64::consts::PI).ln()
            + stable_density_p1(omega)?.ln()),
        Regime::Supercritical => {
            if 2 * m <= n || m + 1 > n {
                return Err(domain("supercritical estimate", "needs N/2 < M < N"));
            }
            Ok((nf - 2.0) * nf.ln()
                - (nf - mf - 1.0) * std::f64::consts::LN_2
                - ln_factorial(n - m - 1)
                - 2.5 * (2.0 * mf / nf - 1.0).ln())
        }
    }
}

/// Regime chosen by `omega = (2M - N)/N^{2/3}` against `cutoff`.
pub fn britikov_asymptotic(n: u64, m: u64, cutoff: f64) -> Result<BritikovEstimate> {
    if n < 2 || m >= n {
        return Err(domain("forest asymptotics", format!("N = {n}, M = {m}")));
    }
    if !(cutoff > 0.0) {
        return Err(domain("forest asymptotics", format!("cutoff = {cutoff}")));
    }
    let omega = (2.0 * m as f64 - n as f64) / (n as f64).powf(2.0 / 3.0);
    let regime = if omega < -cutoff {
        Regime::Subcritical
    } else if omega > cutoff {
        Regime::Supercritical
    } else {
        Regime::NearCritical
    };
    let log_estimate = britikov_log(regime, n, m, omega)?;
    let overlap = if (0.5..=2.0).contains(&omega.abs()) {
        let other = match regime {
            Regime::NearCritical if omega < 0.0 => Regime::Subcritical,
            Regime::NearCritical => Regime::Supercritical,
            _ => Regime::NearCritical,
        };
        britikov_log(other, n, m, omega).ok().map(|v| (other, v))
    } else {
        None
    };
    Ok(BritikovEstimate {
        omega,
        regime,
        log_estimate,
        overlap,
    })
}

/// State seen by the gel-size kernel: `n` vertices, a forest part with `v`
/// vertices and `e` edges, and a gel of `g = n - v` vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelState {
    pub n: u64,
    pub v: u64,
    pub e: u64,
    pub g: u64,
}

impl KernelState {
    pub fn new(n: u64, v: u64, e: u64, g: u64) -> Result<Self> {
        let ok = n >= 2 && v + g == n && (e < v || (e == 0 && v == 0));
        if !ok {
            return Err(domain("kernel state", format!("n = {n}, v = {v}, e = {e}, g = {g}")));
        }
        Ok(Self { n, v, e, g })
    }

    /// Every admissible state with the given `n`.
    pub fn all(n: u64) -> Vec<Self> {
        let mut out = Vec::new();
        for v in 0..=n {
            for e in 0..v.max(1) {
                if let Ok(s) = Self::new(n, v, e, n - v) {
                    out.push(s);
                }
            }
        }
        out
    }
}

/// `C(V,k) k^{k-2} #W(V-k, E-k+1) / #W(V,E)`: the expected number of trees
/// of size `k` in a uniform forest of `W(V, E)`.
pub fn expected_tree_count(counter: &mut ForestCounter, v: u64, e: u64, k: u64) -> BigRational {
    if k == 0 || k > v || k > e + 1 {
        return BigRational::zero();
    }
    let total = counter.count(v, e);
    if total.is_zero() {
        return BigRational::zero();
    }
    let binom = binomial(v, k);
    let cayley = if k == 1 {
        BigUint::one()
    } else {
        BigUint::from(k).pow(k as u32 - 2)
    };
    let rest = counter.count_signed(v as i64 - k as i64, e as i64 - k as i64 + 1);
    BigRational::new(BigInt::from(binom * cayley * rest), BigInt::from(total))
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut b = BigUint::one();
    for i in 0..k {
        b *= n - i;
        b /= i + 1;
    }
    b
}

/// Exact `P(Delta G = k)` for a rational freezing probability.
pub fn gel_jump_pmf_exact(p: &BigRational, state: KernelState, k: u64, counter: &mut ForestCounter) -> BigRational {
    let KernelState { n, v, e, g } = state;
    let trees = expected_tree_count(counter, v, e, k);
    if trees.is_zero() {
        return trees;
    }
    let kk = BigRational::from_integer(BigInt::from(k));
    let rate =
        &kk * (&kk - BigRational::one()) + BigRational::from_integer(BigInt::from(2u32)) * p * &kk * BigInt::from(g);
    trees * rate / BigInt::from(n * (n - 1))
}

/// `P(Delta G = k)` in the given state.
pub fn gel_jump_pmf(p: f64, state: KernelState, k: u64, counter: &mut ForestCounter) -> f64 {
    let trees = expected_tree_count(counter, state.v, state.e, k)
        .to_f64()
        .unwrap_or(0.0);
    let (n, g, kf) = (state.n as f64, state.g as f64, k as f64);
    trees * (kf * (kf - 1.0) + 2.0 * p * kf * g) / (n * (n - 1.0))
}

/// `P(Delta D = 1)`: the step is a gel-gel pair or a refused tree-gel pair.
pub fn discard_prob(p: f64, n: u64, g: u64) -> f64 {
    let (nf, gf) = (n as f64, g as f64);
    (2.0 * (1.0 - p) * gf * (nf - gf) + gf * (gf - 1.0)) / (nf * (nf - 1.0))
}

pub fn discard_prob_exact(p: &BigRational, n: u64, g: u64) -> BigRational {
    let two = BigRational::from_integer(BigInt::from(2u32));
    let one = BigRational::one();
    let cross = two * (one - p) * BigInt::from(g * (n - g));
    let inner = BigRational::from_integer(BigInt::from(g * g.saturating_sub(1)));
    (cross + inner) / BigInt::from(n * (n - 1))
}

/// Calls `visit` with the edge list of every forest on `{0..v}` with `e`
/// edges. Intended for small `v` only.
pub fn for_each_forest<F: FnMut(&[(usize, usize)])>(v: usize, e: usize, mut visit: F) {
    let pairs: Vec<(usize, usize)> = (0..v).flat_map(|i| (i + 1..v).map(move |j| (i, j))).collect();
    let labels: Vec<usize> = (0..v).collect();
    let mut chosen = Vec::with_capacity(e);
    fn rec<F: FnMut(&[(usize, usize)])>(
        pairs: &[(usize, usize)],
        idx: usize,
        need: usize,
        labels: &[usize],
        chosen: &mut Vec<(usize, usize)>,
        visit: &mut F,
    ) {
        if need == 0 {
            visit(chosen);
            return;
        }
        if pairs.len() - idx < need {
            return;
        }
        let (a, b) = pairs[idx];
        if labels[a] != labels[b] {
            let (from, to) = (labels[b], labels[a]);
            let merged: Vec<usize> = labels.iter().map(|&l| if l == from { to } else { l }).collect();
            chosen.push((a, b));
            rec(pairs, idx + 1, need - 1, &merged, chosen, visit);
            chosen.pop();
        }
        rec(pairs, idx + 1, need, labels, chosen, visit);
    }
    if e >= v.max(1) && !(v == 0 && e == 0) {
        return;
    }
    rec(&pairs, 0, e, &labels, &mut chosen, &mut visit);
}

/// Component sizes of the graph on `{0..v}` with the given edges, sorted in
/// decreasing order.
pub fn component_sizes(v: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..v).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut sizes = vec![0usize; v];
    for x in 0..v {
        let r = find(&mut parent, x);
        sizes[r] += 1;
    }
    let mut out: Vec<usize> = sizes.into_iter().filter(|&s| s > 0).collect();
    out.sort_unstable_by(|a, b| b.cmp(a));
    out
}

/// Exact law of one step from `state` by the kernel formula: entry `k - 1`
/// is `P(Delta G = k)` for `k = 1..=v`, then the discard probability, then
/// the remaining mass (tree merges).
pub fn one_step_law(p: &BigRational, state: KernelState, counter: &mut ForestCounter) -> Vec<BigRational> {
    let mut law: Vec<BigRational> = (1..=state.v)
        .map(|k| gel_jump_pmf_exact(p, state, k, counter))
        .collect();
    law.push(discard_prob_exact(p, state.n, state.g));
    let used: BigRational = law.iter().sum();
    law.push(BigRational::one() - used);
    law
}

/// The same law by brute force: every forest of `W(v, e)` on vertices
/// `0..v`, a gel on `v..n`, and every unordered vertex pair.
pub fn one_step_law_enumerated(p: &BigRational, state: KernelState) -> Vec<BigRational> {
    let (n, v) = (state.n as usize, state.v as usize);
    let mut inside = vec![0u64; v + 1];
    let mut to_gel = vec![0u64; v + 1];
    let (mut gel_gel, mut merges, mut forests) = (0u64, 0u64, 0u64);
    let mut label = vec![0usize; v];
    let mut size = vec![0usize; v];
    for_each_forest(v, state.e as usize, |edges| {
        forests += 1;
        let mut parent: Vec<usize> = (0..v).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(a, b) in edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        size.iter_mut().for_each(|s| *s = 0);
        for x in 0..v {
            label[x] = find(&mut parent, x);
            size[label[x]] += 1;
        }
        for a in 0..n {
            for b in a + 1..n {
                match (a < v, b < v) {
                    (true, true) if label[a] == label[b] => inside[size[label[a]]] += 1,
                    (true, true) => merges += 1,
                    (true, false) => to_gel[size[label[a]]] += 1,
                    (false, true) => to_gel[size[label[b]]] += 1,
                    (false, false) => gel_gel += 1,
                }
            }
        }
    });
    let total = BigRational::from_integer(BigInt::from(forests * (n * (n - 1) / 2) as u64));
    let int = |x: u64| BigRational::from_integer(BigInt::from(x));
    let mut law: Vec<BigRational> = (1..=v)
        .map(|k| (int(inside[k]) + p * int(to_gel[k])) / &total)
        .collect();
    let refused: u64 = to_gel.iter().sum();
    law.push((int(gel_gel) + (BigRational::one() - p) * int(refused)) / &total);
    law.push(int(merges) / &total);
    law
}

/// Total-variation distance between two laws on the same cells.
pub fn total_variation(a: &[BigRational], b: &[BigRational]) -> BigRational {
    let sum: BigRational = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    sum / BigInt::from(2u32)
}
