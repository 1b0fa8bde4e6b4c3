//! Monte-Carlo simulation of the p-frozen process in discrete time (one
//! uniform vertex pair per step) or Poissonized time (each pair rings at
//! rate `1/n`).

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::forest_sampler::Forest;
use crate::rng::{master_rng, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Discrete,
    Poissonized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepOutcome {
    /// Two distinct trees joined by the new edge.
    TreeMerge,
    /// A tree of the given size closed a cycle and froze.
    Freeze(u32),
    /// A tree of the given size was attached to the gel.
    GlueToGel(u32),
    /// The pair was gel-gel or a refused tree-gel pair.
    Discard,
    /// Strict Poisson semantics: the ring fell on an edge already present.
    Ignored,
}

/// Tracks, for `k <= k_max`, the last clock value at which no tree of size
/// exactly `k` (resp. at least `k`) remained.
#[derive(Debug, Clone, PartialEq)]
struct Tracker {
    k_max: usize,
    count_ge: Vec<u64>,
    last_zero: Vec<Option<f64>>,
    last_zero_ge: Vec<Option<f64>>,
}

impl Tracker {
    fn new(k_max: usize) -> Self {
        Self {
            k_max,
            count_ge: vec![0; k_max + 1],
            last_zero: vec![None; k_max + 1],
            last_zero_ge: vec![None; k_max + 1],
        }
    }
}

/// Full state of one run.
#[derive(Debug, Clone)]
pub struct GraphState {
    n: usize,
    p: f64,
    parent: Vec<u32>,
    size: Vec<u32>,
    frozen: Vec<bool>,
    ring: Vec<u32>,
    tree_vertices: Vec<u32>,
    pos: Vec<u32>,
    hist: Vec<u64>,
    max_size: usize,
    g: u64,
    d: u64,
    e: u64,
    m: u64,
    ignored: u64,
    effective: u64,
    time: f64,
    gel_integral: f64,
    strict: bool,
    edge_set: Option<HashSet<u64>>,
    edge_log: Option<Vec<(u32, u32)>>,
    tracker: Tracker,
    absorbed_at: Option<f64>,
    watch: Option<u32>,
    watch_frozen_at: Option<f64>,
}

/// Counters of a state, as used by trajectories and invariant checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub n: u64,
    pub g: u64,
    pub d: u64,
    pub v: u64,
    pub e: u64,
    pub m: u64,
    pub ignored: u64,
    pub time: f64,
}

impl GraphState {
    pub fn new(n: usize, p: f64, k_max: usize) -> Result<Self> {
        if n < 2 || n > u32::MAX as usize / 2 {
            return Err(domain("graph size", format!("n = {n}, need n >= 2")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(domain("freezing probability", format!("p = {p}")));
        }
        let mut state = Self {
            n,
            p,
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            frozen: vec![false; n],
            ring: (0..n as u32).collect(),
            tree_vertices: (0..n as u32).collect(),
            pos: (0..n as u32).collect(),
            hist: vec![0; n + 1],
            max_size: 1,
            g: 0,
            d: 0,
            e: 0,
            m: 0,
            ignored: 0,
            effective: 0,
            time: 0.0,
            gel_integral: 0.0,
            strict: false,
            edge_set: None,
            edge_log: None,
            tracker: Tracker::new(k_max),
            absorbed_at: None,
            watch: None,
            watch_frozen_at: None,
        };
        state.hist_add(1, n as u64);
        Ok(state)
    }

    /// Rings on an edge already present are ignored instead of freezing.
    pub fn with_strict_ppp(mut self) -> Self {
        self.strict = true;
        self.edge_set = Some(HashSet::new());
        self
    }

    /// Keep the list of added tree edges so the forest part can be read back.
    pub fn with_edge_log(mut self) -> Self {
        self.edge_log = Some(Vec::new());
        self
    }

    /// Record the clock at which vertex `v` (0-based) joins the gel.
    pub fn watch_vertex(&mut self, v: usize) {
        self.watch = Some(v as u32);
    }

    /// State with the given forest part on vertices `0..forest.n` (labels
    /// `1..=forest.n` shifted down) and `gel` further vertices in the gel.
    /// `d = 0` and `m = e + g`.
    pub fn inject(p: f64, forest: &Forest, gel: usize, k_max: usize) -> Result<Self> {
        let mut s = Self::new(forest.n + gel, p, k_max)?;
        s.reset_from_forest(forest, gel)?;
        Ok(s)
    }

    /// Reinitialises in place (keeping allocations) from a forest and gel.
    pub fn reset_from_forest(&mut self, forest: &Forest, gel: usize) -> Result<()> {
        let n = forest.n + gel;
        if n != self.n {
            return Err(domain(
                "state reset",
                format!("{n} vertices given, state has {}", self.n),
            ));
        }
        for v in 0..n {
            self.parent[v] = v as u32;
            self.size[v] = 1;
            self.frozen[v] = v >= forest.n;
            self.ring[v] = v as u32;
        }
        self.hist.iter_mut().for_each(|h| *h = 0);
        self.tracker = Tracker::new(self.tracker.k_max);
        self.tree_vertices.clear();
        for v in 0..forest.n {
            self.pos[v] = v as u32;
            self.tree_vertices.push(v as u32);
        }
        self.max_size = 1;
        if let Some(set) = &mut self.edge_set {
            set.clear();
        }
        if let Some(log) = &mut self.edge_log {
            log.clear();
        }
        for (comp, edges) in forest.components.iter().zip(&forest.edges) {
            let root = comp[0] as u32 - 1;
            for &w in &comp[1..] {
                let w = w as u32 - 1;
                self.parent[w as usize] = root;
                self.ring.swap(root as usize, w as usize);
            }
            self.size[root as usize] = comp.len() as u32;
            self.max_size = self.max_size.max(comp.len());
            for &(a, b) in edges {
                self.record_edge(a as u32 - 1, b as u32 - 1);
            }
        }
        for comp in &forest.components {
            self.hist_add(comp.len(), 1);
        }
        self.g = gel as u64;
        self.e = forest.num_edges() as u64;
        self.d = 0;
        self.ignored = 0;
        self.effective = 0;
        self.m = self.e + self.g;
        self.time = 0.0;
        self.gel_integral = 0.0;
        self.absorbed_at = if self.g == n as u64 { Some(0.0) } else { None };
        self.watch_frozen_at = None;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn counters(&self) -> Counters {
        Counters {
            n: self.n as u64,
            g: self.g,
            d: self.d,
            v: self.n as u64 - self.g,
            e: self.e,
            m: self.m,
            ignored: self.ignored,
            time: self.time,
        }
    }

    pub fn gel(&self) -> u64 {
        self.g
    }

    pub fn steps(&self) -> u64 {
        self.m
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `int_0^time G(u) du` (Poissonized clock).
    pub fn gel_integral(&self) -> f64 {
        self.gel_integral
    }

    pub fn is_absorbed(&self) -> bool {
        self.g == self.n as u64
    }

    /// Number of trees with exactly `k` vertices.
    pub fn tree_count(&self, k: usize) -> u64 {
        self.hist.get(k).copied().unwrap_or(0)
    }

    /// Size of the `i`-th largest tree (1-based), or 0 if there are fewer.
    pub fn ith_largest_tree(&self, i: usize) -> usize {
        let mut seen = 0u64;
        for k in (1..=self.max_size).rev() {
            seen += self.hist[k];
            if seen >= i as u64 {
                return k;
            }
        }
        0
    }

    /// Size of the component containing `v` and whether it lies in the gel.
    pub fn component_of(&mut self, v: usize) -> (usize, bool) {
        let r = self.find(v as u32) as usize;
        (self.size[r] as usize, self.frozen[r])
    }

    /// Vertices of the component containing `v`.
    pub fn members(&mut self, v: usize) -> Vec<usize> {
        let r = self.find(v as u32);
        let mut out = vec![r as usize];
        let mut x = self.ring[r as usize];
        while x != r {
            out.push(x as usize);
            x = self.ring[x as usize];
        }
        out
    }

    /// Edges of the forest part; requires [`GraphState::with_edge_log`].
    pub fn forest_edges(&mut self) -> Option<Vec<(usize, usize)>> {
        let log = self.edge_log.clone()?;
        let mut out = Vec::new();
        for (a, b) in log {
            let r = self.find(a) as usize;
            if !self.frozen[r] {
                out.push((a as usize, b as usize));
            }
        }
        Some(out)
    }

    /// `A^{(k)}` and `A^{(k+)}` for `k = 1..=k_max`.
    pub fn absorption_times(&self) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
        (
            self.tracker.last_zero[1..].to_vec(),
            self.tracker.last_zero_ge[1..].to_vec(),
        )
    }

    pub fn absorbed_at(&self) -> Option<f64> {
        self.absorbed_at
    }

    pub fn watch_frozen_at(&self) -> Option<f64> {
        self.watch_frozen_at
    }

    /// Checks the counter identities against a recount of the structure.
    pub fn check_invariants(&mut self) -> std::result::Result<(), String> {
        let n = self.n as u64;
        let v = n - self.g;
        if self.e + self.g + self.d + self.ignored != self.m {
            return Err(format!("e + g + d + ignored != m: {:?}", self.counters()));
        }
        if self.g > n || (!self.strict && self.g > self.m) {
            return Err(format!("gel too large: {:?}", self.counters()));
        }
        if self.tree_vertices.len() as u64 != v {
            return Err("tree vertex list out of sync".into());
        }
        let mut hist = vec![0u64; self.n + 1];
        let mut gel = 0u64;
        for x in 0..self.n {
            if self.parent[x] as usize == x {
                if self.frozen[x] {
                    gel += self.size[x] as u64;
                } else {
                    hist[self.size[x] as usize] += 1;
                }
            }
        }
        if gel != self.g || hist != self.hist {
            return Err("histogram or gel size out of sync".into());
        }
        let trees: u64 = hist.iter().sum();
        if v - trees != self.e {
            return Err(format!("forest part has {} edges, counter says {}", v - trees, self.e));
        }
        Ok(())
    }

    /// Current value of the clock used by `mode`.
    pub fn clock(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Discrete => self.m as f64,
            Mode::Poissonized => self.time,
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    fn hist_add(&mut self, k: usize, count: u64) {
        self.hist[k] += count;
        let top = k.min(self.tracker.k_max);
        for j in 1..=top {
            self.tracker.count_ge[j] += count;
        }
    }

    fn hist_remove(&mut self, k: usize, clock: f64) {
        self.hist[k] -= 1;
        if k <= self.tracker.k_max && self.hist[k] == 0 {
            self.tracker.last_zero[k] = Some(clock);
        }
        let top = k.min(self.tracker.k_max);
        for j in 1..=top {
            self.tracker.count_ge[j] -= 1;
            if self.tracker.count_ge[j] == 0 {
                self.tracker.last_zero_ge[j] = Some(clock);
            }
        }
    }

    fn record_edge(&mut self, a: u32, b: u32) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if let Some(set) = &mut self.edge_set {
            set.insert(lo as u64 * self.n as u64 + hi as u64);
        }
        if let Some(log) = &mut self.edge_log {
            log.push((lo, hi));
        }
    }

    fn has_edge(&self, a: u32, b: u32) -> bool {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.edge_set
            .as_ref()
            .is_some_and(|s| s.contains(&(lo as u64 * self.n as u64 + hi as u64)))
    }

    /// Moves the tree rooted at `r` into the gel.
    fn freeze(&mut self, r: u32, clock: f64) -> u32 {
        let k = self.size[r as usize];
        self.frozen[r as usize] = true;
        let mut x = r;
        loop {
            let i = self.pos[x as usize] as usize;
            let last = *self.tree_vertices.last().unwrap();
            self.tree_vertices.swap_remove(i);
            if last != x {
                self.pos[last as usize] = i as u32;
            }
            x = self.ring[x as usize];
            if x == r {
                break;
            }
        }
        self.hist_remove(k as usize, clock);
        self.g += k as u64;
        self.e -= k as u64 - 1;
        if let Some(w) = self.watch {
            if self.watch_frozen_at.is_none() && self.find(w) == r {
                self.watch_frozen_at = Some(clock);
            }
        }
        if self.g == self.n as u64 && self.absorbed_at.is_none() {
            self.absorbed_at = Some(clock);
        }
        k
    }

    fn merge(&mut self, ra: u32, rb: u32, a: u32, b: u32, clock: f64) {
        let (sa, sb) = (self.size[ra as usize], self.size[rb as usize]);
        let (big, small) = if sa >= sb { (ra, rb) } else { (rb, ra) };
        self.parent[small as usize] = big;
        self.size[big as usize] = sa + sb;
        self.ring.swap(ra as usize, rb as usize);
        self.hist_remove(sa as usize, clock);
        self.hist_remove(sb as usize, clock);
        let k = (sa + sb) as usize;
        self.hist_add(k, 1);
        self.max_size = self.max_size.max(k);
        self.e += 1;
        self.record_edge(a, b);
    }

    /// Applies the pair `{a, b}` as one step of the process; the step
    /// counter has already been advanced.
    fn apply_pair<R: Rng + ?Sized>(&mut self, a: u32, b: u32, clock: f64, rng: &mut R) -> StepOutcome {
        let (ra, rb) = (self.find(a), self.find(b));
        let (fa, fb) = (self.frozen[ra as usize], self.frozen[rb as usize]);
        match (fa, fb) {
            (true, true) => {
                self.d += 1;
                StepOutcome::Discard
            }
            (false, false) if ra == rb => {
                if self.strict && self.has_edge(a, b) {
                    self.ignored += 1;
                    return StepOutcome::Ignored;
                }
                StepOutcome::Freeze(self.freeze(ra, clock))
            }
            (false, false) => {
                self.merge(ra, rb, a, b, clock);
                StepOutcome::TreeMerge
            }
            _ => {
                let tree = if fa { rb } else { ra };
                if rng.random::<f64>() < self.p {
                    StepOutcome::GlueToGel(self.freeze(tree, clock))
                } else {
                    self.d += 1;
                    StepOutcome::Discard
                }
            }
        }
    }

    fn uniform_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (u32, u32) {
        let n = self.n as u32;
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        (a, b)
    }

    /// One discrete step with a uniformly drawn pair.
    pub fn step_discrete<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StepOutcome {
        let (a, b) = self.uniform_pair(rng);
        self.m += 1;
        let clock = self.m as f64;
        self.apply_pair(a, b, clock, rng)
    }

    /// One ring of the Poisson clock (total rate `(n-1)/2`), then a step.
    pub fn step_poissonized<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StepOutcome {
        let rate = (self.n as f64 - 1.0) / 2.0;
        let dt: f64 = Exp1.sample(rng);
        let dt = dt / rate;
        self.gel_integral += self.g as f64 * dt;
        self.time += dt;
        let (a, b) = self.uniform_pair(rng);
        self.m += 1;
        let clock = self.time;
        self.apply_pair(a, b, clock, rng)
    }

    /// Probability that a uniform pair is gel-gel.
    fn gel_pair_prob(&self) -> f64 {
        let (g, n) = (self.g as f64, self.n as f64);
        g * (g - 1.0) / (n * (n - 1.0))
    }

    /// Draws a pair conditioned on not being gel-gel.
    fn effective_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (u32, u32) {
        let v = self.tree_vertices.len() as u32;
        let (vf, gf) = (v as f64, self.g as f64);
        let tree_tree = vf * (vf - 1.0);
        let tree_gel = 2.0 * vf * gf;
        let a = self.tree_vertices[rng.random_range(0..v) as usize];
        if rng.random::<f64>() * (tree_tree + tree_gel) < tree_tree {
            let ia = self.pos[a as usize];
            let mut ib = rng.random_range(0..v - 1);
            if ib >= ia {
                ib += 1;
            }
            (a, self.tree_vertices[ib as usize])
        } else {
            (a, u32::MAX)
        }
    }

    fn apply_effective<R: Rng + ?Sized>(&mut self, rng: &mut R, clock: f64) -> StepOutcome {
        let (a, b) = self.effective_pair(rng);
        self.effective += 1;
        if b == u32::MAX {
            let ra = self.find(a);
            if rng.random::<f64>() < self.p {
                StepOutcome::GlueToGel(self.freeze(ra, clock))
            } else {
                self.d += 1;
                StepOutcome::Discard
            }
        } else {
            self.apply_pair(a, b, clock, rng)
        }
    }

    /// Advances the discrete process until step `target` or until `stop`
    /// holds after a step. Runs of gel-gel pairs are skipped in one draw.
    pub fn advance_discrete<R, F>(&mut self, rng: &mut R, target: u64, mut stop: F) -> bool
    where
        R: Rng + ?Sized,
        F: FnMut(&GraphState) -> bool,
    {
        while self.m < target {
            let q = self.gel_pair_prob();
            let skip = if q >= 1.0 {
                u64::MAX
            } else if q > 0.0 {
                let u = 1.0 - rng.random::<f64>();
                (u.ln() / q.ln()).floor().min(u64::MAX as f64 / 2.0) as u64
            } else {
                0
            };
            if skip >= target - self.m {
                self.d += target - self.m;
                self.m = target;
                return false;
            }
            self.d += skip;
            self.m += skip + 1;
            let clock = self.m as f64;
            self.apply_effective(rng, clock);
            if stop(self) {
                return true;
            }
        }
        false
    }

    /// Advances the Poissonized process until time `target` or until `stop`
    /// holds after a ring. Gel-gel rings are thinned out and counted in bulk.
    pub fn advance_poissonized<R, F>(&mut self, rng: &mut R, target: f64, mut stop: F) -> bool
    where
        R: Rng + ?Sized,
        F: FnMut(&GraphState) -> bool,
    {
        let rate = (self.n as f64 - 1.0) / 2.0;
        while self.time < target {
            let q = self.gel_pair_prob();
            let eff_rate = rate * (1.0 - q);
            let dt = if eff_rate > 0.0 {
                let e: f64 = Exp1.sample(rng);
                e / eff_rate
            } else {
                f64::INFINITY
            };
            let span = dt.min(target - self.time);
            let quiet = rate * q * span;
            if quiet > 0.0 {
                let k = Poisson::new(quiet).map(|d| d.sample(rng)).unwrap_or(0.0) as u64;
                self.d += k;
                self.m += k;
            }
            self.gel_integral += self.g as f64 * span;
            if self.time + dt >= target {
                self.time = target;
                return false;
            }
            self.time += dt;
            self.m += 1;
            let clock = self.time;
            self.apply_effective(rng, clock);
            if stop(self) {
                return true;
            }
        }
        false
    }

    pub fn advance<R, F>(&mut self, mode: Mode, rng: &mut R, target: f64, stop: F) -> bool
    where
        R: Rng + ?Sized,
        F: FnMut(&GraphState) -> bool,
    {
        match mode {
            Mode::Discrete => self.advance_discrete(rng, target.max(0.0).floor() as u64, stop),
            Mode::Poissonized => self.advance_poissonized(rng, target, stop),
        }
    }
}

/// Sampling grid in clock units (steps or Poissonized time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Grid {
    /// `points` evenly spaced values in `[0, end]`; `end = None` picks a
    /// horizon past the typical absorption time.
    Uniform {
        points: usize,
        end: Option<f64>,
    },
    Explicit(Vec<f64>),
}

impl Grid {
    pub fn resolve(&self, n: usize, p: f64, mode: Mode) -> Vec<f64> {
        match self {
            Grid::Explicit(v) => v.clone(),
            Grid::Uniform { points, end } => {
                let horizon = end.unwrap_or_else(|| {
                    let t = (n as f64).ln() / p + 6.0 / p;
                    match mode {
                        Mode::Discrete => (n as f64 * t / 2.0).ceil(),
                        Mode::Poissonized => t,
                    }
                });
                let k = (*points).max(2);
                (0..k)
                    .map(|i| {
                        let x = horizon * i as f64 / (k - 1) as f64;
                        if mode == Mode::Discrete {
                            x.floor()
                        } else {
                            x
                        }
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub p: f64,
    pub mode: Mode,
    pub seed: u64,
    pub grid: Grid,
    pub k_max: usize,
    pub step_cap: Option<u64>,
    pub strict_ppp: bool,
    /// Record the forest part at the last grid point; needs `n <= 10^4`.
    #[serde(default)]
    pub keep_edges: bool,
}

impl RunConfig {
    pub fn new(n: usize, p: f64, mode: Mode, seed: u64) -> Self {
        Self {
            n,
            p,
            mode,
            seed,
            grid: Grid::Uniform { points: 512, end: None },
            k_max: 10,
            step_cap: None,
            strict_ppp: false,
            keep_edges: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub clock: f64,
    pub g: u64,
    pub d: u64,
    pub v: u64,
    pub e: u64,
    /// `N^{(k)}` for `k = 1..=k_max`.
    pub tree_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub trajectory: Vec<TrajectoryPoint>,
    /// False when the step cap stopped the run before absorption.
    pub complete: bool,
    /// Clock at which the last tree vanished.
    pub absorption: Option<f64>,
    /// `A^{(k)}`, `k = 1..=k_max`.
    pub absorption_k: Vec<Option<f64>>,
    /// `A^{(k+)}`, `k = 1..=k_max`.
    pub absorption_k_plus: Vec<Option<f64>>,
    /// Steps simulated, up to the later of absorption and the last grid point.
    pub steps: u64,
    /// Steps whose pair had at least one tree endpoint.
    pub effective_steps: u64,
    /// Tree edges (0-based vertices) at the last grid point, when kept.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub forest_edges: Option<Vec<(usize, usize)>>,
}

impl RunRecord {
    /// Trajectory as CSV with columns `t_or_m,G,D,V,E,N1..Nk`.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("t_or_m,G,D,V,E");
        for k in 1..=self.config.k_max {
            out.push_str(&format!(",N{k}"));
        }
        out.push('\n');
        for pt in &self.trajectory {
            out.push_str(&format!("{},{},{},{},{}", pt.clock, pt.g, pt.d, pt.v, pt.e));
            for c in &pt.tree_counts {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

fn snapshot(state: &GraphState, clock: f64, k_max: usize) -> TrajectoryPoint {
    let c = state.counters();
    TrajectoryPoint {
        clock,
        g: c.g,
        d: c.d,
        v: c.v,
        e: c.e,
        tree_counts: (1..=k_max).map(|k| state.tree_count(k)).collect(),
    }
}

/// Runs one replica to absorption, recording the trajectory on the grid.
/// Hitting the step cap yields a partial record with `complete = false`.
/// Largest `n` for which [`RunConfig::keep_edges`] is accepted.
pub const KEEP_EDGES_MAX_N: usize = 10_000;

pub fn run(config: &RunConfig) -> Result<RunRecord> {
    let mut rng = master_rng(config.seed);
    run_with_rng(config, &mut rng)
}

pub fn run_with_rng(config: &RunConfig, rng: &mut SimRng) -> Result<RunRecord> {
    let mut state = GraphState::new(config.n, config.p, config.k_max)?;
    if config.strict_ppp {
        state = state.with_strict_ppp();
    }
    if config.keep_edges {
        if config.n > KEEP_EDGES_MAX_N {
            return Err(domain(
                "edge log",
                format!("n = {} exceeds {KEEP_EDGES_MAX_N}", config.n),
            ));
        }
        state = state.with_edge_log();
    }
    let grid = config.grid.resolve(config.n, config.p, config.mode);
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain("trajectory grid", "grid must be strictly increasing"));
    }
    let cap = config.step_cap.unwrap_or(u64::MAX);
    let capped = |s: &GraphState| s.m >= cap && !s.is_absorbed();
    let mut trajectory = Vec::with_capacity(grid.len());
    for &x in &grid {
        state.advance(config.mode, rng, x, |s| s.m >= cap);
        if capped(&state) {
            break;
        }
        trajectory.push(snapshot(&state, x, config.k_max));
    }
    let forest_edges = if config.keep_edges { state.forest_edges() } else { None };
    while !state.is_absorbed() && !capped(&state) {
        let target = match config.mode {
            Mode::Discrete => (state.m as f64 * 2.0).max(16.0),
            Mode::Poissonized => (state.time * 2.0).max(1.0),
        };
        state.advance(config.mode, rng, target, |s| s.is_absorbed() || s.m >= cap);
    }
    let (absorption_k, absorption_k_plus) = state.absorption_times();
    Ok(RunRecord {
        config: config.clone(),
        trajectory,
        complete: state.is_absorbed(),
        absorption: state.absorbed_at(),
        absorption_k,
        absorption_k_plus,
        steps: state.m,
        effective_steps: state.effective,
        forest_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest_sampler::sample_forest;
    use crate::rng::stream_rng;
    use crate::stats_harness::statistics::{chi_square_gof, ks_two_sample, mean};
    use proptest::prelude::*;

    fn absorb_naive(n: usize, p: f64, mode: Mode, rng: &mut SimRng) -> f64 {
        let mut s = GraphState::new(n, p, 4).unwrap();
        while !s.is_absorbed() {
            match mode {
                Mode::Discrete => s.step_discrete(rng),
                Mode::Poissonized => s.step_poissonized(rng),
            };
        }
        s.absorbed_at().unwrap()
    }

    fn absorb_fast(n: usize, p: f64, mode: Mode, rng: &mut SimRng) -> f64 {
        let mut s = GraphState::new(n, p, 4).unwrap();
        s.advance(mode, rng, f64::MAX / 4.0, |s| s.is_absorbed());
        s.absorbed_at().unwrap()
    }

    #[test]
    fn two_vertices_absorb_in_two_steps() {
        let mut rng = master_rng(1);
        for p in [0.1, 1.0] {
            assert_eq!(absorb_naive(2, p, Mode::Discrete, &mut rng), 2.0);
            assert_eq!(absorb_fast(2, p, Mode::Discrete, &mut rng), 2.0);
        }
    }

    #[test]
    fn three_vertex_mean_absorption() {
        let p = 0.3;
        let exact = 8.0 / 3.0 + 1.0 / (2.0 * p);
        let reps = 200_000;
        let mut rng = master_rng(7);
        let naive: Vec<f64> = (0..reps)
            .map(|_| absorb_naive(3, p, Mode::Discrete, &mut rng))
            .collect();
        let fast: Vec<f64> = (0..reps).map(|_| absorb_fast(3, p, Mode::Discrete, &mut rng)).collect();
        for xs in [naive, fast] {
            let m = mean(&xs);
            assert!((m - exact).abs() < 0.02, "mean {m} vs {exact}");
        }
    }

    #[test]
    fn first_ring_has_mean_two_over_n_minus_one() {
        let n = 11;
        let mut rng = master_rng(3);
        let times: Vec<f64> = (0..100_000)
            .map(|_| {
                let mut s = GraphState::new(n, 0.5, 1).unwrap();
                s.step_poissonized(&mut rng);
                s.time()
            })
            .collect();
        let m = mean(&times);
        assert!((m - 0.2).abs() < 0.003, "{m}");
    }

    #[test]
    fn naive_and_fast_agree_in_law() {
        for mode in [Mode::Discrete, Mode::Poissonized] {
            let mut r1 = stream_rng(11, 1, 0);
            let mut r2 = stream_rng(11, 2, 0);
            let a: Vec<f64> = (0..3000).map(|_| absorb_naive(40, 0.4, mode, &mut r1)).collect();
            let b: Vec<f64> = (0..3000).map(|_| absorb_fast(40, 0.4, mode, &mut r2)).collect();
            let t = ks_two_sample(&a, &b);
            assert!(t.p_value > 1e-3, "{mode:?}: {t:?}");
        }
    }

    #[test]
    fn free_forest_is_uniform_given_counts() {
        let n = 5;
        let mut rng = master_rng(21);
        let mut counts = std::collections::HashMap::<Vec<(usize, usize)>, u64>::new();
        let mut total = 0u64;
        for _ in 0..400_000 {
            let mut s = GraphState::new(n, 0.5, 1).unwrap().with_edge_log();
            for _ in 0..3 {
                s.step_discrete(&mut rng);
            }
            if s.counters().e != 3 {
                continue;
            }
            let mut edges = s.forest_edges().unwrap();
            edges.sort_unstable();
            *counts.entry(edges).or_default() += 1;
            total += 1;
        }
        let mut observed: Vec<u64> = counts.values().copied().collect();
        let missing = 110 - observed.len();
        observed.extend(std::iter::repeat_n(0, missing));
        let probs = vec![1.0 / 110.0; 110];
        assert!(total > 100_000);
        let t = chi_square_gof(&observed, &probs);
        assert!(t.p_value > 1e-3, "{t:?}");
    }

    #[test]
    fn inject_reproduces_forest() {
        let mut rng = master_rng(5);
        let f = sample_forest(30, 12, &mut rng).unwrap();
        let mut s = GraphState::inject(0.5, &f, 7, 5).unwrap().with_edge_log();
        s.reset_from_forest(&f, 7).unwrap();
        s.check_invariants().unwrap();
        let c = s.counters();
        assert_eq!((c.g, c.e, c.m, c.v), (7, 12, 19, 30));
        let mut sizes: Vec<usize> = f.component_sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(s.ith_largest_tree(1), sizes[0]);
        assert_eq!(s.forest_edges().unwrap().len(), 12);
        s.advance(Mode::Discrete, &mut rng, 1e9, |s| s.is_absorbed());
        s.check_invariants().unwrap();
    }

    #[test]
    fn run_record_is_reproducible() {
        let mut cfg = RunConfig::new(500, 0.5, Mode::Poissonized, 99);
        cfg.grid = Grid::Uniform { points: 20, end: None };
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trajectory.len(), 20);
        let last = a.trajectory.last().unwrap();
        assert!(a.complete && a.absorption.unwrap() > 0.0 && last.g <= 500);
        for (k, (x, y)) in a.absorption_k.iter().zip(&a.absorption_k_plus).enumerate() {
            assert!(x.unwrap() <= y.unwrap(), "k = {}", k + 1);
        }
        assert_eq!(a.absorption_k_plus[0], a.absorption);
        assert!(a.trajectory_csv().starts_with("t_or_m,G,D,V,E,N1"));
    }

    #[test]
    fn step_cap_gives_partial_record() {
        let mut cfg = RunConfig::new(1000, 0.01, Mode::Discrete, 1);
        cfg.step_cap = Some(100);
        let r = run(&cfg).unwrap();
        assert!(!r.complete && r.absorption.is_none());
        assert_eq!(r.steps, 100);
        assert_eq!(r.trajectory.len(), 1);
    }

    #[test]
    fn strict_mode_ignores_existing_edges() {
        let mut rng = master_rng(8);
        let mut s = GraphState::new(3, 1.0, 3).unwrap().with_strict_ppp();
        let mut ignored = 0;
        for _ in 0..2000 {
            if s.is_absorbed() {
                s = GraphState::new(3, 1.0, 3).unwrap().with_strict_ppp();
            }
            if s.step_poissonized(&mut rng) == StepOutcome::Ignored {
                ignored += 1;
            }
            s.check_invariants().unwrap();
        }
        assert!(ignored > 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn counters_stay_consistent(n in 2usize..60, p in 0.01f64..1.0, seed in any::<u64>(), fast in any::<bool>(), poisson in any::<bool>()) {
            let mut rng = master_rng(seed);
            let mode = if poisson { Mode::Poissonized } else { Mode::Discrete };
            let mut s = GraphState::new(n, p, 5).unwrap();
            let mut last_g = 0;
            let mut last_clock = 0.0;
            while !s.is_absorbed() {
                if fast {
                    let target = s.clock(mode) + 1.0;
                    s.advance(mode, &mut rng, target, |_| true);
                } else if poisson {
                    s.step_poissonized(&mut rng);
                } else {
                    s.step_discrete(&mut rng);
                }
                prop_assert!(s.check_invariants().is_ok(), "{:?}", s.check_invariants());
                prop_assert!(s.gel() >= last_g);
                prop_assert!(s.clock(mode) >= last_clock);
                last_g = s.gel();
                last_clock = s.clock(mode);
            }
            let (_, a_plus) = s.absorption_times();
            prop_assert_eq!(a_plus[0], s.absorbed_at());
            for w in a_plus.windows(2) {
                if let (Some(x), Some(y)) = (w[0], w[1]) {
                    prop_assert!(x >= y);
                }
            }
        }
    }
}
