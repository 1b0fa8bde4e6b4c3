//! Monte-Carlo experiments that confront the simulator with the limit laws,
//! and the statistics they are judged by.

mod fluid;
mod moments;
pub mod statistics;
mod thresholds;
mod trees;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng};

pub use fluid::{
    discrete_vs_poissonized_experiment, gel_tail_experiment, trajectory_experiment, DePoissonConfig, GelTailConfig,
    TrajectoryConfig,
};
pub use moments::{
    factorial_moment_experiment, falling_factorial, partition_sum, pnk_formula, pnk_formula_experiment,
    FactorialMomentConfig, PnkConfig,
};
pub use thresholds::{
    expectation_bound_experiment, gelation_experiment, poisson_concentration_check, threshold_poisson_mean,
    tree_count_poisson_experiment, ExpectationBoundConfig, GelationConfig, PoissonConcentrationConfig, TreeCountConfig,
};
pub use trees::{
    kernel_experiment, largest_tree_experiment, sampler_uniformity_experiment, typical_tree_experiment, KernelConfig,
    LargestTreeConfig, SamplerUniformityConfig, TypicalTreeConfig, GUARD_BAND,
};

/// Significance level of every hypothesis test in the harness.
pub const ALPHA: f64 = 1e-3;

/// Default tolerance `5 n^{-1/4}` for fluid-limit deviations.
pub fn default_tolerance(n: usize) -> f64 {
    5.0 * (n as f64).powf(-0.25)
}

/// One reported quantity. `threshold` and `pass` are set when the quantity
/// takes part in the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub value: f64,
    pub sample_size: usize,
    pub threshold: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub columns: Vec<String>,
    pub replicas: Vec<Vec<f64>>,
    pub statistics: Vec<Statistic>,
    pub verdict: bool,
    pub wall_clock_secs: f64,
    pub threads: usize,
}

impl ExperimentReport {
    pub fn new<C: Serialize>(id: &str, config: &C, seed: u64) -> Self {
        Self {
            id: id.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seed,
            columns: Vec::new(),
            replicas: Vec::new(),
            statistics: Vec::new(),
            verdict: true,
            wall_clock_secs: 0.0,
            threads: rayon::current_num_threads(),
        }
    }

    pub fn with_columns(mut self, columns: &[&str]) -> Self {
        self.columns = columns.iter().map(|c| c.to_string()).collect();
        self
    }

    pub fn row(&mut self, values: Vec<f64>) {
        self.replicas.push(values);
    }

    /// Records a descriptive statistic.
    pub fn stat(&mut self, name: &str, value: f64, sample_size: usize) {
        self.statistics.push(Statistic {
            name: name.to_string(),
            value,
            sample_size,
            threshold: None,
            pass: None,
        });
    }

    /// Records a statistic that enters the verdict.
    pub fn check(&mut self, name: &str, value: f64, sample_size: usize, threshold: f64, pass: bool) {
        self.verdict &= pass;
        self.statistics.push(Statistic {
            name: name.to_string(),
            value,
            sample_size,
            threshold: Some(threshold),
            pass: Some(pass),
        });
    }

    /// Passes when `value <= threshold`.
    pub fn check_at_most(&mut self, name: &str, value: f64, sample_size: usize, threshold: f64) {
        self.check(name, value, sample_size, threshold, value <= threshold);
    }

    /// Passes when `value >= threshold`.
    pub fn check_at_least(&mut self, name: &str, value: f64, sample_size: usize, threshold: f64) {
        self.check(name, value, sample_size, threshold, value >= threshold);
    }

    pub fn get(&self, name: &str) -> Option<&Statistic> {
        self.statistics.iter().find(|s| s.name == name)
    }

    fn finish(mut self, start: Instant) -> Self {
        self.wall_clock_secs = start.elapsed().as_secs_f64();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-replica values as CSV, one row per replica.
    pub fn replicas_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.replicas {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// One line per checked statistic.
    pub fn summary(&self) -> String {
        let mut out = format!("{}: {}\n", self.id, if self.verdict { "PASS" } else { "FAIL" });
        for s in &self.statistics {
            let verdict = match s.pass {
                Some(true) => " ok",
                Some(false) => " FAILED",
                None => "",
            };
            let bound = s.threshold.map(|t| format!(" (threshold {t:.6})")).unwrap_or_default();
            out.push_str(&format!(
                "  {} = {:.6} [n = {}]{bound}{verdict}\n",
                s.name, s.value, s.sample_size
            ));
        }
        out
    }
}

/// Worker count from `FROZEN_ER_THREADS`, if set to a positive integer.
pub fn thread_limit() -> Option<usize> {
    std::env::var("FROZEN_ER_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `count` replicas in parallel, replica `i` drawing from stream
/// `(seed, tag, i)`. Output order follows replica index.
pub fn run_replicas<T, F>(seed: u64, tag: u32, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> Result<T> + Sync + Send,
{
    let work = || {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, tag, i as u64);
                f(i, &mut rng)
            })
            .collect::<Result<Vec<T>>>()
    };
    match thread_limit() {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Every experiment known to the CLI, with its default configuration.
pub const EXPERIMENTS: &[&str] = &[
    "trajectory",
    "gelation",
    "tree-count-poisson",
    "largest-tree",
    "typical-tree",
    "pnk-formula",
    "factorial-moment",
    "expectation-bound",
    "gel-tail",
    "de-poissonization",
    "poisson-concentration",
    "kernel",
    "sampler-uniformity",
];

/// Runs the named experiment with a configuration given as JSON (missing
/// keys take their defaults).
pub fn run_named(name: &str, config: serde_json::Value, seed: u64) -> Result<ExperimentReport> {
    fn parse<C: for<'de> Deserialize<'de>>(v: serde_json::Value) -> Result<C> {
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }
    match name {
        "trajectory" => trajectory_experiment(&parse(config)?, seed),
        "gelation" => gelation_experiment(&parse(config)?, seed),
        "tree-count-poisson" => tree_count_poisson_experiment(&parse(config)?, seed),
        "largest-tree" => largest_tree_experiment(&parse(config)?, seed),
        "typical-tree" => typical_tree_experiment(&parse(config)?, seed),
        "pnk-formula" => pnk_formula_experiment(&parse(config)?, seed),
        "factorial-moment" => factorial_moment_experiment(&parse(config)?, seed),
        "expectation-bound" => expectation_bound_experiment(&parse(config)?, seed),
        "gel-tail" => gel_tail_experiment(&parse(config)?, seed),
        "de-poissonization" => discrete_vs_poissonized_experiment(&parse(config)?, seed),
        "poisson-concentration" => poisson_concentration_check(&parse(config)?),
        "kernel" => kernel_experiment(&parse(config)?, seed),
        "sampler-uniformity" => sampler_uniformity_experiment(&parse(config)?, seed),
        other => Err(Error::Config(format!(
            "unknown experiment `{other}`; known: {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}
