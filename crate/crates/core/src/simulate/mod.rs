//! Monte Carlo estimators for the branching random walk.
//!
//! Replication `i` draws from ChaCha8 stream `i` keyed by the master seed.
//! Replications are processed in fixed blocks whose partial results are
//! merged in block order, so every estimate is a function of the model and
//! the configuration alone, whatever the number of worker threads.

mod engine;
mod estimators;

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, BrwError, Result};

pub use engine::{simulate_one, simulate_replication, BrwOutcome, Termination};
pub use estimators::{
    conditioned_tails, estimate_conditional, estimate_g, estimate_g_grid, estimate_tail_M, estimate_tau_pgf,
    martingale_mean, martingale_means, simulate_conditioned_on_extinction, ConditionedRuns, ConditionedTails,
    level_for, GEstimate, MartingaleReport,
};

/// Replications per block of work.
pub const BLOCK: u64 = 1024;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub replications: u64,
    /// Generation cap for branching runs; step cap for single walks.
    pub max_generations: u32,
    /// A run stops, censored, once a generation exceeds this many particles.
    pub population_cap: usize,
    pub master_seed: u64,
    pub workers: usize,
}

impl SimConfig {
    pub fn new(replications: u64, master_seed: u64) -> Self {
        Self {
            replications,
            max_generations: 10_000,
            population_cap: 1_000_000,
            master_seed,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.replications < 1 {
            problems.push("replications must be at least 1");
        }
        if self.max_generations < 1 {
            problems.push("max_generations must be at least 1");
        }
        if self.population_cap < 1 {
            problems.push("population_cap must be at least 1");
        }
        if self.workers < 1 {
            problems.push("workers must be at least 1");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            config(problems.join("; "))
        }
    }
}

/// The random stream of replication `index`.
pub fn replication_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Runs `f` on consecutive blocks of `0..reps` and returns the block results in order.
pub(crate) fn run_blocks<A, F>(reps: u64, workers: usize, f: F) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(Range<u64>) -> A + Sync,
{
    let blocks: Vec<Range<u64>> = (0..reps.div_ceil(BLOCK))
        .map(|b| b * BLOCK..((b + 1) * BLOCK).min(reps))
        .collect();
    if workers <= 1 {
        return Ok(blocks.into_iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| BrwError::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| blocks.into_par_iter().map(&f).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalMethod {
    Wilson,
    Normal,
}

/// A Monte Carlo estimate with its 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub stderr: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub replications_used: u64,
    /// Successes for proportions; zero for means.
    pub successes: u64,
    /// Replications left out of the denominator (censored runs).
    pub excluded: u64,
    pub method: IntervalMethod,
    pub flags: Vec<String>,
}

impl Estimate {
    /// A proportion with a Wilson score interval.
    pub fn proportion(successes: u64, n: u64, excluded: u64) -> Self {
        if n == 0 {
            return Self {
                point: f64::NAN,
                stderr: f64::NAN,
                ci95_low: 0.0,
                ci95_high: 1.0,
                replications_used: 0,
                successes: 0,
                excluded,
                method: IntervalMethod::Wilson,
                flags: vec!["no replications in the denominator".into()],
            };
        }
        let nf = n as f64;
        let p = successes as f64 / nf;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / nf;
        let center = (p + z2 / (2.0 * nf)) / denom;
        let half = Z95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
        Self {
            point: p,
            stderr: (p * (1.0 - p) / nf).sqrt(),
            ci95_low: if successes == 0 { 0.0 } else { (center - half).max(0.0) },
            ci95_high: if successes == n { 1.0 } else { (center + half).min(1.0) },
            replications_used: n,
            successes,
            excluded,
            method: IntervalMethod::Wilson,
            flags: Vec::new(),
        }
    }

    /// A sample mean with a normal interval.
    pub fn mean(sum: f64, sum_sq: f64, n: u64) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        let stderr = (var / nf).sqrt();
        Self {
            point: mean,
            stderr,
            ci95_low: mean - Z95 * stderr,
            ci95_high: mean + Z95 * stderr,
            replications_used: n,
            successes: 0,
            excluded: 0,
            method: IntervalMethod::Normal,
            flags: Vec::new(),
        }
    }

    /// A value known without sampling error.
    pub fn exact(value: f64, n: u64) -> Self {
        Self {
            point: value,
            stderr: 0.0,
            ci95_low: value,
            ci95_high: value,
            replications_used: n,
            successes: 0,
            excluded: 0,
            method: IntervalMethod::Normal,
            flags: Vec::new(),
        }
    }

    /// Multiplies point, error and interval by `factor > 0`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.point *= factor;
        self.stderr *= factor;
        self.ci95_low *= factor;
        self.ci95_high *= factor;
        self
    }

    /// `|point - value| / stderr`; 0 for an exact match with zero error.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = self.point - value;
        if self.stderr > 0.0 {
            d / self.stderr
        } else if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    }
}
