use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{replication_rng, SimConfig};
use crate::error::{BrwError, Result};
use crate::model::{JumpDistribution, Mode, ModelSpec, OffspringDistribution};

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Generation `generation` was empty.
    Extinct { generation: u32 },
    /// Still alive at the generation cap.
    GenerationCap,
    /// A generation exceeded the population cap.
    PopulationCap,
}

impl Termination {
    pub fn is_censored(self) -> bool {
        !matches!(self, Termination::Extinct { .. })
    }
}

/// One realisation of the branching random walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrwOutcome {
    /// Largest position of any particle seen.
    pub max: i64,
    pub termination: Termination,
    /// `M_n` for every simulated generation `n`, starting with `M_0 = 0`.
    pub trajectory: Vec<i64>,
    /// Particles ever alive, the initial one included.
    pub total_progeny: u64,
    /// Generation sizes `Z_n`.
    pub population: Vec<u64>,
}

/// Inverse-CDF sampler over a short support.
#[derive(Debug, Clone)]
pub(crate) struct Sampler {
    cdf: Vec<f64>,
    values: Vec<i64>,
}

impl Sampler {
    fn new(pairs: impl Iterator<Item = (i64, f64)>) -> Self {
        let (values, probs): (Vec<i64>, Vec<f64>) = pairs.filter(|&(_, p)| p > 0.0).unzip();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        // Guard against a total a few ulps below one.
        *cdf.last_mut().unwrap() = f64::INFINITY;
        Self { cdf, values }
    }

    pub(crate) fn jump(jump: &JumpDistribution) -> Self {
        Self::new(jump.entries().iter().copied())
    }

    pub(crate) fn offspring(off: &OffspringDistribution) -> Self {
        Self::new(off.probs().iter().enumerate().map(|(k, &p)| (k as i64, p)))
    }

    #[inline]
    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        let i = self.cdf.iter().position(|&c| u < c).unwrap_or(self.cdf.len() - 1);
        self.values[i]
    }
}

/// Summary of a run without the per-generation vectors.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RunSummary {
    pub max: i64,
    pub termination: Termination,
    pub total_progeny: u64,
}

/// Reusable simulation state for one worker.
pub(crate) struct Engine {
    jump: Sampler,
    offspring: Sampler,
    population_cap: usize,
    current: Vec<i64>,
    next: Vec<i64>,
}

impl Engine {
    pub(crate) fn new(model: &ModelSpec, cfg: &SimConfig) -> Self {
        Self {
            jump: Sampler::jump(&model.jump),
            offspring: Sampler::offspring(&model.offspring),
            population_cap: cfg.population_cap,
            current: Vec::new(),
            next: Vec::new(),
        }
    }

    /// Runs until extinction, `generations` generations, or the population cap.
    /// Pushes `M_n` onto `trajectory` and `Z_n` onto `population` when given.
    pub(crate) fn run<R: Rng>(
        &mut self,
        rng: &mut R,
        generations: u32,
        mut trajectory: Option<&mut Vec<i64>>,
        mut population: Option<&mut Vec<u64>>,
    ) -> RunSummary {
        self.current.clear();
        self.current.push(0);
        let mut max = 0i64;
        let mut total = 1u64;
        if let Some(t) = trajectory.as_deref_mut() {
            t.push(0);
        }
        if let Some(p) = population.as_deref_mut() {
            p.push(1);
        }
        let mut generation = 0u32;
        loop {
            if generation >= generations {
                return RunSummary {
                    max,
                    termination: Termination::GenerationCap,
                    total_progeny: total,
                };
            }
            self.next.clear();
            // jump first, then reproduce at the new site
            for &x in &self.current {
                let y = x + self.jump.sample(rng);
                let children = self.offspring.sample(rng);
                for _ in 0..children {
                    self.next.push(y);
                }
                if children > 0 && y > max {
                    max = y;
                }
            }
            generation += 1;
            total += self.next.len() as u64;
            if let Some(t) = trajectory.as_deref_mut() {
                t.push(max);
            }
            if let Some(p) = population.as_deref_mut() {
                p.push(self.next.len() as u64);
            }
            if self.next.is_empty() {
                return RunSummary {
                    max,
                    termination: Termination::Extinct { generation },
                    total_progeny: total,
                };
            }
            if self.next.len() > self.population_cap {
                return RunSummary {
                    max,
                    termination: Termination::PopulationCap,
                    total_progeny: total,
                };
            }
            std::mem::swap(&mut self.current, &mut self.next);
        }
    }

    pub(crate) fn outcome<R: Rng>(&mut self, rng: &mut R, generations: u32) -> BrwOutcome {
        let mut trajectory = Vec::new();
        let mut population = Vec::new();
        let s = self.run(rng, generations, Some(&mut trajectory), Some(&mut population));
        BrwOutcome {
            max: s.max,
            termination: s.termination,
            trajectory,
            total_progeny: s.total_progeny,
            population,
        }
    }
}

/// Simulates one subcritical run with the given random stream.
pub fn simulate_one<R: Rng>(model: &ModelSpec, rng: &mut R, cfg: &SimConfig) -> Result<BrwOutcome> {
    if model.mode != Mode::Subcritical {
        return Err(BrwError::Mode(
            "supercritical models are simulated through the extinction-conditioned runner".into(),
        ));
    }
    cfg.validate()?;
    Ok(Engine::new(model, cfg).outcome(rng, cfg.max_generations))
}

/// Simulates replication `index` of `cfg`.
pub fn simulate_replication(model: &ModelSpec, cfg: &SimConfig, index: u64) -> Result<BrwOutcome> {
    simulate_one(model, &mut replication_rng(cfg.master_seed, index), cfg)
}
