use serde::{Deserialize, Serialize};

use super::engine::{Engine, Sampler, Termination};
use super::{replication_rng, run_blocks, BrwOutcome, Estimate, SimConfig};
use crate::error::{config, BrwError, Result};
use crate::exact::TailTable;
use crate::model::{JumpDistribution, Mode, ModelSpec};

/// Exclusion fraction above which a level is flagged.
const EXCLUSION_WARN: f64 = 1e-3;

fn require_subcritical(model: &ModelSpec) -> Result<()> {
    if model.mode != Mode::Subcritical {
        return Err(BrwError::Mode(format!("{} is not subcritical", model.label)));
    }
    Ok(())
}

fn add_counts(acc: &mut [u64], part: &[u64]) {
    for (a, b) in acc.iter_mut().zip(part) {
        *a += b;
    }
}

fn exclusion_flag(est: &mut Estimate, reps: u64) {
    if est.excluded as f64 > EXCLUSION_WARN * reps as f64 {
        est.flags.push(format!(
            "{} of {reps} runs censored below the level; raise the caps",
            est.excluded
        ));
    }
}

/// `P(M >= n)` for each level from one shared set of runs.
///
/// A censored run counts as a success if it already reached the level and is
/// otherwise left out of that level's denominator.
#[allow(non_snake_case)]
pub fn estimate_tail_M(model: &ModelSpec, levels: &[i64], cfg: &SimConfig) -> Result<Vec<Estimate>> {
    require_subcritical(model)?;
    cfg.validate()?;
    let k = levels.len();
    let parts = run_blocks(cfg.replications, cfg.workers, |range| {
        let mut engine = Engine::new(model, cfg);
        let mut hits = vec![0u64; k];
        let mut excluded = vec![0u64; k];
        for i in range {
            let mut rng = replication_rng(cfg.master_seed, i);
            let run = engine.run(&mut rng, cfg.max_generations, None, None);
            for (j, &n) in levels.iter().enumerate() {
                if run.max >= n {
                    hits[j] += 1;
                } else if run.termination.is_censored() {
                    excluded[j] += 1;
                }
            }
        }
        (hits, excluded)
    })?;
    let mut hits = vec![0u64; k];
    let mut excluded = vec![0u64; k];
    for (h, e) in &parts {
        add_counts(&mut hits, h);
        add_counts(&mut excluded, e);
    }
    Ok((0..k)
        .map(|j| {
            let mut est = Estimate::proportion(hits[j], cfg.replications - excluded[j], excluded[j]);
            exclusion_flag(&mut est, cfg.replications);
            est
        })
        .collect())
}

/// Estimate of `g(c, n) = rho^{cn} P(M_n >= ceil(cn))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GEstimate {
    pub c: f64,
    pub n: u32,
    /// `ceil(cn)`
    pub level: i64,
    pub estimate: Estimate,
    /// Scaled standard error exceeds the scaled point.
    pub noise_dominated: bool,
}

/// `ceil(c n)`, ignoring rounding noise in the product.
pub fn level_for(c: f64, n: u32) -> i64 {
    (c * n as f64 - 1e-9).ceil() as i64
}

/// `g(c, n)` on a grid from one shared set of runs of length `max(n_grid)`.
pub fn estimate_g_grid(model: &ModelSpec, c_grid: &[f64], n_grid: &[u32], cfg: &SimConfig) -> Result<Vec<Vec<GEstimate>>> {
    require_subcritical(model)?;
    cfg.validate()?;
    if c_grid.iter().any(|&c| !(c > 0.0)) {
        return config("every c must be positive");
    }
    let rho = model.decay_constant()?;
    let horizon = n_grid.iter().copied().max().unwrap_or(0);
    let cells: Vec<(usize, i64)> = c_grid
        .iter()
        .flat_map(|&c| n_grid.iter().map(move |&n| (n as usize, level_for(c, n))))
        .collect();
    let parts = run_blocks(cfg.replications, cfg.workers, |range| {
        let mut engine = Engine::new(model, cfg);
        let mut traj = Vec::with_capacity(horizon as usize + 1);
        let mut hits = vec![0u64; cells.len()];
        let mut excluded = vec![0u64; cells.len()];
        for i in range {
            let mut rng = replication_rng(cfg.master_seed, i);
            traj.clear();
            let run = engine.run(&mut rng, horizon, Some(&mut traj), None);
            let last = traj.len() - 1;
            for (j, &(n, level)) in cells.iter().enumerate() {
                let mn = traj[n.min(last)];
                if mn >= level {
                    hits[j] += 1;
                } else if n > last && run.termination == Termination::PopulationCap {
                    excluded[j] += 1;
                }
            }
        }
        (hits, excluded)
    })?;
    let mut hits = vec![0u64; cells.len()];
    let mut excluded = vec![0u64; cells.len()];
    for (h, e) in &parts {
        add_counts(&mut hits, h);
        add_counts(&mut excluded, e);
    }
    let mut out = Vec::with_capacity(c_grid.len());
    let mut j = 0;
    for &c in c_grid {
        let mut row = Vec::with_capacity(n_grid.len());
        for &n in n_grid {
            let level = level_for(c, n);
            let factor = (c * n as f64 * rho.ln()).exp();
            let mut est = if level <= 0 {
                Estimate::exact(1.0, cfg.replications)
            } else {
                Estimate::proportion(hits[j], cfg.replications - excluded[j], excluded[j])
            };
            exclusion_flag(&mut est, cfg.replications);
            let est = est.scaled(factor);
            let noise_dominated = est.stderr > est.point || (level > 0 && est.successes == 0);
            row.push(GEstimate {
                c,
                n,
                level,
                estimate: est,
                noise_dominated,
            });
            j += 1;
        }
        out.push(row);
    }
    Ok(out)
}

/// `g(c, n) = rho^{cn} P(M_n >= ceil(cn))`.
pub fn estimate_g(model: &ModelSpec, c: f64, n: u32, cfg: &SimConfig) -> Result<GEstimate> {
    let mut grid = estimate_g_grid(model, &[c], &[n], cfg)?;
    Ok(grid.remove(0).remove(0))
}

/// `P(M_{floor(a n)} >= n | M >= n)` per level.
pub fn estimate_conditional(model: &ModelSpec, a: f64, levels: &[i64], cfg: &SimConfig) -> Result<Vec<Estimate>> {
    require_subcritical(model)?;
    cfg.validate()?;
    if !(a > 0.0) {
        return config(format!("a must be positive, got {a}"));
    }
    let k = levels.len();
    let deadlines: Vec<usize> = levels.iter().map(|&n| (a * n as f64 + 1e-9).floor() as usize).collect();
    let parts = run_blocks(cfg.replications, cfg.workers, |range| {
        let mut engine = Engine::new(model, cfg);
        let mut traj = Vec::new();
        let mut num = vec![0u64; k];
        let mut den = vec![0u64; k];
        for i in range {
            let mut rng = replication_rng(cfg.master_seed, i);
            traj.clear();
            let run = engine.run(&mut rng, cfg.max_generations, Some(&mut traj), None);
            for (j, &n) in levels.iter().enumerate() {
                if run.max >= n {
                    den[j] += 1;
                    // trajectory is nondecreasing: first generation at or above n
                    let hit = traj.partition_point(|&v| v < n);
                    if hit <= deadlines[j] {
                        num[j] += 1;
                    }
                }
            }
        }
        (num, den)
    })?;
    let mut num = vec![0u64; k];
    let mut den = vec![0u64; k];
    for (a_, b_) in &parts {
        add_counts(&mut num, a_);
        add_counts(&mut den, b_);
    }
    Ok((0..k)
        .map(|j| {
            let mut est = Estimate::proportion(num[j], den[j], 0);
            if den[j] < 100 {
                est.flags.push(format!("low power: only {} runs reached level {}", den[j], levels[j]));
            }
            est
        })
        .collect())
}

/// Lazily generated runs that went extinct within the caps.
pub struct ConditionedRuns<'a> {
    model: &'a ModelSpec,
    cfg: SimConfig,
    engine: Engine,
    next_index: u64,
    /// Attempts made so far.
    pub attempts: u64,
    /// Runs accepted so far.
    pub accepted: u64,
}

impl Iterator for ConditionedRuns<'_> {
    type Item = BrwOutcome;

    fn next(&mut self) -> Option<BrwOutcome> {
        let _ = self.model;
        while self.next_index < self.cfg.replications {
            let mut rng = replication_rng(self.cfg.master_seed, self.next_index);
            self.next_index += 1;
            self.attempts += 1;
            let out = self.engine.outcome(&mut rng, self.cfg.max_generations);
            if !out.termination.is_censored() {
                self.accepted += 1;
                return Some(out);
            }
        }
        None
    }
}

/// Rejection sampler for runs conditioned on extinction; `cfg.replications`
/// bounds the number of attempts.
pub fn simulate_conditioned_on_extinction<'a>(model: &'a ModelSpec, cfg: &SimConfig) -> Result<ConditionedRuns<'a>> {
    cfg.validate()?;
    Ok(ConditionedRuns {
        model,
        cfg: cfg.clone(),
        engine: Engine::new(model, cfg),
        next_index: 0,
        attempts: 0,
        accepted: 0,
    })
}

/// Tails of `M` with and without conditioning on extinction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionedTails {
    pub levels: Vec<i64>,
    pub attempts: u64,
    pub accepted: u64,
    /// Fraction of attempts that died out within the caps.
    pub acceptance: Estimate,
    pub extinction_probability: f64,
    /// `max(q - acceptance, 0)`: extinction after the caps that rejection missed.
    pub bias_bound: f64,
    /// `P(M >= n | extinct)` among accepted runs.
    pub conditioned: Vec<Estimate>,
    /// `P(M >= n)` over all attempts; runs still alive at a cap count as
    /// reaching every level (a surviving run's maximum is infinite).
    pub unconditional: Vec<Estimate>,
    pub flags: Vec<String>,
}

/// Runs `cfg.replications` attempts and tabulates both tails.
pub fn conditioned_tails(model: &ModelSpec, levels: &[i64], cfg: &SimConfig) -> Result<ConditionedTails> {
    cfg.validate()?;
    let k = levels.len();
    let parts = run_blocks(cfg.replications, cfg.workers, |range| {
        let mut engine = Engine::new(model, cfg);
        let mut accepted = 0u64;
        let mut cond = vec![0u64; k];
        let mut uncond = vec![0u64; k];
        for i in range {
            let mut rng = replication_rng(cfg.master_seed, i);
            let run = engine.run(&mut rng, cfg.max_generations, None, None);
            let extinct = !run.termination.is_censored();
            accepted += extinct as u64;
            for (j, &n) in levels.iter().enumerate() {
                let reached = run.max >= n;
                if extinct && reached {
                    cond[j] += 1;
                }
                if !extinct || reached {
                    uncond[j] += 1;
                }
            }
        }
        (accepted, cond, uncond)
    })?;
    let mut accepted = 0;
    let mut cond = vec![0u64; k];
    let mut uncond = vec![0u64; k];
    for (a, c, u) in &parts {
        accepted += a;
        add_counts(&mut cond, c);
        add_counts(&mut uncond, u);
    }
    let attempts = cfg.replications;
    let acceptance = Estimate::proportion(accepted, attempts, 0);
    let q = model.offspring.extinction_probability();
    let mut flags = Vec::new();
    if (acceptance.point - q).abs() > 5.0 * acceptance.stderr.max(1e-300) && model.mode == Mode::Supercritical {
        flags.push(format!(
            "acceptance rate {} differs from q = {q} by more than 5 standard errors; raise the caps",
            acceptance.point
        ));
    }
    Ok(ConditionedTails {
        levels: levels.to_vec(),
        attempts,
        accepted,
        bias_bound: (q - acceptance.point).max(0.0),
        extinction_probability: q,
        acceptance,
        conditioned: cond.iter().map(|&c| Estimate::proportion(c, accepted, 0)).collect(),
        unconditional: uncond.iter().map(|&u| Estimate::proportion(u, attempts, 0)).collect(),
        flags,
    })
}

/// Means of the martingale `Y` at several horizons from shared walks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub start: i64,
    pub horizons: Vec<usize>,
    pub estimates: Vec<Estimate>,
    /// Walks that went beyond the certified window of the table.
    pub clamped: u64,
    pub flags: Vec<String>,
}

/// Simulates the reflected walk from `x` and averages
/// `Y_T = prod_{j<=T} Q(u(w_j))/u(w_j) * u(w_T)` before absorption at `w <= 0`,
/// and `m^{i-1} (1-p_0) prod_{j<i} Q(u(w_j))/u(w_j)` after absorption at step `i`.
/// Both have mean `u(x)`.
pub fn martingale_means(
    model: &ModelSpec,
    tail: &TailTable,
    x: i64,
    horizons: &[usize],
    cfg: &SimConfig,
) -> Result<MartingaleReport> {
    require_subcritical(model)?;
    cfg.validate()?;
    let rho = model.decay_constant()?;
    if (rho - tail.rho).abs() > 1e-9 * rho {
        return config("tail table was solved for a different model");
    }
    if x < 1 || x > tail.report_limit as i64 {
        return config(format!("start {x} must lie in [1, {}]", tail.report_limit));
    }
    let k = horizons.len();
    let top = horizons.iter().copied().max().unwrap_or(0);
    let survive = 1.0 - model.offspring.p0();
    let limit = tail.report_limit as i64;
    let reflected = Sampler::jump(&model.jump);
    let off = &model.offspring;
    let parts = run_blocks(cfg.replications, cfg.workers, |range| {
        let mut sum = vec![0.0; k];
        let mut sum_sq = vec![0.0; k];
        let mut clamped = 0u64;
        let mut ys = vec![0.0; top + 1];
        for i in range {
            let mut rng = replication_rng(cfg.master_seed, i);
            let mut w = x;
            let mut weight = 1.0; // prod of Q(u)/u over visited positive sites
            let mut absorbed: Option<f64> = None;
            let mut outside = false;
            ys[0] = tail.u(x);
            for t in 1..=top {
                if let Some(y) = absorbed {
                    ys[t] = y;
                    continue;
                }
                w -= reflected.sample(&mut rng);
                if w <= 0 {
                    // weight carries the factors m (1 - H(u)) = Q(u)/u
                    let y = weight * survive;
                    absorbed = Some(y);
                    ys[t] = y;
                    continue;
                }
                if w > limit {
                    outside = true;
                }
                let u = tail.u(w);
                weight *= off.q_ratio(u);
                ys[t] = weight * u;
            }
            clamped += outside as u64;
            for (j, &h) in horizons.iter().enumerate() {
                sum[j] += ys[h];
                sum_sq[j] += ys[h] * ys[h];
            }
        }
        (sum, sum_sq, clamped)
    })?;
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    let mut clamped = 0;
    for (s, q, c) in &parts {
        for j in 0..k {
            sum[j] += s[j];
            sum_sq[j] += q[j];
        }
        clamped += c;
    }
    let mut flags = Vec::new();
    if clamped as f64 > EXCLUSION_WARN * cfg.replications as f64 {
        flags.push(format!(
            "{clamped} walks left the certified window; solve a wider table"
        ));
    }
    let estimates = (0..k)
        .map(|j| {
            if horizons[j] == 0 {
                Estimate::exact(tail.u(x), cfg.replications)
            } else {
                Estimate::mean(sum[j], sum_sq[j], cfg.replications)
            }
        })
        .collect();
    Ok(MartingaleReport {
        start: x,
        horizons: horizons.to_vec(),
        estimates,
        clamped,
        flags,
    })
}

/// Mean of `Y` at a single horizon.
pub fn martingale_mean(model: &ModelSpec, tail: &TailTable, x: i64, horizon: usize, cfg: &SimConfig) -> Result<Estimate> {
    let mut rep = martingale_means(model, tail, x, &[horizon], cfg)?;
    let mut est = rep.estimates.remove(0);
    est.flags.append(&mut rep.flags);
    Ok(est)
}

/// `E(s^{tau_n})` by simulating the walk for at most `cfg.max_generations` steps.
///
/// Walks that have not reached `n` by the cap contribute 0; the resulting
/// bias is below `s^cap` and is added to the upper end of the interval.
pub fn estimate_tau_pgf(jump: &JumpDistribution, s: f64, n: i64, cfg: &SimConfig) -> Result<Estimate> {
    cfg.validate()?;
    if !(s > 0.0 && s <= 1.0) {
        return config(format!("s must lie in (0,1], got {s}"));
    }
    if n <= 0 {
        return Ok(Estimate::exact(1.0, cfg.replications));
    }
    let sampler = Sampler::jump(jump);
    let cap = cfg.max_generations;
    let parts = run_blocks(cfg.replications, cfg.workers, |range| {
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for i in range {
            let mut rng = replication_rng(cfg.master_seed, i);
            let mut w = 0i64;
            let mut v = 0.0;
            let mut disc = 1.0;
            for _ in 0..cap {
                w += sampler.sample(&mut rng);
                disc *= s;
                if w >= n {
                    v = disc;
                    break;
                }
            }
            sum += v;
            sum_sq += v * v;
        }
        (sum, sum_sq)
    })?;
    let (sum, sum_sq) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let mut est = Estimate::mean(sum, sum_sq, cfg.replications);
    let bias = s.powi(cap as i32);
    est.ci95_high += bias;
    if bias > est.stderr {
        est.flags.push(format!("truncation bias bound {bias:e} exceeds the standard error"));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_estimates_are_shared_and_monotone() {
        let model = ModelSpec::special_binary(0.8).unwrap();
        let cfg = SimConfig::new(20_000, 1);
        let est = estimate_tail_M(&model, &[0, 1, 2, 3, 4, 5], &cfg).unwrap();
        assert_eq!(est[0].point, 1.0);
        assert!(est.windows(2).all(|w| w[1].point <= w[0].point));
        for (n, e) in est.iter().enumerate() {
            assert!(e.z_score(0.5f64.powi(n as i32)).abs() < 4.0, "n={n}");
        }
    }

    #[test]
    fn results_do_not_depend_on_workers() {
        let model = ModelSpec::special_binary(0.8).unwrap();
        let cfg = SimConfig::new(5000, 9);
        let a = estimate_tail_M(&model, &[1, 3], &cfg).unwrap();
        let b = estimate_tail_M(&model, &[1, 3], &cfg.clone().with_workers(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn g_with_level_zero_is_exact() {
        let model = ModelSpec::special_binary(0.8).unwrap();
        let g = estimate_g(&model, 0.01, 10, &SimConfig::new(100, 1)).unwrap();
        assert_eq!(g.level, 1);
        let g = estimate_g(&model, 1e-12, 10, &SimConfig::new(100, 1)).unwrap();
        assert_eq!(g.level, 0);
        assert!((g.estimate.point - 2f64.powf(1e-11)).abs() < 1e-12);
        assert_eq!(g.estimate.stderr, 0.0);
    }

    #[test]
    fn conditional_at_large_a_is_one() {
        let model = ModelSpec::special_binary(0.8).unwrap();
        let mut cfg = SimConfig::new(20_000, 4);
        cfg.max_generations = 200;
        let est = estimate_conditional(&model, 100.0, &[2], &cfg).unwrap();
        assert_eq!(est[0].point, 1.0);
        let low = estimate_conditional(&model, 1.0, &[2], &cfg).unwrap();
        assert!(low[0].point <= 1.0 && low[0].replications_used == est[0].replications_used);
    }

    #[test]
    fn subcritical_runs_are_always_accepted() {
        let model = ModelSpec::special_binary(0.5).unwrap();
        let cfg = SimConfig::new(3000, 2);
        let rep = conditioned_tails(&model, &[1, 2], &cfg).unwrap();
        assert_eq!(rep.accepted, 3000);
        let runs: Vec<_> = simulate_conditioned_on_extinction(&model, &SimConfig::new(50, 2)).unwrap().collect();
        assert_eq!(runs.len(), 50);
    }

    #[test]
    fn tau_pgf_level_zero() {
        let nn = JumpDistribution::nearest_neighbor();
        let e = estimate_tau_pgf(&nn, 0.8, 0, &SimConfig::new(10, 1)).unwrap();
        assert_eq!(e.point, 1.0);
        let mut cfg = SimConfig::new(50_000, 3);
        cfg.max_generations = 200;
        let e = estimate_tau_pgf(&nn, 0.8, 1, &cfg).unwrap();
        assert!(e.z_score(0.5).abs() < 4.0);
    }
}
