//! The acceptance suite A1-A13, run against the built-in models.

use std::fmt;
use std::time::Instant;

use brw_core::analysis::{self, ClaimLine, PhaseClass, Route, Status};
use brw_core::builtin::{builtin, subcritical};
use brw_core::exact::{self, Fault, TailSolver, TailTable};
use brw_core::simulate::{self, SimConfig};
use brw_core::{JumpDistribution, ModelSpec, Result};

/// `(id, title)` of every criterion, in run order.
pub const CRITERIA: &[(&str, &str)] = &[
    ("A1", "geometric tail of the single-lineage model"),
    ("A2", "bounded ell and its limit for an R=2 walk"),
    ("A3", "period-2 oscillation of ell"),
    ("A4", "first-passage decay rate"),
    ("A5", "overshoot weights sum to one"),
    ("A6", "exact tail against Monte Carlo"),
    ("A7", "martingale means"),
    ("A8", "first-passage local small deviations"),
    ("A9", "phase scan of g(c, n)"),
    ("A10", "conditional ratio for a > log 2 / log 1.25"),
    ("A11", "duality for a supercritical model"),
    ("A12", "supermultiplicativity of E(gamma^tau_n)"),
    ("A13", "Chernoff bound dominates the tail"),
];

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    pub workers: usize,
    /// Restrict to these criterion ids.
    pub only: Option<Vec<String>>,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: crate::DEFAULT_SEED,
            workers: 1,
            only: None,
            fault: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {}  {} ({:.2} s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.detail
        )
    }
}

struct Ctx<'a> {
    opts: &'a VerifyOptions,
}

type Outcome = Result<(bool, String)>;

impl Ctx<'_> {
    fn solve(&self, model: &ModelSpec, horizon: usize) -> Result<TailTable> {
        let mut s = TailSolver::new(horizon, 1e-12);
        s.fault = self.opts.fault;
        s.solve(model)
    }

    /// Configuration for the `index`-th model of a criterion; models get
    /// separate seeds so that their estimates are independent.
    fn sim(&self, reps: u64, index: u64) -> SimConfig {
        SimConfig::new(reps, self.opts.seed.wrapping_add(index)).with_workers(self.opts.workers)
    }
}

/// Runs the selected criteria in order, handing each result to `sink` as it completes.
pub fn run(opts: &VerifyOptions, mut sink: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    let ctx = Ctx { opts };
    let checks: [fn(&Ctx) -> Outcome; 13] = [a1, a2, a3, a4, a5, a6, a7, a8, a9, a10, a11, a12, a13];
    let mut out = Vec::new();
    for (&(id, title), check) in CRITERIA.iter().zip(checks) {
        if let Some(only) = &opts.only {
            if !only.iter().any(|o| o == id) {
                continue;
            }
        }
        let start = Instant::now();
        let (passed, detail) = match check(&ctx) {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        let r = CriterionResult {
            id,
            title,
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        };
        sink(&r);
        out.push(r);
    }
    out
}

/// Maps criterion results onto the theorem-level summary lines.
pub fn theorem_summary(results: &[CriterionResult]) -> Vec<ClaimLine> {
    let groups: [(&str, &[&str]); 6] = [
        ("T1a", &["A1", "A2", "A13"]),
        ("T1b", &["A2", "A3"]),
        ("T1c", &["A4", "A5", "A12"]),
        ("T2a", &["A8", "A9", "A10"]),
        ("T2c", &["A9"]),
        ("P1.6", &["A11"]),
    ];
    groups
        .iter()
        .map(|&(tag, ids)| {
            let ran: Vec<&CriterionResult> = results.iter().filter(|r| ids.contains(&r.id)).collect();
            let failed: Vec<&str> = ran.iter().filter(|r| !r.passed).map(|r| r.id).collect();
            let (status, detail) = if ran.is_empty() {
                (Status::Skipped, format!("needs {}", ids.join(", ")))
            } else if failed.is_empty() {
                (Status::Pass, ran.iter().map(|r| r.id).collect::<Vec<_>>().join(", "))
            } else {
                (Status::Fail, format!("failed {}", failed.join(", ")))
            };
            ClaimLine {
                tag: tag.to_string(),
                status,
                detail,
            }
        })
        .collect()
}

fn a1(ctx: &Ctx) -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for m in [0.5, 0.8, 0.9] {
        let model = ModelSpec::special_binary(m)?;
        let tail = ctx.solve(&model, 1200)?;
        let rho = (1.0 + (1.0 - m * m).sqrt()) / m;
        for n in 0..=40 {
            worst = worst.max((tail.u(n) - rho.powi(-(n as i32))).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-10 && secs < 1.0,
        format!("max |u(n) - rho^-n| over n <= 40 = {worst:.2e}; three solves in {secs:.3} s"),
    ))
}

fn a2(ctx: &Ctx) -> Outcome {
    let start = Instant::now();
    let model = builtin("range2")?;
    let tail = ctx.solve(&model, 2000)?;
    let ell = exact::ell_table(&tail, tail.rho)?;
    let secs = start.elapsed().as_secs_f64();
    let max = ell.iter().copied().fold(f64::MIN, f64::max);
    let min_half = ell[ell.len() / 2..].iter().copied().fold(f64::MAX, f64::min);
    let step = (ell[ell.len() - 1] - ell[ell.len() - 2]).abs();
    let ok = max <= 1.0 + 1e-9 && min_half > 0.01 && step < 1e-6 && secs < 10.0;
    Ok((
        ok,
        format!(
            "max ell {max:.12}, min over last half {min_half:.6}, last step {step:.2e}, kappa ~ {:.8}, {secs:.2} s",
            ell[ell.len() - 1]
        ),
    ))
}

fn a3(ctx: &Ctx) -> Outcome {
    let model = builtin("period2")?;
    let tail = ctx.solve(&model, 2000)?;
    let ell = exact::ell_table(&tail, tail.rho)?;
    let worst = (1..)
        .map(|n| 2 * n)
        .take_while(|&k| k < ell.len())
        .map(|k| (ell[k] / ell[k - 1] - tail.rho).abs())
        .fold(0.0, f64::max);
    let k = analysis::kappa_estimate(&ell, model.jump.right_range() as usize);
    Ok((
        worst <= 1e-8 && k.oscillation,
        format!(
            "max |ell(2n)/ell(2n-1) - rho| = {worst:.2e}, oscillation flag {}, spread {:.4}",
            k.oscillation, k.half_width
        ),
    ))
}

fn passage_gaps(jump: &JumpDistribution, m: f64) -> Result<Vec<f64>> {
    // ell_bar(n) = rho^n E(m^tau_n), so the gap is |log ell_bar(n)| / n
    let bar = exact::ell_bar_table(jump, m, 200, 1e-12)?;
    Ok((1..=200).map(|n| bar[n].ln().abs() / n as f64).collect())
}

fn a4(_: &Ctx) -> Outcome {
    let nn = passage_gaps(&JumpDistribution::nearest_neighbor(), 0.8)?;
    let nn_max = nn.iter().copied().fold(0.0, f64::max);
    let r2 = builtin("range2")?;
    let gaps = passage_gaps(&r2.jump, r2.mean_offspring())?;
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let last = gaps[199];
    Ok((
        nn_max <= 1e-9 && decreasing && last < 0.02,
        format!("nearest-neighbour max gap {nn_max:.2e}; R=2 gap decreasing {decreasing}, {last:.3e} at n = 200"),
    ))
}

fn a5(_: &Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, model) in subcritical() {
        let law = exact::overshoot_pgf(&model.jump, model.mean_offspring(), 1e-12)?;
        let d = (law.weight_sum - 1.0).abs();
        worst = worst.max(d);
        parts.push(format!("{name} {d:.1e}"));
    }
    Ok((worst <= 1e-8, format!("|sum w_k - 1|: {}", parts.join(", "))))
}

fn a6(ctx: &Ctx) -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut parts = Vec::new();
    for (i, name) in ["special-0.8", "range2", "period2"].into_iter().enumerate() {
        let cfg = ctx.sim(10_000_000, i as u64);
        let model = builtin(name)?;
        let tail = ctx.solve(&model, 2000)?;
        let levels: Vec<i64> = (1..=tail.report_limit as i64).take_while(|&n| tail.u(n) >= 1e-5).collect();
        let est = simulate::estimate_tail_M(&model, &levels, &cfg)?;
        let rep = analysis::reconcile(&tail, &levels, &est)?;
        let zmax = rep.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
        parts.push(format!("{name}: {} levels, max |z| {zmax:.2}", rep.rows.len()));
        rows.extend(rep.rows);
    }
    let secs = start.elapsed().as_secs_f64();
    let n = rows.len() as f64;
    let within2 = rows.iter().filter(|r| r.z.abs() <= 2.0).count() as f64 / n;
    let within4 = rows.iter().filter(|r| r.z.abs() <= 4.0).count() as f64 / n;
    Ok((
        within2 >= 0.95 && within4 == 1.0 && secs < 300.0,
        format!(
            "{}; |z|<=2 {:.1}%, |z|<=4 {:.1}% over {} levels, {secs:.1} s on {} worker(s)",
            parts.join("; "),
            100.0 * within2,
            100.0 * within4,
            rows.len(),
            ctx.opts.workers
        ),
    ))
}

fn a7(ctx: &Ctx) -> Outcome {
    let horizons = [5, 10, 20, 40];
    let mut worst: f64 = 0.0;
    let mut clamped = 0;
    for (i, name) in ["special-0.8", "range2"].into_iter().enumerate() {
        let cfg = ctx.sim(1_000_000, i as u64);
        let model = builtin(name)?;
        let tail = ctx.solve(&model, 2000)?;
        for x in [2, 5, 8] {
            let rep = simulate::martingale_means(&model, &tail, x, &horizons, &cfg)?;
            clamped += rep.clamped;
            for e in &rep.estimates {
                worst = worst.max(e.z_score(tail.u(x)).abs());
            }
        }
    }
    Ok((
        worst <= 4.0,
        format!("max |z| = {worst:.2} over 24 points ({clamped} walks left the table)"),
    ))
}

fn a8(_: &Ctx) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [1.5, 2.0, 3.0] {
        let log_lambda = exact::lambda_of_a(a)?.ln();
        let err = |n: u64| (exact::nn_tau_window_log_prob(n, a, 2.0) / n as f64 + log_lambda).abs();
        let (e1, e4) = (err(1000), err(4000));
        ok &= e4 <= 0.05 && e4 < e1;
        parts.push(format!("a={a}: {e1:.4} -> {e4:.4}"));
    }
    let l3 = exact::lambda_of_a(3.0)?;
    let d = (l3 - 32.0 / 27.0).abs();
    Ok((
        ok && d <= 1e-12,
        format!("errors n=1000 -> 4000: {}; |lambda(3) - 32/27| = {d:.1e}", parts.join(", ")),
    ))
}

fn a9(_: &Ctx) -> Outcome {
    let model = builtin("special-0.8")?;
    let scan = analysis::phase_scan(&model, &[0.3, 0.45, 0.6, 0.75, 0.9], &[20, 40, 60], &Route::ExactSpecial)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &c) in scan.c_grid.iter().enumerate() {
        let row = &scan.g[i];
        let class = scan.classes[i];
        if c < 0.5 {
            ok &= class == PhaseClass::Plateau && row.iter().all(|&g| (0.8..=1.05).contains(&g));
        } else if c > 0.7 {
            ok &= class == PhaseClass::Decay && row[row.len() - 1] < 0.05;
        }
        parts.push(format!("c={c}: {class} (g(60) = {:.4})", row[row.len() - 1]));
    }
    Ok((ok, parts.join(", ")))
}

fn a10(_: &Ctx) -> Outcome {
    let m: f64 = 0.8;
    let rho = ModelSpec::special_binary(m)?.decay_constant()?;
    let a = 4u64;
    let ratios: Vec<f64> = [5u64, 10, 15]
        .iter()
        .map(|&n| {
            let s: f64 = (n..=a * n).map(|j| m.powi(j as i32) * exact::nn_tau_pmf(n, j)).sum();
            s * rho.powi(n as i32)
        })
        .collect();
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    Ok((
        ratios[2] >= 0.95 && increasing,
        format!("ratio at n = 5, 10, 15: {:.6}, {:.6}, {:.6}", ratios[0], ratios[1], ratios[2]),
    ))
}

fn a11(ctx: &Ctx) -> Outcome {
    let model = builtin("supercritical")?;
    let q = model.offspring.extinction_probability();
    let dual = model.dual()?;
    let rho_bar = dual.decay_constant()?;
    let dq = (q - 1.0 / 3.0).abs();
    let dr = (rho_bar - (2.0 + 3f64.sqrt())).abs();
    let mut cfg = ctx.sim(3_100_000, 0);
    cfg.population_cap = 64;
    let levels: Vec<i64> = (1..=8).collect();
    let rep = analysis::duality_report(&model, &cfg, &levels, 1000, 1e-12)?;
    let accepted = rep.acceptance.as_ref().map_or(0, |e| e.successes);
    let zmax = rep
        .rows
        .iter()
        .map(|r| r.z_conditioned.abs().max(r.z_shifted.abs()))
        .fold(0.0, f64::max);
    let ok = dq <= 1e-12 && dr <= 1e-12 && accepted >= 1_000_000 && rep.rows_within(4.0) && rep.ell_bar_in_range;
    Ok((
        ok,
        format!(
            "|q - 1/3| = {dq:.1e}, |rho_bar - (2+sqrt 3)| = {dr:.1e}, {accepted} accepted, max |z| {zmax:.2}, ell_bar in (0, q]: {}",
            rep.ell_bar_in_range
        ),
    ))
}

fn a12(_: &Ctx) -> Outcome {
    let pairs: Vec<(usize, usize)> = (1..40).flat_map(|k| (1..=40 - k).map(move |l| (k, l))).collect();
    let r2 = builtin("range2")?;
    let rep = exact::supermultiplicativity_check(&r2.jump, 0.7, &pairs, 1e-10)?;
    let nn = exact::supermultiplicativity_check(&JumpDistribution::nearest_neighbor(), 0.7, &pairs, 1e-10)?;
    let nn_defect = nn.max_defect();
    let worst = rep.pairs.iter().map(|p| p.rhs - p.lhs).fold(f64::MIN, f64::max);
    Ok((
        rep.all_hold() && nn_defect <= 1e-10,
        format!(
            "{} pairs; R=2 max(rhs - lhs) = {worst:.2e}; nearest-neighbour max |lhs - rhs| = {nn_defect:.2e}",
            pairs.len()
        ),
    ))
}

fn a13(ctx: &Ctx) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, model) in subcritical() {
        let tail = ctx.solve(&model, 2000)?;
        let theta0 = 0.5 * (1.0 + tail.rho);
        let mut min_margin = f64::INFINITY;
        for n in 1..=tail.report_limit {
            let margin = exact::log_chernoff_bound(&model, theta0, n)? - tail.log_u(n);
            min_margin = min_margin.min(margin);
        }
        ok &= min_margin >= -1e-9;
        parts.push(format!("{name} {min_margin:.3}"));
    }
    Ok((ok, format!("min log(bound / u) on the window: {}", parts.join(", "))))
}
