//! Post-processing: decay-rate fits, the limit of `ell`, phase scans,
//! exact-versus-simulation reconciliation and the duality report.

use std::fmt;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, BrwError, Result};
use crate::exact::{self, TailTable};
use crate::model::{Mode, ModelSpec};
use crate::simulate::{self, Estimate, SimConfig};

/// Slope tolerance on `log g` per unit `n` for the phase classification.
pub const PHASE_SLOPE_TOL: f64 = 0.005;

/// Least-squares fit of `log u(n)` against `n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr_slope: f64,
    pub window: (usize, usize),
    /// `log rho`
    pub target: f64,
    /// `|-slope - log rho|`
    pub gap: f64,
    pub max_residual: f64,
    /// Residuals alternate in sign with non-negligible size.
    pub oscillation: bool,
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let stderr = if x.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (slope, intercept, stderr)
}

/// Fits a line to `(level, log tail)` over the positions in `window`.
pub fn fit_decay_rate(levels: &[usize], log_tail: &[f64], window: RangeInclusive<usize>, log_rho: f64) -> Result<RateFit> {
    if levels.len() != log_tail.len() {
        return config("levels and values differ in length");
    }
    let idx: Vec<usize> = (0..levels.len()).filter(|&i| window.contains(&levels[i])).collect();
    if idx.len() < 8 {
        return config(format!("a rate fit needs at least 8 points, window has {}", idx.len()));
    }
    if idx.iter().any(|&i| !log_tail[i].is_finite()) {
        return domain("tail values in the fit window must be positive");
    }
    let x: Vec<f64> = idx.iter().map(|&i| levels[i] as f64).collect();
    let y: Vec<f64> = idx.iter().map(|&i| log_tail[i]).collect();
    let (slope, intercept, stderr_slope) = least_squares(&x, &y);
    let residuals: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - intercept - slope * a).collect();
    let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let flips = residuals.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    let oscillation = max_residual > 1e-8 && flips as f64 >= 0.9 * (residuals.len() - 1) as f64;
    Ok(RateFit {
        slope,
        intercept,
        stderr_slope,
        window: (levels[idx[0]], levels[*idx.last().unwrap()]),
        target: log_rho,
        gap: (-slope - log_rho).abs(),
        max_residual,
        oscillation,
    })
}

/// [`fit_decay_rate`] on a solved table; `window` must lie in `[1, N_rep]`.
pub fn fit_tail_decay(tail: &TailTable, window: RangeInclusive<usize>) -> Result<RateFit> {
    if *window.end() > tail.report_limit {
        return config(format!(
            "fit window ends at {} beyond the certified limit {}",
            window.end(),
            tail.report_limit
        ));
    }
    let levels: Vec<usize> = window.clone().collect();
    let logs: Vec<f64> = levels.iter().map(|&n| tail.log_u(n)).collect();
    fit_decay_rate(&levels, &logs, window, tail.rho.ln())
}

/// Estimate of `lim ell(n)` with an oscillation diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaEstimate {
    /// `ell` at the end of the window.
    pub kappa: f64,
    pub oscillation: bool,
    /// Spread of `ell` over the last `2R` points.
    pub half_width: f64,
    /// Change of the mean over the last `2R` points against the `2R` before, per step.
    pub drift: f64,
}

/// Reads off `kappa` from the tail of `ell` values.
///
/// Oscillation is flagged when the spread over the last `2R` points is more
/// than ten times the per-step drift of block means (and above 1e-9, so that
/// round-off on a converged sequence does not count).
pub fn kappa_estimate(ell: &[f64], right_range: usize) -> KappaEstimate {
    let w = (2 * right_range).max(2);
    let len = ell.len();
    let kappa = ell.last().copied().unwrap_or(f64::NAN);
    if len < 2 * w {
        return KappaEstimate {
            kappa,
            oscillation: false,
            half_width: f64::NAN,
            drift: f64::NAN,
        };
    }
    let last = &ell[len - w..];
    let prev = &ell[len - 2 * w..len - w];
    let max = last.iter().copied().fold(f64::MIN, f64::max);
    let min = last.iter().copied().fold(f64::MAX, f64::min);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let half_width = max - min;
    let drift = (mean(last) - mean(prev)).abs() / w as f64;
    KappaEstimate {
        kappa,
        oscillation: half_width > (10.0 * drift).max(1e-9),
        half_width,
        drift,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseClass {
    Plateau,
    Decay,
    Inconclusive,
}

impl fmt::Display for PhaseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhaseClass::Plateau => "plateau",
            PhaseClass::Decay => "decay",
            PhaseClass::Inconclusive => "inconclusive",
        })
    }
}

/// How `g(c, n)` is obtained.
#[derive(Debug, Clone)]
pub enum Route {
    /// Exact sums for the single-lineage nearest-neighbour model.
    ExactSpecial,
    MonteCarlo(SimConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseScan {
    pub c_grid: Vec<f64>,
    pub n_grid: Vec<u32>,
    /// `g[i][j] = g(c_grid[i], n_grid[j])`
    pub g: Vec<Vec<f64>>,
    /// Zero on the exact route.
    pub stderr: Vec<Vec<f64>>,
    pub classes: Vec<PhaseClass>,
    /// `sqrt(1 - m^2)` for the single-lineage model.
    pub reference_threshold: Option<f64>,
    /// Largest plateau `c` and smallest decay `c`.
    pub bracket: (Option<f64>, Option<f64>),
    pub slope_tol: f64,
}

/// Classifies one row of `g` over `n_grid`.
///
/// Plateau: the mean over the last third of the grid lies in
/// `[0.5 * first-third mean, 1.05]` and the fitted slope of `log g` is within
/// `+-tol`. Decay: `g` vanishes at the end or the slope is below `-tol`.
pub fn classify(n_grid: &[u32], g: &[f64], tol: f64) -> PhaseClass {
    let len = g.len();
    if len == 0 {
        return PhaseClass::Inconclusive;
    }
    if g[len - 1] <= 0.0 {
        return PhaseClass::Decay;
    }
    let k = (len / 3).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let first = mean(&g[..k]);
    let last = mean(&g[len - k..]);
    let pts: Vec<(f64, f64)> = n_grid
        .iter()
        .zip(g)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&n, &v)| (n as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return PhaseClass::Inconclusive;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (slope, _, _) = least_squares(&x, &y);
    if slope < -tol {
        PhaseClass::Decay
    } else if slope.abs() <= tol && last >= 0.5 * first && last <= 1.05 {
        PhaseClass::Plateau
    } else {
        PhaseClass::Inconclusive
    }
}

/// `g(c, n) = rho^{cn} P(M_n >= ceil(cn))` exactly, for the single-lineage model.
pub fn exact_special_g(m: f64, c: f64, n: u32) -> Result<f64> {
    let rho = (1.0 + (1.0 - m * m).sqrt()) / m;
    let level = simulate::level_for(c, n);
    let log_tail = if level <= 0 {
        0.0
    } else {
        exact::special_log_mn_tail(m, n as u64, level as u64)?
    };
    Ok((c * n as f64 * rho.ln() + log_tail).exp())
}

/// Tabulates and classifies `g(c, n)`.
pub fn phase_scan(model: &ModelSpec, c_grid: &[f64], n_grid: &[u32], route: &Route) -> Result<PhaseScan> {
    let m = model.mean_offspring();
    let special = model.is_special_binary();
    let (g, stderr) = match route {
        Route::ExactSpecial => {
            if !special {
                return Err(BrwError::Mode(
                    "the exact route needs the single-lineage nearest-neighbour model".into(),
                ));
            }
            let g = c_grid
                .iter()
                .map(|&c| n_grid.iter().map(|&n| exact_special_g(m, c, n)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let zeros = vec![vec![0.0; n_grid.len()]; c_grid.len()];
            (g, zeros)
        }
        Route::MonteCarlo(cfg) => {
            let grid = simulate::estimate_g_grid(model, c_grid, n_grid, cfg)?;
            let g = grid.iter().map(|r| r.iter().map(|e| e.estimate.point).collect()).collect();
            let s = grid.iter().map(|r| r.iter().map(|e| e.estimate.stderr).collect()).collect();
            (g, s)
        }
    };
    let classes: Vec<PhaseClass> = g.iter().map(|row: &Vec<f64>| classify(n_grid, row, PHASE_SLOPE_TOL)).collect();
    let largest_plateau = c_grid
        .iter()
        .zip(&classes)
        .filter(|(_, &k)| k == PhaseClass::Plateau)
        .map(|(&c, _)| c)
        .reduce(f64::max);
    let smallest_decay = c_grid
        .iter()
        .zip(&classes)
        .filter(|(_, &k)| k == PhaseClass::Decay)
        .map(|(&c, _)| c)
        .reduce(f64::min);
    Ok(PhaseScan {
        c_grid: c_grid.to_vec(),
        n_grid: n_grid.to_vec(),
        g,
        stderr,
        classes,
        reference_threshold: special.then(|| (1.0 - m * m).sqrt()),
        bracket: (largest_plateau, smallest_decay),
        slope_tol: PHASE_SLOPE_TOL,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZRow {
    pub level: i64,
    pub exact: f64,
    pub point: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconcileReport {
    pub rows: Vec<ZRow>,
    /// Levels left out, with the reason.
    pub excluded: Vec<(i64, String)>,
    pub within2: f64,
    pub within4: f64,
}

/// z-scores of Monte Carlo tail estimates against a solved table.
pub fn reconcile(tail: &TailTable, levels: &[i64], estimates: &[Estimate]) -> Result<ReconcileReport> {
    if levels.len() != estimates.len() {
        return config("levels and estimates differ in length");
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (&n, e) in levels.iter().zip(estimates) {
        if n < 0 || n as usize > tail.report_limit {
            excluded.push((n, format!("outside the certified window [0, {}]", tail.report_limit)));
            continue;
        }
        let exact = tail.u(n);
        rows.push(ZRow {
            level: n,
            exact,
            point: e.point,
            stderr: e.stderr,
            z: e.z_score(exact),
        });
    }
    let frac = |k: f64| {
        if rows.is_empty() {
            f64::NAN
        } else {
            rows.iter().filter(|r| r.z.abs() <= k).count() as f64 / rows.len() as f64
        }
    };
    Ok(ReconcileReport {
        within2: frac(2.0),
        within4: frac(4.0),
        rows,
        excluded,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualityRow {
    pub level: i64,
    pub dual_tail: f64,
    /// `P(M >= n | extinct)` against `u_dual(n)`.
    pub conditioned: Estimate,
    pub z_conditioned: f64,
    /// `P(M >= n) - (1 - q)` against `q u_dual(n)`.
    pub shifted: f64,
    pub shifted_stderr: f64,
    pub z_shifted: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualityReport {
    pub label: String,
    pub extinction_probability: f64,
    pub dual: ModelSpec,
    pub dual_mean: f64,
    pub rho_bar: f64,
    pub dual_tail: TailTable,
    /// `rho_bar^n (u_bar(n) - (1 - q)) = q ell_dual(n)` on the certified window.
    pub ell_bar: Vec<f64>,
    pub ell_bar_in_range: bool,
    pub rows: Vec<DualityRow>,
    pub acceptance: Option<Estimate>,
    pub flags: Vec<String>,
}

impl DualityReport {
    /// Every row within `k` standard errors on both comparisons.
    pub fn rows_within(&self, k: f64) -> bool {
        self.rows.iter().all(|r| r.z_conditioned.abs() <= k && r.z_shifted.abs() <= k)
    }
}

/// Exact dual quantities plus, for supercritical input, a Monte Carlo check
/// of the duality at `levels`. Subcritical input reduces to its own tail with `q = 1`.
pub fn duality_report(
    model: &ModelSpec,
    cfg: &SimConfig,
    levels: &[i64],
    horizon: usize,
    tol: f64,
) -> Result<DualityReport> {
    let (q, dual) = match model.mode {
        Mode::Supercritical => (model.offspring.extinction_probability(), model.dual()?),
        Mode::Subcritical => (1.0, model.clone()),
    };
    let dual_tail = exact::solve_tail_M(&dual, horizon, tol)?;
    let rho_bar = dual_tail.rho;
    let ell_bar: Vec<f64> = dual_tail.ell[dual_tail.window()].iter().map(|l| q * l).collect();
    let ell_bar_in_range = ell_bar.iter().all(|&v| v > 0.0 && v <= q + 1e-6);
    let mut rows = Vec::new();
    let mut acceptance = None;
    let mut flags = Vec::new();
    if model.mode == Mode::Supercritical {
        let mc = simulate::conditioned_tails(model, levels, cfg)?;
        for (j, &n) in levels.iter().enumerate() {
            let ud = dual_tail.u(n);
            let cond = mc.conditioned[j].clone();
            let un = &mc.unconditional[j];
            let shifted = un.point - (1.0 - q);
            rows.push(DualityRow {
                level: n,
                dual_tail: ud,
                z_conditioned: cond.z_score(ud),
                conditioned: cond,
                shifted,
                shifted_stderr: un.stderr,
                z_shifted: if un.stderr > 0.0 { (shifted - q * ud) / un.stderr } else { 0.0 },
            });
        }
        acceptance = Some(mc.acceptance);
        flags = mc.flags;
    }
    Ok(DualityReport {
        label: model.label.clone(),
        extinction_probability: q,
        dual_mean: dual.mean_offspring(),
        dual,
        rho_bar,
        dual_tail,
        ell_bar,
        ell_bar_in_range,
        rows,
        acceptance,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
            Status::Skipped => "skipped",
        })
    }
}

/// One line of the summary report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimLine {
    pub tag: String,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for ClaimLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<5} {:<12} {}", self.tag, self.status.to_string(), self.detail)
    }
}

/// Settings for [`claims_report`].
#[derive(Debug, Clone)]
pub struct ReportSettings {
    pub horizon: usize,
    pub tol: f64,
    /// Levels for the first-passage rate check.
    pub passage_levels: usize,
    /// Used for the Monte Carlo phase scan and the duality check.
    pub sim: SimConfig,
    pub duality_levels: Vec<i64>,
}

impl Default for ReportSettings {
    fn default() -> Self {
        let mut sim = SimConfig::new(100_000, 1);
        sim.population_cap = 64;
        Self {
            horizon: 2000,
            tol: 1e-12,
            passage_levels: 200,
            sim,
            duality_levels: (1..=8).collect(),
        }
    }
}

fn line(tag: &str, status: Status, detail: String) -> ClaimLine {
    ClaimLine {
        tag: tag.to_string(),
        status,
        detail,
    }
}

/// Checks the bounded-ell, ell-limit, first-passage-rate, phase and duality
/// claims for one model.
pub fn claims_report(model: &ModelSpec, settings: &ReportSettings) -> Result<Vec<ClaimLine>> {
    let mut out = Vec::new();
    let (sub, q) = match model.mode {
        Mode::Subcritical => (model.clone(), 1.0),
        Mode::Supercritical => (model.dual()?, model.offspring.extinction_probability()),
    };
    let tail = exact::solve_tail_M(&sub, settings.horizon, settings.tol)?;
    let ell = exact::ell_table(&tail, tail.rho)?;
    let half = &ell[ell.len() / 2..];
    let max = ell.iter().copied().fold(f64::MIN, f64::max);
    let min = half.iter().copied().fold(f64::MAX, f64::min);
    let ok = max <= 1.0 + 1e-9 && min > 0.0;
    out.push(line(
        "T1a",
        if ok { Status::Pass } else { Status::Fail },
        format!("ell in [{min:.6}, {max:.12}] on [N_rep/2, N_rep], N_rep = {}", tail.report_limit),
    ));

    let r = sub.jump.right_range() as usize;
    let k = kappa_estimate(&ell, r);
    let step = (ell[ell.len() - 1] - ell[ell.len() - 2]).abs();
    let t1b = if sub.jump.is_nearly_right_continuous() {
        let ok = !k.oscillation && step < 1e-6;
        line(
            "T1b",
            if ok { Status::Pass } else { Status::Fail },
            format!("kappa ~ {:.10}, last step {step:.2e}, spread {:.2e}", k.kappa, k.half_width),
        )
    } else {
        line(
            "T1b",
            Status::Inconclusive,
            format!(
                "jump law is not nearly right-continuous; oscillation {} (spread {:.3e})",
                if k.oscillation { "detected" } else { "not detected" },
                k.half_width
            ),
        )
    };
    out.push(t1b);

    let m = sub.mean_offspring();
    let nmax = settings.passage_levels.max(2);
    let bar = exact::ell_bar_table(&sub.jump, m, nmax, settings.tol)?;
    let gap = |n: usize| bar[n].ln().abs() / n as f64;
    let tail_gaps: Vec<f64> = (nmax / 2..=nmax).map(gap).collect();
    let decreasing = tail_gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let g_end = gap(nmax);
    let ok = decreasing && g_end < 0.02;
    out.push(line(
        "T1c",
        if ok { Status::Pass } else { Status::Fail },
        format!("|-log E(m^tau_n)/n - log rho| = {g_end:.3e} at n = {nmax}, nonincreasing: {decreasing}"),
    ));

    let (scan, c_star) = if sub.is_special_binary() {
        let c_star = (1.0 - m * m).sqrt();
        let cs: Vec<f64> = [0.5, 0.75, 1.0, 1.25, 1.5].iter().map(|f| f * c_star).collect();
        (phase_scan(&sub, &cs, &[20, 40, 60], &Route::ExactSpecial)?, Some(c_star))
    } else {
        let rr = r as f64;
        let cs: Vec<f64> = [0.05, 0.1, 0.2, 0.4, 0.8].iter().map(|f| f * rr).collect();
        (phase_scan(&sub, &cs, &[10, 20, 30], &Route::MonteCarlo(settings.sim.clone()))?, None)
    };
    let describe = |pick: &dyn Fn(f64) -> bool| {
        scan.c_grid
            .iter()
            .zip(&scan.classes)
            .filter(|(&c, _)| pick(c))
            .map(|(c, k)| format!("c={c:.3}:{k}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let (t2a, t2c) = match c_star {
        Some(cs) => {
            let below_ok = scan
                .c_grid
                .iter()
                .zip(&scan.classes)
                .filter(|(&c, _)| c < cs - 0.1)
                .all(|(_, &k)| k == PhaseClass::Plateau);
            let above_ok = scan
                .c_grid
                .iter()
                .zip(&scan.classes)
                .filter(|(&c, _)| c > cs + 0.1)
                .all(|(_, &k)| k == PhaseClass::Decay);
            (
                line(
                    "T2a",
                    if below_ok { Status::Pass } else { Status::Fail },
                    format!("below c* = {cs:.4}: {}", describe(&|c| c < cs)),
                ),
                line(
                    "T2c",
                    if above_ok { Status::Pass } else { Status::Fail },
                    format!("above c* = {cs:.4}: {}", describe(&|c| c > cs)),
                ),
            )
        }
        None => {
            let first = scan.classes[0];
            let decays_below_r = scan
                .c_grid
                .iter()
                .zip(&scan.classes)
                .any(|(&c, &k)| c < r as f64 && k == PhaseClass::Decay);
            (
                line(
                    "T2a",
                    if first == PhaseClass::Plateau { Status::Pass } else { Status::Inconclusive },
                    format!("smallest c = {:.3}: {first} (Monte Carlo)", scan.c_grid[0]),
                ),
                line(
                    "T2c",
                    if decays_below_r { Status::Pass } else { Status::Inconclusive },
                    format!("bracket {:?} with R = {r} (Monte Carlo)", scan.bracket),
                ),
            )
        }
    };
    out.push(t2a);
    out.push(t2c);

    if model.mode == Mode::Supercritical {
        let rep = duality_report(model, &settings.sim, &settings.duality_levels, settings.horizon, settings.tol)?;
        let ok = rep.ell_bar_in_range && rep.rows_within(4.0);
        out.push(line(
            "P1.6",
            if ok { Status::Pass } else { Status::Fail },
            format!(
                "q = {q:.12}, dual mean {:.6}, rho_bar {:.12}, max |z| {:.2}",
                rep.dual_mean,
                rep.rho_bar,
                rep.rows
                    .iter()
                    .map(|r| r.z_conditioned.abs().max(r.z_shifted.abs()))
                    .fold(0.0, f64::max)
            ),
        ));
    } else {
        out.push(line("P1.6", Status::Skipped, "subcritical model (q = 1)".to_string()));
    }
    Ok(out)
}
