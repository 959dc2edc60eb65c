//! Fixed-point solver for `u(n) = P(M >= n)`.
//!
//! The tail satisfies `u(n) = sum_y a_y Q(u(n-y))` for `n >= 1` with `u(j) = 1`
//! for `j <= 0`. The solver works with `ell(n) = rho^n u(n)`: in these
//! coordinates the map reads
//!
//! ```text
//! ell(n) = sum_y a_y rho^y G(n - y),   G(j) = rho^j Q(u(j)) = ell(j) * Q(u(j))/u(j)
//! ```
//!
//! whose linear part has weights `m a_y rho^y` summing to one, so the iteration
//! controls relative error of `u` deep in the tail, and nothing underflows.
//!
//! Two Gauss-Seidel sweeps run side by side: a lower sequence from `ell = 0`
//! and an upper one from `ell = 1` (i.e. `u = rho^{-n}`, a supersolution).
//! Both are monotone and bracket the fixed point of the truncated system.

use serde::{Deserialize, Serialize};

use crate::error::{config, BrwError, Result};
use crate::model::{Mode, ModelSpec};

/// Deliberate defects for negative-control runs of the acceptance harness.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// Replace `Q` by `-Q`.
    NegateQ,
}

/// Configuration of the tail solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailSolver {
    /// Last site `N` of the truncated system; `u(j) = 0` is assumed for `j > N`.
    pub horizon: usize,
    pub tol: f64,
    /// Sweep budget per run.
    pub max_sweeps: usize,
    /// Re-solve at `2N` and require agreement on the report window.
    pub check_horizon: bool,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl TailSolver {
    pub fn new(horizon: usize, tol: f64) -> Self {
        Self {
            horizon,
            tol,
            max_sweeps: 200 * horizon + 10_000,
            check_horizon: true,
            fault: None,
        }
    }

    /// `N_rep = N - ceil(4 R log(1/tol) / log(1/m))`.
    pub fn report_limit(&self, model: &ModelSpec) -> i64 {
        let r = model.jump.right_range() as f64;
        let m = model.mean_offspring();
        let margin = (4.0 * r * (1.0 / self.tol).ln() / (1.0 / m).ln()).ceil();
        self.horizon as i64 - margin as i64
    }

    /// Solves the tail equation and certifies the report window.
    pub fn solve(&self, model: &ModelSpec) -> Result<TailTable> {
        if model.mode != Mode::Subcritical {
            return Err(BrwError::Mode("the tail solver needs a subcritical model".into()));
        }
        let span = (model.jump.left_range() + model.jump.right_range()) as usize;
        if self.horizon < 4 * span {
            return config(format!(
                "horizon {} is below 4(L+R) = {}",
                self.horizon,
                4 * span
            ));
        }
        if !(self.tol >= 1e-13 && self.tol < 1.0) {
            return config(format!("tolerance {} must lie in [1e-13, 1)", self.tol));
        }
        let report_limit = self.report_limit(model);
        if report_limit < 1 {
            return config(format!(
                "horizon {} is too small: the certified window would end at {report_limit}",
                self.horizon
            ));
        }
        let report_limit = report_limit as usize;
        let rho = model.decay_constant()?;

        let main = self.run(model, rho, self.horizon)?;
        let horizon_change = if self.check_horizon {
            let wide = self.run(model, rho, 2 * self.horizon)?;
            let change = (0..=report_limit)
                .map(|n| (main.ell[n] - wide.ell[n]).abs())
                .fold(0.0, f64::max);
            if change > self.tol {
                return config(format!(
                    "horizon {} too small: doubling it moves ell by {change:e} on [0, {report_limit}]",
                    self.horizon
                ));
            }
            Some(change)
        } else {
            None
        };
        Ok(main.into_table(model, rho, self, report_limit, horizon_change))
    }

    fn run(&self, model: &ModelSpec, rho: f64, horizon: usize) -> Result<RawSolution> {
        let sys = ScaledSystem::new(model, rho, horizon, self.fault);
        let mut lower = vec![0.0; horizon + 1];
        let mut upper = vec![1.0; horizon + 1];
        lower[0] = 1.0;
        let mut g_lower = sys.initial_g(&lower);
        let mut g_upper = sys.initial_g(&upper);
        // Stop well inside the tolerance so that midpoint, residual and the
        // horizon-doubling comparison all stay within it.
        let target = 0.25 * self.tol;
        let mut sweeps = 0;
        let mut max_ratio: f64 = 0.0;
        let mut prev_change = [f64::NAN; 2];
        let mut monotone = true;
        loop {
            let dl = sys.sweep(&mut lower, &mut g_lower);
            let du = sys.sweep(&mut upper, &mut g_upper);
            sweeps += 1;
            monotone &= dl.monotone_up && du.monotone_down;
            for (i, d) in [dl.u_change, du.u_change].into_iter().enumerate() {
                // Ratios of changes near round-off carry no information.
                if sweeps > 1 && prev_change[i] > 1e-12 {
                    max_ratio = max_ratio.max(d / prev_change[i]);
                }
                prev_change[i] = d;
            }
            let gap = (1..=horizon)
                .map(|n| upper[n] - lower[n])
                .fold(0.0, f64::max);
            let crossed = (1..=horizon).any(|n| lower[n] > upper[n] + 1e-12);
            if crossed || !gap.is_finite() {
                return Err(BrwError::SolverFault(format!(
                    "lower and upper iterates crossed after {sweeps} sweeps"
                )));
            }
            if gap <= target {
                break;
            }
            if sweeps >= self.max_sweeps {
                return Err(BrwError::NonConvergence {
                    what: format!("tail solver at horizon {horizon}"),
                    iterations: sweeps,
                    last_gap: gap,
                });
            }
        }
        let ell: Vec<f64> = lower.iter().zip(&upper).map(|(a, b)| 0.5 * (a + b)).collect();
        let scaled_gaps: Vec<f64> = lower.iter().zip(&upper).map(|(a, b)| b - a).collect();
        let g_mid = sys.initial_g(&ell);
        let scaled_residuals: Vec<f64> = (0..=horizon)
            .map(|n| if n == 0 { 0.0 } else { (ell[n] - sys.apply(n, &g_mid)).abs() })
            .collect();
        Ok(RawSolution {
            ell,
            scaled_gaps,
            scaled_residuals,
            sweeps,
            max_ratio,
            monotone,
            horizon,
        })
    }
}

struct SweepStats {
    u_change: f64,
    monotone_up: bool,
    monotone_down: bool,
}

/// The scaled map for one horizon.
struct ScaledSystem<'a> {
    model: &'a ModelSpec,
    /// `(y, a_y rho^y)`.
    weights: Vec<(i64, f64)>,
    /// `rho^{-n}` for `n = 0..=horizon`.
    inv_pow: Vec<f64>,
    /// Offset of `G(j)` in the `g` buffer: `g[j + left_pad]`, `j` from `-R`.
    left_pad: i64,
    horizon: usize,
    m: f64,
    sign: f64,
}

impl<'a> ScaledSystem<'a> {
    fn new(model: &'a ModelSpec, rho: f64, horizon: usize, fault: Option<Fault>) -> Self {
        let weights = model
            .jump
            .entries()
            .iter()
            .map(|&(y, p)| (y, p * rho.powi(y as i32)))
            .collect();
        let log_rho = rho.ln();
        let inv_pow = (0..=horizon).map(|n| (-(n as f64) * log_rho).exp()).collect();
        Self {
            model,
            weights,
            inv_pow,
            left_pad: model.jump.right_range(),
            horizon,
            m: model.mean_offspring(),
            sign: if fault == Some(Fault::NegateQ) { -1.0 } else { 1.0 },
        }
    }

    /// `G(j) = rho^j Q(u(j))` for `j` in `[-R, N + L]`.
    fn initial_g(&self, ell: &[f64]) -> Vec<f64> {
        let r = self.model.jump.right_range();
        let l = self.model.jump.left_range();
        let q1 = 1.0 - self.model.offspring.p0();
        let rho_inv = self.inv_pow.get(1).copied().unwrap_or(1.0);
        let mut g = Vec::with_capacity((r + l) as usize + self.horizon + 1);
        for j in -r..=0 {
            // rho^j with j <= 0
            g.push(self.sign * q1 * rho_inv.powi((-j) as i32));
        }
        for n in 1..=self.horizon {
            g.push(self.g_site(n, ell[n]));
        }
        for _ in 0..l {
            g.push(0.0);
        }
        g
    }

    #[inline]
    fn g_site(&self, n: usize, ell: f64) -> f64 {
        let u = ell * self.inv_pow[n];
        let ratio = if u == 0.0 { self.m } else { self.model.offspring.q_ratio(u) };
        self.sign * ell * ratio
    }

    #[inline]
    fn apply(&self, n: usize, g: &[f64]) -> f64 {
        let base = n as i64 + self.left_pad;
        self.weights
            .iter()
            .map(|&(y, w)| w * g[(base - y) as usize])
            .sum()
    }

    /// One ascending Gauss-Seidel sweep over `1..=N`.
    fn sweep(&self, ell: &mut [f64], g: &mut [f64]) -> SweepStats {
        let mut stats = SweepStats {
            u_change: 0.0,
            monotone_up: true,
            monotone_down: true,
        };
        let slack = 1e-15;
        for n in 1..=self.horizon {
            let new = self.apply(n, g);
            let old = ell[n];
            if new < old - slack * old.abs() {
                stats.monotone_up = false;
            }
            if new > old + slack * old.abs() {
                stats.monotone_down = false;
            }
            stats.u_change = stats.u_change.max((new - old).abs() * self.inv_pow[n]);
            ell[n] = new;
            g[(n as i64 + self.left_pad) as usize] = self.g_site(n, new);
        }
        stats
    }
}

struct RawSolution {
    ell: Vec<f64>,
    scaled_gaps: Vec<f64>,
    scaled_residuals: Vec<f64>,
    sweeps: usize,
    max_ratio: f64,
    monotone: bool,
    horizon: usize,
}

impl RawSolution {
    fn into_table(
        self,
        model: &ModelSpec,
        rho: f64,
        solver: &TailSolver,
        report_limit: usize,
        horizon_change: Option<f64>,
    ) -> TailTable {
        let log_rho = rho.ln();
        let scale = |n: usize, x: f64| x * (-(n as f64) * log_rho).exp();
        let values: Vec<f64> = self.ell.iter().enumerate().map(|(n, &l)| scale(n, l)).collect();
        let gaps: Vec<f64> = self
            .scaled_gaps
            .iter()
            .enumerate()
            .map(|(n, &g)| scale(n, g))
            .collect();
        let residuals: Vec<f64> = self
            .scaled_residuals
            .iter()
            .enumerate()
            .map(|(n, &r)| scale(n, r))
            .collect();
        let window = 0..=report_limit;
        let bracket_gap = gaps[window.clone()].iter().copied().fold(0.0, f64::max);
        let scaled_gap = self.scaled_gaps[window].iter().copied().fold(0.0, f64::max);
        TailTable {
            label: model.label.clone(),
            values,
            ell: self.ell,
            gaps,
            residuals,
            horizon: self.horizon,
            report_limit,
            tolerance: solver.tol,
            bracket_gap,
            scaled_gap,
            iterations: self.sweeps,
            rho,
            mean_offspring: model.mean_offspring(),
            right_range: model.jump.right_range(),
            max_contraction_ratio: self.max_ratio,
            monotone_iterates: self.monotone,
            horizon_change,
        }
    }
}

/// Solved tail `u(n) = P(M >= n)` for `n = 0..=N`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailTable {
    pub label: String,
    /// `u(n)`; may underflow to zero far out, use [`log_u`](Self::log_u) there.
    pub values: Vec<f64>,
    /// `ell(n) = rho^n u(n)`.
    pub ell: Vec<f64>,
    /// Per-site distance between the final lower and upper iterates, in `u` units.
    pub gaps: Vec<f64>,
    /// Per-site residual of the tail equation, in `u` units.
    pub residuals: Vec<f64>,
    pub horizon: usize,
    /// Last site of the certified window.
    pub report_limit: usize,
    pub tolerance: f64,
    /// Largest bracket gap on `[0, N_rep]` in `u` units.
    pub bracket_gap: f64,
    /// Largest bracket gap on `[0, N_rep]` in `ell` units.
    pub scaled_gap: f64,
    /// Sweeps used at the main horizon.
    pub iterations: usize,
    pub rho: f64,
    pub mean_offspring: f64,
    pub right_range: i64,
    /// Largest ratio of successive sup-norm changes (in `u` units) seen in either sequence.
    pub max_contraction_ratio: f64,
    pub monotone_iterates: bool,
    /// Largest change of `ell` on the window when the horizon is doubled.
    pub horizon_change: Option<f64>,
}

impl TailTable {
    /// `u(n)` with the solver's boundary and closure conventions.
    pub fn u(&self, n: i64) -> f64 {
        if n <= 0 {
            1.0
        } else if n as usize > self.horizon {
            0.0
        } else {
            self.values[n as usize]
        }
    }

    /// `log u(n)`, exact even where `u(n)` underflows.
    pub fn log_u(&self, n: usize) -> f64 {
        self.ell[n].ln() - n as f64 * self.rho.ln()
    }

    pub fn window(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.report_limit
    }
}

/// `ell(n) = rho^n u(n)` on the certified window.
///
/// `rho` must be the decay constant of the solved model. Fails with a solver
/// fault if some `ell(n)` exceeds `1 + 10 tol rho^n`.
pub fn ell_table(tail: &TailTable, rho: f64) -> Result<Vec<f64>> {
    if (rho - tail.rho).abs() > 1e-9 * tail.rho {
        return config(format!(
            "rho {rho} does not belong to the solved model (rho = {})",
            tail.rho
        ));
    }
    let log_rho = rho.ln();
    for n in tail.window() {
        // 1 + 10 tol rho^n, kept finite
        let allowance = (tail.tolerance.ln() + n as f64 * log_rho).exp() * 10.0;
        if tail.ell[n] > 1.0 + allowance {
            return Err(BrwError::SolverFault(format!(
                "ell({n}) = {} exceeds 1",
                tail.ell[n]
            )));
        }
    }
    Ok(tail.ell[tail.window()].to_vec())
}

/// Solves with the default budget; see [`TailSolver`].
#[allow(non_snake_case)]
pub fn solve_tail_M(model: &ModelSpec, horizon: usize, tol: f64) -> Result<TailTable> {
    TailSolver::new(horizon, tol).solve(model)
}

/// `m^n + 1/((1 - m K(theta0)) theta0^n)`, an upper bound on `u(n)` for
/// `1 < theta0 < rho(1/m)`.
#[allow(non_snake_case)]
pub fn chernoff_bound_Mn(model: &ModelSpec, theta0: f64, n: usize) -> Result<f64> {
    Ok(log_chernoff_bound(model, theta0, n)?.exp())
}

/// Logarithm of [`chernoff_bound_Mn`], usable where the bound underflows.
pub fn log_chernoff_bound(model: &ModelSpec, theta0: f64, n: usize) -> Result<f64> {
    let m = model.mean_offspring();
    let mk = admissible_mk(model, theta0)?;
    let a = n as f64 * m.ln();
    let b = -(1.0 - mk).ln() - n as f64 * theta0.ln();
    let hi = a.max(b);
    Ok(hi + ((a - hi).exp() + (b - hi).exp()).ln())
}

/// `sum_{k=1}^n m^k K(theta0)^k / theta0^n`, the bound on `P(M_n >= n)`.
pub fn chernoff_summand_bound(model: &ModelSpec, theta0: f64, n: usize) -> Result<f64> {
    let mk = admissible_mk(model, theta0)?;
    let geometric: f64 = (1..=n).map(|k| mk.powi(k as i32)).sum();
    Ok(geometric * (-(n as f64) * theta0.ln()).exp())
}

fn admissible_mk(model: &ModelSpec, theta0: f64) -> Result<f64> {
    if !(theta0 > 1.0) {
        return Err(BrwError::Domain(format!("theta0 must exceed 1, got {theta0}")));
    }
    let mk = model.mean_offspring() * model.jump.pgf(theta0)?;
    if mk >= 1.0 {
        return Err(BrwError::Domain(format!(
            "m K(theta0) = {mk} >= 1; theta0 must lie below rho(1/m)"
        )));
    }
    Ok(mk)
}
