//! First-passage generating functions `E^x(s^{tau_n})` and the overshoot law.
//!
//! The linear system `phi(x) = s sum_y a_y phi(x+y)` is solved in tilted
//! coordinates `psi(x) = theta^{n-x} phi(x)` with `theta = rho(1/s)`. There
//! the weights `s a_y theta^y` form a probability vector, `psi` stays in
//! `[0, 1]`, and an absolute tolerance on `psi` is a relative one on `phi`
//! (which itself decays like `theta^{-n}`).

use serde::{Deserialize, Serialize};

use crate::error::{domain, BrwError, Result};
use crate::model::JumpDistribution;

const MAX_DOUBLINGS: usize = 8;

/// Solution of the first-passage system for one level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstPassageSolution {
    pub level: usize,
    pub s: f64,
    /// Tilt `rho(1/s)`.
    pub theta: f64,
    /// Lower truncation depth `D`; `phi = 0` below `-D`.
    pub depth: usize,
    /// `phi(x)` for `x = -D..=n-1`, indexed by `x + D`.
    pub values: Vec<f64>,
    /// `psi(x) = theta^{n-x} phi(x)` on the same grid.
    pub tilted: Vec<f64>,
    /// `s^{D/R}`, the declared scale of the truncation error.
    pub truncation_bound: f64,
    pub tolerance: f64,
    /// Largest residual of the linear system in `phi` units.
    pub max_residual: f64,
    /// Change of `psi(0)` between the last two depths tried.
    pub depth_change: f64,
    pub sweeps: usize,
}

impl FirstPassageSolution {
    /// `phi(x)`, with the boundary values outside the grid.
    pub fn phi(&self, x: i64) -> f64 {
        if x >= self.level as i64 {
            1.0
        } else if x < -(self.depth as i64) {
            0.0
        } else {
            self.values[(x + self.depth as i64) as usize]
        }
    }

    /// `E(s^{tau_n})`.
    pub fn phi0(&self) -> f64 {
        self.phi(0)
    }

    /// `theta^n E(s^{tau_n})`.
    pub fn tilted0(&self) -> f64 {
        if self.level == 0 {
            1.0
        } else {
            self.tilted[self.depth]
        }
    }

    /// `log E(s^{tau_n})`, finite even when `phi0` underflows.
    pub fn log_phi0(&self) -> f64 {
        self.tilted0().ln() - self.level as f64 * self.theta.ln()
    }
}

/// Discounted overshoot law of the first passage above 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OvershootLaw {
    pub s: f64,
    pub theta: f64,
    /// `p_k(s) = E(s^{tau_1}; W_{tau_1} = 1 + k)` for `k = 0..R-1`.
    pub masses: Vec<f64>,
    /// `w_k = theta^{k+1} p_k(s)`.
    pub weights: Vec<f64>,
    pub weight_sum: f64,
    pub tolerance: f64,
}

struct Tilted<'a> {
    /// `(y, s a_y theta^y)`
    weights: Vec<(i64, f64)>,
    theta: f64,
    jump: &'a JumpDistribution,
}

impl<'a> Tilted<'a> {
    fn new(jump: &'a JumpDistribution, s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return domain(format!("discount s must lie in (0,1), got {s}"));
        }
        let theta = jump.rho(1.0 / s)?;
        let weights = jump
            .entries()
            .iter()
            .map(|&(y, p)| (y, s * p * theta.powi(y as i32)))
            .collect();
        Ok(Self { weights, theta, jump })
    }

    /// Solves on `[-depth, level-1]` with tilted boundary values `top[j]` at `level + j`.
    fn solve(&self, level: i64, depth: usize, top: &[f64], tol: f64, max_sweeps: usize) -> Result<(Vec<f64>, f64, usize)> {
        let size = level as usize + depth;
        let r = self.jump.right_range();
        let l = self.jump.left_range();
        // Buffer covers [-depth - L, level + R - 1].
        let pad = l as usize;
        let mut lower = vec![0.0; pad + size + r as usize];
        let mut upper = vec![0.0; pad + size + r as usize];
        for (j, &b) in top.iter().enumerate() {
            lower[pad + size + j] = b;
            upper[pad + size + j] = b;
        }
        for v in &mut upper[pad..pad + size] {
            *v = 1.0;
        }
        let target = 0.25 * tol;
        let mut sweeps = 0;
        let mut best = f64::INFINITY;
        let mut stalled = 0;
        loop {
            for buf in [&mut lower, &mut upper] {
                for i in (pad..pad + size).rev() {
                    buf[i] = self
                        .weights
                        .iter()
                        .map(|&(y, w)| w * buf[(i as i64 + y) as usize])
                        .sum();
                }
            }
            sweeps += 1;
            let mut gap: f64 = 0.0;
            for i in pad..pad + size {
                let d = upper[i] - lower[i];
                if d < -1e-12 {
                    return Err(BrwError::SolverFault(format!(
                        "first-passage bracket crossed at sweep {sweeps}"
                    )));
                }
                gap = gap.max(d);
            }
            if gap <= target {
                break;
            }
            // Round-off can hold the gap above tol/4; the midpoint is still
            // within tol/2 once the gap is below tol.
            if gap < best {
                best = gap;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 20 && gap <= tol {
                    break;
                }
            }
            if sweeps >= max_sweeps {
                return Err(BrwError::NonConvergence {
                    what: format!("first-passage system at level {level}, depth {depth}"),
                    iterations: sweeps,
                    last_gap: gap,
                });
            }
        }
        let mid: Vec<f64> = lower.iter().zip(&upper).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut residual: f64 = 0.0;
        for i in pad..pad + size {
            let x = i as i64 - pad as i64 - depth as i64;
            let rhs: f64 = self
                .weights
                .iter()
                .map(|&(y, w)| w * mid[(i as i64 + y) as usize])
                .sum();
            // back to phi units
            let scale = (-((level - x) as f64) * self.theta.ln()).exp();
            residual = residual.max((mid[i] - rhs).abs() * scale);
        }
        Ok((mid[pad..pad + size].to_vec(), residual, sweeps))
    }

    fn initial_depth(&self, s: f64, tol: f64) -> usize {
        let r = self.jump.right_range() as usize;
        r * ((10.0 / tol).ln() / (1.0 / s).ln()).ceil().max(1.0) as usize
    }

    /// Solves with depth doubling until `psi(0)` moves by less than `tol`.
    fn solve_stable(&self, s: f64, level: i64, top: &[f64], tol: f64) -> Result<Stable> {
        let mut depth = self.initial_depth(s, tol);
        let budget = 100_000;
        let (mut psi, _, mut sweeps) = self.solve(level, depth, top, tol, budget)?;
        let mut residual;
        let mut change = f64::INFINITY;
        for _ in 0..MAX_DOUBLINGS {
            let deeper = 2 * depth;
            let (psi2, res2, sw2) = self.solve(level, deeper, top, tol, budget)?;
            change = (psi2[deeper] - psi[depth]).abs();
            psi = psi2;
            residual = res2;
            sweeps += sw2;
            depth = deeper;
            if change < tol {
                return Ok(Stable {
                    psi,
                    depth,
                    residual,
                    change,
                    sweeps,
                });
            }
        }
        Err(BrwError::NonConvergence {
            what: format!("first-passage depth doubling at level {level}"),
            iterations: MAX_DOUBLINGS,
            last_gap: change,
        })
    }
}

struct Stable {
    psi: Vec<f64>,
    depth: usize,
    residual: f64,
    change: f64,
    sweeps: usize,
}

/// `E^x(s^{tau_n})` for `x` in `[-D, n-1]`, accurate to `tol` at `x = 0`.
pub fn first_passage_pgf(jump: &JumpDistribution, s: f64, n: usize, tol: f64) -> Result<FirstPassageSolution> {
    let sys = Tilted::new(jump, s)?;
    check_tol(tol)?;
    if n == 0 {
        return Ok(FirstPassageSolution {
            level: 0,
            s,
            theta: sys.theta,
            depth: 0,
            values: Vec::new(),
            tilted: Vec::new(),
            truncation_bound: 0.0,
            tolerance: tol,
            max_residual: 0.0,
            depth_change: 0.0,
            sweeps: 0,
        });
    }
    let r = jump.right_range();
    let top: Vec<f64> = (0..r).map(|j| sys.theta.powi(-(j as i32))).collect();
    let st = sys.solve_stable(s, n as i64, &top, tol)?;
    let log_theta = sys.theta.ln();
    let values = st
        .psi
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let x = i as i64 - st.depth as i64;
            p * (-((n as i64 - x) as f64) * log_theta).exp()
        })
        .collect();
    Ok(FirstPassageSolution {
        level: n,
        s,
        theta: sys.theta,
        depth: st.depth,
        values,
        tilted: st.psi,
        truncation_bound: s.powf(st.depth as f64 / r as f64),
        tolerance: tol,
        max_residual: st.residual,
        depth_change: st.change,
        sweeps: st.sweeps,
    })
}

/// The overshoot masses `p_k(s)` and weights `w_k = rho(1/s)^{k+1} p_k(s)`.
///
/// The weights sum to one for every `s`, since `s^t theta^{W_t}` is a martingale.
pub fn overshoot_pgf(jump: &JumpDistribution, s: f64, tol: f64) -> Result<OvershootLaw> {
    let sys = Tilted::new(jump, s)?;
    check_tol(tol)?;
    let r = jump.right_range() as usize;
    let mut masses = Vec::with_capacity(r);
    let mut weights = Vec::with_capacity(r);
    for k in 0..r {
        let mut top = vec![0.0; r];
        // landing site 1 + k, tilted by theta^{1 - (1 + k)}
        top[k] = sys.theta.powi(-(k as i32));
        let st = sys.solve_stable(s, 1, &top, tol)?;
        let psi0 = st.psi[st.depth];
        masses.push(psi0 / sys.theta);
        weights.push(psi0 * sys.theta.powi(k as i32));
    }
    let weight_sum = weights.iter().sum();
    Ok(OvershootLaw {
        s,
        theta: sys.theta,
        masses,
        weights,
        weight_sum,
        tolerance: tol,
    })
}

/// `ell_bar(n) = rho^n E(m^{tau_n})` for `n = 0..=N`, with `rho = rho(1/m)`.
pub fn ell_bar_table(jump: &JumpDistribution, m: f64, horizon: usize, tol: f64) -> Result<Vec<f64>> {
    (0..=horizon)
        .map(|n| first_passage_pgf(jump, m, n, tol).map(|sol| sol.tilted0()))
        .collect()
}

/// The renewal recursion `ell_bar(n+1) = sum_k w_k ell_bar(n-k)` with
/// `ell_bar(j) = rho^j` for `j <= 0`.
pub fn ell_bar_recursion(weights: &[f64], rho: f64, horizon: usize) -> Vec<f64> {
    let r = weights.len();
    // value at j is stored at index j + r - 1
    let mut v: Vec<f64> = (0..r).map(|i| rho.powi(i as i32 + 1 - r as i32)).collect();
    for n in 0..horizon {
        let next: f64 = weights
            .iter()
            .enumerate()
            .map(|(k, w)| w * v[n + r - 1 - k])
            .sum();
        v.push(next);
    }
    v.split_off(r - 1)
}

/// One pair `(k, l)` of the supermultiplicativity inequality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairCheck {
    pub k: usize,
    pub l: usize,
    /// `E(gamma^{tau_{k+l}})`
    pub lhs: f64,
    /// `E(gamma^{tau_k}) E(gamma^{tau_l})`
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupermultiplicativityReport {
    pub gamma: f64,
    pub pairs: Vec<PairCheck>,
    /// `log E(gamma^{tau_n}) / n` for `n = 1..=max level`.
    pub rates: Vec<f64>,
    pub rates_nondecreasing: bool,
}

impl SupermultiplicativityReport {
    pub fn all_hold(&self) -> bool {
        self.pairs.iter().all(|p| p.holds)
    }

    /// Largest `|lhs - rhs|` over the pairs.
    pub fn max_defect(&self) -> f64 {
        self.pairs.iter().map(|p| (p.lhs - p.rhs).abs()).fold(0.0, f64::max)
    }
}

/// Checks `E(g^{tau_{k+l}}) >= E(g^{tau_k}) E(g^{tau_l}) - tol` on each pair.
pub fn supermultiplicativity_check(
    jump: &JumpDistribution,
    gamma: f64,
    pairs: &[(usize, usize)],
    tol: f64,
) -> Result<SupermultiplicativityReport> {
    let top = pairs.iter().map(|&(k, l)| k + l).max().unwrap_or(0);
    // Solve well inside the comparison tolerance.
    let inner = (tol * 1e-2).max(1e-13);
    let solved: Vec<FirstPassageSolution> = (0..=top)
        .map(|n| first_passage_pgf(jump, gamma, n, inner))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = solved.iter().map(|s| s.phi0()).collect();
    let logs: Vec<f64> = solved.iter().map(|s| s.log_phi0()).collect();
    let checks = pairs
        .iter()
        .map(|&(k, l)| {
            let lhs = values[k + l];
            let rhs = values[k] * values[l];
            PairCheck {
                k,
                l,
                lhs,
                rhs,
                holds: lhs >= rhs - tol,
            }
        })
        .collect();
    let rates: Vec<f64> = (1..=top).map(|n| logs[n] / n as f64).collect();
    let rates_nondecreasing = rates.windows(2).all(|w| w[1] >= w[0] - tol);
    Ok(SupermultiplicativityReport {
        gamma,
        pairs: checks,
        rates,
        rates_nondecreasing,
    })
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol >= 1e-14 && tol < 1.0) {
        return domain(format!("tolerance {tol} must lie in [1e-14, 1)"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r2() -> JumpDistribution {
        JumpDistribution::new(vec![(-2, 0.25), (0, 0.35), (1, 0.3), (2, 0.1)]).unwrap()
    }

    #[test]
    fn nearest_neighbor_closed_forms() {
        let nn = JumpDistribution::nearest_neighbor();
        let one = first_passage_pgf(&nn, 0.8, 1, 1e-12).unwrap();
        assert!((one.phi0() - 0.5).abs() < 1e-12);
        let five = first_passage_pgf(&nn, 0.8, 5, 1e-12).unwrap();
        assert!((five.phi0() - 0.03125).abs() < 1e-12);
        assert!(five.max_residual <= 1e-12);
        assert_eq!(first_passage_pgf(&nn, 0.8, 0, 1e-12).unwrap().phi0(), 1.0);
        let m = 0.6f64;
        let closed = (1.0 - (1.0 - m * m).sqrt()) / m;
        assert!((first_passage_pgf(&nn, m, 1, 1e-12).unwrap().phi0() - closed).abs() < 1e-12);
    }

    #[test]
    fn phi_is_monotone_in_start() {
        let sol = first_passage_pgf(&r2(), 0.7, 6, 1e-12).unwrap();
        for w in sol.values.windows(2) {
            assert!(w[1] >= w[0] - 1e-15);
        }
        assert!(sol.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(sol.truncation_bound < 1e-12);
    }

    #[test]
    fn overshoot_examples() {
        let nn = JumpDistribution::nearest_neighbor();
        let law = overshoot_pgf(&nn, 0.8, 1e-12).unwrap();
        assert!((law.masses[0] - 0.5).abs() < 1e-12);
        assert_eq!(law.masses.len(), 1);
        let law = overshoot_pgf(&r2(), 0.7, 1e-12).unwrap();
        assert!((law.weight_sum - 1.0).abs() < 1e-10, "{}", law.weight_sum);
        assert!(law.masses.iter().sum::<f64>() <= 1.0);
        let s = 1e-6;
        let law = overshoot_pgf(&r2(), s, 1e-14).unwrap();
        assert!((law.masses[0] / s - 0.3).abs() < 1e-4);
        assert!((law.masses[1] / s - 0.1).abs() < 1e-4);
    }

    #[test]
    fn ell_bar_matches_recursion() {
        let j = r2();
        let m = 0.7;
        let table = ell_bar_table(&j, m, 40, 1e-12).unwrap();
        let law = overshoot_pgf(&j, m, 1e-12).unwrap();
        let rec = ell_bar_recursion(&law.weights, law.theta, 40);
        assert_eq!(table[0], 1.0);
        for n in 0..=40 {
            assert!((table[n] - rec[n]).abs() < 1e-9, "n={n}: {} vs {}", table[n], rec[n]);
            assert!(table[n] > 0.0 && table[n] < 10.0);
        }
        let nn = ell_bar_table(&JumpDistribution::nearest_neighbor(), 0.8, 20, 1e-12).unwrap();
        assert!(nn.iter().all(|v| (v - 1.0).abs() < 1e-11));
    }

    #[test]
    fn supermultiplicativity() {
        let pairs = [(5, 7), (0, 9), (3, 3)];
        let rep = supermultiplicativity_check(&r2(), 0.7, &pairs, 1e-10).unwrap();
        assert!(rep.all_hold());
        assert!(rep.pairs[0].lhs > rep.pairs[0].rhs + 1e-9);
        assert!((rep.pairs[1].lhs - rep.pairs[1].rhs).abs() < 1e-12);
        assert!(rep.rates_nondecreasing);
        let nn = supermultiplicativity_check(&JumpDistribution::nearest_neighbor(), 0.7, &pairs, 1e-10).unwrap();
        assert!(nn.max_defect() < 1e-10);
    }

    #[test]
    fn bad_discount_is_rejected() {
        let nn = JumpDistribution::nearest_neighbor();
        assert!(first_passage_pgf(&nn, 1.0, 2, 1e-12).is_err());
        assert!(overshoot_pgf(&nn, 0.0, 1e-12).is_err());
    }
}
