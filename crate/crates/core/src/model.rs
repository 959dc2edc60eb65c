//! Jump and offspring laws, the generating functions built from them, and the
//! decay constant `rho`.
//!
//! All laws have finite support, so the jump generating function is finite
//! for every `theta >= 1` and the offspring law has all moments.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, BrwError, Result};
use crate::roots;

/// Tolerance on probability sums and on the mean-zero condition.
pub const PROB_TOL: f64 = 1e-12;

/// Whether a jump law must have mean zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeanMode {
    Strict,
    /// Used only for auxiliary walks (e.g. the reflected walk) built from a
    /// validated law.
    Relaxed,
}

/// Finite-support integer step law `{a_y}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpDistribution {
    /// `(offset, probability)` pairs sorted by offset, zero-probability entries dropped.
    entries: Vec<(i64, f64)>,
    right_range: i64,
    left_range: i64,
}

impl JumpDistribution {
    /// Builds a mean-zero jump law, reporting every violated invariant.
    pub fn new(entries: Vec<(i64, f64)>) -> Result<Self> {
        Self::with_mode(entries, MeanMode::Strict)
    }

    pub fn with_mode(entries: Vec<(i64, f64)>, mode: MeanMode) -> Result<Self> {
        let problems = Self::violations(&entries, mode);
        if !problems.is_empty() {
            return Err(BrwError::Invalid(problems));
        }
        let mut entries: Vec<(i64, f64)> = entries.into_iter().filter(|&(_, p)| p > 0.0).collect();
        entries.sort_by_key(|&(y, _)| y);
        let right_range = entries.last().map(|&(y, _)| y).unwrap_or(0);
        let left_range = (-entries[0].0).max(0);
        Ok(Self {
            entries,
            right_range,
            left_range,
        })
    }

    /// Lists every invariant the raw entries violate.
    pub fn violations(entries: &[(i64, f64)], mode: MeanMode) -> Vec<String> {
        let mut out = Vec::new();
        if entries.is_empty() {
            out.push("jump: no entries".to_string());
            return out;
        }
        for &(y, p) in entries {
            if !p.is_finite() || p < 0.0 || p > 1.0 {
                out.push(format!("jump: probability {p} at offset {y} is outside [0,1]"));
            }
        }
        let mut offsets: Vec<i64> = entries.iter().map(|&(y, _)| y).collect();
        offsets.sort_unstable();
        for w in offsets.windows(2) {
            if w[0] == w[1] {
                out.push(format!("jump: offset {} listed more than once", w[0]));
            }
        }
        let total: f64 = entries.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > PROB_TOL {
            out.push(format!("jump: probabilities sum to {total}, not 1"));
        }
        if !entries.iter().any(|&(y, p)| y > 0 && p > 0.0) {
            out.push("jump: no positive offset with positive probability (right range must be >= 1)".to_string());
        }
        if mode == MeanMode::Strict {
            let mean: f64 = entries.iter().map(|&(y, p)| y as f64 * p).sum();
            if mean.abs() > PROB_TOL {
                out.push(format!("jump: mean is {mean}, but the walk must have mean zero"));
            }
        }
        out
    }

    /// Simple symmetric walk, `a_{-1} = a_1 = 1/2`.
    pub fn nearest_neighbor() -> Self {
        Self::new(vec![(-1, 0.5), (1, 0.5)]).expect("valid")
    }

    pub fn entries(&self) -> &[(i64, f64)] {
        &self.entries
    }

    /// Largest offset with positive probability.
    pub fn right_range(&self) -> i64 {
        self.right_range
    }

    /// Minus the smallest offset (0 when there are no negative offsets).
    pub fn left_range(&self) -> i64 {
        self.left_range
    }

    pub fn prob(&self, y: i64) -> f64 {
        self.entries
            .iter()
            .find(|&&(o, _)| o == y)
            .map(|&(_, p)| p)
            .unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.entries.iter().map(|&(y, p)| y as f64 * p).sum()
    }

    /// Every offset `1..=R` carries positive probability.
    pub fn is_nearly_right_continuous(&self) -> bool {
        (1..=self.right_range).all(|y| self.prob(y) > 0.0)
    }

    /// The walk with every step negated (step law `a_{-y}`).
    pub fn reflected(&self) -> Self {
        let entries = self.entries.iter().map(|&(y, p)| (-y, p)).collect();
        let mut out = Self::with_mode(entries, MeanMode::Relaxed).expect("reflection of a valid law");
        // The reflection of a law without negative offsets has no positive one;
        // keep the ranges consistent with the entries in that case.
        out.right_range = out.entries.last().map(|&(y, _)| y).unwrap_or(0);
        out
    }

    /// `K(theta) = E(theta^{W_1})`.
    pub fn pgf(&self, theta: f64) -> Result<f64> {
        if !(theta >= 1.0) {
            return domain(format!("jump pgf needs theta >= 1, got {theta}"));
        }
        Ok(self.pgf_unchecked(theta))
    }

    pub(crate) fn pgf_unchecked(&self, theta: f64) -> f64 {
        self.entries.iter().map(|&(y, p)| p * theta.powi(y as i32)).sum()
    }

    /// `K'(theta)`.
    pub fn pgf_derivative(&self, theta: f64) -> Result<f64> {
        if !(theta >= 1.0) {
            return domain(format!("jump pgf derivative needs theta >= 1, got {theta}"));
        }
        Ok(self.pgf_derivative_unchecked(theta))
    }

    pub(crate) fn pgf_derivative_unchecked(&self, theta: f64) -> f64 {
        self.entries
            .iter()
            .map(|&(y, p)| y as f64 * p * theta.powi(y as i32 - 1))
            .sum()
    }

    /// `log K(theta)` evaluated without overflow for very large `theta`.
    pub fn log_pgf(&self, theta: f64) -> f64 {
        let r = self.right_range as i32;
        let scaled: f64 = self.entries.iter().map(|&(y, p)| p * theta.powi(y as i32 - r)).sum();
        r as f64 * theta.ln() + scaled.ln()
    }

    /// `log K'(theta)` for `theta > 1`, without overflow.
    pub fn log_pgf_derivative(&self, theta: f64) -> f64 {
        let r = self.right_range as i32;
        let scaled: f64 = self
            .entries
            .iter()
            .map(|&(y, p)| y as f64 * p * theta.powi(y as i32 - r))
            .sum();
        (r - 1) as f64 * theta.ln() + scaled.ln()
    }

    /// `theta K'(theta) / K(theta)`, increasing from 0 at `theta = 1` to `R`.
    pub fn tilted_mean(&self, theta: f64) -> f64 {
        let r = self.right_range as i32;
        let (mut num, mut den) = (0.0, 0.0);
        for &(y, p) in &self.entries {
            let w = p * theta.powi(y as i32 - r);
            num += y as f64 * w;
            den += w;
        }
        num / den
    }

    /// The unique `theta > 1` with `K(theta) = gamma`.
    pub fn rho(&self, gamma: f64) -> Result<f64> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return domain(format!("rho needs gamma > 1, got {gamma}"));
        }
        if self.right_range < 1 {
            return config("rho needs a positive right range");
        }
        let lo = 1.0 + 1e-12;
        let mut hi = 2.0;
        while self.pgf_unchecked(hi) <= gamma {
            hi *= 2.0;
            if !hi.is_finite() || hi > 2f64.powi(1023) {
                return Err(BrwError::NonConvergence {
                    what: "rho bracket expansion".into(),
                    iterations: 1024,
                    last_gap: hi,
                });
            }
        }
        let tol = 1e-3 * PROB_TOL * gamma.max(1.0);
        roots::safeguarded_newton(
            |t| {
                (
                    self.pgf_unchecked(t) - gamma,
                    self.pgf_derivative_unchecked(t),
                )
            },
            lo,
            hi,
            tol,
            500,
        )
    }
}

/// Offspring law `{p_k}` with finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringDistribution {
    probs: Vec<f64>,
    mean: f64,
    variance: f64,
    third_moment: f64,
}

/// Criticality of an offspring law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Subcritical,
    Supercritical,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Subcritical => write!(f, "subcritical"),
            Mode::Supercritical => write!(f, "supercritical"),
        }
    }
}

impl OffspringDistribution {
    /// `probs[k] = p_k`. Only the probability-vector invariants are checked;
    /// criticality is checked against a declared [`Mode`] by [`ModelSpec`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let problems = Self::violations(&probs);
        if !problems.is_empty() {
            return Err(BrwError::Invalid(problems));
        }
        let mut probs = probs;
        while probs.len() > 1 && *probs.last().unwrap() == 0.0 {
            probs.pop();
        }
        let moment = |e: i32| -> f64 {
            probs
                .iter()
                .enumerate()
                .map(|(k, p)| p * (k as f64).powi(e))
                .sum()
        };
        let mean = moment(1);
        let variance = moment(2) - mean * mean;
        let third_moment = moment(3);
        Ok(Self {
            probs,
            mean,
            variance,
            third_moment,
        })
    }

    /// Builds from `(count, probability)` pairs.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        let mut problems = Vec::new();
        let max_k = pairs.iter().map(|&(k, _)| k).max().unwrap_or(0);
        let mut probs = vec![0.0; max_k + 1];
        let mut seen = vec![false; max_k + 1];
        for &(k, p) in pairs {
            if seen[k] {
                problems.push(format!("offspring: count {k} listed more than once"));
            }
            seen[k] = true;
            probs[k] += p;
        }
        if pairs.is_empty() {
            problems.push("offspring: no entries".to_string());
        }
        match Self::new(probs) {
            Ok(o) if problems.is_empty() => Ok(o),
            Ok(_) => Err(BrwError::Invalid(problems)),
            Err(BrwError::Invalid(mut more)) => {
                problems.append(&mut more);
                Err(BrwError::Invalid(problems))
            }
            Err(e) => Err(e),
        }
    }

    pub fn violations(probs: &[f64]) -> Vec<String> {
        let mut out = Vec::new();
        if probs.is_empty() {
            out.push("offspring: no entries".to_string());
            return out;
        }
        for (k, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 || p > 1.0 {
                out.push(format!("offspring: probability {p} for {k} children is outside [0,1]"));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            out.push(format!("offspring: probabilities sum to {total}, not 1"));
        }
        out
    }

    /// Subcritical Galton-Watson law `p_0 = 1 - m`, `p_1 = m`.
    pub fn binary(m: f64) -> Result<Self> {
        Self::new(vec![1.0 - m, m])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn p0(&self) -> f64 {
        self.probs[0]
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn third_moment(&self) -> f64 {
        self.third_moment
    }

    /// Largest count with positive probability.
    pub fn max_children(&self) -> usize {
        self.probs.len() - 1
    }

    /// `None` for critical or degenerate laws that fit neither mode.
    pub fn mode(&self) -> Option<Mode> {
        if self.mean > 0.0 && self.mean < 1.0 {
            Some(Mode::Subcritical)
        } else if self.mean > 1.0 && self.p0() > 0.0 {
            Some(Mode::Supercritical)
        } else {
            None
        }
    }

    fn check_unit(s: f64, what: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&s) {
            return domain(format!("{what} needs s in [0,1], got {s}"));
        }
        Ok(())
    }

    /// `f(s) = sum p_k s^k`.
    pub fn pgf(&self, s: f64) -> Result<f64> {
        Self::check_unit(s, "offspring pgf")?;
        Ok(self.pgf_unchecked(s))
    }

    pub(crate) fn pgf_unchecked(&self, s: f64) -> f64 {
        self.probs.iter().rev().fold(0.0, |acc, &p| acc * s + p)
    }

    /// `f'(s)`.
    pub fn pgf_derivative(&self, s: f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &p)| acc * s + k as f64 * p)
    }

    /// `Q(s) = 1 - sum p_k (1-s)^k`, the probability that at least one child
    /// of a particle succeeds when each succeeds independently with probability `s`.
    pub fn q(&self, s: f64) -> Result<f64> {
        Self::check_unit(s, "Q")?;
        Ok(s * self.q_ratio(s))
    }

    /// `Q(s)/s`, evaluated without cancellation; equals `m` at `s = 0`.
    ///
    /// Uses `1 - (1-s)^k = s * sum_{i<k} (1-s)^i`.
    pub fn q_ratio(&self, s: f64) -> f64 {
        let t = 1.0 - s;
        let mut geometric = 0.0; // sum_{i<k} t^i
        let mut power = 1.0; // t^k
        let mut acc = 0.0;
        for &p in &self.probs {
            acc += p * geometric;
            geometric += power;
            power *= t;
        }
        acc
    }

    /// `h(s) = m s - Q(s) >= 0`.
    pub fn deficit(&self, s: f64) -> Result<f64> {
        Self::check_unit(s, "h")?;
        Ok(s * self.mean * self.relative_deficit_unchecked(s))
    }

    /// `H(s) = h(s) / (m s)`, with the limit value 0 at `s = 0`.
    pub fn relative_deficit(&self, s: f64) -> Result<f64> {
        Self::check_unit(s, "H")?;
        Ok(self.relative_deficit_unchecked(s))
    }

    pub(crate) fn relative_deficit_unchecked(&self, s: f64) -> f64 {
        if s == 0.0 || self.mean == 0.0 {
            return 0.0;
        }
        // m - Q(s)/s = sum_k p_k sum_{i<k} (1 - (1-s)^i), all terms nonnegative.
        let log_t = (-s).ln_1p();
        let mut inner = 0.0; // sum_{i<k} (1 - t^i)
        let mut acc = 0.0;
        for (k, &p) in self.probs.iter().enumerate() {
            acc += p * inner;
            inner += match k {
                0 => 0.0,
                _ if s >= 1.0 => 1.0,
                _ => -(k as f64 * log_t).exp_m1(),
            };
        }
        acc / self.mean
    }

    /// Smallest fixed point of `f` in `[0,1]`; 1 unless supercritical.
    pub fn extinction_probability(&self) -> f64 {
        if self.mean <= 1.0 {
            return 1.0;
        }
        let g = |s: f64| self.pgf_unchecked(s) - s;
        let mut eps = 1e-9;
        while g(1.0 - eps) >= 0.0 && eps > 1e-15 {
            eps /= 10.0;
        }
        roots::bisect(g, 0.0, 1.0 - eps, 1e-14, 200).unwrap_or(1.0)
    }

    /// Conjugate law `p_k q^{k-1}` of a supercritical law conditioned on extinction.
    pub fn dual(&self) -> Result<Self> {
        if self.mode() != Some(Mode::Supercritical) {
            return Err(BrwError::Mode(format!(
                "dual offspring needs a supercritical law with p_0 > 0 (mean {})",
                self.mean
            )));
        }
        self.conjugate_by(self.extinction_probability())
    }

    /// The conjugation `p_k t^{k-1}` by the fixed point `t != 1` of `f`.
    ///
    /// For a supercritical law `t = q < 1` (this is [`dual`](Self::dual)); for a
    /// subcritical law `t > 1` is the other root of `f(t) = t`, which inverts the
    /// dual map.
    pub fn conjugate(&self) -> Result<Self> {
        match self.mode() {
            Some(Mode::Supercritical) => self.dual(),
            Some(Mode::Subcritical) => {
                if self.max_children() < 2 {
                    return Err(BrwError::Mode(
                        "a subcritical law with at most one child has no conjugate".into(),
                    ));
                }
                let g = |s: f64| self.pgf_unchecked(s) - s;
                let mut hi = 2.0;
                while g(hi) <= 0.0 {
                    hi *= 2.0;
                }
                let t = roots::bisect(g, 1.0 + 1e-12, hi, 1e-15, 400)?;
                self.conjugate_by(t)
            }
            None => Err(BrwError::Mode("critical law has no conjugate".into())),
        }
    }

    fn conjugate_by(&self, t: f64) -> Result<Self> {
        let probs: Vec<f64> = self
            .probs
            .iter()
            .enumerate()
            .map(|(k, &p)| p * t.powi(k as i32 - 1))
            .collect();
        let total: f64 = probs.iter().sum();
        // Renormalise the last few ulps left by the root finder.
        Self::new(probs.iter().map(|p| p / total).collect())
    }
}

/// A complete branching-random-walk model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub jump: JumpDistribution,
    pub offspring: OffspringDistribution,
    pub mode: Mode,
    pub label: String,
}

impl ModelSpec {
    pub fn new(
        jump: JumpDistribution,
        offspring: OffspringDistribution,
        mode: Mode,
        label: impl Into<String>,
    ) -> Result<Self> {
        let problems = Self::mode_violations(&offspring, mode);
        if !problems.is_empty() {
            return Err(BrwError::Invalid(problems));
        }
        Ok(Self {
            jump,
            offspring,
            mode,
            label: label.into(),
        })
    }

    pub fn mode_violations(offspring: &OffspringDistribution, mode: Mode) -> Vec<String> {
        let m = offspring.mean();
        match mode {
            Mode::Subcritical if !(m > 0.0 && m < 1.0) => {
                vec![format!("offspring: mean {m} is not in (0,1) for a subcritical model")]
            }
            Mode::Supercritical if !(m > 1.0) => {
                vec![format!("offspring: mean {m} is not > 1 for a supercritical model")]
            }
            Mode::Supercritical if offspring.p0() <= 0.0 => {
                vec!["offspring: supercritical model needs p_0 > 0".to_string()]
            }
            _ => Vec::new(),
        }
    }

    /// Single-lineage model: nearest-neighbour jumps, `p_0 = 1 - m`, `p_1 = m`.
    pub fn special_binary(m: f64) -> Result<Self> {
        Self::new(
            JumpDistribution::nearest_neighbor(),
            OffspringDistribution::binary(m)?,
            Mode::Subcritical,
            format!("special binary m={m}"),
        )
    }

    pub fn mean_offspring(&self) -> f64 {
        self.offspring.mean()
    }

    /// `rho(1/m)`, the exponential decay constant of the tail of `M`.
    pub fn decay_constant(&self) -> Result<f64> {
        if self.mode != Mode::Subcritical {
            return Err(BrwError::Mode("decay constant rho(1/m) needs a subcritical model".into()));
        }
        self.jump.rho(1.0 / self.mean_offspring())
    }

    /// The subcritical model describing this supercritical model conditioned on extinction.
    pub fn dual(&self) -> Result<Self> {
        Ok(Self {
            jump: self.jump.clone(),
            offspring: self.offspring.dual()?,
            mode: Mode::Subcritical,
            label: format!("dual of {}", self.label),
        })
    }

    /// Whether this is the single-lineage nearest-neighbour model.
    pub fn is_special_binary(&self) -> bool {
        let nn = self.jump.entries().len() == 2
            && (self.jump.prob(-1) - 0.5).abs() < PROB_TOL
            && (self.jump.prob(1) - 0.5).abs() < PROB_TOL;
        nn && self.offspring.max_children() <= 1 && self.mode == Mode::Subcritical
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn r2_jump() -> JumpDistribution {
        JumpDistribution::new(vec![(-2, 0.25), (0, 0.35), (1, 0.3), (2, 0.1)]).unwrap()
    }

    #[test]
    fn jump_pgf_examples() {
        let nn = JumpDistribution::nearest_neighbor();
        assert_relative_eq!(nn.pgf(2.0).unwrap(), 1.25, epsilon = 1e-15);
        assert_relative_eq!(r2_jump().pgf(1.0).unwrap(), 1.0, epsilon = 1e-15);
        let direct = 0.25 / 2.25 + 0.35 + 0.3 * 1.5 + 0.1 * 2.25;
        assert_relative_eq!(r2_jump().pgf(1.5).unwrap(), direct, epsilon = 1e-15);
        assert_relative_eq!(direct, 1.136_111_111_111_111, epsilon = 1e-14);
        assert!(matches!(nn.pgf(0.5), Err(BrwError::Domain(_))));
    }

    #[test]
    fn jump_pgf_derivative_matches_finite_difference() {
        let nn = JumpDistribution::nearest_neighbor();
        assert_relative_eq!(nn.pgf_derivative(2.0).unwrap(), 0.375, epsilon = 1e-15);
        assert!(nn.pgf_derivative(1.0).unwrap().abs() < 1e-15);
        let j = r2_jump();
        let h = 1e-6;
        let fd = (j.pgf(1.5 + h).unwrap() - j.pgf(1.5 - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(j.pgf_derivative(1.5).unwrap(), fd, epsilon = 1e-8);
    }

    #[test]
    fn rho_examples() {
        let nn = JumpDistribution::nearest_neighbor();
        assert_relative_eq!(nn.rho(1.0 / 0.8).unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(nn.rho(2.0).unwrap(), 2.0 + 3f64.sqrt(), epsilon = 1e-12);
        let t = nn.rho(1.0 + 1e-9).unwrap();
        assert!(t > 1.0 && t < 1.001);
        assert!((nn.pgf(t).unwrap() - (1.0 + 1e-9)).abs() <= 1e-12);
        assert!(matches!(nn.rho(1.0), Err(BrwError::Domain(_))));
    }

    #[test]
    fn rho_matches_closed_form_on_grid() {
        let nn = JumpDistribution::nearest_neighbor();
        for i in 1..100 {
            let m = i as f64 / 100.0;
            let closed = (1.0 + (1.0 - m * m).sqrt()) / m;
            let r = nn.rho(1.0 / m).unwrap();
            assert!((r - closed).abs() <= 1e-12 * closed.max(1.0), "m={m}: {r} vs {closed}");
        }
    }

    #[test]
    fn offspring_examples() {
        let quad = OffspringDistribution::new(vec![0.25, 0.0, 0.75]).unwrap();
        assert_relative_eq!(quad.pgf(1.0 / 3.0).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        let lin = OffspringDistribution::new(vec![0.2, 0.8]).unwrap();
        assert_relative_eq!(lin.pgf(0.5).unwrap(), 0.6, epsilon = 1e-15);
        assert_relative_eq!(lin.pgf(1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(lin.pgf(1.5).is_err());
    }

    #[test]
    fn q_examples() {
        let lin = OffspringDistribution::new(vec![0.35, 0.65]).unwrap();
        for i in 0..=10 {
            let s = i as f64 / 10.0;
            assert_relative_eq!(lin.q(s).unwrap(), 0.65 * s, epsilon = 1e-15);
        }
        let o = OffspringDistribution::new(vec![0.3, 0.4, 0.3]).unwrap();
        assert_eq!(o.q(0.0).unwrap(), 0.0);
        assert_relative_eq!(o.q(0.5).unwrap(), 0.425, epsilon = 1e-15);
        assert!(o.q(-0.1).is_err());
    }

    #[test]
    fn h_examples() {
        let o = OffspringDistribution::new(vec![0.52, 0.3, 0.14, 0.04]).unwrap();
        let m = o.mean();
        assert_relative_eq!(o.relative_deficit(1.0).unwrap(), (m - 1.0 + 0.52) / m, epsilon = 1e-14);
        assert_eq!(o.relative_deficit(0.0).unwrap(), 0.0);
        let lin = OffspringDistribution::binary(0.8).unwrap();
        for i in 0..=10 {
            let s = i as f64 / 10.0;
            assert!(lin.deficit(s).unwrap().abs() < 1e-15);
            assert!(lin.relative_deficit(s).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn q_identities_on_grid() {
        let o = OffspringDistribution::new(vec![0.52, 0.3, 0.14, 0.04]).unwrap();
        let m = o.mean();
        let bound = (m - 1.0 + o.p0()) / m;
        let mut prev_h = 0.0;
        for i in 0..=1000 {
            let s = i as f64 / 1000.0;
            let q = o.q(s).unwrap();
            assert!((q - (1.0 - o.pgf(1.0 - s).unwrap())).abs() < 1e-12);
            let hh = o.relative_deficit(s).unwrap();
            assert!(hh >= prev_h - 1e-15 && hh <= bound + 1e-12);
            prev_h = hh;
            assert!((o.deficit(s).unwrap() - (m * s - q)).abs() < 1e-14);
            if i < 1000 {
                let step = 1e-7;
                let slope = (o.q(s + step).unwrap() - q) / step;
                assert!(slope <= m + 1e-6);
            }
        }
    }

    #[test]
    fn extinction_examples() {
        let a = OffspringDistribution::new(vec![0.25, 0.0, 0.75]).unwrap();
        assert_relative_eq!(a.extinction_probability(), 1.0 / 3.0, epsilon = 1e-13);
        let b = OffspringDistribution::new(vec![0.2, 0.0, 0.8]).unwrap();
        assert_relative_eq!(b.extinction_probability(), 0.25, epsilon = 1e-13);
        assert_eq!(OffspringDistribution::binary(0.5).unwrap().extinction_probability(), 1.0);
    }

    #[test]
    fn dual_examples() {
        let a = OffspringDistribution::new(vec![0.25, 0.0, 0.75]).unwrap();
        let d = a.dual().unwrap();
        assert_relative_eq!(d.probs()[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(d.probs()[2], 0.25, epsilon = 1e-12);
        assert_relative_eq!(d.mean(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(d.mean(), a.pgf_derivative(1.0 / 3.0), epsilon = 1e-12);
        let b = OffspringDistribution::new(vec![0.2, 0.0, 0.8]).unwrap();
        let d = b.dual().unwrap();
        assert_relative_eq!(d.probs()[0], 0.8, epsilon = 1e-12);
        assert_relative_eq!(d.mean(), 0.4, epsilon = 1e-12);
        assert!(matches!(d.dual(), Err(BrwError::Mode(_))));
        let back = d.conjugate().unwrap();
        for (x, y) in back.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_lists_every_problem() {
        let err = JumpDistribution::new(vec![(-1, 0.4), (1, 0.5), (1, 0.05)]).unwrap_err();
        let BrwError::Invalid(list) = err else { panic!() };
        assert_eq!(list.len(), 3, "{list:?}");
        assert!(list.iter().any(|s| s.contains("mean")));
        assert!(JumpDistribution::new(vec![(-1, 1.0)]).is_err());
        assert!(OffspringDistribution::new(vec![0.5, 0.49]).is_err());
    }

    #[test]
    fn model_mode_checks() {
        let nn = JumpDistribution::nearest_neighbor();
        let sup = OffspringDistribution::new(vec![0.25, 0.0, 0.75]).unwrap();
        assert!(ModelSpec::new(nn.clone(), sup.clone(), Mode::Subcritical, "x").is_err());
        assert!(ModelSpec::new(nn.clone(), sup, Mode::Supercritical, "x").is_ok());
        let no_death = OffspringDistribution::new(vec![0.0, 0.5, 0.5]).unwrap();
        assert!(ModelSpec::new(nn, no_death, Mode::Supercritical, "x").is_err());
        assert!(ModelSpec::special_binary(0.8).unwrap().is_special_binary());
    }
}
