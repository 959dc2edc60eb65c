//! Closed forms for the simple symmetric walk and the single-lineage model,
//! and the threshold functions for walks of finite right range.

use crate::error::{domain, Result};
use crate::model::JumpDistribution;
use crate::roots;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `log(n!) - (n + 1/2) log n + n - log sqrt(2 pi)`, the Stirling remainder.
fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let x = n as f64;
    if n <= 15 {
        let fact: f64 = (1..=n).map(|k| k as f64).product();
        return fact.ln() - (x + 0.5) * x.ln() + x - LN_SQRT_2PI;
    }
    let nn = x * x;
    if n > 500 {
        (S0 - S1 / nn) / x
    } else if n > 80 {
        (S0 - (S1 - S2 / nn) / nn) / x
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / x
    }
}

/// `x log(x/np) + np - x`, accurate when `x` is close to `np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// `log P(Bin(size, 1/2) = x)` by the saddle-point expansion.
fn log_binom_half(x: u64, size: u64) -> f64 {
    let sz = size as f64;
    if x == 0 || x == size {
        return -sz * std::f64::consts::LN_2;
    }
    let xf = x as f64;
    let rest = size - x;
    let half = 0.5 * sz;
    stirlerr(size) - stirlerr(x) - stirlerr(rest) - bd0(xf, half) - bd0(rest as f64, half)
        - 0.5 * (2.0 * std::f64::consts::PI * xf * rest as f64 / sz).ln()
}

/// `log P(tau_n = j)` for the simple symmetric walk; `-inf` when impossible.
///
/// Uses `P(tau_n = j) = (n/j) P(W_j = n)`.
pub fn nn_tau_log_pmf(n: u64, j: u64) -> f64 {
    if n == 0 {
        return if j == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if j < n || (j - n) % 2 != 0 {
        return f64::NEG_INFINITY;
    }
    (n as f64 / j as f64).ln() + log_binom_half((j + n) / 2, j)
}

/// `P(tau_n = j)` for the simple symmetric walk.
pub fn nn_tau_pmf(n: u64, j: u64) -> f64 {
    nn_tau_log_pmf(n, j).exp()
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.filter(|t| t.is_finite()).collect();
    let Some(hi) = v.iter().copied().reduce(f64::max) else {
        return f64::NEG_INFINITY;
    };
    hi + v.iter().map(|t| (t - hi).exp()).sum::<f64>().ln()
}

/// `log P(tau_n in [a n - c sqrt(n log n), a n + c sqrt(n log n)])`.
pub fn nn_tau_window_log_prob(n: u64, a: f64, c: f64) -> f64 {
    let nf = n as f64;
    let half = c * (nf * nf.ln()).sqrt();
    let lo = (a * nf - half).ceil().max(nf) as u64;
    let hi = (a * nf + half).floor().max(0.0) as u64;
    log_sum_exp((lo..=hi).map(|j| nn_tau_log_pmf(n, j)))
}

/// `lambda(a) = (a+1)^{(a+1)/2} (a-1)^{(a-1)/2} a^{-a}`.
pub fn lambda_of_a(a: f64) -> Result<f64> {
    if !(a > 1.0) || !a.is_finite() {
        return domain(format!("lambda needs a > 1, got {a}"));
    }
    let log = 0.5 * (a + 1.0) * (a + 1.0).ln() + 0.5 * (a - 1.0) * (a - 1.0).ln() - a * a.ln();
    Ok(log.exp())
}

/// `theta*(x) = sqrt((x+1)/(x-1))`.
pub fn special_theta_star(x: f64) -> Result<f64> {
    if !(x > 1.0) {
        return domain(format!("theta* needs x > 1, got {x}"));
    }
    Ok(((x + 1.0) / (x - 1.0)).sqrt())
}

/// Exponent `g(x)` of the single-lineage model: `rho^{n} P(M_{xn} >= n)`
/// behaves like `exp(n g(x))` for `x` below the threshold `1/sqrt(1-m^2)`.
pub fn special_g(m: f64, x: f64) -> Result<f64> {
    if !(m > 0.0 && m < 1.0) {
        return domain(format!("special g needs m in (0,1), got {m}"));
    }
    if !(x > 1.0) {
        return domain(format!("special g needs x > 1, got {x}"));
    }
    let rho = (1.0 + (1.0 - m * m).sqrt()) / m;
    Ok(rho.ln() + x * (m * x).ln() - 0.5 * (x - 1.0) * (x - 1.0).ln() - 0.5 * (x + 1.0) * (x + 1.0).ln())
}

/// The root `theta > 1` of `theta K'(theta) / K(theta) = 1/x`, for `x > 1/R`.
pub fn finite_range_theta_star(jump: &JumpDistribution, x: f64) -> Result<f64> {
    let r = jump.right_range() as f64;
    if !(x > 1.0 / r) || !x.is_finite() {
        return domain(format!("theta* needs x > 1/R = {}, got {x}", 1.0 / r));
    }
    let target = 1.0 / x;
    let f = |t: f64| jump.tilted_mean(t.exp()) - target;
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 700.0 {
            return domain(format!("theta* for x = {x} is beyond the representable range"));
        }
    }
    // relative accuracy 1e-13 in theta
    let t = roots::bisect(f, 0.0, hi, 1e-13, 500)?;
    Ok(t.exp())
}

/// `g(x) = log rho - log theta* + x log(m K(theta*))`, `rho = rho(1/m)`.
pub fn finite_range_g(jump: &JumpDistribution, m: f64, x: f64) -> Result<f64> {
    if !(m > 0.0 && m < 1.0) {
        return domain(format!("g needs m in (0,1), got {m}"));
    }
    let theta = finite_range_theta_star(jump, x)?;
    let rho = jump.rho(1.0 / m)?;
    Ok(rho.ln() - theta.ln() + x * (m.ln() + jump.log_pgf(theta)))
}

/// `(log K'(theta*) + (x-1) log K(theta*), log R + log(a_R)/R)`; the first
/// tends to the second as `x -> 1/R+`.
pub fn finite_range_limit_terms(jump: &JumpDistribution, x: f64) -> Result<(f64, f64)> {
    let theta = finite_range_theta_star(jump, x)?;
    let r = jump.right_range();
    let lhs = jump.log_pgf_derivative(theta) + (x - 1.0) * jump.log_pgf(theta);
    let limit = (r as f64).ln() + jump.prob(r).ln() / r as f64;
    Ok((lhs, limit))
}

/// `log P(M_k >= n)` for the single-lineage nearest-neighbour model.
pub fn special_log_mn_tail(m: f64, k: u64, n: u64) -> Result<f64> {
    if !(m > 0.0 && m < 1.0) {
        return domain(format!("single-lineage tail needs m in (0,1), got {m}"));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let lm = m.ln();
    Ok(log_sum_exp((n..=k).map(|j| j as f64 * lm + nn_tau_log_pmf(n, j))))
}

/// `P(M_k >= n) = sum_{j=n}^{k} m^j P(tau_n = j)` for the single-lineage model.
pub fn special_mn_tail(m: f64, k: u64, n: u64) -> Result<f64> {
    Ok(special_log_mn_tail(m, k, n)?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;

    fn exact_pmf(n: u64, j: u64) -> f64 {
        // (n/j) C(j, (j+n)/2) 2^{-j}, with the big integer scaled down to f64
        let k = (j + n) / 2;
        let mut c = BigUint::from(1u32);
        for i in 0..k {
            c = c * BigUint::from(j - i) / BigUint::from(i + 1);
        }
        let bits = c.bits();
        let shift = bits.saturating_sub(60);
        let top: u64 = (&c >> shift).try_into().unwrap();
        let log = (top as f64).ln() + shift as f64 * std::f64::consts::LN_2 - j as f64 * std::f64::consts::LN_2
            + (n as f64 / j as f64).ln();
        log.exp()
    }

    #[test]
    fn tau_pmf_examples() {
        for n in 1..20 {
            assert!((nn_tau_pmf(n, n) - 0.5f64.powi(n as i32)).abs() < 1e-15);
        }
        assert!((nn_tau_pmf(1, 3) - 0.125).abs() < 1e-15);
        assert_eq!(nn_tau_pmf(2, 3), 0.0);
        assert_eq!(nn_tau_pmf(3, 1), 0.0);
    }

    #[test]
    fn tau_pmf_matches_big_integers() {
        for &(n, j) in &[(1u64, 5u64), (3, 17), (10, 40), (7, 301), (50, 1000), (100, 2000), (1, 2001)] {
            let want = exact_pmf(n, j);
            let got = nn_tau_pmf(n, j);
            assert!((got / want - 1.0).abs() < 1e-13, "n={n} j={j}: {got} vs {want}");
        }
    }

    #[test]
    fn lambda_examples() {
        assert!((lambda_of_a(3.0).unwrap() - 32.0 / 27.0).abs() < 1e-12);
        assert!((lambda_of_a(1.0 + 1e-9).unwrap() - 2.0).abs() < 1e-6);
        for i in 1..200 {
            let a = 1.0 + i as f64 * 0.05;
            assert!(lambda_of_a(a).unwrap() <= 2.0);
        }
        assert!(lambda_of_a(1.0).is_err());
    }

    #[test]
    fn special_g_examples() {
        assert!(special_g(0.8, 1.0 / 0.6).unwrap().abs() < 1e-12);
        let near = special_g(0.8, 1.0 + 1e-12).unwrap();
        assert!((near - (1.6f64.ln() - 2f64.ln())).abs() < 1e-9);
        assert!((special_theta_star(3.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn finite_range_matches_special() {
        let nn = JumpDistribution::nearest_neighbor();
        assert!((finite_range_theta_star(&nn, 2.0).unwrap() - 3f64.sqrt()).abs() < 1e-12);
        for &x in &[1.2, 1.5, 2.0, 3.0, 5.0] {
            let a = finite_range_g(&nn, 0.8, x).unwrap();
            let b = special_g(0.8, x).unwrap();
            assert!((a - b).abs() < 1e-10, "x={x}");
        }
        assert!(finite_range_theta_star(&nn, 1.0).is_err());
    }

    #[test]
    fn finite_range_near_lower_end() {
        let j = JumpDistribution::new(vec![(-2, 0.25), (0, 0.35), (1, 0.3), (2, 0.1)]).unwrap();
        let m = 0.7;
        let rho = j.rho(1.0 / m).unwrap();
        assert!(m * rho * rho * 0.1 < 1.0);
        assert!(finite_range_g(&j, m, 0.5 + 1e-4).unwrap() < 0.0);
        let mut last = f64::INFINITY;
        for e in [1e-2, 1e-3, 1e-4, 1e-5] {
            let (lhs, limit) = finite_range_limit_terms(&j, 0.5 + e).unwrap();
            let err = (lhs - limit).abs();
            assert!(err < last);
            last = err;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn special_tail_examples() {
        assert!((special_mn_tail(0.8, 3, 1).unwrap() - 0.464).abs() < 1e-14);
        assert!((special_mn_tail(0.8, 7, 7).unwrap() - 0.4f64.powi(7)).abs() < 1e-16);
        let deep = special_mn_tail(0.8, 4000, 10).unwrap();
        assert!((deep - 0.5f64.powi(10)).abs() < 1e-13);
    }
}
