//! Cross-checks between independent routes to the same quantities.

use approx::assert_abs_diff_eq;
use brw_core::analysis::{self, PhaseClass, Route};
use brw_core::builtin::builtin;
use brw_core::exact::{self, first_passage_pgf, nn_tau_pmf, solve_tail_M};
use brw_core::simulate::{self, simulate_replication, SimConfig};
use brw_core::{JumpDistribution, Mode, ModelSpec, OffspringDistribution};

/// `P(tau_n = j)` for `j <= steps` by walking every +-1 path.
fn enumerate_tau(n: i64, steps: u32) -> Vec<f64> {
    let mut pmf = vec![0.0; steps as usize + 1];
    for path in 0u32..(1 << steps) {
        let mut x = 0i64;
        for j in 1..=steps {
            x += if path >> (j - 1) & 1 == 1 { 1 } else { -1 };
            if x >= n {
                pmf[j as usize] += 1.0 / (1u64 << steps) as f64;
                break;
            }
        }
    }
    pmf
}

#[test]
fn tau_law_three_ways() {
    let steps = 14;
    let s: f64 = 0.3;
    let nn = JumpDistribution::nearest_neighbor();
    for n in 1..=6i64 {
        let brute = enumerate_tau(n, steps);
        let mut truncated = 0.0;
        for j in 0..=steps as u64 {
            let p = nn_tau_pmf(n as u64, j);
            assert_abs_diff_eq!(p, brute[j as usize], epsilon = 1e-13);
            truncated += s.powi(j as i32) * p;
        }
        // the pgf beyond 14 steps adds at most s^15
        let dp = first_passage_pgf(&nn, s, n as usize, 1e-13).unwrap().phi0();
        assert!(dp >= truncated - 1e-12 && dp <= truncated + s.powi(15) + 1e-12, "n={n}");
    }
}

#[test]
fn special_tail_matches_simulation() {
    let model = ModelSpec::special_binary(0.5).unwrap();
    let levels: Vec<i64> = (1..=8).collect();
    let est = simulate::estimate_tail_M(&model, &levels, &SimConfig::new(400_000, 5)).unwrap();
    for (n, e) in levels.iter().zip(&est) {
        // rho = 2 + sqrt 3 at m = 1/2
        let exact = (2.0 - 3f64.sqrt()).powi(*n as i32);
        assert!(e.z_score(exact).abs() < 4.0, "level {n}: {} vs {exact}", e.point);
    }
}

#[test]
fn mean_total_progeny() {
    let model = builtin("range2").unwrap();
    let cfg = SimConfig::new(1, 17);
    let reps = 200_000u64;
    let (mut sum, mut sq) = (0.0, 0.0);
    for i in 0..reps {
        let t = simulate_replication(&model, &cfg, i).unwrap().total_progeny as f64;
        sum += t;
        sq += t * t;
    }
    let mean = sum / reps as f64;
    let se = ((sq / reps as f64 - mean * mean) / reps as f64).sqrt();
    let expected = 1.0 / (1.0 - 0.7);
    assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected}");
}

#[test]
fn martingale_is_flat() {
    let model = builtin("period2").unwrap();
    let tail = solve_tail_M(&model, 1000, 1e-12).unwrap();
    let rep = simulate::martingale_means(&model, &tail, 3, &[1, 4, 16], &SimConfig::new(200_000, 3)).unwrap();
    for e in &rep.estimates {
        assert!(e.z_score(tail.u(3)).abs() < 4.0);
    }
}

#[test]
fn duality_closed_forms() {
    let model = builtin("supercritical").unwrap();
    assert_abs_diff_eq!(model.offspring.extinction_probability(), 1.0 / 3.0, epsilon = 1e-13);
    let dual = model.dual().unwrap();
    assert_abs_diff_eq!(dual.mean_offspring(), 0.5, epsilon = 1e-13);
    assert_abs_diff_eq!(dual.decay_constant().unwrap(), 2.0 + 3f64.sqrt(), epsilon = 1e-12);
    // the conjugation is an involution
    let back = dual.offspring.conjugate().unwrap();
    for (a, b) in back.probs().iter().zip(model.offspring.probs()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn duality_report_agrees() {
    let model = builtin("supercritical").unwrap();
    let mut cfg = SimConfig::new(300_000, 8);
    cfg.population_cap = 64;
    let rep = analysis::duality_report(&model, &cfg, &[1, 2, 3, 4], 1000, 1e-12).unwrap();
    assert!(rep.rows_within(4.0));
    assert!(rep.ell_bar_in_range);
    let sub = analysis::duality_report(&builtin("range2").unwrap(), &cfg, &[1], 1000, 1e-12).unwrap();
    assert_eq!(sub.extinction_probability, 1.0);
    assert!(sub.rows.is_empty());
}

#[test]
fn supercritical_input_is_rejected_by_plain_estimators() {
    let model = builtin("supercritical").unwrap();
    assert_eq!(model.mode, Mode::Supercritical);
    assert!(simulate::estimate_tail_M(&model, &[1], &SimConfig::new(10, 1)).is_err());
}

#[test]
fn g_estimates_track_exact_values() {
    let model = builtin("special-0.8").unwrap();
    let cfg = SimConfig::new(200_000, 21);
    let ge = simulate::estimate_g(&model, 0.3, 20, &cfg).unwrap();
    assert_eq!(ge.level, 6);
    let exact = analysis::exact_special_g(0.8, 0.3, 20).unwrap();
    assert!(ge.estimate.z_score(exact).abs() < 4.0);
    // at c = 0.9, n = 20 the estimate is swamped by its own error
    let far = simulate::estimate_g(&model, 0.9, 20, &SimConfig::new(2_000, 21)).unwrap();
    assert!(far.noise_dominated);
}

#[test]
fn monte_carlo_and_exact_phase_scans_agree_away_from_threshold() {
    let model = builtin("special-0.8").unwrap();
    let c = [0.3, 0.9];
    let n = [10, 20, 30];
    let exact = analysis::phase_scan(&model, &c, &n, &Route::ExactSpecial).unwrap();
    let mc = analysis::phase_scan(&model, &c, &n, &Route::MonteCarlo(SimConfig::new(4_000_000, 2))).unwrap();
    assert_eq!(exact.classes, vec![PhaseClass::Plateau, PhaseClass::Decay]);
    assert_eq!(mc.classes, exact.classes);
}

#[test]
fn conditional_ratio_matches_exact_sum() {
    let model = builtin("special-0.8").unwrap();
    let cfg = SimConfig::new(400_000, 4);
    let est = simulate::estimate_conditional(&model, 4.0, &[5], &cfg).unwrap();
    let s: f64 = (5..=20u64).map(|j| 0.8f64.powi(j as i32) * nn_tau_pmf(5, j)).sum();
    assert!(est[0].z_score(s * 32.0).abs() < 4.0);
}

#[test]
fn overshoot_and_renewal_reproduce_first_passage() {
    let r2 = builtin("range2").unwrap();
    let m = r2.mean_offspring();
    let law = exact::overshoot_pgf(&r2.jump, m, 1e-13).unwrap();
    let rho = r2.decay_constant().unwrap();
    let renewal = exact::ell_bar_recursion(&law.weights, rho, 30);
    let direct = exact::ell_bar_table(&r2.jump, m, 30, 1e-13).unwrap();
    for n in 0..=30 {
        assert_abs_diff_eq!(renewal[n], direct[n], epsilon = 1e-9);
    }
}

#[test]
fn fit_on_range_two_is_close_to_rho() {
    let model = builtin("range2").unwrap();
    let tail = solve_tail_M(&model, 2000, 1e-12).unwrap();
    let end = tail.report_limit;
    let deep = analysis::fit_tail_decay(&tail, end - 100..=end).unwrap();
    let shallow = analysis::fit_tail_decay(&tail, 1..=101).unwrap();
    assert!(deep.gap < 1e-3);
    assert!(deep.gap <= shallow.gap);
    let k = analysis::kappa_estimate(&tail.ell[tail.window()], 2);
    assert!(!k.oscillation && k.half_width < 1e-6);
}

#[test]
fn perturbed_tail_is_caught() {
    let model = ModelSpec::special_binary(0.8).unwrap();
    let tail = solve_tail_M(&model, 1000, 1e-12).unwrap();
    let levels: Vec<i64> = (1..=4).collect();
    let est = simulate::estimate_tail_M(&model, &levels, &SimConfig::new(200_000, 6)).unwrap();
    let mut shifted = tail.clone();
    for n in 1..=4 {
        shifted.values[n] += 0.01;
    }
    let rep = analysis::reconcile(&shifted, &levels, &est).unwrap();
    assert!(rep.rows.iter().take(2).all(|r| r.z.abs() > 4.0));
}

#[test]
fn single_child_law_is_not_conjugable() {
    let off = OffspringDistribution::binary(0.8).unwrap();
    assert!(off.conjugate().is_err());
}
