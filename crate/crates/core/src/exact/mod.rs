//! Deterministic numerics: the tail solver, first-passage systems and closed forms.

pub mod passage;
pub mod special;
pub mod tail;

pub use passage::{
    ell_bar_recursion, ell_bar_table, first_passage_pgf, overshoot_pgf, supermultiplicativity_check,
    FirstPassageSolution, OvershootLaw, PairCheck, SupermultiplicativityReport,
};
pub use special::{
    finite_range_g, finite_range_limit_terms, finite_range_theta_star, lambda_of_a, nn_tau_log_pmf, nn_tau_pmf,
    nn_tau_window_log_prob, special_g, special_log_mn_tail, special_mn_tail, special_theta_star,
};
pub use tail::{
    chernoff_bound_Mn, chernoff_summand_bound, ell_table, log_chernoff_bound, solve_tail_M, Fault, TailSolver,
    TailTable,
};
