use std::path::Path;

use brw_core::analysis::{self, ReportSettings, Route};
use brw_core::builtin;
use brw_core::exact::{self, Fault, TailSolver};
use brw_core::modelfile::load_model;
use brw_core::simulate::{self, Estimate, SimConfig};
use brw_core::{BrwError, Mode, ModelSpec};
use serde_json::json;

use crate::output::{emit, file_stem, num, RunManifest, Table};
use crate::verify::{self, VerifyOptions};
use crate::{CliError, Global, ReportArgs, RouteArg, ScanArgs, SimulateArgs, SolveArgs, VerifyArgs};

/// Loads `arg` as a file if it exists, otherwise as a built-in model name.
pub fn resolve_model(arg: &str) -> Result<ModelSpec, CliError> {
    let path = Path::new(arg);
    if path.exists() {
        return Ok(load_model(path)?);
    }
    builtin::builtin(arg).map_err(|_| {
        CliError::Usage(format!(
            "{arg:?} is neither a model file nor a built-in model ({})",
            builtin::names().collect::<Vec<_>>().join(", ")
        ))
    })
}

pub fn validate(arg: &str) -> Result<(), CliError> {
    match resolve_model(arg) {
        Ok(m) => {
            let r = m.jump.right_range();
            let l = m.jump.left_range();
            let rho = match m.mode {
                Mode::Subcritical => m.decay_constant()?,
                Mode::Supercritical => m.dual()?.decay_constant()?,
            };
            println!(
                "ok: {} ({:?}, mean offspring {}, L = {l}, R = {r}, rho = {rho})",
                m.label,
                m.mode,
                m.mean_offspring()
            );
            Ok(())
        }
        Err(CliError::Core(BrwError::Invalid(problems))) => {
            for p in &problems {
                eprintln!("violation: {p}");
            }
            Err(CliError::Core(BrwError::Invalid(problems)))
        }
        Err(e) => Err(e),
    }
}

fn sim_config(g: &Global, reps: u64, max_gen: u32, pop_cap: usize) -> SimConfig {
    let mut cfg = SimConfig::new(reps, g.seed).with_workers(g.workers);
    cfg.max_generations = max_gen;
    cfg.population_cap = pop_cap;
    cfg
}

pub fn solve(g: &Global, a: &SolveArgs) -> Result<(), CliError> {
    let model = resolve_model(&a.model)?;
    if model.mode != Mode::Subcritical {
        return Err(BrwError::Mode(format!("{} is supercritical; solve its dual instead", model.label)).into());
    }
    let tail = TailSolver::new(a.horizon, a.tol).solve(&model)?;
    let ell = exact::ell_table(&tail, tail.rho)?;
    let mut t = Table::new(&["n", "u", "ell", "residual", "bracket_gap"]);
    t.meta("model", &model.label)
        .meta("horizon", tail.horizon)
        .meta("tol", num(tail.tolerance))
        .meta("N_rep", tail.report_limit)
        .meta("rho", num(tail.rho));
    for n in tail.window() {
        t.row(vec![
            n.to_string(),
            num(tail.values[n]),
            num(ell[n]),
            num(tail.residuals[n]),
            num(tail.gaps[n]),
        ]);
    }
    let stem = file_stem(&model.label);
    let name = a.out.clone().unwrap_or_else(|| format!("{stem}-tail.csv"));
    let config = json!({ "horizon": a.horizon, "tol": a.tol });
    let path = emit(&g.out_dir, &name, &t, RunManifest::new("solve", &a.model, Some(&model), config.clone(), g.seed))?;
    println!("wrote {} (N_rep = {}, rho = {})", path.display(), tail.report_limit, tail.rho);

    if let Some(s) = a.passage_s {
        let mut t = Table::new(&["n", "s", "phi", "depth", "truncation_bound"]);
        t.meta("model", &model.label).meta("tol", num(a.tol));
        for n in 0..=a.passage_max {
            let sol = exact::first_passage_pgf(&model.jump, s, n, a.tol)?;
            t.row(vec![
                n.to_string(),
                num(s),
                num(sol.phi0()),
                sol.depth.to_string(),
                num(sol.truncation_bound),
            ]);
        }
        let name = format!("{stem}-passage.csv");
        let cfg = json!({ "s": s, "passage_max": a.passage_max, "tol": a.tol });
        let path = emit(&g.out_dir, &name, &t, RunManifest::new("solve", &a.model, Some(&model), cfg, g.seed))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn estimate_row(level: i64, e: &Estimate) -> Vec<String> {
    vec![
        level.to_string(),
        num(e.point),
        num(e.stderr),
        num(e.ci95_low),
        num(e.ci95_high),
        e.replications_used.to_string(),
        e.successes.to_string(),
        e.excluded.to_string(),
    ]
}

const ESTIMATE_COLUMNS: [&str; 8] = ["level", "point", "stderr", "ci_low", "ci_high", "reps", "successes", "excluded"];

pub fn simulate(g: &Global, a: &SimulateArgs) -> Result<(), CliError> {
    let model = resolve_model(&a.model)?;
    let cfg = sim_config(g, a.reps, a.max_gen, a.pop_cap);
    let levels = &a.levels.0;
    let mut t = Table::new(&ESTIMATE_COLUMNS);
    t.meta("model", &model.label)
        .meta("replications", cfg.replications)
        .meta("seed", cfg.master_seed)
        .meta("max_generations", cfg.max_generations)
        .meta("population_cap", cfg.population_cap);
    let mut flags = Vec::new();
    if model.mode == Mode::Supercritical {
        let ct = simulate::conditioned_tails(&model, levels, &cfg)?;
        t.meta("estimate", "P(M >= level | extinction)")
            .meta("accepted", format!("{} of {}", ct.accepted, ct.attempts))
            .meta("bias_bound", num(ct.bias_bound));
        for (n, e) in levels.iter().zip(&ct.conditioned) {
            t.row(estimate_row(*n, e));
        }
        flags.extend(ct.flags);
    } else if !a.c.is_empty() {
        let grid = simulate::estimate_g_grid(&model, &a.c, &[a.n], &cfg)?;
        t.meta("estimate", format!("g(c, {}) at level ceil(c n), c = {:?}", a.n, a.c));
        for ge in grid.iter().map(|row| &row[0]) {
            t.row(estimate_row(ge.level, &ge.estimate));
            if ge.noise_dominated {
                flags.push(format!("c = {}: noise dominated", ge.c));
            }
        }
    } else if let Some(av) = a.a {
        let est = simulate::estimate_conditional(&model, av, levels, &cfg)?;
        t.meta("estimate", format!("P(M_floor({av} level) >= level | M >= level)"));
        for (n, e) in levels.iter().zip(&est) {
            t.row(estimate_row(*n, e));
            flags.extend(e.flags.iter().cloned());
        }
    } else {
        let est = simulate::estimate_tail_M(&model, levels, &cfg)?;
        t.meta("estimate", "P(M >= level)");
        for (n, e) in levels.iter().zip(&est) {
            t.row(estimate_row(*n, e));
            flags.extend(e.flags.iter().cloned());
        }
    }
    for f in &flags {
        eprintln!("warning: {f}");
    }
    let name = a.out.clone().unwrap_or_else(|| format!("{}-simulate.csv", file_stem(&model.label)));
    let config = json!({
        "replications": cfg.replications,
        "max_generations": cfg.max_generations,
        "population_cap": cfg.population_cap,
        "levels": levels,
        "c": a.c,
        "n": a.n,
        "a": a.a,
        "workers": cfg.workers,
    });
    let path = emit(&g.out_dir, &name, &t, RunManifest::new("simulate", &a.model, Some(&model), config, g.seed))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn scan(g: &Global, a: &ScanArgs) -> Result<(), CliError> {
    let model = resolve_model(&a.model)?;
    let use_exact = match a.route {
        Some(RouteArg::Exact) => true,
        Some(RouteArg::Mc) => false,
        None => model.is_special_binary(),
    };
    let cfg = sim_config(g, a.reps, a.max_gen, 1_000_000);
    let route = if use_exact { Route::ExactSpecial } else { Route::MonteCarlo(cfg.clone()) };
    let scan = analysis::phase_scan(&model, &a.c, &a.n, &route)?;
    let mut t = Table::new(&["c", "n", "g", "stderr", "class"]);
    t.meta("model", &model.label)
        .meta("route", if use_exact { "exact" } else { "monte-carlo" })
        .meta("slope_tol", num(scan.slope_tol))
        .meta(
            "bracket",
            format!(
                "[{}, {}]",
                scan.bracket.0.map_or("none".into(), num),
                scan.bracket.1.map_or("none".into(), num)
            ),
        );
    if let Some(c) = scan.reference_threshold {
        t.meta("reference_threshold", num(c));
    }
    for (i, &c) in scan.c_grid.iter().enumerate() {
        for (j, &n) in scan.n_grid.iter().enumerate() {
            t.row(vec![
                num(c),
                n.to_string(),
                num(scan.g[i][j]),
                num(scan.stderr[i][j]),
                scan.classes[i].to_string(),
            ]);
        }
    }
    let name = a.out.clone().unwrap_or_else(|| format!("{}-scan.csv", file_stem(&model.label)));
    let config = json!({
        "c": a.c,
        "n": a.n,
        "route": if use_exact { "exact" } else { "mc" },
        "replications": a.reps,
        "max_generations": a.max_gen,
        "workers": g.workers,
    });
    let path = emit(&g.out_dir, &name, &t, RunManifest::new("scan", &a.model, Some(&model), config, g.seed))?;
    println!("wrote {}", path.display());
    for (c, k) in scan.c_grid.iter().zip(&scan.classes) {
        println!("c = {c}: {k}");
    }
    Ok(())
}

pub fn report(g: &Global, a: &ReportArgs) -> Result<(), CliError> {
    let model = resolve_model(&a.model)?;
    let mut settings = ReportSettings {
        horizon: a.horizon,
        tol: a.tol,
        passage_levels: a.passage_levels,
        ..ReportSettings::default()
    };
    settings.sim.replications = a.reps;
    settings.sim.master_seed = g.seed;
    settings.sim.workers = g.workers;
    let lines = analysis::claims_report(&model, &settings)?;
    println!("{}", model.label);
    for l in &lines {
        println!("  {l}");
    }
    Ok(())
}

pub fn verify(g: &Global, a: &VerifyArgs) -> Result<(), CliError> {
    let fault = match a.inject_fault.as_deref() {
        None => None,
        Some("negate-q") => Some(Fault::NegateQ),
        Some(other) => return Err(CliError::Usage(format!("unknown fault {other:?}"))),
    };
    let only = if a.only.is_empty() { None } else { Some(a.only.clone()) };
    if let Some(ids) = &only {
        for id in ids {
            if !verify::CRITERIA.iter().any(|(c, _)| c == id) {
                return Err(CliError::Usage(format!("unknown criterion {id:?}")));
            }
        }
    }
    let opts = VerifyOptions {
        seed: g.seed,
        workers: g.workers,
        only,
        fault,
    };
    let results = verify::run(&opts, |r| println!("{r}"));
    println!();
    for line in verify::theorem_summary(&results) {
        println!("{line}");
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
    if failed.is_empty() {
        println!("\nall {} criteria passed", results.len());
        Ok(())
    } else {
        Err(CliError::Acceptance(failed))
    }
}
