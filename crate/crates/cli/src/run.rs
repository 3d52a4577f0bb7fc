use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use mvbsde::baselines::{miscalibrated_model, AnalyticBaseline};
use mvbsde::bsde::{mv_generator, solve, BsdeSolution, SolveDiagnostics, ZeroTerminal};
use mvbsde::evaluate::{discount_study, estimate_objective, fit_policy, StudyConfig};
use mvbsde::model::{validate_model, MarketModel, ValidationReport};
use mvbsde::output;
use mvbsde::policy::{MyopicSource, PolicyField};
use mvbsde::simulate::{simulate_factor, simulate_wealth, PathEnsemble, TimeGrid};
use mvbsde::statedep::{solve_phi, StateDepProblem};
use mvbsde::volterra::{build_problem, solve as solve_volterra};

use crate::config::{Baseline, ExperimentConfig, Kind, Myopic};

/// How a run ended, mapped to the process exit code by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    ValidationFailed,
    NotConverged,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn run(kind: Kind, cfg: &ExperimentConfig, dir: &Path) -> Result<Status> {
    if kind == Kind::Statedep {
        return statedep(cfg, dir);
    }
    let model = cfg.market_model()?;
    let report = validate_model(&model)?;
    write_json(dir, "validation.json", &report)?;
    if !report.passed() {
        print_report(&report);
        return Ok(Status::ValidationFailed);
    }
    match kind {
        Kind::Validate => {
            print_report(&report);
            Ok(Status::Done)
        }
        Kind::Simulate => {
            let train = training_paths(cfg, &model)?;
            let mut out = create(dir, "paths.csv")?;
            output::write_paths(&mut out, &train)?;
            out.flush()?;
            Ok(Status::Done)
        }
        Kind::SolveBsde => {
            let train = training_paths(cfg, &model)?;
            let sol = solve(
                &mv_generator(&model, &train.grid),
                &train,
                &cfg.solver_config(),
                Arc::new(ZeroTerminal),
            )?;
            let mut out = create(dir, "coefficients.csv")?;
            output::write_coefficients(&mut out, &sol)?;
            out.flush()?;
            Ok(finish_diagnostics(dir, &sol.diagnostics)?)
        }
        Kind::Policy | Kind::Evaluate | Kind::Compare => policy_family(kind, cfg, &model, dir),
        Kind::DiscountStudy => {
            let solver = cfg.solver();
            let study = StudyConfig {
                n_steps: solver.n_steps,
                train_paths: solver.n_paths,
                eval_paths: solver.eval_paths.unwrap_or(solver.n_paths),
                solver: cfg.solver_config(),
                seed: cfg.seed,
            };
            let block = cfg.discount_study.as_ref().context("[discount_study] block is required")?;
            let rows = discount_study(&model, &block.lambda_coefs, &study)?;
            let mut out = create(dir, "discount.csv")?;
            output::write_discount(&mut out, &rows)?;
            out.flush()?;
            Ok(Status::Done)
        }
        Kind::Statedep => unreachable!("handled above"),
    }
}

fn print_report(report: &ValidationReport) {
    let verdict = if report.passed() { "passed" } else { "failed" };
    println!("validation {verdict}");
    print!("{report}");
}

fn finish_diagnostics(dir: &Path, diagnostics: &SolveDiagnostics) -> Result<Status> {
    write_json(dir, "diagnostics.json", diagnostics)?;
    if diagnostics.converged() {
        Ok(Status::Done)
    } else {
        eprintln!(
            "layer sweeps did not converge (largest final delta {:?})",
            diagnostics.max_final_delta()
        );
        Ok(Status::NotConverged)
    }
}

fn grid(cfg: &ExperimentConfig, model: &MarketModel) -> Result<TimeGrid> {
    Ok(TimeGrid::new(cfg.solver().n_steps, model.horizon)?)
}

fn training_paths(cfg: &ExperimentConfig, model: &MarketModel) -> Result<PathEnsemble> {
    Ok(simulate_factor(model, grid(cfg, model)?, cfg.solver().n_paths, cfg.seed)?)
}

fn evaluation_paths(cfg: &ExperimentConfig, model: &MarketModel) -> Result<PathEnsemble> {
    let solver = cfg.solver();
    let n = solver.eval_paths.unwrap_or(solver.n_paths);
    Ok(simulate_factor(model, grid(cfg, model)?, n, cfg.seed.wrapping_add(1))?)
}

fn policy_family(kind: Kind, cfg: &ExperimentConfig, model: &MarketModel, dir: &Path) -> Result<Status> {
    let block = cfg.policy.clone().unwrap_or_default();
    let train = training_paths(cfg, model)?;
    let eval = evaluation_paths(cfg, model)?;
    if block.trajectory >= eval.n_paths {
        bail!("policy.trajectory {} is beyond the {} evaluation paths", block.trajectory, eval.n_paths);
    }

    let myopic = match block.myopic {
        Myopic::ClosedForm => MyopicSource::ClosedForm,
        Myopic::Volterra => {
            // deterministic market coefficients at the initial factor level
            let coeffs = mvbsde::model::coefficients_at(model, 0.0, model.ckls.r0_factor)?;
            let problem = build_problem(
                &model.pref,
                |_| coeffs.beta_excess,
                |_| coeffs.sigma_stock,
                model.horizon,
                block.n_quad,
            )?;
            let sol = solve_volterra(&problem)?;
            let mut out = create(dir, "volterra.csv")?;
            output::write_volterra(&mut out, &sol, &model.pref)?;
            out.flush()?;
            MyopicSource::Volterra(Arc::new(sol))
        }
    };
    let (numerical, sol): (PolicyField, Arc<BsdeSolution>) = fit_policy(model, &train, &cfg.solver_config(), myopic)?;
    let status = finish_diagnostics(dir, &sol.diagnostics)?;

    let path = eval.factor_path(block.trajectory);
    let mut policies = vec![numerical];
    if kind == Kind::Compare {
        let baseline_model = match cfg.compare.clone().unwrap_or_default().baseline {
            Baseline::Analytic => model.clone(),
            Baseline::CalibratedCir => miscalibrated_model(model, &train)?,
        };
        let baseline = AnalyticBaseline::new(&baseline_model)?;
        let mut out = create(dir, "baseline.csv")?;
        output::write_baseline(&mut out, &baseline, &eval.grid, path)?;
        out.flush()?;
        let mut policy = baseline.policy();
        if baseline_model != *model {
            policy = policy.with_id("calibrated-cir");
        }
        policies.push(policy);
    }

    let mut out = create(dir, "policy_curves.csv")?;
    output::write_policy_header(&mut out)?;
    for p in &policies {
        output::write_policy_curve(&mut out, p, &eval.grid, path)?;
    }
    out.flush()?;

    if kind != Kind::Policy {
        let mut out = create(dir, "objective_curves.csv")?;
        output::write_objective_header(&mut out)?;
        for p in &policies {
            let wealth = simulate_wealth(model, &eval, p, 1.0)?;
            output::write_objective(&mut out, &estimate_objective(&wealth, model.pref.gamma)?)?;
        }
        out.flush()?;
    }
    Ok(status)
}

fn statedep(cfg: &ExperimentConfig, dir: &Path) -> Result<Status> {
    let block = cfg.statedep.as_ref().context("[statedep] block is required")?;
    let pref = cfg.preference()?;
    let problem = StateDepProblem::new(
        |s| block.beta.value(s),
        |s| block.sigma.value(s),
        block.r0,
        &pref,
        block.horizon,
        block.n_grid,
    )?;
    let sol = solve_phi(&problem, block.tol, block.max_iter)?;
    let mut out = create(dir, "phi.csv")?;
    output::write_phi(&mut out, &sol)?;
    out.flush()?;
    #[derive(Serialize)]
    struct Summary {
        residual: f64,
        iterations: usize,
    }
    write_json(
        dir,
        "statedep.json",
        &Summary {
            residual: sol.residual,
            iterations: sol.iterations,
        },
    )?;
    Ok(Status::Done)
}
