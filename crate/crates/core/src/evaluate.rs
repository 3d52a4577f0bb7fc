//! Monte-Carlo estimates of the conditional mean-variance objective and the
//! discounting study.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bsde::{mv_generator, solve, BsdeSolution, Columns, SolverConfig, ZeroTerminal};
use crate::error::{invalid, Error, Result};
use crate::model::{DiscountPreference, MarketModel, RunningDiscount, TerminalDiscount};
use crate::policy::{equilibrium_policy, MyopicSource, PolicyField};
use crate::simulate::{simulate_factor, PathEnsemble, TimeGrid, WealthPath};

/// Number of nonoverlapping batches behind the standard errors.
pub const N_BATCHES: usize = 20;
/// Paths with `|W_s|` below this are excluded from the ratio statistic.
pub const WEALTH_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveEstimate {
    pub times: Vec<f64>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_paths: usize,
    /// Paths excluded at each evaluation time.
    pub excluded: Vec<usize>,
    pub policy_id: String,
}

impl ObjectiveEstimate {
    /// True when the `k`-SE bands of the two estimates overlap at every time.
    pub fn bands_overlap(&self, other: &ObjectiveEstimate, k: f64) -> bool {
        self.estimates
            .iter()
            .zip(&self.std_errors)
            .zip(other.estimates.iter().zip(&other.std_errors))
            .all(|((a, sa), (b, sb))| (a - b).abs() <= k * (sa + sb))
    }
}

/// `mean - (gamma / 2) var` of a sample.
fn mv_statistic(xs: &[f64], gamma: f64) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    mean - 0.5 * gamma * var
}

/// Evaluation times `s_j = j T / 10`, `j = 0..=10`, snapped to the grid.
pub fn evaluation_steps(grid: &TimeGrid) -> Vec<usize> {
    (0..=10).map(|j| grid.nearest_index(j as f64 / 10.0 * grid.horizon)).collect()
}

/// `J(s) = mean(W_T / W_s) - (gamma / 2) var(W_T / W_s)` at the eleven
/// evaluation times, with batch-means standard errors.
pub fn estimate_objective(wealth: &WealthPath, gamma: f64) -> Result<ObjectiveEstimate> {
    if wealth.n_paths < 2 * N_BATCHES {
        return Err(invalid("n_paths", format!("need at least {} paths", 2 * N_BATCHES)));
    }
    let n = wealth.grid.n_steps;
    let steps = evaluation_steps(&wealth.grid);
    let mut estimates = Vec::with_capacity(steps.len());
    let mut std_errors = Vec::with_capacity(steps.len());
    let mut excluded = Vec::with_capacity(steps.len());
    for &i in &steps {
        let mut kept = Vec::with_capacity(wealth.n_paths);
        for m in 0..wealth.n_paths {
            let ws = wealth.at(m, i);
            if ws.abs() < WEALTH_FLOOR || !ws.is_finite() {
                continue;
            }
            kept.push(wealth.at(m, n) / ws);
        }
        excluded.push(wealth.n_paths - kept.len());
        if kept.len() < 2 * N_BATCHES {
            return Err(invalid("wealth", format!("too few usable paths at step {i}")));
        }
        estimates.push(mv_statistic(&kept, gamma));
        let size = kept.len() / N_BATCHES;
        let batches: Vec<f64> = (0..N_BATCHES)
            .map(|b| mv_statistic(&kept[b * size..(b + 1) * size], gamma))
            .collect();
        let mean = batches.iter().sum::<f64>() / N_BATCHES as f64;
        let var = batches.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (N_BATCHES - 1) as f64;
        std_errors.push((var / N_BATCHES as f64).sqrt());
    }
    if estimates.iter().any(|e| !e.is_finite()) {
        return Err(Error::Unsupported("objective estimate is not finite".into()));
    }
    Ok(ObjectiveEstimate {
        times: steps.iter().map(|&i| wealth.grid.time(i)).collect(),
        estimates,
        std_errors,
        n_paths: wealth.n_paths,
        excluded,
        policy_id: wealth.policy_used.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_steps: usize,
    /// Paths used to fit the BSDE.
    pub train_paths: usize,
    /// Paths along which the policies are compared.
    pub eval_paths: usize,
    pub solver: SolverConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscountRow {
    pub s: f64,
    pub lambda_coef: f64,
    /// Mean of `(u_B - u_disc) / hedging(u_B)` over usable paths.
    pub avg_rel_diff: f64,
    /// Mean of its absolute value.
    pub avg_abs_rel_diff: f64,
    pub median_rel_diff: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// Hedging magnitude below which a path is left out of the relative difference.
pub const HEDGE_FLOOR: f64 = 1e-10;

/// Exponential discounting `eta = mu = exp(-c (. - s))`, so `lambda(s, tau) = e^{c (T - tau)}`.
pub fn exponential_discount(gamma: f64, lambda_coef: f64) -> Result<DiscountPreference> {
    DiscountPreference::new(
        gamma,
        crate::model::RhoWeight::Constant { value: 1.0 },
        RunningDiscount::Exponential { rate: lambda_coef },
        TerminalDiscount::Exponential { rate: lambda_coef },
    )
}

/// Solves the mean-variance BSDE on `train` and assembles the numerical policy.
///
/// Without a running term only the last column feeds the policy, so the
/// interior columns are skipped. Convergence is left to the caller through
/// the returned diagnostics.
pub fn fit_policy(
    model: &MarketModel,
    train: &PathEnsemble,
    solver: &SolverConfig,
    myopic: MyopicSource,
) -> Result<(PolicyField, Arc<BsdeSolution>)> {
    let solver = if model.pref.has_running_term() {
        solver.clone()
    } else {
        SolverConfig {
            columns: Columns::Only(vec![]),
            ..solver.clone()
        }
    };
    let generator = mv_generator(model, &train.grid);
    let sol = Arc::new(solve(&generator, train, &solver, Arc::new(ZeroTerminal))?);
    let policy = equilibrium_policy(model, myopic, Some(sol.clone()))?;
    Ok((policy, sol))
}

fn numerical_policy(model: &MarketModel, config: &StudyConfig) -> Result<PolicyField> {
    let grid = TimeGrid::new(config.n_steps, model.horizon)?;
    let train = simulate_factor(model, grid, config.train_paths, config.seed)?;
    let (policy, sol) = fit_policy(model, &train, &config.solver, MyopicSource::ClosedForm)?;
    if !sol.diagnostics.converged() {
        return Err(Error::NotConverged {
            iterations: config.solver.layer_sweeps,
            residual: sol.diagnostics.max_final_delta().unwrap_or(f64::NAN),
        });
    }
    Ok(policy)
}

/// Relative hedging differences between the plain terminal objective and the
/// exponentially discounted one, along common evaluation paths.
pub fn discount_study(model_base: &MarketModel, lambda_coefs: &[f64], config: &StudyConfig) -> Result<Vec<DiscountRow>> {
    if lambda_coefs.is_empty() {
        return Err(invalid("lambda_coefs", "need at least one coefficient"));
    }
    let base_model = model_base.with_pref(DiscountPreference::terminal(model_base.pref.gamma));
    let grid = TimeGrid::new(config.n_steps, model_base.horizon)?;
    let eval = simulate_factor(&base_model, grid, config.eval_paths, config.seed.wrapping_add(1))?;
    let base_policy = numerical_policy(&base_model, config)?;
    let steps = evaluation_steps(&grid);

    let mut rows = Vec::new();
    for &c in lambda_coefs {
        let model = model_base.with_pref(exponential_discount(model_base.pref.gamma, c)?);
        let policy = numerical_policy(&model, config)?;
        for &i in &steps {
            let s = grid.time(i);
            let mut diffs = Vec::with_capacity(eval.n_paths);
            for m in 0..eval.n_paths {
                let r = eval.factor_at(m, i);
                let (mb, hb) = base_policy.components(i, s, r)?;
                let (md, hd) = policy.components(i, s, r)?;
                if hb.abs() < HEDGE_FLOOR {
                    continue;
                }
                diffs.push(((mb + hb) - (md + hd)) / hb);
            }
            let n_used = diffs.len();
            let (avg, avg_abs, median) = if n_used == 0 {
                (0.0, 0.0, 0.0)
            } else {
                let avg = diffs.iter().sum::<f64>() / n_used as f64;
                let avg_abs = diffs.iter().map(|d| d.abs()).sum::<f64>() / n_used as f64;
                let mut sorted = diffs.clone();
                sorted.sort_by(f64::total_cmp);
                (avg, avg_abs, sorted[n_used / 2])
            };
            rows.push(DiscountRow {
                s,
                lambda_coef: c,
                avg_rel_diff: avg,
                avg_abs_rel_diff: avg_abs,
                median_rel_diff: median,
                n_used,
                n_excluded: eval.n_paths - n_used,
            });
        }
    }
    Ok(rows)
}
