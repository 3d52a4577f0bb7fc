//! Equilibrium controls: myopic demand from the Volterra coefficient plus
//! hedging demand from the BSDE `Z` fields.

use std::sync::Arc;

use crate::bsde::{lambda_weights, BsdeSolution};
use crate::error::{Error, Result};
use crate::model::{coefficients_at, factor_pow, MarketModel};
use crate::simulate::TimeGrid;
use crate::volterra::VolterraSolution;

/// Source of the ratio `A(s) / (1 + int_s^T lambda)`, which equals `rho(s)`.
#[derive(Debug, Clone)]
pub enum MyopicSource {
    ClosedForm,
    Volterra(Arc<VolterraSolution>),
}

impl MyopicSource {
    fn weight(&self, model: &MarketModel, s: f64) -> f64 {
        match self {
            MyopicSource::ClosedForm => model.pref.rho(s),
            MyopicSource::Volterra(sol) => sol.eval(s) / (1.0 + model.pref.lambda_integral(s, model.horizon)),
        }
    }
}

type ExternalFn = dyn Fn(usize, f64, f64) -> Result<(f64, f64)> + Send + Sync;

#[derive(Clone)]
enum Kind {
    Complete {
        model: MarketModel,
        myopic: MyopicSource,
    },
    Incomplete {
        model: MarketModel,
        myopic: MyopicSource,
        bsde: Arc<BsdeSolution>,
        /// `lambda(s_i, t_n) w_n` for `n >= i` and the denominator, per step.
        weights: Vec<(Vec<f64>, f64)>,
    },
    Constant(f64),
    External {
        grid: Option<TimeGrid>,
        f: Arc<ExternalFn>,
    },
}

/// A control `u(s, r)` evaluated at grid steps; it never depends on wealth.
#[derive(Clone)]
pub struct PolicyField {
    id: String,
    kind: Kind,
}

impl std::fmt::Debug for PolicyField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            Kind::Complete { .. } => "complete",
            Kind::Incomplete { .. } => "incomplete",
            Kind::Constant(_) => "constant",
            Kind::External { .. } => "external",
        };
        f.debug_struct("PolicyField").field("id", &self.id).field("kind", &kind).finish()
    }
}

impl PolicyField {
    pub fn constant(u: f64) -> Self {
        Self {
            id: format!("constant({u})"),
            kind: Kind::Constant(u),
        }
    }

    /// Wraps a function returning `(myopic, hedging)` at `(step, s, r)`.
    pub fn external(
        id: impl Into<String>,
        grid: Option<TimeGrid>,
        f: impl Fn(usize, f64, f64) -> Result<(f64, f64)> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            kind: Kind::External { grid, f: Arc::new(f) },
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::Complete { .. } => "complete",
            Kind::Incomplete { .. } => "incomplete",
            Kind::Constant(_) => "constant",
            Kind::External { .. } => "external-table",
        }
    }

    /// Grid the policy is tied to, if any.
    pub fn grid(&self) -> Option<TimeGrid> {
        match &self.kind {
            Kind::Incomplete { bsde, .. } => Some(bsde.grid),
            Kind::External { grid, .. } => *grid,
            _ => None,
        }
    }

    /// `(myopic, hedging)` at grid step `step`, time `s`, factor `r`.
    pub fn components(&self, step: usize, s: f64, r: f64) -> Result<(f64, f64)> {
        match &self.kind {
            Kind::Constant(u) => Ok((*u, 0.0)),
            Kind::External { f, .. } => f(step, s, r),
            Kind::Complete { model, myopic } => Ok((complete_myopic(model, myopic, s, r)?, 0.0)),
            Kind::Incomplete {
                model,
                myopic,
                bsde,
                weights,
            } => {
                let m = model_myopic(model, myopic, s, r)?;
                let (w, denom) = weights.get(step).ok_or(Error::DimensionMismatch {
                    context: "policy step",
                    expected: weights.len(),
                    got: step,
                })?;
                Ok((m, hedging_with(model, bsde, step, r, w, *denom)?))
            }
        }
    }

    pub fn eval(&self, step: usize, s: f64, r: f64) -> Result<f64> {
        let (m, h) = self.components(step, s, r)?;
        Ok(m + h)
    }
}

fn discount(model: &MarketModel, s: f64) -> f64 {
    (-model.stock.r0 * (model.horizon - s)).exp()
}

/// `(delta rho(s) / gamma) r^{kappa - 1/(2 alpha)} e^{-r0 (T - s)}`.
pub fn myopic_demand(model: &MarketModel, s: f64, r: f64) -> Result<f64> {
    model_myopic(model, &MyopicSource::ClosedForm, s, r)
}

fn model_myopic(model: &MarketModel, source: &MyopicSource, s: f64, r: f64) -> Result<f64> {
    let exponent = model.kappa() - model.stock.vol_exponent();
    // the factor itself lives on r > 0 when its own powers are fractional
    if r <= 0.0 && (model.kappa().fract() != 0.0 || model.stock.vol_exponent().fract() != 0.0) {
        return Err(Error::Domain {
            what: "myopic demand",
            value: r,
        });
    }
    let weight = source.weight(model, s);
    Ok(model.stock.delta * weight / model.pref.gamma * factor_pow(r, exponent, "myopic demand")? * discount(model, s))
}

/// `(weight / gamma) beta / sigma^2 e^{-r0 (T - s)}`.
fn complete_myopic(model: &MarketModel, source: &MyopicSource, s: f64, r: f64) -> Result<f64> {
    let c = coefficients_at(model, s, r)?;
    let weight = source.weight(model, s);
    Ok(weight / model.pref.gamma * c.beta_excess / (c.sigma_stock * c.sigma_stock) * discount(model, s))
}

/// `-rho_corr r^{-1/(2 alpha)} (sum_n lambda Z^n w_n + Z^N) / (1 + sum_n lambda w_n) e^{-r0 (T - s)}`.
pub fn hedging_demand(model: &MarketModel, sol: &BsdeSolution, s_idx: usize, r: f64) -> Result<f64> {
    let n = sol.grid.n_steps;
    if s_idx > n {
        return Err(Error::OutOfTriangle {
            t_idx: s_idx,
            tau_idx: n,
            n_steps: n,
        });
    }
    let (w, denom) = lambda_weights(model, &sol.grid, s_idx);
    hedging_with(model, sol, s_idx, r, &w, denom)
}

fn hedging_with(model: &MarketModel, sol: &BsdeSolution, s_idx: usize, r: f64, w: &[f64], denom: f64) -> Result<f64> {
    let n = sol.grid.n_steps;
    if s_idx >= n {
        return Ok(0.0);
    }
    let mut numerator = sol.eval_z(s_idx, n, r)?;
    for (j, &wj) in w.iter().enumerate().skip(1) {
        if wj != 0.0 {
            numerator += wj * sol.eval_z(s_idx, s_idx + j, r)?;
        }
    }
    let s = sol.grid.time(s_idx);
    let scale = factor_pow(r, -model.stock.vol_exponent(), "hedging demand")?;
    Ok(-model.stock.rho_corr * scale * numerator / denom * discount(model, s))
}

fn is_complete(model: &MarketModel) -> bool {
    model.stock.vol_exponent() == 0.0 && model.stock.excess_exponent(model.kappa()) == 0.0
}

/// Assembles the equilibrium control.
///
/// Without a BSDE solution the policy is myopic only, which is exact when the
/// market is complete (`beta`, `sigma` free of `R`) or uncorrelated.
pub fn equilibrium_policy(
    model: &MarketModel,
    myopic: MyopicSource,
    bsde: Option<Arc<BsdeSolution>>,
) -> Result<PolicyField> {
    if let MyopicSource::Volterra(sol) = &myopic {
        if (sol.horizon() - model.horizon).abs() > 1e-12 * model.horizon {
            return Err(Error::Unsupported("Volterra solution horizon differs from the model".into()));
        }
    }
    match bsde {
        None => {
            if is_complete(model) {
                Ok(PolicyField {
                    id: "complete".into(),
                    kind: Kind::Complete {
                        model: model.clone(),
                        myopic,
                    },
                })
            } else if model.stock.rho_corr == 0.0 {
                let model = model.clone();
                Ok(PolicyField::external("myopic", None, move |_, s, r| {
                    Ok((model_myopic(&model, &myopic, s, r)?, 0.0))
                }))
            } else {
                Err(Error::Unsupported(
                    "correlated incomplete market needs a BSDE solution for the hedging demand".into(),
                ))
            }
        }
        Some(sol) => {
            if (sol.grid.horizon - model.horizon).abs() > 1e-12 * model.horizon {
                return Err(Error::Unsupported("BSDE grid horizon differs from the model".into()));
            }
            let weights = (0..=sol.grid.n_steps)
                .map(|i| lambda_weights(model, &sol.grid, i))
                .collect();
            Ok(PolicyField {
                id: "numerical".into(),
                kind: Kind::Incomplete {
                    model: model.clone(),
                    myopic,
                    bsde: sol,
                    weights,
                },
            })
        }
    }
}

/// Policy curve `(t, R, u_myopic, u_hedge, u_total)` along one factor path.
pub fn policy_curve(policy: &PolicyField, grid: &TimeGrid, path: &[f64]) -> Result<Vec<[f64; 5]>> {
    (0..=grid.n_steps)
        .map(|i| {
            let s = grid.time(i);
            let (m, h) = policy.components(i, s, path[i])?;
            Ok([s, path[i], m, h, m + h])
        })
        .collect()
}
