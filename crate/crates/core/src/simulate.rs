//! Factor and wealth path simulation on a uniform grid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{factor_pow_truncated, MarketModel};
use crate::policy::PolicyField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_steps: usize,
    pub horizon: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, horizon: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid("horizon", format!("{horizon} must be finite and positive")));
        }
        Ok(Self { n_steps, horizon })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.time(i)).collect()
    }

    /// Grid index closest to `s`.
    pub fn nearest_index(&self, s: f64) -> usize {
        let i = (s / self.dt()).round();
        (i.max(0.0) as usize).min(self.n_steps)
    }

    /// Trapezoid weights for `int_{t_i}^{T}` on the nodes `i..=N`.
    pub fn tail_weights(&self, i: usize) -> Vec<f64> {
        let dt = self.dt();
        let len = self.n_steps + 1 - i.min(self.n_steps);
        if len == 1 {
            return vec![0.0];
        }
        let mut w = vec![dt; len];
        w[0] = 0.5 * dt;
        w[len - 1] = 0.5 * dt;
        w
    }
}

/// Discretization of the factor SDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorScheme {
    /// Euler with `max(R, 0)` inside drift and diffusion.
    #[default]
    FullTruncationEuler,
    /// Exact Gaussian transition; only for `p = 0`.
    ExactGaussian,
}

/// Simulated factor paths with their Brownian increments, stored row-major by path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub n_paths: usize,
    /// `n_paths x (N + 1)`.
    pub factor: Vec<f64>,
    /// `n_paths x N`.
    pub db_factor: Vec<f64>,
    /// `n_paths x N`, correlated with `db_factor`.
    pub db_stock: Vec<f64>,
    pub seed: u64,
}

impl PathEnsemble {
    pub fn factor_path(&self, m: usize) -> &[f64] {
        let n = self.grid.n_steps + 1;
        &self.factor[m * n..(m + 1) * n]
    }

    pub fn factor_at(&self, m: usize, i: usize) -> f64 {
        self.factor[m * (self.grid.n_steps + 1) + i]
    }

    pub fn db_factor_at(&self, m: usize, i: usize) -> f64 {
        self.db_factor[m * self.grid.n_steps + i]
    }

    pub fn db_stock_at(&self, m: usize, i: usize) -> f64 {
        self.db_stock[m * self.grid.n_steps + i]
    }

    /// Factor values of every path at step `i`.
    pub fn cross_section(&self, i: usize) -> Vec<f64> {
        (0..self.n_paths).map(|m| self.factor_at(m, i)).collect()
    }

    pub fn db_factor_section(&self, i: usize) -> Vec<f64> {
        (0..self.n_paths).map(|m| self.db_factor_at(m, i)).collect()
    }

    /// Median of the factor at step `i`.
    pub fn median(&self, i: usize) -> f64 {
        let mut xs = self.cross_section(i);
        xs.sort_by(f64::total_cmp);
        let n = xs.len();
        if n % 2 == 1 {
            xs[n / 2]
        } else {
            0.5 * (xs[n / 2 - 1] + xs[n / 2])
        }
    }
}

/// Full-truncation Euler paths; see [`simulate_factor_with`].
pub fn simulate_factor(model: &MarketModel, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    simulate_factor_with(model, grid, n_paths, seed, FactorScheme::FullTruncationEuler)
}

/// Simulates `n_paths` factor paths.
///
/// Path `m` draws from its own ChaCha stream `m` under `seed`, so a path does
/// not depend on `n_paths` or on thread scheduling.
pub fn simulate_factor_with(
    model: &MarketModel,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    scheme: FactorScheme,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be at least 1"));
    }
    let ckls = model.ckls;
    if scheme == FactorScheme::ExactGaussian && ckls.p != 0.0 {
        return Err(Error::Unsupported("exact Gaussian transition needs p = 0".into()));
    }
    let n = grid.n_steps;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let rho = model.stock.rho_corr;
    let rho_perp = (1.0 - rho * rho).sqrt();

    // exact OU transition: mean reversion factor, drift and noise scale
    let decay = (-ckls.b * dt).exp();
    let mean_shift = ckls.a * crate::model::decay_integral(ckls.b, dt);
    let exact_sd = ckls.sigma * (crate::model::decay_integral(2.0 * ckls.b, dt)).sqrt();

    let mut factor = vec![0.0; n_paths * (n + 1)];
    let mut db_factor = vec![0.0; n_paths * n];
    let mut db_stock = vec![0.0; n_paths * n];

    factor
        .par_chunks_mut(n + 1)
        .zip(db_factor.par_chunks_mut(n))
        .zip(db_stock.par_chunks_mut(n))
        .enumerate()
        .for_each(|(m, ((path, dbr), dbs))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(m as u64);
            path[0] = ckls.r0_factor;
            for i in 0..n {
                let z_r: f64 = StandardNormal.sample(&mut rng);
                let z_perp: f64 = StandardNormal.sample(&mut rng);
                let r = path[i];
                path[i + 1] = match scheme {
                    FactorScheme::FullTruncationEuler => {
                        // Gaussian factors live on the whole line
                        let r_pos = if ckls.p == 0.0 { r } else { r.max(0.0) };
                        r + (ckls.a - ckls.b * r_pos) * dt
                            + ckls.sigma * factor_pow_truncated(r_pos, ckls.p) * z_r * sqrt_dt
                    }
                    FactorScheme::ExactGaussian => r * decay + mean_shift + exact_sd * z_r,
                };
                dbr[i] = z_r * sqrt_dt;
                dbs[i] = (rho * z_r + rho_perp * z_perp) * sqrt_dt;
            }
        });

    Ok(PathEnsemble {
        grid,
        n_paths,
        factor,
        db_factor,
        db_stock,
        seed,
    })
}

/// Wealth paths, stored row-major by path.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthPath {
    pub grid: TimeGrid,
    pub n_paths: usize,
    /// `n_paths x (N + 1)`.
    pub wealth: Vec<f64>,
    pub policy_used: String,
}

impl WealthPath {
    pub fn at(&self, m: usize, i: usize) -> f64 {
        self.wealth[m * (self.grid.n_steps + 1) + i]
    }
}

/// Euler wealth dynamics `dW = (r0 W + u beta) ds + u sigma_S dB` driven by the
/// ensemble's stock increments.
pub fn simulate_wealth(
    model: &MarketModel,
    ensemble: &PathEnsemble,
    policy: &PolicyField,
    w0: f64,
) -> Result<WealthPath> {
    let grid = ensemble.grid;
    if let Some(policy_grid) = policy.grid() {
        if policy_grid != grid {
            return Err(Error::DimensionMismatch {
                context: "policy grid vs ensemble grid",
                expected: grid.n_steps,
                got: policy_grid.n_steps,
            });
        }
    }
    let n = grid.n_steps;
    let dt = grid.dt();
    let r0 = model.stock.r0;
    let mut wealth = vec![0.0; ensemble.n_paths * (n + 1)];
    wealth
        .par_chunks_mut(n + 1)
        .enumerate()
        .try_for_each(|(m, row)| -> Result<()> {
            row[0] = w0;
            for i in 0..n {
                let r = ensemble.factor_at(m, i);
                let u = policy.eval(i, grid.time(i), r)?;
                let (excess, vol) = model.stock_coefficients_truncated(r);
                let w = row[i];
                row[i + 1] = w + (r0 * w + u * excess) * dt + u * vol * ensemble.db_stock_at(m, i);
            }
            Ok(())
        })?;
    Ok(WealthPath {
        grid,
        n_paths: ensemble.n_paths,
        wealth,
        policy_used: policy.id().to_string(),
    })
}
