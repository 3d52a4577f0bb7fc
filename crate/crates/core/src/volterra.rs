//! Nyström solver for the Volterra equation of the second kind
//! `A(s) = Theta(s) + int_s^T K(s, tau) A(tau) d tau` that yields the myopic
//! coefficient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::DiscountPreference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    Trapezoid,
    /// Composite Simpson, closing with a 3/8 panel on an odd interval count.
    #[default]
    Simpson,
}

/// Weights for `int_{x_i}^{x_n}` on uniform nodes with spacing `h`, returned
/// as `(first, w)` so that the rule reads `sum_k w[k] f(x_{first + k})`.
///
/// Simpson covers a single closing interval with the three-point rule
/// `h / 12 (-f_{n-2} + 8 f_{n-1} + 5 f_n)`, which reaches one node back.
pub fn tail_weights(i: usize, n: usize, h: f64, rule: Quadrature) -> (usize, Vec<f64>) {
    let m = n - i;
    if m == 0 {
        return (i, vec![0.0]);
    }
    if rule == Quadrature::Simpson && m == 1 && i >= 1 {
        return (i - 1, vec![-h / 12.0, 8.0 * h / 12.0, 5.0 * h / 12.0]);
    }
    let mut w = vec![0.0; m + 1];
    if rule == Quadrature::Trapezoid || m == 1 {
        w.iter_mut().for_each(|x| *x = h);
        w[0] = 0.5 * h;
        w[m] = 0.5 * h;
        return (i, w);
    }
    let simpson_end = if m.is_multiple_of(2) { m } else { m - 3 };
    for k in (0..simpson_end).step_by(2) {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
    }
    if m % 2 == 1 {
        let k = simpson_end;
        for (j, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
            w[k + j] += 3.0 * h / 8.0 * c;
        }
    }
    (i, w)
}

/// Node tables of `Theta` and `K` on `n_quad + 1` uniform nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraProblem {
    pub horizon: f64,
    pub n_quad: usize,
    pub rule: Quadrature,
    pub theta: Vec<f64>,
    /// Row-major `(n_quad + 1)^2`; only `j >= i - 1` is used.
    pub kernel: Vec<f64>,
}

impl VolterraProblem {
    pub fn from_fns(
        theta: impl Fn(f64) -> f64,
        kernel: impl Fn(f64, f64) -> f64,
        horizon: f64,
        n_quad: usize,
        rule: Quadrature,
    ) -> Result<Self> {
        check_grid(horizon, n_quad)?;
        let nodes = nodes(horizon, n_quad);
        let theta: Vec<f64> = nodes.iter().map(|&s| theta(s)).collect();
        let mut table = vec![0.0; (n_quad + 1) * (n_quad + 1)];
        for i in 0..=n_quad {
            for j in i.saturating_sub(1)..=n_quad {
                table[i * (n_quad + 1) + j] = kernel(nodes[i], nodes[j]);
            }
        }
        let problem = Self {
            horizon,
            n_quad,
            rule,
            theta,
            kernel: table,
        };
        problem.check_finite()?;
        Ok(problem)
    }

    pub fn nodes(&self) -> Vec<f64> {
        nodes(self.horizon, self.n_quad)
    }

    fn check_finite(&self) -> Result<()> {
        if self.theta.iter().chain(&self.kernel).all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(invalid("volterra", "Theta or K is not finite on the node grid"))
        }
    }
}

fn check_grid(horizon: f64, n_quad: usize) -> Result<()> {
    if n_quad == 0 {
        return Err(invalid("n_quad", "must be at least 1"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(invalid("horizon", format!("{horizon} must be finite and positive")));
    }
    Ok(())
}

fn nodes(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| if i == n { horizon } else { horizon * i as f64 / n as f64 })
        .collect()
}

/// Builds the myopic-coefficient equation for the preference `pref` with
/// deterministic excess return `beta(s)` and volatility `sigma(s)`.
///
/// In the mean-variance system the two contributions that make up the kernel,
/// one through the auxiliary coefficient of the weight and one through the
/// nonlocal drift term, carry the same nested integral of `lambda_t` with
/// opposite signs, so `K` vanishes identically and `A = Theta`. The market
/// coefficients only enter through their finiteness check.
pub fn build_problem(
    pref: &DiscountPreference,
    beta: impl Fn(f64) -> f64,
    sigma: impl Fn(f64) -> f64,
    horizon: f64,
    n_quad: usize,
) -> Result<VolterraProblem> {
    build_problem_with(pref, beta, sigma, horizon, n_quad, Quadrature::default())
}

pub fn build_problem_with(
    pref: &DiscountPreference,
    beta: impl Fn(f64) -> f64,
    sigma: impl Fn(f64) -> f64,
    horizon: f64,
    n_quad: usize,
    rule: Quadrature,
) -> Result<VolterraProblem> {
    check_grid(horizon, n_quad)?;
    let s = nodes(horizon, n_quad);
    for &x in &s {
        let (b, v) = (beta(x), sigma(x));
        if !b.is_finite() || !v.is_finite() || v == 0.0 {
            return Err(invalid("market", format!("beta/sigma not usable at s = {x}")));
        }
    }
    // integrand of Theta at each node, inner lambda integrals in closed form
    let g: Vec<f64> = s
        .iter()
        .map(|&d| {
            let rho = pref.rho(d);
            let rho_t = pref.rho_t(d);
            rho_t * (1.0 + pref.lambda_integral(d, horizon)) + rho * pref.lambda_t_integral(d, horizon)
                - pref.lambda(d, d, horizon) * rho
        })
        .collect();
    let h = horizon / n_quad as f64;
    let rho_end = pref.rho(horizon);
    let theta = (0..=n_quad)
        .map(|i| {
            let (first, w) = tail_weights(i, n_quad, h, rule);
            rho_end - w.iter().zip(&g[first..]).map(|(w, g)| w * g).sum::<f64>()
        })
        .collect();
    let problem = VolterraProblem {
        horizon,
        n_quad,
        rule,
        theta,
        kernel: vec![0.0; (n_quad + 1) * (n_quad + 1)],
    };
    problem.check_finite()?;
    Ok(problem)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolterraSolution {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl VolterraSolution {
    pub fn horizon(&self) -> f64 {
        *self.nodes.last().expect("solution has nodes")
    }

    /// Piecewise-linear interpolation, clamped to `[0, T]`.
    pub fn eval(&self, s: f64) -> f64 {
        let n = self.nodes.len() - 1;
        let t = self.horizon();
        if s <= 0.0 {
            return self.values[0];
        }
        if s >= t {
            return self.values[n];
        }
        let x = s / t * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let w = x - i as f64;
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }
}

/// Nyström discretization `(I - W K) A = Theta`, solved densely by LU.
pub fn solve(problem: &VolterraProblem) -> Result<VolterraSolution> {
    let n = problem.n_quad;
    let h = problem.horizon / n as f64;
    let mut m = DMatrix::<f64>::identity(n + 1, n + 1);
    for i in 0..=n {
        let (first, w) = tail_weights(i, n, h, problem.rule);
        for (k, wk) in w.iter().enumerate() {
            let j = first + k;
            m[(i, j)] -= wk * problem.kernel[i * (n + 1) + j];
        }
    }
    let values = m
        .lu()
        .solve(&DVector::from_column_slice(&problem.theta))
        .ok_or(Error::Singular("Nyström system"))?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("Nyström system"));
    }
    Ok(VolterraSolution {
        nodes: problem.nodes(),
        values: values.iter().copied().collect(),
    })
}

/// `A(s) = rho(s) (int_s^T lambda(s, tau) d tau + 1)`.
pub fn closed_form_a(pref: &DiscountPreference, horizon: f64, s: f64) -> f64 {
    pref.rho(s) * (pref.lambda_integral(s, horizon) + 1.0)
}

/// Convenience: numerical `A` for a preference with constant market coefficients.
pub fn solve_preference(pref: &DiscountPreference, horizon: f64, n_quad: usize) -> Result<VolterraSolution> {
    solve(&build_problem(pref, |_| 1.0, |_| 1.0, horizon, n_quad)?)
}
