//! Deterministic integral equation for the wealth fraction `phi(s)` of the
//! state-dependent risk-aversion policy with deterministic coefficients.
//!
//! With `I1(s, tau) = int_s^tau (r0 + beta phi)` and
//! `I2(s, tau) = int_s^tau (r0 + beta phi + sigma^2 phi^2 / 2)`,
//!
//! ```text
//! phi(s) = beta / (gamma sigma^2) * rho(s) [int lambda e^{I1} + e^{I1(T)}] / D
//!        + beta / sigma^2 * [int lambda e^{2 I1} + e^{2 I1(T)}] / D
//!        - beta / sigma^2,
//! D      = int lambda e^{2 I2} + e^{2 I2(T)}.
//! ```

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::DiscountPreference;

/// Relaxation weight of the fixed-point iteration.
pub const DAMPING: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct StateDepProblem {
    pub horizon: f64,
    pub n_grid: usize,
    pub r0: f64,
    pub gamma: f64,
    pub beta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rho: Vec<f64>,
    /// `lambda(s_i, s_j)`, row-major.
    pub lambda: Vec<f64>,
}

impl StateDepProblem {
    pub fn new(
        beta: impl Fn(f64) -> f64,
        sigma: impl Fn(f64) -> f64,
        r0: f64,
        pref: &DiscountPreference,
        horizon: f64,
        n_grid: usize,
    ) -> Result<Self> {
        if n_grid == 0 {
            return Err(invalid("n_grid", "must be at least 1"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid("horizon", "must be finite and positive"));
        }
        if !(pref.gamma > 0.0) {
            return Err(invalid("gamma", "must be positive"));
        }
        let s = nodes(horizon, n_grid);
        let beta: Vec<f64> = s.iter().map(|&x| beta(x)).collect();
        let sigma: Vec<f64> = s.iter().map(|&x| sigma(x)).collect();
        if sigma.iter().any(|v| !(v.abs() > 1e-12) || !v.is_finite()) || beta.iter().any(|b| !b.is_finite()) {
            return Err(invalid("sigma", "market coefficients must be finite with sigma away from 0"));
        }
        let mut lambda = vec![0.0; (n_grid + 1) * (n_grid + 1)];
        for i in 0..=n_grid {
            for j in i..=n_grid {
                lambda[i * (n_grid + 1) + j] = pref.lambda(s[i], s[j], horizon);
            }
        }
        Ok(Self {
            horizon,
            n_grid,
            r0,
            gamma: pref.gamma,
            beta,
            sigma,
            rho: s.iter().map(|&x| pref.rho(x)).collect(),
            lambda,
        })
    }

    pub fn nodes(&self) -> Vec<f64> {
        nodes(self.horizon, self.n_grid)
    }

    /// Right-hand side of the equation at every node.
    pub fn rhs(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.n_grid;
        let h = self.horizon / n as f64;
        let cumulative = |f: &dyn Fn(usize) -> f64| {
            let mut c = vec![0.0; n + 1];
            for j in 1..=n {
                c[j] = c[j - 1] + 0.5 * h * (f(j - 1) + f(j));
            }
            c
        };
        let growth = |j: usize| self.r0 + self.beta[j] * phi[j];
        let c1 = cumulative(&growth);
        let c2 = cumulative(&|j| growth(j) + 0.5 * (self.sigma[j] * phi[j]).powi(2));
        let has_running = self.lambda.iter().any(|&l| l != 0.0);

        (0..=n)
            .map(|i| {
                let (mut num1, mut num2, mut den) = (0.0, 0.0, 0.0);
                if has_running && i < n {
                    for j in i..=n {
                        let w = if j == i || j == n { 0.5 * h } else { h };
                        let l = w * self.lambda[i * (n + 1) + j];
                        let e1 = (c1[j] - c1[i]).exp();
                        num1 += l * e1;
                        num2 += l * e1 * e1;
                        den += l * (2.0 * (c2[j] - c2[i])).exp();
                    }
                }
                let e1 = (c1[n] - c1[i]).exp();
                num1 = self.rho[i] * (num1 + e1);
                num2 += e1 * e1;
                den += (2.0 * (c2[n] - c2[i])).exp();
                let ratio = self.beta[i] / (self.sigma[i] * self.sigma[i]);
                ratio / self.gamma * num1 / den + ratio * num2 / den - ratio
            })
            .collect()
    }
}

fn nodes(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| if i == n { horizon } else { horizon * i as f64 / n as f64 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateDepSolution {
    pub s: Vec<f64>,
    pub phi: Vec<f64>,
    /// `sup_j |phi - RHS(phi)|` of the returned iterate.
    pub residual: f64,
    pub iterations: usize,
}

/// Damped fixed point `phi <- (1 - w) phi + w RHS(phi)` from `phi = 0`,
/// stopping as soon as the returned iterate satisfies the residual bound.
pub fn solve_phi(problem: &StateDepProblem, tol: f64, max_iter: usize) -> Result<StateDepSolution> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let mut phi = vec![0.0; problem.n_grid + 1];
    let mut residual = f64::INFINITY;
    for iteration in 0..=max_iter {
        let rhs = problem.rhs(&phi);
        residual = phi.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if !residual.is_finite() {
            break;
        }
        if residual < tol {
            return Ok(StateDepSolution {
                s: problem.nodes(),
                phi,
                residual,
                iterations: iteration,
            });
        }
        for (p, r) in phi.iter_mut().zip(&rhs) {
            *p = (1.0 - DAMPING) * *p + DAMPING * r;
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::model::{RhoWeight, RunningDiscount, TerminalDiscount};

    fn running(rate: f64) -> DiscountPreference {
        DiscountPreference::new(
            2.0,
            RhoWeight::Exponential { scale: 1.0, rate: 0.2 },
            RunningDiscount::Exponential { rate },
            TerminalDiscount::One,
        )
        .unwrap()
    }

    #[test]
    fn zero_excess_return() {
        let p = StateDepProblem::new(|_| 0.0, |_| 0.3, 0.02, &running(0.5), 1.0, 50).unwrap();
        let sol = solve_phi(&p, 1e-12, 10).unwrap();
        assert!(sol.phi.iter().all(|&x| x == 0.0));
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn terminal_value_is_myopic_fraction() {
        let pref = running(0.5);
        let (beta, sigma) = (|s: f64| 0.1 + 0.05 * s, |s: f64| 0.25 - 0.05 * s);
        let p = StateDepProblem::new(beta, sigma, 0.03, &pref, 1.0, 200).unwrap();
        let sol = solve_phi(&p, 1e-10, 500).unwrap();
        let expected = pref.rho(1.0) * beta(1.0) / (pref.gamma * sigma(1.0).powi(2));
        assert!((sol.phi[200] - expected).abs() < 1e-10);
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn constant_coefficients_match_undamped_picard() {
        let (beta, sigma, gamma, n) = (0.08, 0.2, 3.0, 200usize);
        let p = StateDepProblem::new(|_| beta, |_| sigma, 0.0, &DiscountPreference::terminal(gamma), 1.0, n).unwrap();
        let sol = solve_phi(&p, 1e-13, 1000).unwrap();

        // independent form: phi = b/(g s^2) e^{-int b phi - s^2 int phi^2} + b/s^2 (e^{-s^2 int phi^2} - 1)
        let h = 1.0 / n as f64;
        let mut oracle = vec![0.0; n + 1];
        for _ in 0..500 {
            let mut next = vec![0.0; n + 1];
            let (mut i_bphi, mut i_phi2) = (0.0, 0.0);
            next[n] = beta / (gamma * sigma * sigma);
            for i in (0..n).rev() {
                i_bphi += 0.5 * h * beta * (oracle[i] + oracle[i + 1]);
                i_phi2 += 0.5 * h * (oracle[i].powi(2) + oracle[i + 1].powi(2));
                let q = (-sigma * sigma * i_phi2).exp();
                next[i] = beta / (gamma * sigma * sigma) * (-i_bphi).exp() * q + beta / (sigma * sigma) * (q - 1.0);
            }
            oracle = next;
        }
        for (a, b) in sol.phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn second_order_in_grid() {
        let pref = running(0.8);
        let solve_n = |n| {
            let p = StateDepProblem::new(|s| 0.1 + 0.05 * s, |s| 0.25 - 0.05 * s, 0.03, &pref, 1.0, n).unwrap();
            solve_phi(&p, 1e-13, 2000).unwrap().phi
        };
        let (a, b, c) = (solve_n(50), solve_n(100), solve_n(200));
        let e1 = (0..=50).map(|i| (a[i] - b[2 * i]).abs()).fold(0.0, f64::max);
        let e2 = (0..=100).map(|i| (b[i] - c[2 * i]).abs()).fold(0.0, f64::max);
        assert!((e1 / e2).log2() > 1.9);
    }

    #[test]
    fn reports_non_convergence() {
        let p = StateDepProblem::new(|_| 0.1, |_| 0.2, 0.0, &running(0.5), 1.0, 20).unwrap();
        assert!(matches!(solve_phi(&p, 1e-12, 2), Err(Error::NotConverged { iterations: 2, .. })));
        assert!(StateDepProblem::new(|_| 0.1, |_| 0.0, 0.0, &running(0.5), 1.0, 20).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn returned_phi_meets_the_tolerance(beta in -0.3f64..0.3, sigma in 0.1f64..0.6, rate in 0.0f64..1.0) {
            let problem = StateDepProblem::new(|_| beta, |_| sigma, 0.03, &running(rate), 1.0, 40).unwrap();
            let sol = solve_phi(&problem, 1e-10, 10_000).unwrap();
            let rhs = problem.rhs(&sol.phi);
            let sup = sol.phi.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(sup < 1e-10);
        }
    }
}
