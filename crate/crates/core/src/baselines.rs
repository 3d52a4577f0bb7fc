//! Closed-form policies for the square-root and Gaussian factors with the
//! plain terminal objective.
//!
//! With `rho = 1` and `lambda = 0` a change of measure absorbs the `Z` term of
//! the generator into the factor drift, which becomes `a - b' R` with
//! `b' = b + rho_corr delta sigma`. Then
//! `b^T(s, r) = (delta^2 / gamma) E'[int_s^T R^{2 kappa} de]` in closed form.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{decay_integral, CklsParams, MarketModel, StockExponent};
use crate::policy::{myopic_demand, PolicyField};
use crate::regression::lsq_solve;
use crate::simulate::PathEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Cir,
    Ou,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticBaseline {
    pub kind: BaselineKind,
    /// Tilted mean-reversion speed `b + rho_corr delta sigma`.
    pub b_tilt: f64,
    pub model: MarketModel,
}

impl AnalyticBaseline {
    pub fn new(model: &MarketModel) -> Result<Self> {
        if !model.pref.is_degenerate() {
            return Err(Error::Unsupported(
                "analytic baseline needs rho = 1 and no running term".into(),
            ));
        }
        let kind = match (model.ckls.p, model.stock.exponent) {
            (p, StockExponent::Finite { alpha }) if p == 0.5 && alpha == -1.0 => BaselineKind::Cir,
            (p, StockExponent::OuLimit) if p == 0.0 => BaselineKind::Ou,
            _ => {
                return Err(Error::Unsupported(
                    "analytic baseline needs p = 1/2 with alpha = -1, or p = 0 with the OU limit".into(),
                ))
            }
        };
        let c = &model.ckls;
        Ok(Self {
            kind,
            b_tilt: c.b + model.stock.rho_corr * model.stock.delta * c.sigma,
            model: model.clone(),
        })
    }

    fn scale(&self) -> f64 {
        self.model.stock.delta.powi(2) / self.model.pref.gamma
    }

    fn discount(&self, s: f64) -> f64 {
        (-self.model.stock.r0 * (self.model.horizon - s)).exp()
    }

    /// `b^T(s, r)`.
    pub fn b_t(&self, s: f64, r: f64) -> f64 {
        let tau = self.model.horizon - s;
        let a = self.model.ckls.a;
        match self.kind {
            BaselineKind::Cir => {
                let g1 = decay_integral(self.b_tilt, tau);
                self.scale() * (r * g1 + a * excess_time(self.b_tilt, tau))
            }
            BaselineKind::Ou => {
                let i = ou_integrals(self.b_tilt, tau);
                let sigma = self.model.ckls.sigma;
                self.scale() * (r * r * i.ee + 2.0 * r * a * i.eg + a * a * i.gg + sigma * sigma * i.v)
            }
        }
    }

    /// `d b^T / d r`.
    pub fn b_t_r(&self, s: f64, r: f64) -> f64 {
        let tau = self.model.horizon - s;
        match self.kind {
            BaselineKind::Cir => self.scale() * decay_integral(self.b_tilt, tau),
            BaselineKind::Ou => {
                let i = ou_integrals(self.b_tilt, tau);
                self.scale() * 2.0 * (r * i.ee + self.model.ckls.a * i.eg)
            }
        }
    }

    /// `-rho_corr n(r) / sigma_S(r) d_r b^T e^{-r0 (T - s)}`.
    pub fn hedging(&self, s: f64, r: f64) -> f64 {
        let sigma = self.model.ckls.sigma;
        let prefactor = match self.kind {
            BaselineKind::Cir => sigma * r,
            BaselineKind::Ou => sigma,
        };
        -self.model.stock.rho_corr * prefactor * self.b_t_r(s, r) * self.discount(s)
    }

    pub fn myopic(&self, s: f64, r: f64) -> Result<f64> {
        myopic_demand(&self.model, s, r)
    }

    /// The analytic policy as a [`PolicyField`].
    pub fn policy(&self) -> PolicyField {
        let me = self.clone();
        let id = match self.kind {
            BaselineKind::Cir => "analytic-cir",
            BaselineKind::Ou => "analytic-ou",
        };
        PolicyField::external(id, None, move |_, s, r| Ok((me.myopic(s, r)?, me.hedging(s, r))))
    }

    /// Residual of `b_s + (a - b' r) b_r + n^2 b_rr / 2 + beta^2 / (gamma sigma_S^2)`
    /// by central differences with step `h`.
    pub fn pde_residual(&self, s: f64, r: f64, h: f64) -> f64 {
        let c = &self.model.ckls;
        let b_s = (self.b_t(s + h, r) - self.b_t(s - h, r)) / (2.0 * h);
        let b_r = (self.b_t(s, r + h) - self.b_t(s, r - h)) / (2.0 * h);
        let b_rr = (self.b_t(s, r + h) - 2.0 * self.b_t(s, r) + self.b_t(s, r - h)) / (h * h);
        let (n2, source) = match self.kind {
            BaselineKind::Cir => (c.sigma * c.sigma * r, self.scale() * r),
            BaselineKind::Ou => (c.sigma * c.sigma, self.scale() * r * r),
        };
        b_s + (c.a - self.b_tilt * r) * b_r + 0.5 * n2 * b_rr + source
    }
}

/// `int_0^tau (1 - e^{-x u}) / x du = (tau - g1(x, tau)) / x`, continuous at
/// `x = 0` where it equals `tau^2 / 2`.
fn excess_time(x: f64, tau: f64) -> f64 {
    let y = x * tau;
    if y.abs() < 1e-4 {
        // tau^2 (1/2 - y/6 + y^2/24 - y^3/120)
        tau * tau * (0.5 - y / 6.0 + y * y / 24.0 - y * y * y / 120.0)
    } else {
        (tau - decay_integral(x, tau)) / x
    }
}

/// Integrals over `[0, tau]` entering the tilted OU second moment, with
/// `g(u) = (1 - e^{-x u}) / x`.
struct OuIntegrals {
    /// `int e^{-2xu}`.
    ee: f64,
    /// `int e^{-xu} g(u)`.
    eg: f64,
    /// `int g(u)^2`.
    gg: f64,
    /// `int g_{2x}(u)`, the variance integral without `sigma^2`.
    v: f64,
}

fn ou_integrals(x: f64, tau: f64) -> OuIntegrals {
    if (x * tau).abs() >= 1e-3 {
        let g1 = decay_integral(x, tau);
        let g2 = decay_integral(2.0 * x, tau);
        OuIntegrals {
            ee: g2,
            eg: (g1 - g2) / x,
            gg: (tau - 2.0 * g1 + g2) / (x * x),
            v: excess_time(2.0 * x, tau),
        }
    } else {
        // composite Simpson on smooth integrands; cancellation-free near x = 0
        let n = 2000;
        let h = tau / n as f64;
        let mut acc = [0.0; 4];
        for k in 0..=n {
            let u = k as f64 * h;
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let e = (-x * u).exp();
            let g = decay_integral(x, u);
            acc[0] += w * e * e;
            acc[1] += w * e * g;
            acc[2] += w * g * g;
            acc[3] += w * decay_integral(2.0 * x, u);
        }
        let f = h / 3.0;
        OuIntegrals {
            ee: f * acc[0],
            eg: f * acc[1],
            gg: f * acc[2],
            v: f * acc[3],
        }
    }
}

/// Ordinary least-squares fit of square-root parameters to simulated paths:
/// `dR / sqrt(R) = a dt / sqrt(R) - b dt sqrt(R) + sigma dW`.
pub fn calibrate_cir(ensemble: &PathEnsemble) -> Result<CklsParams> {
    let n = ensemble.grid.n_steps;
    let dt = ensemble.grid.dt();
    let rows = ensemble.n_paths * n;
    let floor = 1e-8;
    let mut design = DMatrix::zeros(rows, 2);
    let mut target = Vec::with_capacity(rows);
    for m in 0..ensemble.n_paths {
        let path = ensemble.factor_path(m);
        for i in 0..n {
            let row = m * n + i;
            let sq = path[i].max(floor).sqrt();
            design[(row, 0)] = dt / sq;
            design[(row, 1)] = -dt * sq;
            target.push((path[i + 1] - path[i]) / sq);
        }
    }
    let fit = lsq_solve(&design, &target)?;
    let sigma = (fit.residual_norm * fit.residual_norm / rows as f64 / dt).sqrt();
    let (a, b) = (fit.coefficients[0], fit.coefficients[1]);
    CklsParams::new(a, b, sigma, 0.5, ensemble.factor_at(0, 0))
}

/// Square-root model fitted to the ensemble, keeping the stock and preferences
/// of `model` with `alpha = -1`.
pub fn miscalibrated_model(model: &MarketModel, ensemble: &PathEnsemble) -> Result<MarketModel> {
    let mut fitted = model.clone();
    fitted.ckls = calibrate_cir(ensemble)?;
    fitted.stock.exponent = StockExponent::Finite { alpha: -1.0 };
    Ok(fitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::model::DiscountPreference;
    use crate::problems;
    use crate::simulate::{simulate_factor, TimeGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for k in 1..n {
            acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn shape_checks() {
        assert_eq!(AnalyticBaseline::new(&problems::problem_a(-0.5)).unwrap().kind, BaselineKind::Cir);
        assert_eq!(AnalyticBaseline::new(&problems::problem_b(-0.5)).unwrap().kind, BaselineKind::Ou);
        assert!(AnalyticBaseline::new(&problems::problem_c(0.1, -0.5)).is_err());
        let mut running = problems::problem_a(-0.5);
        running.pref = DiscountPreference::new(
            4.0,
            running.pref.rho.clone(),
            crate::model::RunningDiscount::Exponential { rate: 0.5 },
            crate::model::TerminalDiscount::One,
        )
        .unwrap();
        assert!(AnalyticBaseline::new(&running).is_err());
    }

    #[test]
    fn trivial_values() {
        for model in [problems::problem_a(-0.5), problems::problem_b(-0.5)] {
            let base = AnalyticBaseline::new(&model).unwrap();
            assert_eq!(base.b_t(1.0, 0.1), 0.0);
            assert_eq!(base.hedging(1.0, 0.1), 0.0);
            let mut flat = model.clone();
            flat.stock.delta = 0.0;
            assert_eq!(AnalyticBaseline::new(&flat).unwrap().b_t(0.3, 0.1), 0.0);
            let uncorrelated = AnalyticBaseline::new(&problems::problem_a(0.0)).unwrap();
            assert_eq!(uncorrelated.hedging(0.2, 28.0), 0.0);
        }
    }

    #[test]
    fn cir_zero_tilt_limit() {
        let mut model = problems::problem_a(0.0);
        model.ckls.b = 0.0;
        let base = AnalyticBaseline::new(&model).unwrap();
        let (s, r, a) = (0.2, 30.0, model.ckls.a);
        let tau = 0.8;
        let expected = base.scale() * (r * tau + a * tau * tau / 2.0);
        assert!((base.b_t(s, r) - expected).abs() < 1e-12 * expected);
        // tiny tilt agrees with fine quadrature of the tilted mean
        model.ckls.b = 1e-7;
        let base = AnalyticBaseline::new(&model).unwrap();
        let x = base.b_tilt;
        let quad = base.scale() * simpson(|u| r * (-x * u).exp() + a * decay_integral(x, u), 0.0, tau, 1_000_000);
        assert!((base.b_t(s, r) - quad).abs() < 1e-6);
    }

    #[test]
    fn cir_matches_quadrature_and_derivative() {
        let base = AnalyticBaseline::new(&problems::problem_a(-0.5)).unwrap();
        let (a, x) = (base.model.ckls.a, base.b_tilt);
        for &(s, r) in &[(0.0, 27.9), (0.5, 20.0), (0.9, 35.0)] {
            let tau = 1.0 - s;
            let quad = base.scale() * simpson(|u| r * (-x * u).exp() + a * decay_integral(x, u), 0.0, tau, 2000);
            assert!((base.b_t(s, r) - quad).abs() < 1e-10);
            let h = 1e-4;
            let fd = (base.b_t(s, r + h) - base.b_t(s, r - h)) / (2.0 * h);
            assert!((fd - base.b_t_r(s, r)).abs() < 1e-8);
        }
    }

    #[test]
    fn ou_matches_quadrature_in_both_regimes() {
        for tilt in [0.2375, 1e-6] {
            let mut model = problems::problem_b(0.0);
            model.ckls.b = tilt;
            let base = AnalyticBaseline::new(&model).unwrap();
            let c = base.model.ckls;
            let x = base.b_tilt;
            for &(s, r) in &[(0.0, 0.0788), (0.5, -0.03), (0.8, 0.2)] {
                let tau = 1.0 - s;
                let second = |u: f64| {
                    let mean = r * (-x * u).exp() + c.a * decay_integral(x, u);
                    mean * mean + c.sigma * c.sigma * decay_integral(2.0 * x, u)
                };
                let quad = base.scale() * simpson(second, 0.0, tau, 4000);
                assert!((base.b_t(s, r) - quad).abs() < 1e-12, "{tilt} {s}");
                let h = 1e-5;
                let fd = (base.b_t(s, r + h) - base.b_t(s, r - h)) / (2.0 * h);
                assert!((fd - base.b_t_r(s, r)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ou_deterministic_factor() {
        // sigma = 0: b^T = (delta^2/gamma) int m(u)^2 with m' = a - b m
        let mut model = problems::problem_b(-0.5);
        model.ckls.sigma = 0.0;
        let base = AnalyticBaseline::new(&model).unwrap();
        assert_eq!(base.b_tilt, model.ckls.b);
        let (mut m, mut acc, n) = (0.1, 0.0, 100_000);
        let dt = 0.6 / n as f64;
        for _ in 0..n {
            let next = m + (model.ckls.a - model.ckls.b * m) * dt;
            acc += 0.5 * (m * m + next * next) * dt;
            m = next;
        }
        assert!((base.b_t(0.4, 0.1) - base.scale() * acc).abs() < 1e-9);
        assert_eq!(base.hedging(0.4, 0.1), 0.0);
    }

    #[test]
    fn feynman_kac_residual() {
        for model in [problems::problem_a(-0.5), problems::problem_b(-0.5)] {
            let base = AnalyticBaseline::new(&model).unwrap();
            let r_values: &[f64] = match base.kind {
                BaselineKind::Cir => &[15.0, 27.9, 40.0],
                BaselineKind::Ou => &[-0.05, 0.0788, 0.2],
            };
            for &s in &[0.1, 0.5, 0.9] {
                for &r in r_values {
                    assert!(base.pde_residual(s, r, 1e-3).abs() < 1e-4);
                }
            }
        }
    }

    #[test]
    fn increasing_in_remaining_time() {
        for model in [problems::problem_a(-0.5), problems::problem_b(-0.5)] {
            let base = AnalyticBaseline::new(&model).unwrap();
            let r = model.ckls.r0_factor;
            let values: Vec<f64> = (0..=20).map(|i| base.b_t(i as f64 / 20.0, r)).collect();
            assert!(values.windows(2).all(|w| w[0] > w[1]));
        }
    }

    #[test]
    fn cir_nested_monte_carlo() {
        // Euler under the tilted drift; the integral of R is estimated per path
        let model = problems::problem_a(-0.5);
        let base = AnalyticBaseline::new(&model).unwrap();
        let c = model.ckls;
        let (s, r) = (0.5, c.r0_factor);
        let (steps, paths) = (200, 4000);
        let dt = (1.0 - s) / steps as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut samples = Vec::with_capacity(paths);
        for _ in 0..paths {
            let (mut x, mut acc) = (r, 0.0);
            for _ in 0..steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                let next = x + (c.a - base.b_tilt * x.max(0.0)) * dt + c.sigma * x.max(0.0).sqrt() * dt.sqrt() * z;
                acc += 0.5 * (x + next) * dt;
                x = next;
            }
            samples.push(base.scale() * acc);
        }
        let mean = samples.iter().sum::<f64>() / paths as f64;
        let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (paths - 1) as f64).sqrt();
        let se = sd / (paths as f64).sqrt();
        assert!((mean - base.b_t(s, r)).abs() < 3.0 * se + 1e-6, "{mean} vs {}", base.b_t(s, r));
    }

    #[test]
    fn ou_nested_monte_carlo() {
        let model = problems::problem_b(-0.5);
        let base = AnalyticBaseline::new(&model).unwrap();
        let c = model.ckls;
        let (s, r) = (0.3, c.r0_factor);
        let (steps, paths) = (200, 4000);
        let dt = (1.0 - s) / steps as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let mut samples = Vec::with_capacity(paths);
        for _ in 0..paths {
            let (mut x, mut acc) = (r, 0.0);
            for _ in 0..steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                let next = x + (c.a - base.b_tilt * x) * dt + c.sigma * dt.sqrt() * z;
                acc += 0.5 * (x * x + next * next) * dt;
                x = next;
            }
            samples.push(base.scale() * acc);
        }
        let mean = samples.iter().sum::<f64>() / paths as f64;
        let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (paths - 1) as f64).sqrt();
        let se = sd / (paths as f64).sqrt();
        assert!((mean - base.b_t(s, r)).abs() < 3.0 * se + 1e-7, "{mean} vs {}", base.b_t(s, r));
    }

    #[test]
    fn calibration_recovers_parameters() {
        let model = problems::problem_a(-0.5);
        let ens = simulate_factor(&model, TimeGrid::new(50, 1.0).unwrap(), 4000, 21).unwrap();
        let fit = calibrate_cir(&ens).unwrap();
        assert!((fit.sigma - model.ckls.sigma).abs() < 0.01);
        assert_eq!(fit.p, 0.5);
        // a and b are only weakly identified over one year; the level a/b is sharp
        assert!((fit.a / fit.b - model.ckls.a / model.ckls.b).abs() < 3.0);
    }

    proptest! {
        #[test]
        fn terminal_value_and_horizon_monotonicity(
            a in 0.5f64..20.0,
            b in 0.05f64..2.0,
            sigma in 0.05f64..1.0,
            corr in -1.0f64..1.0,
            r in 0.01f64..50.0,
            gaussian in any::<bool>(),
        ) {
            let mut model = if gaussian { problems::problem_b(corr) } else { problems::problem_a(corr) };
            model.ckls.a = a;
            model.ckls.b = b;
            model.ckls.sigma = sigma;
            let base = AnalyticBaseline::new(&model).unwrap();
            prop_assert_eq!(base.b_t(model.horizon, r), 0.0);
            let mut previous = 0.0;
            for k in (0..10).rev() {
                let value = base.b_t(k as f64 / 10.0, r);
                prop_assert!(value > previous);
                previous = value;
            }
        }
    }
}
