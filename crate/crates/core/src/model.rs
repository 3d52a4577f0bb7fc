//! Economy, preferences and the parameter-validity checks that certify a
//! well-posed equilibrium problem.
//!
//! The factor follows a CKLS diffusion `dR = (a - bR) ds + sigma R^p dB^R` and
//! the stock has drift `r0 + delta R^{(1 + 2 kappa alpha) / (2 alpha)}` and
//! volatility `R^{1 / (2 alpha)}` with `kappa = 1 - p`, so the Sharpe ratio is
//! `delta R^kappa`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Raises a factor value to `exponent`.
///
/// Integer exponents accept any sign of `r`; fractional or negative exponents
/// need `r > 0`.
pub fn factor_pow(r: f64, exponent: f64, what: &'static str) -> Result<f64> {
    if exponent == 0.0 {
        return Ok(1.0);
    }
    if exponent.fract() == 0.0 && exponent > 0.0 {
        return Ok(r.powi(exponent as i32));
    }
    if r > 0.0 {
        Ok(r.powf(exponent))
    } else {
        Err(Error::Domain { what, value: r })
    }
}

/// Full-truncation power: fractional exponents see `max(r, 0)`.
pub(crate) fn factor_pow_truncated(r: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        1.0
    } else if exponent.fract() == 0.0 && exponent > 0.0 {
        r.powi(exponent as i32)
    } else {
        r.max(0.0).powf(exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CklsParams {
    /// Mean-reversion level numerator.
    pub a: f64,
    /// Mean-reversion speed.
    pub b: f64,
    /// Factor volatility scale.
    pub sigma: f64,
    /// Elasticity exponent in `[0, 1]`.
    pub p: f64,
    /// Initial factor value.
    pub r0_factor: f64,
}

impl CklsParams {
    pub fn new(a: f64, b: f64, sigma: f64, p: f64, r0_factor: f64) -> Result<Self> {
        let params = Self {
            a,
            b,
            sigma,
            p,
            r0_factor,
        };
        params.check()?;
        Ok(params)
    }

    fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid("p", format!("{} is outside [0, 1]", self.p)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(invalid("sigma", format!("{} must be finite and >= 0", self.sigma)));
        }
        if !(self.r0_factor > 0.0) || !self.r0_factor.is_finite() {
            return Err(invalid("r0_factor", format!("{} must be positive", self.r0_factor)));
        }
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err(invalid("a/b", "mean-reversion parameters must be finite"));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        1.0 - self.p
    }

    /// `m(r) = a - b r`.
    pub fn drift(&self, r: f64) -> f64 {
        self.a - self.b * r
    }

    /// `n(r) = sigma r^p`; fractional `p` needs `r > 0`.
    pub fn diffusion(&self, r: f64) -> Result<f64> {
        Ok(self.sigma * factor_pow(r, self.p, "factor diffusion")?)
    }

    /// Closed-form first moment `E[R_t]`; the drift is affine for every `p`.
    pub fn mean(&self, t: f64) -> f64 {
        let decay = (-self.b * t).exp();
        self.r0_factor * decay + self.a * decay_integral(self.b, t)
    }
}

/// `(1 - e^{-x t}) / x`, continuous at `x = 0`.
pub(crate) fn decay_integral(x: f64, t: f64) -> f64 {
    if (x * t).abs() < 1e-12 {
        t
    } else {
        -(-x * t).exp_m1() / x
    }
}

/// Exponent `alpha` of the stock volatility `R^{1/(2 alpha)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StockExponent {
    Finite { alpha: f64 },
    /// `alpha -> infinity`: unit stock volatility and Sharpe ratio `delta R^kappa`.
    OuLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StockSpec {
    /// Risk-free rate.
    pub r0: f64,
    /// Sharpe-ratio scale.
    pub delta: f64,
    pub exponent: StockExponent,
    /// Correlation between the stock and factor Brownian motions.
    pub rho_corr: f64,
}

impl StockSpec {
    pub fn new(r0: f64, delta: f64, exponent: StockExponent, rho_corr: f64) -> Result<Self> {
        let spec = Self {
            r0,
            delta,
            exponent,
            rho_corr,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        if let StockExponent::Finite { alpha } = self.exponent {
            if alpha == 0.0 || !alpha.is_finite() {
                return Err(invalid("alpha", "must be finite and non-zero"));
            }
        }
        if !(self.rho_corr.abs() < 1.0) {
            return Err(invalid("rho_corr", format!("{} is outside (-1, 1)", self.rho_corr)));
        }
        Ok(())
    }

    /// Exponent of `R` in the stock volatility.
    pub fn vol_exponent(&self) -> f64 {
        match self.exponent {
            StockExponent::Finite { alpha } => 1.0 / (2.0 * alpha),
            StockExponent::OuLimit => 0.0,
        }
    }

    /// Exponent of `R` in the excess return, `(1 + 2 kappa alpha) / (2 alpha)`.
    pub fn excess_exponent(&self, kappa: f64) -> f64 {
        kappa + self.vol_exponent()
    }
}

/// Time-varying risk/return weight `rho(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhoWeight {
    Constant { value: f64 },
    /// `scale * exp(rate * s)`.
    Exponential { scale: f64, rate: f64 },
    /// Piecewise-linear through `(times, values)`; flat outside the range.
    Grid { times: Vec<f64>, values: Vec<f64> },
}

impl RhoWeight {
    pub fn value(&self, s: f64) -> f64 {
        match self {
            RhoWeight::Constant { value } => *value,
            RhoWeight::Exponential { scale, rate } => scale * (rate * s).exp(),
            RhoWeight::Grid { times, values } => {
                let (i, w) = locate(times, s);
                match w {
                    None => values[i],
                    Some(w) => values[i] + w * (values[i + 1] - values[i]),
                }
            }
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            RhoWeight::Constant { .. } => 0.0,
            RhoWeight::Exponential { scale, rate } => scale * rate * (rate * s).exp(),
            RhoWeight::Grid { times, values } => {
                let n = times.len();
                if n < 2 || s < times[0] || s > times[n - 1] {
                    return 0.0;
                }
                let slope = |i: usize| (values[i + 1] - values[i]) / (times[i + 1] - times[i]);
                let (i, w) = locate(times, s);
                match w {
                    Some(w) if w > 0.0 => slope(i),
                    // on a knot: average the adjacent slopes
                    _ => {
                        let left = if i > 0 { Some(slope(i - 1)) } else { None };
                        let right = if i + 1 < n { Some(slope(i)) } else { None };
                        match (left, right) {
                            (Some(l), Some(r)) => 0.5 * (l + r),
                            (Some(l), None) => l,
                            (None, Some(r)) => r,
                            (None, None) => 0.0,
                        }
                    }
                }
            }
        }
    }

    /// `sup_{0 <= s <= T} |rho(s)|`.
    pub fn bound(&self, horizon: f64) -> f64 {
        match self {
            RhoWeight::Constant { value } => value.abs(),
            RhoWeight::Exponential { scale, rate } => scale.abs() * (rate * horizon).exp().max(1.0),
            RhoWeight::Grid { values, .. } => values.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }

    /// Smallest value on `[0, T]` (exact for the closed forms, knot minimum on grids).
    pub fn min_value(&self, horizon: f64) -> f64 {
        match self {
            RhoWeight::Constant { value } => *value,
            RhoWeight::Exponential { .. } => self.value(0.0).min(self.value(horizon)),
            RhoWeight::Grid { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn is_unit(&self) -> bool {
        match self {
            RhoWeight::Constant { value } => *value == 1.0,
            RhoWeight::Exponential { scale, rate } => *scale == 1.0 && *rate == 0.0,
            RhoWeight::Grid { values, .. } => values.iter().all(|v| *v == 1.0),
        }
    }

    fn check(&self) -> Result<()> {
        if let RhoWeight::Grid { times, values } = self {
            if times.is_empty() || times.len() != values.len() {
                return Err(invalid("rho", "grid needs matching, non-empty times and values"));
            }
            if times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(invalid("rho", "grid times must be strictly increasing"));
            }
        }
        Ok(())
    }
}

/// Segment index and in-segment weight; `None` weight means clamped or on a knot.
fn locate(times: &[f64], s: f64) -> (usize, Option<f64>) {
    let n = times.len();
    if n == 1 || s <= times[0] {
        return (0, None);
    }
    if s >= times[n - 1] {
        return (n - 1, None);
    }
    let i = times.partition_point(|&t| t <= s) - 1;
    if s == times[i] {
        return (i, None);
    }
    (i, Some((s - times[i]) / (times[i + 1] - times[i])))
}

/// Running discount `eta(s, tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunningDiscount {
    Zero,
    Constant { value: f64 },
    /// `exp(-rate (tau - s))`.
    Exponential { rate: f64 },
}

/// Terminal discount `mu(s, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalDiscount {
    One,
    /// `exp(-rate (T - s))`.
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountPreference {
    /// Risk aversion.
    pub gamma: f64,
    pub rho: RhoWeight,
    pub eta: RunningDiscount,
    pub mu: TerminalDiscount,
}

impl DiscountPreference {
    pub fn new(gamma: f64, rho: RhoWeight, eta: RunningDiscount, mu: TerminalDiscount) -> Result<Self> {
        let pref = Self { gamma, rho, eta, mu };
        pref.check()?;
        Ok(pref)
    }

    /// `rho == 1`, `lambda == 0`: the plain terminal mean-variance investor.
    pub fn terminal(gamma: f64) -> Self {
        Self {
            gamma,
            rho: RhoWeight::Constant { value: 1.0 },
            eta: RunningDiscount::Zero,
            mu: TerminalDiscount::One,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(invalid("gamma", format!("{} must be finite and >= 0", self.gamma)));
        }
        self.rho.check()
    }

    pub fn rho(&self, s: f64) -> f64 {
        self.rho.value(s)
    }

    pub fn rho_t(&self, s: f64) -> f64 {
        self.rho.derivative(s)
    }

    fn eta_rate(&self) -> f64 {
        match self.eta {
            RunningDiscount::Exponential { rate } => rate,
            _ => 0.0,
        }
    }

    fn mu_rate(&self) -> f64 {
        match self.mu {
            TerminalDiscount::Exponential { rate } => rate,
            TerminalDiscount::One => 0.0,
        }
    }

    fn terminal_value(&self, s: f64, horizon: f64) -> f64 {
        match self.mu {
            TerminalDiscount::One => 1.0,
            TerminalDiscount::Exponential { rate } => (-rate * (horizon - s)).exp(),
        }
    }

    /// `lambda(s, tau) = eta(s, tau) / mu(s, T)`.
    pub fn lambda(&self, s: f64, tau: f64, horizon: f64) -> f64 {
        let eta = match self.eta {
            RunningDiscount::Zero => return 0.0,
            RunningDiscount::Constant { value } => value,
            RunningDiscount::Exponential { rate } => (-rate * (tau - s)).exp(),
        };
        eta / self.terminal_value(s, horizon)
    }

    /// Derivative of `lambda` in its first argument.
    pub fn lambda_t(&self, s: f64, tau: f64, horizon: f64) -> f64 {
        (self.eta_rate() - self.mu_rate()) * self.lambda(s, tau, horizon)
    }

    /// `int_s^T lambda(s, tau) d tau`, in closed form.
    pub fn lambda_integral(&self, s: f64, horizon: f64) -> f64 {
        let span = horizon - s;
        let eta_integral = match self.eta {
            RunningDiscount::Zero => return 0.0,
            RunningDiscount::Constant { value } => value * span,
            RunningDiscount::Exponential { rate } => decay_integral(rate, span),
        };
        eta_integral / self.terminal_value(s, horizon)
    }

    /// `int_s^T lambda_t(s, tau) d tau`, in closed form.
    pub fn lambda_t_integral(&self, s: f64, horizon: f64) -> f64 {
        (self.eta_rate() - self.mu_rate()) * self.lambda_integral(s, horizon)
    }

    /// Exact `sup_{0 <= s <= tau <= T} |lambda(s, tau)|`.
    ///
    /// For the exponential family `log lambda` is affine on the triangle, so
    /// the supremum sits on one of its vertices.
    pub fn lambda_bound(&self, horizon: f64) -> f64 {
        let scale = match self.eta {
            RunningDiscount::Zero => return 0.0,
            RunningDiscount::Constant { value } => value.abs(),
            RunningDiscount::Exponential { .. } => 1.0,
        };
        let (c, m, t) = (self.eta_rate(), self.mu_rate(), horizon);
        // vertices (s, tau): (0, 0), (0, T), (T, T)
        let exponent = (m * t).max((m - c) * t).max(0.0);
        scale * exponent.exp()
    }

    pub fn is_degenerate(&self) -> bool {
        self.rho.is_unit() && matches!(self.eta, RunningDiscount::Zero)
            || self.rho.is_unit()
                && matches!(self.eta, RunningDiscount::Constant { value } if value == 0.0)
    }

    pub fn has_running_term(&self) -> bool {
        match self.eta {
            RunningDiscount::Zero => false,
            RunningDiscount::Constant { value } => value != 0.0,
            RunningDiscount::Exponential { .. } => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub ckls: CklsParams,
    pub stock: StockSpec,
    pub pref: DiscountPreference,
    pub horizon: f64,
}

impl MarketModel {
    pub fn new(ckls: CklsParams, stock: StockSpec, pref: DiscountPreference, horizon: f64) -> Result<Self> {
        let model = Self {
            ckls,
            stock,
            pref,
            horizon,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid("horizon", format!("{} must be finite and positive", self.horizon)));
        }
        self.ckls.check()?;
        self.stock.check()?;
        self.pref.check()
    }

    pub fn kappa(&self) -> f64 {
        self.ckls.kappa()
    }

    /// Excess return and stock volatility with full truncation, for simulation.
    pub(crate) fn stock_coefficients_truncated(&self, r: f64) -> (f64, f64) {
        let kappa = self.kappa();
        let excess = self.stock.delta * factor_pow_truncated(r, self.stock.excess_exponent(kappa));
        let vol = factor_pow_truncated(r, self.stock.vol_exponent());
        (excess, vol)
    }

    pub fn with_pref(&self, pref: DiscountPreference) -> Self {
        Self {
            pref,
            ..self.clone()
        }
    }
}

/// Market coefficients at one `(s, r)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    pub mu: f64,
    pub sigma_stock: f64,
    pub beta_excess: f64,
    pub m_drift: f64,
    pub n_diff: f64,
}

/// Stock and factor coefficients; `s` is accepted for a time-dependent
/// extension but the CKLS family is autonomous.
pub fn coefficients_at(model: &MarketModel, _s: f64, r: f64) -> Result<Coefficients> {
    let kappa = model.kappa();
    let stock = &model.stock;
    let beta_excess = stock.delta * factor_pow(r, stock.excess_exponent(kappa), "excess return")?;
    let sigma_stock = factor_pow(r, stock.vol_exponent(), "stock volatility")?;
    Ok(Coefficients {
        mu: stock.r0 + beta_excess,
        sigma_stock,
        beta_excess,
        m_drift: model.ckls.drift(r),
        n_diff: model.ckls.diffusion(r)?,
    })
}

/// Safety factor applied to the smallest admissible weight exponent.
pub const BETA_SAFETY: f64 = 1.1;

/// Smallest `beta` with `12 m / beta + 24 m / beta^2 < 1`, `m = max(c^2 T^2, 1)`,
/// inflated by [`BETA_SAFETY`].
pub fn min_beta(lambda_bound: f64, horizon: f64) -> f64 {
    let m = (lambda_bound * lambda_bound * horizon * horizon).max(1.0);
    // positive root of beta^2 - 12 m beta - 24 m = 0
    let root = 6.0 * m + (36.0 * m * m + 24.0 * m).sqrt();
    BETA_SAFETY * root
}

/// Left-hand side of the contraction condition on `beta`.
pub fn contraction_lhs(beta: f64, lambda_bound: f64, horizon: f64) -> f64 {
    let m = (lambda_bound * lambda_bound * horizon * horizon).max(1.0);
    12.0 * m / beta + 24.0 * m / (beta * beta)
}

/// Moment bound `b / (sigma^2 kappa (1 - e^{-2 b kappa T}))` for the CKLS factor.
pub fn ckls_moment_bound(b: f64, sigma: f64, kappa: f64, horizon: f64) -> f64 {
    if kappa == 0.0 || sigma == 0.0 {
        return f64::INFINITY;
    }
    let x = 2.0 * b * kappa * horizon;
    if x.abs() < 1e-14 {
        return 1.0 / (2.0 * sigma * sigma * kappa * kappa * horizon);
    }
    b / (sigma * sigma * kappa * (-(-x).exp_m1()))
}

/// Square-root case: `2 b / ((1 - e^{-bT}) sigma^2)`.
pub fn cir_moment_bound(b: f64, sigma: f64, horizon: f64) -> f64 {
    if sigma == 0.0 {
        return f64::INFINITY;
    }
    let x = b * horizon;
    if x.abs() < 1e-14 {
        return 2.0 / (horizon * sigma * sigma);
    }
    2.0 * b / ((-(-x).exp_m1()) * sigma * sigma)
}

/// Gaussian case: `b / ((1 - e^{-2bT}) sigma^2)`.
pub fn ou_moment_bound(b: f64, sigma: f64, horizon: f64) -> f64 {
    if sigma == 0.0 {
        return f64::INFINITY;
    }
    let x = 2.0 * b * horizon;
    if x.abs() < 1e-14 {
        return 1.0 / (2.0 * horizon * sigma * sigma);
    }
    b / ((-(-x).exp_m1()) * sigma * sigma)
}

/// Threshold `2 b^3 T^2 e^{bT} / (sigma^2 [2 e^{bT} - (1 + bT)^2 - 1])` beyond which
/// the square-root factor's exponential moment is infinite (`b > 0`).
pub fn cir_explosion_threshold(b: f64, sigma: f64, horizon: f64) -> f64 {
    let x = b * horizon;
    // 2 e^x - (1 + x)^2 - 1 = 2 sum_{k >= 3} x^k / k!
    let denom = if x.abs() < 0.1 {
        let mut term = x * x * x / 6.0;
        let mut sum = 0.0f64;
        let mut k = 3.0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) {
            sum += term;
            k += 1.0;
            term *= x / k;
        }
        2.0 * sum
    } else {
        2.0 * x.exp() - (1.0 + x).powi(2) - 1.0
    };
    2.0 * b.powi(3) * horizon * horizon * x.exp() / (sigma * sigma * denom)
}

/// One named check of a validation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub value: Option<f64>,
    pub bound: Option<f64>,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed,
            value: None,
            bound: None,
            detail: detail.into(),
        }
    }

    fn with_values(mut self, value: f64, bound: f64) -> Self {
        self.value = Some(value);
        self.bound = Some(bound);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Weight exponent used for the contraction certificate.
    pub beta: f64,
    /// `sup |lambda|` over the solution triangle.
    pub lambda_bound: f64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "beta = {:.6}, lambda bound = {:.6}", self.beta, self.lambda_bound)?;
        for c in &self.checks {
            let status = if c.passed { "pass" } else { "FAIL" };
            write!(f, "  [{status}] {}", c.name)?;
            if let (Some(v), Some(b)) = (c.value, c.bound) {
                write!(f, " (value {v:.6e}, bound {b:.6e})")?;
            }
            writeln!(f, ": {}", c.detail)?;
        }
        Ok(())
    }
}

/// Runs every well-posedness check for `model`.
///
/// Hard errors are reserved for values that make the model meaningless
/// (`p` outside `[0, 1]`, `alpha = 0`, non-positive horizon); everything else
/// is reported as a named check.
pub fn validate_model(model: &MarketModel) -> Result<ValidationReport> {
    let MarketModel {
        ckls,
        stock,
        pref,
        horizon,
    } = model;
    if !(0.0..=1.0).contains(&ckls.p) {
        return Err(invalid("p", format!("{} is outside [0, 1]", ckls.p)));
    }
    if let StockExponent::Finite { alpha } = stock.exponent {
        if alpha == 0.0 {
            return Err(invalid("alpha", "must be non-zero"));
        }
    }
    if !(*horizon > 0.0) || !horizon.is_finite() {
        return Err(invalid("horizon", format!("{horizon} must be finite and positive")));
    }

    let t = *horizon;
    let kappa = ckls.kappa();
    let lambda_bound = pref.lambda_bound(t);
    let beta = min_beta(lambda_bound, t);
    let mut checks = Vec::new();

    let (domain_ok, domain_detail) = if ckls.p == 1.0 {
        (
            ckls.a >= 0.0 && ckls.b < 0.0 && ckls.sigma > 0.0,
            "p = 1 needs a >= 0, b < 0, sigma > 0",
        )
    } else if ckls.p > 0.0 {
        (ckls.a > 0.0 && ckls.sigma > 0.0, "p in (0, 1) needs a > 0, sigma > 0")
    } else {
        (ckls.sigma >= 0.0, "p = 0 needs sigma >= 0")
    };
    checks.push(Check::new("ckls_domain", domain_ok && ckls.r0_factor > 0.0, domain_detail));

    checks.push(Check::new(
        "correlation",
        stock.rho_corr.abs() < 1.0,
        format!("|rho_corr| = {} must be < 1", stock.rho_corr.abs()),
    ));

    checks.push(Check::new(
        "risk_aversion",
        pref.gamma > 0.0,
        format!("gamma = {} must be positive", pref.gamma),
    ));

    let rho_bound = pref.rho.bound(t);
    let rho_min = pref.rho.min_value(t);
    checks.push(
        Check::new(
            "preference_bounds",
            rho_bound.is_finite() && lambda_bound.is_finite() && rho_min >= 0.0,
            "rho must be non-negative and bounded, lambda bounded",
        )
        .with_values(rho_bound.max(lambda_bound), f64::INFINITY),
    );

    if let TerminalDiscount::Exponential { rate } = pref.mu {
        let ok = matches!(pref.eta, RunningDiscount::Exponential { rate: r } if r == rate);
        checks.push(Check::new(
            "terminal_ratio_unity",
            ok,
            "lambda(s, T) = 1 needs eta and mu to share the exponential rate",
        ));
    }

    let lhs = contraction_lhs(beta, lambda_bound, t);
    checks.push(
        Check::new("contraction", lhs < 1.0, "12 m / beta + 24 m / beta^2 < 1, m = max(c^2 T^2, 1)")
            .with_values(lhs, 1.0),
    );

    let moment = beta * stock.rho_corr.powi(2) * stock.delta.powi(2) * t;
    let bound = ckls_moment_bound(ckls.b, ckls.sigma, kappa, t);
    let specialized = if ckls.p == 0.5 {
        format!(", square-root form {:.6e}", cir_moment_bound(ckls.b, ckls.sigma, t))
    } else if ckls.p == 0.0 {
        format!(", Gaussian form {:.6e}", ou_moment_bound(ckls.b, ckls.sigma, t))
    } else {
        String::new()
    };
    checks.push(
        Check::new(
            "moment_bound",
            moment < bound,
            format!("beta rho^2 delta^2 T < b / (sigma^2 kappa (1 - e^(-2 b kappa T))){specialized}"),
        )
        .with_values(moment, bound),
    );

    if ckls.p == 0.5 && ckls.b > 0.0 {
        let threshold = cir_explosion_threshold(ckls.b, ckls.sigma, t);
        checks.push(
            Check::new(
                "moment_explosion",
                moment < threshold,
                "exponential moment of the square-root factor explodes at or above the threshold",
            )
            .with_values(moment, threshold),
        );
    }

    Ok(ValidationReport {
        beta,
        lambda_bound,
        checks,
    })
}
