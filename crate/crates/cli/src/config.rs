use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use mvbsde::bsde::{Columns, SolverConfig};
use mvbsde::model::{
    CklsParams, DiscountPreference, MarketModel, RhoWeight, RunningDiscount, StockExponent, StockSpec,
    TerminalDiscount,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Validate,
    Simulate,
    SolveBsde,
    Policy,
    Evaluate,
    Compare,
    DiscountStudy,
    Statedep,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.to_possible_value().expect("no skipped variants");
        f.write_str(name.get_name())
    }
}

impl Kind {
    fn needs_model(self) -> bool {
        self != Kind::Statedep
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub p: f64,
    /// Defaults to the long-run mean `a / b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0_factor: Option<f64>,
    /// Risk-free rate.
    pub r0: f64,
    pub delta: f64,
    #[serde(default = "default_exponent")]
    pub exponent: StockExponent,
    pub rho_corr: f64,
    #[serde(default = "one")]
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceBlock {
    pub gamma: f64,
    #[serde(default = "unit_rho")]
    pub rho: RhoWeight,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<RunningDiscount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<TerminalDiscount>,
    /// Shorthand for `eta = mu = exp(-c (. - s))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_coef: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    /// Training paths `M`.
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Evaluation paths; defaults to `n_paths`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_paths: Option<usize>,
    #[serde(default = "default_basis")]
    pub basis_size: usize,
    #[serde(default = "default_picard")]
    pub picard_iters: usize,
    #[serde(default = "default_sweeps")]
    pub layer_sweeps: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            n_steps: default_steps(),
            n_paths: default_paths(),
            eval_paths: None,
            basis_size: default_basis(),
            picard_iters: default_picard(),
            layer_sweeps: default_sweeps(),
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Myopic {
    #[default]
    ClosedForm,
    Volterra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyBlock {
    #[serde(default)]
    pub myopic: Myopic,
    #[serde(default = "default_quad")]
    pub n_quad: usize,
    /// Evaluation path along which policy curves are written.
    #[serde(default)]
    pub trajectory: usize,
}

impl Default for PolicyBlock {
    fn default() -> Self {
        Self {
            myopic: Myopic::default(),
            n_quad: default_quad(),
            trajectory: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    #[default]
    Analytic,
    CalibratedCir,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBlock {
    #[serde(default)]
    pub baseline: Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountStudyBlock {
    pub lambda_coefs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatedepBlock {
    /// Excess return `beta(s)`.
    pub beta: RhoWeight,
    /// Volatility `sigma(s)`.
    pub sigma: RhoWeight,
    pub r0: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "default_grid")]
    pub n_grid: usize,
    #[serde(default = "default_phi_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

/// Experiment configuration. After [`ExperimentConfig::resolve`] every
/// default is explicit, so the serialized form fully determines the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference: Option<PreferenceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount_study: Option<DiscountStudyBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statedep: Option<StatedepBlock>,
}

fn one() -> f64 {
    1.0
}
fn default_exponent() -> StockExponent {
    StockExponent::Finite { alpha: -1.0 }
}
fn unit_rho() -> RhoWeight {
    RhoWeight::Constant { value: 1.0 }
}
fn default_steps() -> usize {
    10
}
fn default_paths() -> usize {
    10_000
}
fn default_basis() -> usize {
    3
}
fn default_picard() -> usize {
    3
}
fn default_sweeps() -> usize {
    2
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_quad() -> usize {
    200
}
fn default_grid() -> usize {
    200
}
fn default_phi_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    10_000
}

/// Reads a TOML or JSON config; a run manifest is accepted through its `config` entry.
pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        let mut value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value).with_context(|| format!("reading config from {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

impl ExperimentConfig {
    /// Fills defaults and checks that the blocks needed by `kind` are present.
    pub fn resolve(mut self, kind: Kind, seed: Option<u64>) -> Result<Self> {
        if let Some(k) = self.kind {
            if k != kind {
                bail!("config is for `{k}` but `{kind}` was requested");
            }
        }
        self.kind = Some(kind);
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if kind.needs_model() {
            let model = self.model.as_mut().context("[model] block is required")?;
            if model.r0_factor.is_none() {
                if model.b == 0.0 {
                    bail!("model.r0_factor is required when b = 0");
                }
                model.r0_factor = Some(model.a / model.b);
            }
            if self.preference.is_none() {
                bail!("[preference] block is required");
            }
        }
        if let Some(pref) = self.preference.as_mut() {
            if let Some(c) = pref.lambda_coef.take() {
                if pref.eta.is_some() || pref.mu.is_some() {
                    bail!("preference.lambda_coef cannot be combined with eta or mu");
                }
                pref.eta = Some(RunningDiscount::Exponential { rate: c });
                pref.mu = Some(TerminalDiscount::Exponential { rate: c });
            }
            pref.eta.get_or_insert(RunningDiscount::Zero);
            pref.mu.get_or_insert(TerminalDiscount::One);
        }
        let uses_solver = matches!(
            kind,
            Kind::Simulate | Kind::SolveBsde | Kind::Policy | Kind::Evaluate | Kind::Compare | Kind::DiscountStudy
        );
        if uses_solver {
            let solver = self.solver.get_or_insert_with(SolverBlock::default);
            solver.eval_paths.get_or_insert(solver.n_paths);
        }
        if matches!(kind, Kind::Policy | Kind::Evaluate | Kind::Compare) {
            self.policy.get_or_insert_with(PolicyBlock::default);
        }
        match kind {
            Kind::Compare => {
                self.compare.get_or_insert_with(CompareBlock::default);
            }
            Kind::DiscountStudy if self.discount_study.is_none() => bail!("[discount_study] block is required"),
            Kind::Statedep => {
                if self.statedep.is_none() {
                    bail!("[statedep] block is required");
                }
                self.preference.get_or_insert(PreferenceBlock {
                    gamma: 1.0,
                    rho: unit_rho(),
                    eta: Some(RunningDiscount::Zero),
                    mu: Some(TerminalDiscount::One),
                    lambda_coef: None,
                });
            }
            _ => {}
        }
        Ok(self)
    }

    pub fn preference(&self) -> Result<DiscountPreference> {
        let p = self.preference.as_ref().context("[preference] block is required")?;
        Ok(DiscountPreference::new(
            p.gamma,
            p.rho.clone(),
            p.eta.unwrap_or(RunningDiscount::Zero),
            p.mu.unwrap_or(TerminalDiscount::One),
        )?)
    }

    pub fn market_model(&self) -> Result<MarketModel> {
        let m = self.model.as_ref().context("[model] block is required")?;
        let r0_factor = m.r0_factor.context("model.r0_factor is unresolved")?;
        let ckls = CklsParams::new(m.a, m.b, m.sigma, m.p, r0_factor)?;
        let stock = StockSpec::new(m.r0, m.delta, m.exponent, m.rho_corr)?;
        Ok(MarketModel::new(ckls, stock, self.preference()?, m.horizon)?)
    }

    pub fn solver(&self) -> SolverBlock {
        self.solver.clone().unwrap_or_default()
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = self.solver();
        SolverConfig {
            picard_iters: s.picard_iters,
            layer_sweeps: s.layer_sweeps,
            basis_size: s.basis_size,
            tolerance: s.tolerance,
            columns: Columns::All,
        }
    }

    /// Canonical JSON of the resolved config, the input of the output-directory hash.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
[model]
a = 9.4251
b = 0.3374
sigma = 0.6503
p = 0.5
r0 = 0.03
delta = 0.0811
rho_corr = -0.5
[preference]
gamma = 4.0
lambda_coef = 0.5
"#;

    #[test]
    fn resolution_fills_defaults() {
        let cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        let cfg = cfg.resolve(Kind::Evaluate, Some(9)).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.kind, Some(Kind::Evaluate));
        assert_eq!(cfg.model.as_ref().unwrap().r0_factor, Some(9.4251 / 0.3374));
        let pref = cfg.preference.as_ref().unwrap();
        assert_eq!(pref.lambda_coef, None);
        assert_eq!(pref.eta, Some(RunningDiscount::Exponential { rate: 0.5 }));
        assert_eq!(cfg.solver.as_ref().unwrap().eval_paths, Some(10_000));
        // resolving twice changes nothing
        let again = cfg.clone().resolve(Kind::Evaluate, None).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.canonical_json().unwrap(), cfg.canonical_json().unwrap());
    }

    #[test]
    fn missing_blocks_and_mismatched_kind() {
        let cfg: ExperimentConfig = toml::from_str("seed = 1").unwrap();
        assert!(cfg.clone().resolve(Kind::Validate, None).is_err());
        assert!(cfg.resolve(Kind::Statedep, None).is_err());
        let mut cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        cfg.kind = Some(Kind::Simulate);
        assert!(cfg.resolve(Kind::Compare, None).is_err());
        assert!(toml::from_str::<ExperimentConfig>("seed = 1\nunknown = 2").is_err());
    }

    #[test]
    fn kind_names_are_kebab_case() {
        assert_eq!(Kind::DiscountStudy.to_string(), "discount-study");
        assert_eq!(Kind::SolveBsde.to_string(), "solve-bsde");
    }
}
