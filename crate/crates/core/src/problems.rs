//! Reference parameter sets.

use crate::model::{
    CklsParams, DiscountPreference, MarketModel, StockExponent, StockSpec,
};

/// Square-root factor, `alpha = -1`, terminal objective with `gamma = 4`.
/// The factor starts at its long-run mean `a / b`.
pub fn problem_a(rho_corr: f64) -> MarketModel {
    ckls_problem(0.5, rho_corr)
}

/// Problem A's parameters with elasticity `p` in place of `1/2`.
pub fn problem_c(p: f64, rho_corr: f64) -> MarketModel {
    ckls_problem(p, rho_corr)
}

fn ckls_problem(p: f64, rho_corr: f64) -> MarketModel {
    let (a, b) = (9.4251, 0.3374);
    MarketModel {
        ckls: CklsParams {
            a,
            b,
            sigma: 0.6503,
            p,
            r0_factor: a / b,
        },
        stock: StockSpec {
            r0: 0.03,
            delta: 0.0811,
            exponent: StockExponent::Finite { alpha: -1.0 },
            rho_corr,
        },
        pref: DiscountPreference::terminal(4.0),
        horizon: 1.0,
    }
}

/// Gaussian factor with unit stock volatility and Sharpe ratio `R`.
pub fn problem_b(rho_corr: f64) -> MarketModel {
    let (a, b) = (0.021276, 0.27);
    MarketModel {
        ckls: CklsParams {
            a,
            b,
            sigma: 0.065,
            p: 0.0,
            r0_factor: a / b,
        },
        stock: StockSpec {
            r0: 0.0014,
            delta: 1.0,
            exponent: StockExponent::OuLimit,
            rho_corr,
        },
        pref: DiscountPreference::terminal(4.0),
        horizon: 1.0,
    }
}
