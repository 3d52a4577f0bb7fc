//! CSV writers. Floats are written with 12 significant digits.

use std::io::Write;

use crate::baselines::AnalyticBaseline;
use crate::bsde::BsdeSolution;
use crate::error::Result;
use crate::evaluate::{DiscountRow, ObjectiveEstimate};
use crate::model::DiscountPreference;
use crate::policy::{policy_curve, PolicyField};
use crate::simulate::{PathEnsemble, TimeGrid};
use crate::statedep::StateDepSolution;
use crate::volterra::{closed_form_a, VolterraSolution};

/// 12 significant digits.
pub fn fmt(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn write_paths<W: Write>(mut out: W, ens: &PathEnsemble) -> Result<()> {
    writeln!(out, "path_id,step,t,R,dB_R,dB_S")?;
    let n = ens.grid.n_steps;
    for m in 0..ens.n_paths {
        for i in 0..=n {
            let (db_r, db_s) = if i < n {
                (fmt(ens.db_factor_at(m, i)), fmt(ens.db_stock_at(m, i)))
            } else {
                (String::new(), String::new())
            };
            writeln!(out, "{m},{i},{},{},{db_r},{db_s}", fmt(ens.grid.time(i)), fmt(ens.factor_at(m, i)))?;
        }
    }
    Ok(())
}

pub fn write_coefficients<W: Write>(mut out: W, sol: &BsdeSolution) -> Result<()> {
    writeln!(out, "t_idx,tau_idx,k,coefY,coefZ")?;
    for (t, tau, k, y, z) in sol.coefficient_rows() {
        writeln!(out, "{t},{tau},{k},{},{}", fmt(y), fmt(z))?;
    }
    Ok(())
}

pub fn write_policy_header<W: Write>(mut out: W) -> Result<()> {
    writeln!(out, "t,R,u_myopic,u_hedge,u_total,policy_id")?;
    Ok(())
}

/// Appends the curve of `policy` along `path`, header not included.
pub fn write_policy_curve<W: Write>(mut out: W, policy: &PolicyField, grid: &TimeGrid, path: &[f64]) -> Result<()> {
    for row in policy_curve(policy, grid, path)? {
        let cells: Vec<String> = row.iter().map(|&x| fmt(x)).collect();
        writeln!(out, "{},{}", cells.join(","), policy.id())?;
    }
    Ok(())
}

pub fn write_objective_header<W: Write>(mut out: W) -> Result<()> {
    writeln!(out, "s,J_hat,stderr,policy_id")?;
    Ok(())
}

pub fn write_objective<W: Write>(mut out: W, est: &ObjectiveEstimate) -> Result<()> {
    for ((s, j), se) in est.times.iter().zip(&est.estimates).zip(&est.std_errors) {
        writeln!(out, "{},{},{},{}", fmt(*s), fmt(*j), fmt(*se), est.policy_id)?;
    }
    Ok(())
}

pub fn write_discount<W: Write>(mut out: W, rows: &[DiscountRow]) -> Result<()> {
    writeln!(out, "s,lambda_coef,avg_rel_diff,avg_abs_rel_diff,median_rel_diff,n_used,n_excluded")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt(r.s),
            fmt(r.lambda_coef),
            fmt(r.avg_rel_diff),
            fmt(r.avg_abs_rel_diff),
            fmt(r.median_rel_diff),
            r.n_used,
            r.n_excluded
        )?;
    }
    Ok(())
}

pub fn write_phi<W: Write>(mut out: W, sol: &StateDepSolution) -> Result<()> {
    writeln!(out, "s,phi")?;
    for (s, p) in sol.s.iter().zip(&sol.phi) {
        writeln!(out, "{},{}", fmt(*s), fmt(*p))?;
    }
    Ok(())
}

pub fn write_volterra<W: Write>(mut out: W, sol: &VolterraSolution, pref: &DiscountPreference) -> Result<()> {
    writeln!(out, "s,A_numeric,A_closed_form,abs_err")?;
    let horizon = sol.horizon();
    for (s, a) in sol.nodes.iter().zip(&sol.values) {
        let exact = closed_form_a(pref, horizon, *s);
        writeln!(out, "{},{},{},{}", fmt(*s), fmt(*a), fmt(exact), fmt((a - exact).abs()))?;
    }
    Ok(())
}

pub fn write_baseline<W: Write>(mut out: W, baseline: &AnalyticBaseline, grid: &TimeGrid, path: &[f64]) -> Result<()> {
    writeln!(out, "t,R,u_analytic")?;
    let policy = baseline.policy();
    for row in policy_curve(&policy, grid, path)? {
        writeln!(out, "{},{},{}", fmt(row[0]), fmt(row[1]), fmt(row[4]))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(fmt(0.0), "0.00000000000e0");
        let x = 123456.789012345;
        assert!((fmt(x).parse::<f64>().unwrap() - x).abs() / x < 1e-11);
    }

    #[test]
    fn phi_csv_layout() {
        let sol = StateDepSolution {
            s: vec![0.0, 1.0],
            phi: vec![0.0, 0.0],
            residual: 0.0,
            iterations: 0,
        };
        let mut buf = Vec::new();
        write_phi(&mut buf, &sol).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "s,phi\n0.00000000000e0,0.00000000000e0\n1.00000000000e0,0.00000000000e0\n");
    }
}
