//! Brute-force reference for component densities: tensor Gauss–Legendre
//! quadrature of the joint latent Gaussian density over the discrete box.
//!
//! Deliberately shares nothing with the production density path beyond
//! the margin cdfs: the joint density is evaluated through an LU
//! factorization and the box is integrated coordinate by coordinate.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::margins::MarginParams;
use crate::model::ComponentParams;
pub use crate::special::gauss_legendre;
use crate::special::{norm_ppf, LN_SQRT_2PI};

pub const ORACLE_NODES: usize = 200;
/// Half-width, in conditional standard deviations, used in place of an
/// infinite bound.
pub const ORACLE_TRUNCATION: f64 = 8.5;

fn default_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORACLE_NODES))
}

/// Upper latent threshold computed straight from the margin cdf.
fn threshold(m: &MarginParams, x: f64) -> Result<f64> {
    let (c, s) = m.cdf_sf(x)?;
    Ok(if s <= 0.0 {
        f64::INFINITY
    } else if c <= 0.5 {
        norm_ppf(c)
    } else {
        -norm_ppf(s)
    })
}

fn lower_threshold(m: &MarginParams, x: f64) -> Result<f64> {
    let min = match m {
        MarginParams::Ordinal { .. } => 1.0,
        _ => 0.0,
    };
    if x <= min {
        Ok(f64::NEG_INFINITY)
    } else {
        threshold(m, x - 1.0)
    }
}

/// Log density of `x` under component `alpha`, with at most three
/// discrete variables.
pub fn oracle_logpdf_quadrature(x: &[f64], alpha: &ComponentParams) -> Result<f64> {
    let e = alpha.dim();
    if x.len() != e {
        return Err(Error::InvalidParameter("row length differs from component dimension".into()));
    }
    let c = alpha.margins.iter().take_while(|m| !m.is_discrete()).count();
    let d = e - c;
    if d > 3 || c > 3 {
        return Err(Error::InvalidParameter(format!("oracle supports c ≤ 3 and d ≤ 3, got c = {c}, d = {d}")));
    }
    let gamma = alpha.correlation.matrix().clone();
    let lu = gamma.clone().lu();
    let det = lu.determinant();
    if !(det > 0.0) {
        return Err(Error::NotPositiveDefinite("oracle correlation matrix".into()));
    }
    let prec = lu.try_inverse().ok_or(Error::Singular { condition: f64::INFINITY })?;
    let log_norm = -(e as f64) * LN_SQRT_2PI - 0.5 * det.ln();

    let mut y = vec![0.0; e];
    let mut log_jac = 0.0;
    for j in 0..c {
        match alpha.margins[j] {
            MarginParams::Gaussian { mu, sigma } => {
                y[j] = (x[j] - mu) / sigma;
                log_jac -= sigma.ln();
            }
            _ => unreachable!(),
        }
    }
    if d == 0 {
        let v = DVector::from_column_slice(&y);
        return Ok(log_norm - 0.5 * (v.transpose() * &prec * &v)[(0, 0)] + log_jac);
    }

    // Conditional law of the discrete block, only to place finite limits
    // in place of infinite ones.
    let (cmean, csd) = {
        let cont: Vec<usize> = (0..c).collect();
        let disc: Vec<usize> = (c..e).collect();
        let s_dd = gamma.select_rows(&disc).select_columns(&disc);
        if c == 0 {
            (vec![0.0; d], (0..d).map(|t| s_dd[(t, t)].sqrt()).collect::<Vec<_>>())
        } else {
            let s_cc = gamma.select_rows(&cont).select_columns(&cont);
            let s_dc = gamma.select_rows(&disc).select_columns(&cont);
            let inv_cc = s_cc.lu().try_inverse().ok_or(Error::Singular { condition: f64::INFINITY })?;
            let coef = &s_dc * inv_cc;
            let m = &coef * DVector::from_column_slice(&y[..c]);
            let cov = s_dd - &coef * s_dc.transpose();
            (m.as_slice().to_vec(), (0..d).map(|t| cov[(t, t)].sqrt()).collect())
        }
    };
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    for t in 0..d {
        let m = &alpha.margins[c + t];
        let (mut a, mut b) = (lower_threshold(m, x[c + t])?, threshold(m, x[c + t])?);
        let (mu, sd) = (cmean[t], csd[t]);
        if a == f64::NEG_INFINITY {
            a = b.min(mu) - ORACLE_TRUNCATION * sd;
        }
        if b == f64::INFINITY {
            b = a.max(mu) + ORACLE_TRUNCATION * sd;
        }
        lo[t] = a;
        hi[t] = b;
    }

    let (nodes, weights) = default_rule();
    let n = nodes.len();
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    let mut v = DVector::from_column_slice(&y);
    let scale: Vec<f64> = (0..d).map(|t| 0.5 * (hi[t] - lo[t])).collect();
    let mid: Vec<f64> = (0..d).map(|t| 0.5 * (hi[t] + lo[t])).collect();
    loop {
        let mut w = 1.0;
        for t in 0..d {
            v[c + t] = mid[t] + scale[t] * nodes[idx[t]];
            w *= weights[idx[t]] * scale[t];
        }
        let q = (v.transpose() * &prec * &v)[(0, 0)];
        total += w * (-0.5 * q).exp();
        let mut t = 0;
        loop {
            idx[t] += 1;
            if idx[t] < n {
                break;
            }
            idx[t] = 0;
            t += 1;
            if t == d {
                return finish(total, log_norm, log_jac);
            }
        }
    }
}

fn finish(total: f64, log_norm: f64, log_jac: f64) -> Result<f64> {
    if !(total > 0.0) {
        return Err(Error::Degenerate("oracle box integral underflowed".into()));
    }
    Ok(total.ln() + log_norm + log_jac)
}

/// Oracle for P(y ∈ box) under N(0, cov), `cov` a correlation-like matrix of
/// dimension ≤ 3. Infinite bounds are truncated at ±8.5 marginal sd.
pub fn oracle_box_probability(cov: &DMatrix<f64>, lower: &[f64], upper: &[f64]) -> Result<f64> {
    let d = cov.nrows();
    if d == 0 || d > 3 {
        return Err(Error::InvalidParameter("oracle box dimension must be 1..=3".into()));
    }
    let lu = cov.clone().lu();
    let det = lu.determinant();
    let prec = lu.try_inverse().ok_or(Error::Singular { condition: f64::INFINITY })?;
    let log_norm = -(d as f64) * LN_SQRT_2PI - 0.5 * det.ln();
    let (nodes, weights) = default_rule();
    let n = nodes.len();
    let mut lo = lower.to_vec();
    let mut hi = upper.to_vec();
    for t in 0..d {
        let sd = cov[(t, t)].sqrt();
        if lo[t] == f64::NEG_INFINITY {
            lo[t] = hi[t].min(0.0) - ORACLE_TRUNCATION * sd;
        }
        if hi[t] == f64::INFINITY {
            hi[t] = lo[t].max(0.0) + ORACLE_TRUNCATION * sd;
        }
    }
    let mut idx = vec![0usize; d];
    let mut v = DVector::zeros(d);
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for t in 0..d {
            let s = 0.5 * (hi[t] - lo[t]);
            v[t] = 0.5 * (hi[t] + lo[t]) + s * nodes[idx[t]];
            w *= weights[idx[t]] * s;
        }
        total += w * (-0.5 * (v.transpose() * &prec * &v)[(0, 0)]).exp();
        let mut t = 0;
        loop {
            idx[t] += 1;
            if idx[t] < n {
                break;
            }
            idx[t] = 0;
            t += 1;
            if t == d {
                return Ok(total * log_norm.exp());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::presets::example1;
    use crate::gauss::CorrelationMatrix;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((i - 2.0 / 13.0).abs() < 1e-14);
        let (_, w) = gauss_legendre(ORACLE_NODES);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn orthant_identity() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let p = oracle_box_probability(&cov, &[f64::NEG_INFINITY; 2], &[0.0; 2]).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-8, "{p}");
    }

    #[test]
    fn independent_component_is_margin_product() {
        let a = ComponentParams::new(
            CorrelationMatrix::identity(3),
            vec![
                MarginParams::Gaussian { mu: 1.0, sigma: 2.0 },
                MarginParams::Poisson { lambda: 3.5 },
                MarginParams::Ordinal { probs: vec![0.2, 0.5, 0.3] },
            ],
        );
        let x = [0.3, 2.0, 3.0];
        let want: f64 = (0..3).map(|j| a.margins[j].logpdf(x[j]).unwrap()).sum();
        let got = oracle_logpdf_quadrature(&x, &a).unwrap();
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }

    #[test]
    fn example1_reference() {
        // Independent check by adaptive 1-D quadrature of the conditional
        // bivariate box with an external numerical library.
        let (_, theta) = example1();
        let v = oracle_logpdf_quadrature(&[-2.0, 5.0, 1.0], &theta.components[0]).unwrap();
        assert!((v - -3.323763762555972).abs() < 1e-9, "{v}");
    }
}
