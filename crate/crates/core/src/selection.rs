//! Parameter counts, information criteria and (family, g) sweeps.
//!
//! Criteria are on the "larger is better" scale:
//! BIC = log L − ν/2 · ln n and ICL = BIC + Σ_i Σ_k t_ik ln t_ik.

use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::BoxAccuracy;
use crate::model::{Family, MixtureEval, MixtureParams};
use crate::sampler::{fit, ChainConfig};
use crate::schema::{MixedDataset, Schema, VariableKind};

/// Free parameters of a g-component mixture of the given family.
pub fn param_count(schema: &Schema, g: usize, family: Family) -> usize {
    let per_component: usize = schema
        .columns()
        .iter()
        .map(|c| match c.kind {
            VariableKind::Continuous => 2,
            VariableKind::Integer => 1,
            VariableKind::Ordinal { levels } => levels as usize - 1,
        })
        .sum();
    let e = schema.len();
    let corr = e * (e - 1) / 2;
    let local = g.saturating_sub(1) + g * per_component;
    match family {
        Family::LocalIndependence => local,
        Family::Homoscedastic => local + corr,
        Family::Heteroscedastic => local + g * corr,
    }
}

/// Σ_i log p(x_i | θ).
pub fn observed_loglik(data: &MixedDataset, theta: &MixtureParams, acc: &BoxAccuracy) -> Result<f64> {
    theta.validate(data.schema())?;
    let eval = MixtureEval::for_data(theta, data)?;
    let logs: Vec<f64> = (0..data.n())
        .into_par_iter()
        .map(|i| eval.logpdf(data.row(i), acc).value)
        .collect();
    Ok(logs.iter().sum())
}

pub fn bic(loglik: f64, nu: usize, n: usize) -> f64 {
    loglik - 0.5 * nu as f64 * (n as f64).ln()
}

/// Σ_i Σ_k t_ik ln t_ik, with 0 ln 0 = 0 (never positive).
pub fn entropy_term(t: &[Vec<f64>]) -> f64 {
    t.iter()
        .flatten()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum()
}

pub fn icl(bic: f64, t: &[Vec<f64>]) -> f64 {
    bic + entropy_term(t)
}

/// One (family, g) cell; criterion values are `None` for degenerate or
/// failed fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionCell {
    pub family: Family,
    pub g: usize,
    pub nu: usize,
    pub loglik: Option<f64>,
    pub bic: Option<f64>,
    pub icl: Option<f64>,
    pub entropy: Option<f64>,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub n: usize,
    pub cells: Vec<CriterionCell>,
    /// Index into `cells` of the best BIC.
    pub best_bic: Option<usize>,
    pub best_icl: Option<usize>,
}

impl CriterionReport {
    pub fn from_cells(n: usize, cells: Vec<CriterionCell>) -> Self {
        let best = |f: fn(&CriterionCell) -> Option<f64>| {
            let mut best: Option<usize> = None;
            for (i, c) in cells.iter().enumerate() {
                if let Some(v) = f(c) {
                    if best.is_none_or(|b| v > f(&cells[b]).expect("best cell has a value")) {
                        best = Some(i);
                    }
                }
            }
            best
        };
        let best_bic = best(|c| c.bic);
        let best_icl = best(|c| c.icl);
        CriterionReport {
            n,
            cells,
            best_bic,
            best_icl,
        }
    }

    pub fn best_bic_cell(&self) -> Option<&CriterionCell> {
        self.best_bic.map(|i| &self.cells[i])
    }

    pub fn best_icl_cell(&self) -> Option<&CriterionCell> {
        self.best_icl.map(|i| &self.cells[i])
    }

    /// Comma-separated table, one row per cell, "NA" for missing values.
    pub fn to_csv(&self) -> String {
        let na = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
        let mut s = String::from("family,g,nu,loglik,bic,icl,entropy,degenerate,best_bic,best_icl\n");
        for (i, c) in self.cells.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                c.family.short_name(),
                c.g,
                c.nu,
                na(c.loglik),
                na(c.bic),
                na(c.icl),
                na(c.entropy),
                c.degenerate,
                self.best_bic == Some(i),
                self.best_icl == Some(i)
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Fits every (family, g) combination with the chain settings of `base`
/// and tabulates the criteria. A failed or degenerate fit yields an NA
/// cell and the sweep goes on.
pub fn sweep(data: &MixedDataset, g_range: &[usize], families: &[Family], base: &ChainConfig) -> Result<CriterionReport> {
    if g_range.is_empty() || families.is_empty() {
        return Err(Error::Config("the sweep needs at least one g and one family".into()));
    }
    if g_range.contains(&0) {
        return Err(Error::Config("g must be ≥ 1".into()));
    }
    let n = data.n();
    let mut cells = Vec::with_capacity(g_range.len() * families.len());
    for &family in families {
        for &g in g_range {
            let nu = param_count(data.schema(), g, family);
            let mut cfg = base.clone();
            cfg.g = g;
            cfg.family = family;
            cfg.init = None;
            let cell = match fit(data, &cfg) {
                Ok(r) => {
                    let b = bic(r.loglik, nu, n);
                    let ent = entropy_term(&r.posterior);
                    info!("{family} g={g}: loglik {:.3}, BIC {:.3}, ICL {:.3}", r.loglik, b, b + ent);
                    CriterionCell {
                        family,
                        g,
                        nu,
                        loglik: Some(r.loglik),
                        bic: Some(b),
                        icl: Some(b + ent),
                        entropy: Some(ent),
                        degenerate: false,
                        note: None,
                    }
                }
                Err(e) if e.is_numerical() => {
                    warn!("{family} g={g}: {e}");
                    CriterionCell {
                        family,
                        g,
                        nu,
                        loglik: None,
                        bic: None,
                        icl: None,
                        entropy: None,
                        degenerate: true,
                        note: Some(e.to_string()),
                    }
                }
                Err(e) => return Err(e),
            };
            cells.push(cell);
        }
    }
    Ok(CriterionReport::from_cells(n, cells))
}
