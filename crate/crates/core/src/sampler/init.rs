//! Maximum likelihood fit of the locally independent mixture by EM, used
//! as the sampler's starting point.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gauss::CorrelationMatrix;
use crate::margins::MarginParams;
use crate::model::{ComponentParams, Family, MixtureParams};
use crate::schema::{MixedDataset, VariableKind};
use crate::special::log_sum_exp;

const REL_TOL: f64 = 1e-8;
/// A Gaussian sd below this fraction of the column sd counts as collapsed.
const SIGMA_FLOOR: f64 = 1e-4;
const LAMBDA_FLOOR: f64 = 1e-8;
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct EmFit {
    /// Independent margins, identity correlation matrices, arranged for
    /// `family`.
    pub theta: MixtureParams,
    pub loglik: f64,
    /// Log-likelihood after each E-step of the retained restart.
    pub trace: Vec<f64>,
}

/// Best of `restarts` EM runs of at most `max_iter` iterations each.
pub fn em_local_independent<R: Rng + ?Sized>(
    data: &MixedDataset,
    g: usize,
    family: Family,
    restarts: usize,
    max_iter: usize,
    rng: &mut R,
) -> Result<EmFit> {
    if g < 1 {
        return Err(Error::Config("g must be ≥ 1".into()));
    }
    let n = data.n();
    if n < g {
        return Err(Error::InvalidParameter(format!("{n} rows cannot fill {g} components")));
    }
    let cols = ColumnStats::new(data)?;
    if g == 1 {
        let resp = vec![vec![1.0]; n];
        let (pi, margins) = m_step(data, &cols, &resp, 1).ok_or_else(|| Error::FitFailed("degenerate single-component fit".into()))?;
        let (ll, _) = e_step(data, &pi, &margins);
        return Ok(EmFit {
            theta: assemble(family, pi, margins)?,
            loglik: ll,
            trace: vec![ll],
        });
    }
    let mut best: Option<EmFit> = None;
    for r in 0..restarts.max(1) {
        match run_once(data, &cols, g, max_iter, rng) {
            Some((pi, margins, trace)) => {
                let ll = *trace.last().expect("at least one E-step");
                if best.as_ref().is_none_or(|b| ll > b.loglik) {
                    best = Some(EmFit {
                        theta: assemble(family, pi, margins)?,
                        loglik: ll,
                        trace,
                    });
                }
            }
            None => log::debug!("EM restart {r} degenerated"),
        }
    }
    best.ok_or_else(|| Error::FitFailed(format!("all {restarts} EM restarts degenerated for g = {g}")))
}

struct ColumnStats {
    kinds: Vec<VariableKind>,
    sd: Vec<f64>,
}

impl ColumnStats {
    fn new(data: &MixedDataset) -> Result<Self> {
        let n = data.n() as f64;
        let e = data.schema().len();
        let mut sd = vec![0.0; e];
        let kinds: Vec<VariableKind> = (0..e).map(|j| data.schema().kind(j)).collect();
        for j in 0..e {
            let col = data.column(j);
            let m = col.iter().sum::<f64>() / n;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            if kinds[j].is_continuous() && !(v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "continuous column '{}' is constant",
                    data.schema().columns()[j].name
                )));
            }
            sd[j] = if v > 0.0 { v.sqrt() } else { 1.0 };
        }
        Ok(ColumnStats { kinds, sd })
    }
}

type Margins = Vec<Vec<MarginParams>>;

fn run_once<R: Rng + ?Sized>(
    data: &MixedDataset,
    cols: &ColumnStats,
    g: usize,
    max_iter: usize,
    rng: &mut R,
) -> Option<(Vec<f64>, Margins, Vec<f64>)> {
    let n = data.n();
    let e = cols.kinds.len();
    // Soft assignment to g distinct random rows by standardized distance.
    let mut seeds: Vec<usize> = Vec::with_capacity(g);
    while seeds.len() < g {
        let i = rng.random_range(0..n);
        if !seeds.contains(&i) {
            seeds.push(i);
        }
    }
    let mut resp: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let logits: Vec<f64> = seeds
                .iter()
                .map(|&s| {
                    -0.5 * (0..e)
                        .map(|j| ((data.value(i, j) - data.value(s, j)) / cols.sd[j]).powi(2))
                        .sum::<f64>()
                })
                .collect();
            let lse = log_sum_exp(&logits);
            logits.iter().map(|l| (l - lse).exp()).collect()
        })
        .collect();
    let mut trace = Vec::new();
    let mut state = None;
    for _ in 0..max_iter.max(1) {
        let (pi, margins) = m_step(data, cols, &resp, g)?;
        let (ll, r) = e_step(data, &pi, &margins);
        if !ll.is_finite() {
            return None;
        }
        resp = r;
        let converged = trace.last().is_some_and(|&prev: &f64| (ll - prev).abs() <= REL_TOL * ll.abs());
        trace.push(ll);
        state = Some((pi, margins));
        if converged {
            break;
        }
    }
    let (pi, margins) = state?;
    Some((pi, margins, trace))
}

/// Weighted closed-form updates; `None` when a component empties or a
/// Gaussian margin collapses.
fn m_step(data: &MixedDataset, cols: &ColumnStats, resp: &[Vec<f64>], g: usize) -> Option<(Vec<f64>, Margins)> {
    let n = data.n();
    let e = cols.kinds.len();
    let mut pi = vec![0.0; g];
    let mut margins = Vec::with_capacity(g);
    for k in 0..g {
        let w: Vec<f64> = resp.iter().map(|r| r[k]).collect();
        let nk: f64 = w.iter().sum();
        if !(nk > 1e-6 * n as f64) || nk < 1e-8 {
            return None;
        }
        pi[k] = nk / n as f64;
        let mut mk = Vec::with_capacity(e);
        for j in 0..e {
            let mean = (0..n).map(|i| w[i] * data.value(i, j)).sum::<f64>() / nk;
            let m = match cols.kinds[j] {
                VariableKind::Continuous => {
                    let var = (0..n).map(|i| w[i] * (data.value(i, j) - mean).powi(2)).sum::<f64>() / nk;
                    let sigma = var.sqrt();
                    if !(sigma > SIGMA_FLOOR * cols.sd[j]) {
                        return None;
                    }
                    MarginParams::Gaussian { mu: mean, sigma }
                }
                VariableKind::Integer => MarginParams::Poisson {
                    lambda: mean.max(LAMBDA_FLOOR),
                },
                VariableKind::Ordinal { levels } => {
                    let mut p = vec![0.0; levels as usize];
                    for i in 0..n {
                        p[data.value(i, j) as usize - 1] += w[i];
                    }
                    for v in &mut p {
                        *v = (*v / nk).max(PROB_FLOOR);
                    }
                    let s: f64 = p.iter().sum();
                    MarginParams::Ordinal {
                        probs: p.iter().map(|v| v / s).collect(),
                    }
                }
            };
            mk.push(m);
        }
        margins.push(mk);
    }
    Some((pi, margins))
}

fn e_step(data: &MixedDataset, pi: &[f64], margins: &Margins) -> (f64, Vec<Vec<f64>>) {
    let mut ll = 0.0;
    let resp = data
        .rows()
        .map(|x| {
            let logs: Vec<f64> = margins
                .iter()
                .zip(pi)
                .map(|(mk, p)| {
                    p.ln() + mk
                        .iter()
                        .zip(x)
                        .map(|(m, v)| m.logpdf(*v).unwrap_or(f64::NEG_INFINITY))
                        .sum::<f64>()
                })
                .collect();
            let lse = log_sum_exp(&logs);
            ll += lse;
            logs.iter().map(|l| (l - lse).exp()).collect()
        })
        .collect();
    (ll, resp)
}

fn assemble(family: Family, pi: Vec<f64>, margins: Margins) -> Result<MixtureParams> {
    let s: f64 = pi.iter().sum();
    let pi = pi.iter().map(|p| p / s).collect();
    let components = margins
        .into_iter()
        .map(|m| ComponentParams::new(CorrelationMatrix::identity(m.len()), m))
        .collect();
    MixtureParams::new(family, pi, components)
}
