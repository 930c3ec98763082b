//! Per-component PCA maps: eigen-decomposition of a component's
//! correlation matrix, individual scores computed from conditional latent
//! means, and correlation-circle loadings. Output is plain CSV.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{CorrelationMatrix, TruncatedMvn};
use crate::model::{ComponentEval, ComponentParams, MixtureEval, MixtureParams};
use crate::rng::stream;
use crate::schema::MixedDataset;
use crate::special::truncated_std_normal_mean;

pub const DEFAULT_MC_DRAWS: usize = 500;
const MC_BURN_IN: usize = 20;
const MC_BATCHES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaMap {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column a is the a-th axis; within each column the entry of largest
    /// magnitude is positive (first such entry on ties).
    pub eigenvectors: Vec<Vec<f64>>,
    pub explained: Vec<f64>,
}

impl PcaMap {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn axis(&self, a: usize) -> Vec<f64> {
        self.eigenvectors.iter().map(|row| row[a]).collect()
    }

    fn check_axes(&self, axes: (usize, usize)) -> Result<()> {
        let e = self.dim();
        if axes.0 == axes.1 {
            return Err(Error::Config("axes must differ".into()));
        }
        if axes.0 >= e || axes.1 >= e {
            return Err(Error::Config(format!("axes must be below {e}, got ({}, {})", axes.0, axes.1)));
        }
        Ok(())
    }
}

pub fn component_pca(gamma: &CorrelationMatrix) -> Result<PcaMap> {
    let e = gamma.dim();
    let eig = SymmetricEigen::new(gamma.matrix().clone());
    let mut order: Vec<usize> = (0..e).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    if eig.eigenvalues.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NotPositiveDefinite("correlation matrix passed to PCA".into()));
    }
    let mut vectors = DMatrix::<f64>::zeros(e, e);
    let mut values = Vec::with_capacity(e);
    for (a, &src) in order.iter().enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
        let mut lead = 0;
        for (j, x) in v.iter().enumerate() {
            if x.abs() > v[lead].abs() + 1e-12 {
                lead = j;
            }
        }
        if v[lead] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        for (j, x) in v.into_iter().enumerate() {
            vectors[(j, a)] = x;
        }
        values.push(eig.eigenvalues[src]);
    }
    let total: f64 = values.iter().sum();
    Ok(PcaMap {
        explained: values.iter().map(|v| v / total).collect(),
        eigenvalues: values,
        eigenvectors: (0..e).map(|j| vectors.row(j).iter().copied().collect()).collect(),
    })
}

/// E[y | x, z = k] with per-coordinate Monte Carlo standard errors (zero
/// where the value is exact).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMean {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Conditional latent mean of one row under one component. Continuous
/// coordinates are exact; discrete ones are exact when the conditional
/// covariance is diagonal and otherwise averaged over `n_mc` Gibbs sweeps.
pub fn conditional_latent_mean<R: Rng + ?Sized>(
    x: &[f64],
    alpha: &ComponentParams,
    rng: &mut R,
    n_mc: usize,
) -> Result<LatentMean> {
    let c = alpha.margins.iter().take_while(|m| !m.is_discrete()).count();
    let ce = ComponentEval::new(alpha, c, x)?;
    latent_mean_with(&ce, x, rng, n_mc)
}

fn latent_mean_with<R: Rng + ?Sized>(ce: &ComponentEval, x: &[f64], rng: &mut R, n_mc: usize) -> Result<LatentMean> {
    let c = ce.n_continuous();
    let d = ce.n_discrete();
    let mut mean = ce.standardize(x);
    let mut se = vec![0.0; c];
    if d == 0 {
        return Ok(LatentMean { mean, std_error: se });
    }
    let m = ce.conditional_mean(&mean);
    let (lo, hi) = ce.latent_box(x);
    for t in 0..d {
        if !(lo[t] < hi[t]) {
            return Err(Error::Degenerate(format!("empty latent interval for variable {}", c + t)));
        }
    }
    let cov = ce.conditional_cov();
    let diagonal = (0..d).all(|a| (0..d).all(|b| a == b || cov[(a, b)] == 0.0));
    if diagonal {
        for t in 0..d {
            let s = cov[(t, t)].sqrt();
            mean.push(m[t] + s * truncated_std_normal_mean((lo[t] - m[t]) / s, (hi[t] - m[t]) / s));
            se.push(0.0);
        }
        return Ok(LatentMean { mean, std_error: se });
    }
    let n_mc = n_mc.max(MC_BATCHES);
    let sampler = TruncatedMvn::new(cov)?;
    let mut state = sampler.start(&m, &lo, &hi);
    sampler.sweep(&m, &lo, &hi, &mut state, MC_BURN_IN, rng)?;
    let batch = n_mc / MC_BATCHES;
    let mut batch_means = vec![vec![0.0; d]; MC_BATCHES];
    for bm in batch_means.iter_mut() {
        for _ in 0..batch {
            sampler.sweep(&m, &lo, &hi, &mut state, 1, rng)?;
            for t in 0..d {
                bm[t] += state[t] / batch as f64;
            }
        }
    }
    let nb = MC_BATCHES as f64;
    for t in 0..d {
        let mu = batch_means.iter().map(|b| b[t]).sum::<f64>() / nb;
        let var = batch_means.iter().map(|b| (b[t] - mu).powi(2)).sum::<f64>() / (nb - 1.0);
        mean.push(mu);
        se.push((var / nb).sqrt());
    }
    Ok(LatentMean { mean, std_error: se })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedRow {
    /// 0-based row index.
    pub row: usize,
    pub score_a: f64,
    pub score_b: f64,
    /// MAP component under the mixture, 0-based.
    pub label: usize,
    /// Monte Carlo standard error of the point, (se_a² + se_b²)^½.
    pub mc_err: f64,
}

/// Scores of every row on axes `axes` (0-based) of component `k`'s map.
pub fn project(
    data: &MixedDataset,
    theta: &MixtureParams,
    k: usize,
    axes: (usize, usize),
    n_mc: usize,
    seed: u64,
) -> Result<(PcaMap, Vec<ProjectedRow>)> {
    theta.validate(data.schema())?;
    if k >= theta.g() {
        return Err(Error::Config(format!("component {} out of range 1..={}", k + 1, theta.g())));
    }
    let alpha = &theta.components[k];
    let pca = component_pca(&alpha.correlation)?;
    pca.check_axes(axes)?;
    let eval = MixtureEval::for_data(theta, data)?;
    let ce = &eval.components[k];
    let va = pca.axis(axes.0);
    let vb = pca.axis(axes.1);
    let acc = crate::gauss::BoxAccuracy::default();
    let rows = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let x = data.row(i);
            let mut rng = stream(seed, &[k as u64, i as u64]);
            let lm = latent_mean_with(ce, x, &mut rng, n_mc)?;
            let dot = |v: &[f64]| v.iter().zip(&lm.mean).map(|(a, b)| a * b).sum::<f64>();
            let err = |v: &[f64]| v.iter().zip(&lm.std_error).map(|(a, s)| (a * s).powi(2)).sum::<f64>();
            let label = crate::sampler::argmax(&eval.posterior(x, &acc).t);
            Ok(ProjectedRow {
                row: i,
                score_a: dot(&va),
                score_b: dot(&vb),
                label,
                mc_err: (err(&va) + err(&vb)).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pca, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loading {
    pub variable: String,
    pub load_a: f64,
    pub load_b: f64,
}

/// Loading of variable j on axis a: v_ja √λ_a. Each point lies in the
/// unit disk.
pub fn correlation_circle(pca: &PcaMap, axes: (usize, usize), names: &[String]) -> Result<Vec<Loading>> {
    pca.check_axes(axes)?;
    if names.len() != pca.dim() {
        return Err(Error::InvalidParameter("one variable name per dimension is required".into()));
    }
    let (sa, sb) = (pca.eigenvalues[axes.0].sqrt(), pca.eigenvalues[axes.1].sqrt());
    Ok(names
        .iter()
        .enumerate()
        .map(|(j, n)| Loading {
            variable: n.clone(),
            load_a: pca.eigenvectors[j][axes.0] * sa,
            load_b: pca.eigenvectors[j][axes.1] * sb,
        })
        .collect())
}

/// `row_id,component_k,axis_a,axis_b,score_a,score_b,label,mc_err`; ids,
/// components, axes and labels are written 1-based.
pub fn scores_csv(k: usize, axes: (usize, usize), rows: &[ProjectedRow]) -> String {
    let mut s = String::from("row_id,component_k,axis_a,axis_b,score_a,score_b,label,mc_err\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.10},{:.10},{},{:.3e}",
            r.row + 1,
            k + 1,
            axes.0 + 1,
            axes.1 + 1,
            r.score_a,
            r.score_b,
            r.label + 1,
            r.mc_err
        );
    }
    s
}

pub fn circle_csv(axes: (usize, usize), loadings: &[Loading]) -> String {
    let mut s = String::from("variable,axis_a,axis_b,load_a,load_b\n");
    for l in loadings {
        let _ = writeln!(s, "{},{},{},{:.10},{:.10}", l.variable, axes.0 + 1, axes.1 + 1, l.load_a, l.load_b);
    }
    s
}

pub fn eigen_csv(pca: &PcaMap) -> String {
    let mut s = String::from("axis,eigenvalue,pct_variance,cumulative_pct\n");
    let mut cum = 0.0;
    for (a, (v, f)) in pca.eigenvalues.iter().zip(&pca.explained).enumerate() {
        cum += 100.0 * f;
        let _ = writeln!(s, "{},{:.10},{:.6},{:.6}", a + 1, v, 100.0 * f, cum);
    }
    s
}

/// Writes the three CSV files into `dir`.
pub fn write_pca_files(
    dir: &Path,
    k: usize,
    axes: (usize, usize),
    pca: &PcaMap,
    rows: &[ProjectedRow],
    loadings: &[Loading],
) -> Result<()> {
    for (name, text) in [
        ("pca_scores.csv", scores_csv(k, axes, rows)),
        ("pca_circle.csv", circle_csv(axes, loadings)),
        ("pca_eigen.csv", eigen_csv(pca)),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
