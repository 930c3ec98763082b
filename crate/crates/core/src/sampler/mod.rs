//! Bayesian inference by a Metropolis-within-Gibbs sampler over
//! (z, y, β, π, Γ), started from an EM fit of the locally independent
//! mixture.
//!
//! One iteration visits, in order: the labels and latent vectors
//! ([`Chain::step_latent`]), each margin with its latent coordinate
//! ([`Chain::step_margins`]), the proportions and the correlation
//! matrices. The estimate is the mean of the post-burn-in draws; among
//! several chains the one with the highest log-likelihood at its estimate
//! is kept.

mod chain;
mod init;
mod persist;

use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{normalize_to_correlation, BoxAccuracy, CorrelationMatrix};
use crate::identifiability::check_identifiability;
use crate::margins::MarginParams;
use crate::model::{ComponentParams, Family, MixtureEval, MixtureParams};
use crate::schema::MixedDataset;

pub use chain::{margin_log_acceptance, sample_correlations, sample_proportions, Acceptance, Chain, Counter};
pub use init::{em_local_independent, EmFit};
pub use persist::{read_draws, read_manifest, write_draws, write_manifest, DrawRecord, Manifest};

/// Settings of a sampler run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub g: usize,
    pub family: Family,
    /// Iterations kept after the burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub n_chains: usize,
    /// Above this many discrete variables the latent step switches from
    /// exact draws to an independence Metropolis–Hastings move.
    pub mh_latent_threshold: usize,
    /// Gibbs sweeps used when the discrete latent vector of a row is drawn
    /// afresh (its label changed).
    pub tmvn_sweeps: usize,
    pub sampler_accuracy: BoxAccuracy,
    /// Accuracy of the densities behind the log-likelihood and the
    /// partition of the final estimate.
    pub final_accuracy: BoxAccuracy,
    pub em_restarts: usize,
    pub em_iterations: usize,
    /// Keep every post-burn-in draw in the result.
    pub keep_draws: bool,
    /// Start every chain here instead of at the EM estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<MixtureParams>,
}

impl ChainConfig {
    pub fn new(g: usize, family: Family) -> Self {
        ChainConfig {
            g,
            family,
            iterations: 1000,
            burn_in: 100,
            seed: 0,
            n_chains: 10,
            mh_latent_threshold: 6,
            tmvn_sweeps: 10,
            sampler_accuracy: BoxAccuracy::sampler(),
            final_accuracy: BoxAccuracy::default(),
            em_restarts: 5,
            em_iterations: 200,
            keep_draws: false,
            init: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.g < 1 {
            return Err(Error::Config("g must be ≥ 1".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Config("at least one iteration after burn-in is required".into()));
        }
        if self.n_chains < 1 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        if self.em_restarts < 1 {
            return Err(Error::Config("at least one EM restart is required".into()));
        }
        if let Some(init) = &self.init {
            if init.g() != self.g || init.family != self.family {
                return Err(Error::Config(format!(
                    "initial parameters are a {} mixture with g = {}, configuration asks for {} with g = {}",
                    init.family,
                    init.g(),
                    self.family,
                    self.g
                )));
            }
        }
        Ok(())
    }
}

/// What one chain produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub loglik: f64,
    pub degenerate: bool,
    pub acceptance: Acceptance,
    /// Post-burn-in iterations whose partition agreed with the previous
    /// one on less than half of the rows.
    pub label_switch_warnings: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Posterior mean of the kept draws of the best chain.
    pub theta: MixtureParams,
    /// MAP labels under `theta`, 0-based.
    pub partition: Vec<usize>,
    /// Membership probabilities under `theta`, n × g.
    pub posterior: Vec<Vec<f64>>,
    pub loglik: f64,
    pub degenerate: bool,
    pub best_chain: usize,
    pub chains: Vec<ChainSummary>,
    /// Kept draws of the best chain (empty unless requested).
    pub draws: Vec<MixtureParams>,
    pub acceptance: Acceptance,
    pub wall_time_secs: f64,
}

/// Estimate, partition and likelihood at a parameter value.
#[derive(Debug, Clone)]
pub struct PlugIn {
    pub partition: Vec<usize>,
    pub posterior: Vec<Vec<f64>>,
    pub loglik: f64,
    /// Some component weight is below 1/n, or the likelihood is not finite.
    pub degenerate: bool,
}

/// Posterior probabilities, MAP partition and observed log-likelihood.
pub fn plug_in(data: &MixedDataset, theta: &MixtureParams, acc: &BoxAccuracy) -> Result<PlugIn> {
    let eval = MixtureEval::for_data(theta, data)?;
    let rows: Vec<_> = (0..data.n())
        .into_par_iter()
        .map(|i| eval.posterior(data.row(i), acc))
        .collect();
    let loglik: f64 = rows.iter().map(|p| p.log_density).sum();
    let partition = rows.iter().map(|p| argmax(&p.t)).collect();
    let n = data.n() as f64;
    let degenerate = !loglik.is_finite() || theta.pi.iter().any(|p| *p < 1.0 / n);
    Ok(PlugIn {
        partition,
        posterior: rows.into_iter().map(|p| p.t).collect(),
        loglik,
        degenerate,
    })
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = k;
        }
    }
    best
}

/// Running sums of the kept draws.
#[derive(Debug, Clone)]
pub(crate) struct DrawMean {
    count: usize,
    pi: Vec<f64>,
    margins: Vec<Vec<Vec<f64>>>,
    correlations: Vec<nalgebra::DMatrix<f64>>,
}

impl DrawMean {
    pub(crate) fn new(theta: &MixtureParams) -> Self {
        let e = theta.dim();
        let n_corr = if theta.family == Family::Homoscedastic { 1 } else { theta.g() };
        DrawMean {
            count: 0,
            pi: vec![0.0; theta.g()],
            margins: theta
                .components
                .iter()
                .map(|c| c.margins.iter().map(|m| vec![0.0; flat(m).len()]).collect())
                .collect(),
            correlations: vec![nalgebra::DMatrix::zeros(e, e); n_corr],
        }
    }

    pub(crate) fn add(&mut self, theta: &MixtureParams) {
        self.count += 1;
        for (s, p) in self.pi.iter_mut().zip(&theta.pi) {
            *s += p;
        }
        for (sk, c) in self.margins.iter_mut().zip(&theta.components) {
            for (sj, m) in sk.iter_mut().zip(&c.margins) {
                for (a, b) in sj.iter_mut().zip(flat(m)) {
                    *a += b;
                }
            }
        }
        for (s, c) in self.correlations.iter_mut().zip(&theta.components) {
            *s += c.correlation.matrix();
        }
    }

    /// Elementwise mean, with proportions and ordinal probabilities put
    /// back on the simplex and correlation means rescaled to unit diagonal.
    pub(crate) fn finish(&self, template: &MixtureParams) -> Result<MixtureParams> {
        if self.count == 0 {
            return Err(Error::FitFailed("no draws were kept".into()));
        }
        let n = self.count as f64;
        let pi = renormalize(self.pi.iter().map(|s| s / n).collect());
        let mut corr = Vec::with_capacity(self.correlations.len());
        for s in &self.correlations {
            corr.push(normalize_to_correlation(&(s / n))?);
        }
        let components = template
            .components
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let margins = c
                    .margins
                    .iter()
                    .zip(&self.margins[k])
                    .map(|(m, s)| unflat(m, s.iter().map(|v| v / n).collect()))
                    .collect();
                let g = if template.family == Family::Homoscedastic { &corr[0] } else { &corr[k] };
                let g = if template.family == Family::LocalIndependence {
                    CorrelationMatrix::identity(c.dim())
                } else {
                    g.clone()
                };
                ComponentParams::new(g, margins)
            })
            .collect();
        MixtureParams::new(template.family, pi, components)
    }
}

fn flat(m: &MarginParams) -> Vec<f64> {
    match m {
        MarginParams::Gaussian { mu, sigma } => vec![*mu, *sigma],
        MarginParams::Poisson { lambda } => vec![*lambda],
        MarginParams::Ordinal { probs } => probs.clone(),
    }
}

fn unflat(template: &MarginParams, v: Vec<f64>) -> MarginParams {
    match template {
        MarginParams::Gaussian { .. } => MarginParams::Gaussian { mu: v[0], sigma: v[1] },
        MarginParams::Poisson { .. } => MarginParams::Poisson { lambda: v[0] },
        MarginParams::Ordinal { .. } => MarginParams::Ordinal { probs: renormalize(v) },
    }
}

/// Rescales to sum 1, flooring entries at 1e-300 so logs stay finite.
pub(crate) fn renormalize(mut v: Vec<f64>) -> Vec<f64> {
    for x in &mut v {
        *x = x.max(1e-300);
    }
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

/// Result of one complete chain.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub estimate: MixtureParams,
    pub plug_in: PlugIn,
    pub summary: ChainSummary,
    pub draws: Vec<MixtureParams>,
}

/// Runs chain number `index` of a configuration to completion.
pub fn run_chain(data: &MixedDataset, cfg: &ChainConfig, index: usize) -> Result<ChainRun> {
    let mut chain = Chain::new(data, cfg, index)?;
    let mut mean = DrawMean::new(chain.theta());
    let mut draws = Vec::new();
    let mut warnings = 0;
    let mut prev: Option<Vec<usize>> = None;
    for _ in 0..cfg.burn_in + cfg.iterations {
        chain.iterate()?;
        if chain.iteration() <= cfg.burn_in {
            continue;
        }
        mean.add(chain.theta());
        if cfg.keep_draws {
            draws.push(chain.theta().clone());
        }
        if let Some(p) = &prev {
            let same = p.iter().zip(chain.labels()).filter(|(a, b)| a == b).count();
            if cfg.g > 1 && (same as f64) < 0.5 * data.n() as f64 {
                warnings += 1;
            }
        }
        prev = Some(chain.labels().to_vec());
    }
    if warnings > 0 {
        warn!(
            "chain {index}: partition changed on more than half of the rows in {warnings} iterations; draws may be label-switched"
        );
    }
    let estimate = mean.finish(chain.theta())?;
    let plug = plug_in(data, &estimate, &cfg.final_accuracy)?;
    Ok(ChainRun {
        summary: ChainSummary {
            chain: index,
            loglik: plug.loglik,
            degenerate: plug.degenerate,
            acceptance: chain.acceptance().clone(),
            label_switch_warnings: warnings,
            error: None,
        },
        estimate,
        plug_in: plug,
        draws,
    })
}

/// Fits a mixture by running `cfg.n_chains` independent chains and keeping
/// the one with the highest log-likelihood at its estimate.
pub fn fit(data: &MixedDataset, cfg: &ChainConfig) -> Result<FitResult> {
    cfg.validate()?;
    let check = check_identifiability(data.schema());
    if !check.is_identifiable() {
        if let crate::identifiability::Verdict::NotIdentifiable(reason) = check.verdict {
            return Err(Error::NotIdentifiable(reason));
        }
    }
    if let Some(init) = &cfg.init {
        init.validate(data.schema())?;
    }
    let start = Instant::now();
    let runs: Vec<Result<ChainRun>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_chain(data, cfg, c))
        .collect();
    let mut summaries = Vec::with_capacity(runs.len());
    let mut best: Option<ChainRun> = None;
    let mut last_error = None;
    for (c, run) in runs.into_iter().enumerate() {
        match run {
            Ok(r) => {
                info!("chain {c}: loglik {:.4}{}", r.summary.loglik, if r.summary.degenerate { " (degenerate)" } else { "" });
                summaries.push(r.summary.clone());
                let better = match &best {
                    None => true,
                    Some(b) => rank(&r) > rank(b),
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                warn!("chain {c} failed: {e}");
                summaries.push(ChainSummary {
                    chain: c,
                    loglik: f64::NAN,
                    degenerate: true,
                    acceptance: Acceptance::default(),
                    label_switch_warnings: 0,
                    error: Some(e.to_string()),
                });
                last_error = Some(e);
            }
        }
    }
    let best = match best {
        Some(b) => b,
        None => {
            let e = last_error.expect("at least one chain ran");
            return Err(if e.is_numerical() { Error::FitFailed(format!("every chain failed, last error: {e}")) } else { e });
        }
    };
    if best.summary.degenerate {
        return Err(Error::FitFailed(format!(
            "all {} chains degenerate (a component weight below 1/n or a non-finite likelihood); best loglik {}",
            cfg.n_chains, best.summary.loglik
        )));
    }
    Ok(FitResult {
        theta: best.estimate,
        partition: best.plug_in.partition,
        posterior: best.plug_in.posterior,
        loglik: best.plug_in.loglik,
        degenerate: false,
        best_chain: best.summary.chain,
        acceptance: best.summary.acceptance.clone(),
        chains: summaries,
        draws: best.draws,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Non-degenerate chains first, then by log-likelihood; earlier chains win
/// ties so the choice is deterministic.
fn rank(r: &ChainRun) -> (bool, f64) {
    let ll = if r.summary.loglik.is_finite() { r.summary.loglik } else { f64::NEG_INFINITY };
    (!r.summary.degenerate, ll)
}
