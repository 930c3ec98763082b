//! One Markov chain: state, the four update steps and acceptance counts.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::init::em_local_independent;
use super::{renormalize, ChainConfig};
use crate::error::Result;
use crate::gauss::{
    condition_number, inverse_wishart_sample, logpdf_with_cholesky, normalize_to_correlation, spd_cholesky,
    truncated_normal, truncated_std_normal, CorrelationMatrix, TruncatedMvn, MAX_CONDITION,
};
use crate::margins::{dirichlet_draw, LatentTable, MarginParams, MarginPrior};
use crate::model::{column_maxima, ComponentEval, Family, MixtureEval, MixtureParams};
use crate::rng::stream;
use crate::schema::MixedDataset;
use crate::special::{log_interval_prob, norm_logpdf};

const TAG_INIT: u64 = 1;
const TAG_LATENT: u64 = 2;
const TAG_MARGINS: u64 = 3;
const TAG_PROPORTIONS: u64 = 4;
const TAG_CORRELATION: u64 = 5;

/// Sweeps applied to a discrete latent vector kept from the previous
/// iteration (its label did not change, so it already lies in its box).
const CONTINUE_SWEEPS: usize = 1;

/// Latent coordinates are kept within ±38, beyond which Φ is 0 or 1 in
/// double precision.
const LATENT_CLAMP: f64 = 38.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counter {
    pub accepted: u64,
    pub proposed: u64,
}

impl Counter {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    /// Independence Metropolis–Hastings moves of the latent step; stays
    /// empty when the exact latent draw is used.
    pub latent: Counter,
    /// Margin moves, indexed `[component][variable]`.
    pub margins: Vec<Vec<Counter>>,
}

impl Acceptance {
    fn new(g: usize, e: usize) -> Self {
        Acceptance {
            latent: Counter::default(),
            margins: vec![vec![Counter::default(); e]; g],
        }
    }

    /// Margin acceptance pooled over components and variables.
    pub fn margin_rate(&self) -> f64 {
        let mut total = Counter::default();
        for c in self.margins.iter().flatten() {
            total.accepted += c.accepted;
            total.proposed += c.proposed;
        }
        total.rate()
    }
}

/// Sampler state: parameters, labels and latent vectors.
#[derive(Debug, Clone)]
pub struct Chain<'a> {
    data: &'a MixedDataset,
    cfg: ChainConfig,
    index: u64,
    iteration: usize,
    c: usize,
    max_values: Vec<f64>,
    priors: Vec<MarginPrior>,
    theta: MixtureParams,
    z: Vec<usize>,
    y: Vec<Vec<f64>>,
    acceptance: Acceptance,
}

impl<'a> Chain<'a> {
    /// Chain `index` of a configuration, started at `cfg.init` or at an EM
    /// fit of the locally independent model.
    pub fn new(data: &'a MixedDataset, cfg: &ChainConfig, index: usize) -> Result<Self> {
        cfg.validate()?;
        let theta = match &cfg.init {
            Some(t) => t.clone(),
            None => {
                let mut rng = stream(cfg.seed, &[index as u64, TAG_INIT]);
                em_local_independent(data, cfg.g, cfg.family, cfg.em_restarts, cfg.em_iterations, &mut rng)?.theta
            }
        };
        Self::with_theta(data, cfg, index, theta)
    }

    /// Chain started at `theta`: labels are the MAP labels under `theta`
    /// and each discrete latent vector starts inside its box.
    pub fn with_theta(data: &'a MixedDataset, cfg: &ChainConfig, index: usize, theta: MixtureParams) -> Result<Self> {
        theta.validate(data.schema())?;
        let schema = data.schema();
        let priors = (0..schema.len())
            .map(|j| MarginPrior::empirical(schema.kind(j), &data.column(j)))
            .collect::<Result<Vec<_>>>()?;
        let c = schema.n_continuous();
        let e = schema.len();
        let max_values = column_maxima(data);
        let eval = MixtureEval::new(&theta, c, &max_values)?;
        let samplers = discrete_samplers(&eval, e - c)?;
        let (z, y): (Vec<usize>, Vec<Vec<f64>>) = (0..data.n())
            .into_par_iter()
            .map(|i| {
                let x = data.row(i);
                let k = super::argmax(&eval.posterior(x, &cfg.sampler_accuracy).t);
                let ce = &eval.components[k];
                let mut y = ce.standardize(x);
                if let Some(s) = &samplers[k] {
                    let mean = ce.conditional_mean(&y);
                    let (lo, hi) = ce.latent_box(x);
                    let start = s.start(&mean, &lo, &hi);
                    y.extend(start.iter().zip(lo.iter().zip(&hi)).map(|(v, (l, h))| fallback_point(*v, *l, *h)));
                }
                (k, y)
            })
            .unzip();
        Ok(Chain {
            data,
            cfg: cfg.clone(),
            index: index as u64,
            iteration: 0,
            c,
            max_values,
            priors,
            acceptance: Acceptance::new(theta.g(), e),
            theta,
            z,
            y,
        })
    }

    pub fn theta(&self) -> &MixtureParams {
        &self.theta
    }

    /// Current labels, 0-based.
    pub fn labels(&self) -> &[usize] {
        &self.z
    }

    /// Current latent vectors, one per row.
    pub fn latent(&self) -> &[Vec<f64>] {
        &self.y
    }

    /// Completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn acceptance(&self) -> &Acceptance {
        &self.acceptance
    }

    pub fn priors(&self) -> &[MarginPrior] {
        &self.priors
    }

    /// One full iteration of the four steps.
    pub fn iterate(&mut self) -> Result<()> {
        self.step_latent()?;
        self.step_margins()?;
        self.step_proportions();
        self.step_correlation();
        self.iteration += 1;
        Ok(())
    }

    fn tag(&self, step: u64) -> [u64; 3] {
        [self.index, self.iteration as u64 + 1, step]
    }

    /// Redraws (z_i, y_i) for every row given the current parameters:
    /// exactly when the number of discrete variables is at most
    /// `mh_latent_threshold`, otherwise by one independence
    /// Metropolis–Hastings move.
    pub fn step_latent(&mut self) -> Result<()> {
        let e = self.data.schema().len();
        let d = e - self.c;
        let eval = MixtureEval::new(&self.theta, self.c, &self.max_values)?;
        let [index, r, _] = self.tag(TAG_LATENT);
        let seed = self.cfg.seed;
        let data = self.data;
        let (z_old, y_old) = (&self.z, &self.y);
        let updates: Vec<(usize, Vec<f64>, Option<bool>)> = if d > self.cfg.mh_latent_threshold {
            let target = LatentTarget::new(&self.theta, self.c)?;
            (0..data.n())
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream(seed, &[index, r, i as u64, TAG_LATENT]);
                    let (k, y, ok) = mh_latent_move(data.row(i), z_old[i], &y_old[i], &eval, &target, &mut rng);
                    (k, y, Some(ok))
                })
                .collect()
        } else {
            let samplers = discrete_samplers(&eval, d)?;
            let acc = self.cfg.sampler_accuracy;
            let fresh_sweeps = self.cfg.tmvn_sweeps;
            (0..data.n())
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream(seed, &[index, r, i as u64, TAG_LATENT]);
                    let x = data.row(i);
                    let k = draw_categorical(&eval.posterior(x, &acc).t, &mut rng);
                    let ce = &eval.components[k];
                    let mut y = ce.standardize(x);
                    if let Some(s) = &samplers[k] {
                        let mean = ce.conditional_mean(&y);
                        let (lo, hi) = ce.latent_box(x);
                        let prev = &y_old[i][self.c..];
                        let (mut state, sweeps) = if k == z_old[i] && inside(prev, &lo, &hi) {
                            (prev.to_vec(), CONTINUE_SWEEPS)
                        } else {
                            (s.start(&mean, &lo, &hi), fresh_sweeps)
                        };
                        if s.sweep(&mean, &lo, &hi, &mut state, sweeps, &mut rng).is_err() {
                            for t in 0..d {
                                state[t] = fallback_point(state[t], lo[t], hi[t]);
                            }
                        }
                        y.extend(state);
                    }
                    (k, y, None)
                })
                .collect()
        };
        for (i, (k, y, ok)) in updates.into_iter().enumerate() {
            self.z[i] = k;
            self.y[i] = y;
            if let Some(ok) = ok {
                self.acceptance.latent.record(ok);
            }
        }
        Ok(())
    }

    /// Updates every margin β_kj by a Metropolis–Hastings move whose
    /// proposal is its conjugate posterior under independence, then redraws
    /// the matching latent coordinate of the rows of component k.
    pub fn step_margins(&mut self) -> Result<()> {
        let mut rng = stream(self.cfg.seed, &self.tag(TAG_MARGINS));
        let g = self.theta.g();
        let e = self.data.schema().len();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); g];
        for (i, &k) in self.z.iter().enumerate() {
            members[k].push(i);
        }
        for (k, rows) in members.iter().enumerate() {
            let gamma = self.theta.components[k].correlation.clone();
            let precision = if gamma.is_identity() { None } else { Some(spd_cholesky(gamma.matrix())?.inverse()) };
            for j in 0..e {
                let values: Vec<f64> = rows.iter().map(|&i| self.data.value(i, j)).collect();
                let (cond_mean, cond_sd) = match &precision {
                    None => (vec![0.0; rows.len()], 1.0),
                    Some(q) => {
                        let qjj = q[(j, j)];
                        let m = rows
                            .iter()
                            .map(|&i| {
                                let yi = &self.y[i];
                                -(0..e).filter(|&l| l != j).map(|l| q[(j, l)] * yi[l]).sum::<f64>() / qjj
                            })
                            .collect();
                        (m, 1.0 / qjj.sqrt())
                    }
                };
                let candidate = self.priors[j].sample_posterior(&values, &mut rng);
                let old = &self.theta.components[k].margins[j];
                let accepted = if candidate.validate().is_err() {
                    false
                } else if precision.is_none() {
                    true
                } else {
                    let lr = margin_log_acceptance(old, &candidate, &values, &cond_mean, cond_sd, self.max_values[j])?;
                    lr >= 0.0 || rng.random::<f64>().ln() < lr
                };
                self.acceptance.margins[k][j].record(accepted);
                if accepted {
                    self.theta.components[k].margins[j] = candidate;
                }
                let beta = &self.theta.components[k].margins[j];
                match beta {
                    MarginParams::Gaussian { mu, sigma } => {
                        for &i in rows {
                            self.y[i][j] = (self.data.value(i, j) - mu) / sigma;
                        }
                    }
                    _ => {
                        let table = LatentTable::new(beta, self.max_values[j])?;
                        for (t, &i) in rows.iter().enumerate() {
                            let (lo, hi) = table.bounds(self.data.value(i, j));
                            let m = cond_mean[t];
                            self.y[i][j] = truncated_normal(m, cond_sd, lo, hi, &mut rng)
                                .unwrap_or_else(|_| fallback_point(m, lo, hi));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn step_proportions(&mut self) {
        let mut rng = stream(self.cfg.seed, &self.tag(TAG_PROPORTIONS));
        self.theta.pi = sample_proportions(&self.z, self.theta.g(), &mut rng);
    }

    pub fn step_correlation(&mut self) {
        let mut rng = stream(self.cfg.seed, &self.tag(TAG_CORRELATION));
        let draws = sample_correlations(&self.theta, &self.y, &self.z, &mut rng);
        for (c, m) in self.theta.components.iter_mut().zip(draws) {
            c.correlation = m;
        }
    }

    /// Rows whose latent vector breaks the state invariants under the
    /// current parameters: continuous coordinates equal to the
    /// standardized observation, discrete coordinates inside their box.
    pub fn invariant_violations(&self) -> Result<Vec<usize>> {
        let evals = self
            .theta
            .components
            .iter()
            .map(|a| ComponentEval::new(a, self.c, &self.max_values))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.data.n())
            .filter(|&i| {
                let x = self.data.row(i);
                let ce = &evals[self.z[i]];
                let y = &self.y[i];
                let (lo, hi) = ce.latent_box(x);
                ce.standardize(x) != y[..self.c] || !inside(&y[self.c..], &lo, &hi)
            })
            .collect())
    }
}

fn discrete_samplers(eval: &MixtureEval, d: usize) -> Result<Vec<Option<TruncatedMvn>>> {
    eval.components
        .iter()
        .map(|ce| if d == 0 { Ok(None) } else { TruncatedMvn::new(ce.conditional_cov()).map(Some) })
        .collect()
}

fn inside(y: &[f64], lo: &[f64], hi: &[f64]) -> bool {
    y.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| l < v && v <= h)
}

/// A point in (lo, hi] near `v`, for boxes too thin to sample from.
fn fallback_point(v: f64, lo: f64, hi: f64) -> f64 {
    if lo < v && v <= hi {
        return v;
    }
    let a = lo.max(-LATENT_CLAMP);
    let b = hi.min(LATENT_CLAMP);
    if a < b {
        if v <= a {
            a + 0.5 * (b - a).min(1e-3)
        } else {
            b
        }
    } else {
        a
    }
}

fn draw_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    p.len() - 1
}

/// Pieces of the joint density p(z, y, x^C) used by the latent MH move.
struct LatentTarget {
    chol: Vec<DMatrix<f64>>,
    log_pi: Vec<f64>,
    sum_ln_sigma: Vec<f64>,
}

impl LatentTarget {
    fn new(theta: &MixtureParams, c: usize) -> Result<Self> {
        let mut chol = Vec::with_capacity(theta.g());
        let mut sum_ln_sigma = Vec::with_capacity(theta.g());
        for comp in &theta.components {
            chol.push(spd_cholesky(comp.correlation.matrix())?.l());
            sum_ln_sigma.push(
                comp.margins[..c]
                    .iter()
                    .map(|m| match m {
                        MarginParams::Gaussian { sigma, .. } => sigma.ln(),
                        _ => 0.0,
                    })
                    .sum(),
            );
        }
        Ok(LatentTarget {
            chol,
            log_pi: theta.pi.iter().map(|p| p.ln()).collect(),
            sum_ln_sigma,
        })
    }

    /// log π_k + log φ_e(y; Γ_k) − Σ_{j ≤ c} log σ_kj. The last term is the
    /// Jacobian of y^C = Ψ(x^C) and matters because it depends on k.
    fn log_joint(&self, k: usize, y: &[f64]) -> f64 {
        self.log_pi[k] + logpdf_with_cholesky(&self.chol[k], y) - self.sum_ln_sigma[k]
    }
}

/// Log density of the proposal at (k, y) up to the constant −log g:
/// independent standard normals truncated to the box of component k.
fn log_proposal(ce: &ComponentEval, x: &[f64], y: &[f64]) -> f64 {
    let c = ce.n_continuous();
    (0..ce.n_discrete())
        .map(|t| norm_logpdf(y[c + t]) - ce.table(t).mass(x[c + t]).ln())
        .sum()
}

fn mh_latent_move<R: Rng + ?Sized>(
    x: &[f64],
    z_old: usize,
    y_old: &[f64],
    eval: &MixtureEval,
    target: &LatentTarget,
    rng: &mut R,
) -> (usize, Vec<f64>, bool) {
    let g = eval.components.len();
    let k = rng.random_range(0..g);
    let ce = &eval.components[k];
    let mut y = ce.standardize(x);
    let (lo, hi) = ce.latent_box(x);
    for t in 0..lo.len() {
        match truncated_std_normal(lo[t], hi[t], rng) {
            Ok(v) => y.push(v),
            Err(_) => return (z_old, y_old.to_vec(), false),
        }
    }
    let new = target.log_joint(k, &y) - log_proposal(ce, x, &y);
    let old = target.log_joint(z_old, y_old) - log_proposal(&eval.components[z_old], x, y_old);
    let lr = new - old;
    let u: f64 = rng.random();
    if (!old.is_finite() && new.is_finite()) || lr >= 0.0 || u.ln() < lr {
        (k, y, true)
    } else {
        (z_old, y_old.to_vec(), false)
    }
}

/// Σ_i log p(x_i | y_i^{-j}) − log p(x_i) for the rows of one component,
/// where `cond_mean`/`cond_sd` give the law of y^j given the other latent
/// coordinates. `None` when some observation is impossible under `beta`.
fn conditional_excess(beta: &MarginParams, values: &[f64], cond_mean: &[f64], cond_sd: f64, max_value: f64) -> Result<Option<f64>> {
    let mut total = 0.0;
    match beta {
        MarginParams::Gaussian { mu, sigma } => {
            for (x, m) in values.iter().zip(cond_mean) {
                let u = (x - mu) / sigma;
                total += norm_logpdf((u - m) / cond_sd) - cond_sd.ln() - norm_logpdf(u);
            }
        }
        _ => {
            let table = LatentTable::new(beta, max_value)?;
            for (x, m) in values.iter().zip(cond_mean) {
                let (lo, hi) = table.bounds(*x);
                let joint = log_interval_prob((lo - m) / cond_sd, (hi - m) / cond_sd);
                let alone = log_interval_prob(lo, hi);
                if !(joint.is_finite() && alone.is_finite()) {
                    return Ok(None);
                }
                total += joint - alone;
            }
        }
    }
    Ok(total.is_finite().then_some(total))
}

/// Log acceptance ratio of a margin move from `old` to `candidate`.
///
/// The proposal is the conjugate posterior under independence, i.e.
/// proportional to the prior times the product of margin likelihoods, so
/// prior and proposal densities cancel against the target and only the
/// excess of the conditional likelihood over the independent one remains.
pub fn margin_log_acceptance(
    old: &MarginParams,
    candidate: &MarginParams,
    values: &[f64],
    cond_mean: &[f64],
    cond_sd: f64,
    max_value: f64,
) -> Result<f64> {
    let new = conditional_excess(candidate, values, cond_mean, cond_sd, max_value)?;
    let cur = conditional_excess(old, values, cond_mean, cond_sd, max_value)?;
    Ok(match (new, cur) {
        (None, _) => f64::NEG_INFINITY,
        (Some(_), None) => f64::INFINITY,
        (Some(a), Some(b)) => a - b,
    })
}

/// π ~ Dirichlet(n_1 + ½, …, n_g + ½).
pub fn sample_proportions<R: Rng + ?Sized>(z: &[usize], g: usize, rng: &mut R) -> Vec<f64> {
    let mut alpha = vec![0.5; g];
    for &k in z {
        alpha[k] += 1.0;
    }
    renormalize(dirichlet_draw(&alpha, rng))
}

/// One draw of the correlation matrices given the latent vectors.
///
/// Λ ~ W⁻¹(e + 1 + n_k, I + Σ y yᵀ), then rescaled to unit diagonal; the
/// homoscedastic family pools all rows into one draw shared by every
/// component. A draw that is not safely invertible keeps the previous
/// matrix.
pub fn sample_correlations<R: Rng + ?Sized>(
    theta: &MixtureParams,
    y: &[Vec<f64>],
    z: &[usize],
    rng: &mut R,
) -> Vec<Arc<CorrelationMatrix>> {
    let g = theta.g();
    let e = theta.dim();
    let current: Vec<Arc<CorrelationMatrix>> = theta.components.iter().map(|c| c.correlation.clone()).collect();
    let draw = |rows: &mut dyn Iterator<Item = &Vec<f64>>, old: &Arc<CorrelationMatrix>, rng: &mut R| {
        let mut scatter = DMatrix::<f64>::identity(e, e);
        let mut count = 0usize;
        for yi in rows {
            count += 1;
            for a in 0..e {
                for b in 0..=a {
                    scatter[(a, b)] += yi[a] * yi[b];
                }
            }
        }
        for a in 0..e {
            for b in 0..a {
                scatter[(b, a)] = scatter[(a, b)];
            }
        }
        let df = (e + 1 + count) as f64;
        match inverse_wishart_sample(df, &scatter, rng).and_then(|l| normalize_to_correlation(&l)) {
            Ok(m) if condition_number(m.matrix()) < MAX_CONDITION => Arc::new(m),
            Ok(_) => {
                log::debug!("ill-conditioned correlation draw rejected");
                old.clone()
            }
            Err(err) => {
                log::debug!("correlation draw failed: {err}");
                old.clone()
            }
        }
    };
    match theta.family {
        Family::LocalIndependence => current,
        Family::Homoscedastic => {
            let shared = draw(&mut y.iter(), &current[0], rng);
            vec![shared; g]
        }
        Family::Heteroscedastic => (0..g)
            .map(|k| {
                let mut rows = y.iter().zip(z).filter(|(_, &zi)| zi == k).map(|(yi, _)| yi);
                draw(&mut rows, &current[k], rng)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::presets::example1;
    use crate::margins::MarginPrior;
    use crate::model::generate;
    use crate::schema::{Schema, VariableKind};
    use rand_distr::StandardNormal;

    fn short_cfg(g: usize, family: Family) -> ChainConfig {
        let mut c = ChainConfig::new(g, family);
        c.iterations = 20;
        c.burn_in = 5;
        c.n_chains = 1;
        c.seed = 17;
        c
    }

    #[test]
    fn proportions_follow_dirichlet_update() {
        let mut rng = stream(51, &[]);
        let z = [0, 0, 0, 1];
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let p = sample_proportions(&z, 2, &mut rng);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            sum[0] += p[0];
            sum[1] += p[1];
        }
        // Dirichlet(3.5, 1.5): mean 0.7, var 0.7·0.3/6.
        let se = (0.7 * 0.3 / 6.0 / n as f64).sqrt();
        assert!((sum[0] / n as f64 - 0.7).abs() < 3.0 * se);
        assert_eq!(sample_proportions(&[0, 0], 1, &mut rng), vec![1.0]);
    }

    #[test]
    fn correlation_draw_concentrates() {
        let mut rng = stream(52, &[]);
        let l = [[1.0, 0.0], [0.5, 0.75f64.sqrt()]];
        let y: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                vec![l[0][0] * a, l[1][0] * a + l[1][1] * b]
            })
            .collect();
        let z = vec![0; y.len()];
        let theta = MixtureParams::new(
            Family::Heteroscedastic,
            vec![1.0],
            vec![crate::model::ComponentParams::new(
                CorrelationMatrix::identity(2),
                vec![MarginParams::Gaussian { mu: 0.0, sigma: 1.0 }; 2],
            )],
        )
        .unwrap();
        let g = sample_correlations(&theta, &y, &z, &mut rng);
        assert!((g[0].get(0, 1) - 0.5).abs() < 0.05);
    }

    #[test]
    fn homoscedastic_draw_is_shared() {
        let (_, mut theta) = example1();
        let shared = Arc::new(CorrelationMatrix::identity(3));
        theta.family = Family::Homoscedastic;
        for c in &mut theta.components {
            c.correlation = shared.clone();
        }
        let mut rng = stream(53, &[]);
        let y: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let z: Vec<usize> = (0..50).map(|i| i % 2).collect();
        let g = sample_correlations(&theta, &y, &z, &mut rng);
        assert!(Arc::ptr_eq(&g[0], &g[1]));
    }

    /// The margin acceptance ratio equals the explicit Metropolis–Hastings
    /// ratio built from prior and proposal densities.
    #[test]
    fn simplified_ratio_matches_explicit_ratio() {
        let mut rng = stream(54, &[]);
        let cases: Vec<(VariableKind, Vec<f64>)> = vec![
            (VariableKind::Continuous, (0..30).map(|i| (i as f64 * 0.37).sin() * 3.0 + 1.0).collect()),
            (VariableKind::Integer, (0..30).map(|i| ((i * 7) % 11) as f64).collect()),
            (VariableKind::Ordinal { levels: 3 }, (0..30).map(|i| (i % 3 + 1) as f64).collect()),
        ];
        for (kind, values) in cases {
            let prior = MarginPrior::empirical(kind, &values).unwrap();
            let cond_mean: Vec<f64> = (0..values.len()).map(|i| 0.4 * ((i as f64) * 0.9).cos()).collect();
            let sd = 0.8;
            for _ in 0..5 {
                let old = prior.sample_posterior(&values, &mut rng);
                let cand = prior.sample_posterior(&values, &mut rng);
                let simple = margin_log_acceptance(&old, &cand, &values, &cond_mean, sd, 20.0).unwrap();
                let cond = |b: &MarginParams| -> f64 {
                    values
                        .iter()
                        .zip(&cond_mean)
                        .map(|(x, m)| match b {
                            MarginParams::Gaussian { mu, sigma } => {
                                norm_logpdf(((x - mu) / sigma - m) / sd) - sd.ln() - sigma.ln()
                            }
                            _ => {
                                let (lo, hi) = b.latent_bounds(*x).unwrap();
                                log_interval_prob((lo - m) / sd, (hi - m) / sd)
                            }
                        })
                        .sum()
                };
                let explicit = prior.posterior_logdensity(&old, &values).unwrap() + prior.logdensity(&cand).unwrap()
                    - prior.posterior_logdensity(&cand, &values).unwrap()
                    - prior.logdensity(&old).unwrap()
                    + cond(&cand)
                    - cond(&old);
                assert!((simple - explicit).abs() < 1e-7 * (1.0 + explicit.abs()), "{kind}: {simple} vs {explicit}");
            }
        }
    }

    #[test]
    fn sweeps_keep_invariants() {
        let (schema, theta) = example1();
        let data = generate(120, &theta, &schema, &mut stream(55, &[])).unwrap().data;
        for family in Family::ALL {
            let cfg = short_cfg(2, family);
            let mut chain = Chain::new(&data, &cfg, 0).unwrap();
            assert!(chain.invariant_violations().unwrap().is_empty());
            for _ in 0..10 {
                chain.iterate().unwrap();
                assert!(chain.invariant_violations().unwrap().is_empty());
                let t = chain.theta();
                assert!((t.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                t.validate(&schema).unwrap();
                if family == Family::Homoscedastic {
                    assert!(Arc::ptr_eq(&t.components[0].correlation, &t.components[1].correlation));
                }
            }
        }
    }

    #[test]
    fn independent_family_accepts_every_margin_move() {
        let (schema, theta) = example1();
        let data = generate(100, &theta, &schema, &mut stream(56, &[])).unwrap().data;
        let cfg = short_cfg(2, Family::LocalIndependence);
        let mut chain = Chain::new(&data, &cfg, 0).unwrap();
        for _ in 0..20 {
            chain.iterate().unwrap();
        }
        assert_eq!(chain.acceptance().margin_rate(), 1.0);
    }

    #[test]
    fn metropolis_latent_path_keeps_invariants() {
        let (schema, theta) = example1();
        let data = generate(80, &theta, &schema, &mut stream(57, &[])).unwrap().data;
        let mut cfg = short_cfg(2, Family::Heteroscedastic);
        cfg.mh_latent_threshold = 0;
        let mut chain = Chain::new(&data, &cfg, 0).unwrap();
        for _ in 0..10 {
            chain.iterate().unwrap();
            assert!(chain.invariant_violations().unwrap().is_empty());
        }
        let a = chain.acceptance().latent;
        assert_eq!(a.proposed, 800);
        assert!(a.accepted > 0);
    }

    #[test]
    fn one_component_and_all_continuous() {
        let schema = Schema::from_kinds(&[("a", VariableKind::Continuous), ("b", VariableKind::Continuous)]).unwrap();
        let mut rng = stream(58, &[]);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();
        let data = MixedDataset::from_rows(schema, rows).unwrap();
        let cfg = short_cfg(1, Family::Heteroscedastic);
        let mut chain = Chain::new(&data, &cfg, 0).unwrap();
        chain.step_latent().unwrap();
        assert!(chain.labels().iter().all(|&k| k == 0));
        assert!(chain.invariant_violations().unwrap().is_empty());
        chain.iterate().unwrap();
        assert_eq!(chain.theta().pi, vec![1.0]);
    }

    #[test]
    fn chains_are_reproducible() {
        let (schema, theta) = example1();
        let data = generate(60, &theta, &schema, &mut stream(59, &[])).unwrap().data;
        let cfg = short_cfg(2, Family::Heteroscedastic);
        let run = |c: &ChainConfig| {
            let mut chain = Chain::new(&data, c, 0).unwrap();
            for _ in 0..5 {
                chain.iterate().unwrap();
            }
            (chain.theta().to_json().unwrap(), chain.latent().to_vec())
        };
        assert_eq!(run(&cfg), run(&cfg));
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(run(&cfg).0, run(&other).0);
    }
}
