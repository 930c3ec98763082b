//! The Gaussian copula mixture: parameters, densities, membership
//! probabilities and simulation.
//!
//! A component density factors into the Gaussian density of the
//! standardized continuous coordinates and the probability, under the
//! conditional law of the discrete latent coordinates, of the box that
//! maps to the observed discrete values.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{logpdf_with_cholesky, BoxAccuracy, BoxIntegrator, ConditionalMap, CorrelationMatrix};
use crate::margins::{LatentTable, MarginParams};
use crate::schema::{MixedDataset, Schema};
use crate::special::{log_interval_prob, log_sum_exp, LOG_DENSITY_FLOOR};

/// Constraint placed on the component correlation matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Γ_k = I for every component.
    LocalIndependence,
    /// One correlation matrix shared by all components.
    Homoscedastic,
    /// Free correlation matrix per component.
    Heteroscedastic,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::LocalIndependence, Family::Homoscedastic, Family::Heteroscedastic];

    pub fn short_name(self) -> &'static str {
        match self {
            Family::LocalIndependence => "local",
            Family::Homoscedastic => "homo",
            Family::Heteroscedastic => "hetero",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "local" | "loc" | "local_independence" | "independent" => Ok(Family::LocalIndependence),
            "homo" | "homoscedastic" => Ok(Family::Homoscedastic),
            "hetero" | "heteroscedastic" => Ok(Family::Heteroscedastic),
            other => Err(Error::Config(format!("unknown model family '{other}' (expected local, homo or hetero)"))),
        }
    }
}

/// Parameters of one component: a correlation matrix and one margin per
/// variable, in logical column order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentParams {
    pub correlation: Arc<CorrelationMatrix>,
    pub margins: Vec<MarginParams>,
}

impl ComponentParams {
    pub fn new(correlation: CorrelationMatrix, margins: Vec<MarginParams>) -> Self {
        ComponentParams {
            correlation: Arc::new(correlation),
            margins,
        }
    }

    pub fn dim(&self) -> usize {
        self.margins.len()
    }
}

/// Serialized as `{family, g, pi, components: [{margins, correlation}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsDoc", try_from = "ParamsDoc")]
pub struct MixtureParams {
    pub family: Family,
    pub pi: Vec<f64>,
    pub components: Vec<ComponentParams>,
}

impl MixtureParams {
    /// Builds and validates a parameter set. For the homoscedastic family
    /// all components are made to point at one shared matrix.
    pub fn new(family: Family, pi: Vec<f64>, components: Vec<ComponentParams>) -> Result<Self> {
        let mut theta = MixtureParams { family, pi, components };
        theta.share_correlation()?;
        theta.validate_structure()?;
        Ok(theta)
    }

    pub fn g(&self) -> usize {
        self.pi.len()
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.dim())
    }

    fn share_correlation(&mut self) -> Result<()> {
        if self.family != Family::Homoscedastic || self.components.is_empty() {
            return Ok(());
        }
        let shared = self.components[0].correlation.clone();
        for c in &mut self.components[1..] {
            if *c.correlation != *shared {
                return Err(Error::InvalidParameter("homoscedastic components must share one correlation matrix".into()));
            }
            c.correlation = shared.clone();
        }
        Ok(())
    }

    fn validate_structure(&self) -> Result<()> {
        let g = self.pi.len();
        if g == 0 || self.components.len() != g {
            return Err(Error::InvalidParameter(format!(
                "{} proportions for {} components",
                g,
                self.components.len()
            )));
        }
        if self.pi.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::InvalidParameter(format!("proportions must be positive: {:?}", self.pi)));
        }
        let s: f64 = self.pi.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("proportions sum to {s}")));
        }
        let e = self.components[0].dim();
        for (k, c) in self.components.iter().enumerate() {
            if c.dim() != e || c.correlation.dim() != e {
                return Err(Error::InvalidParameter(format!("component {k} has inconsistent dimensions")));
            }
            for m in &c.margins {
                m.validate()?;
            }
            match self.family {
                Family::LocalIndependence if !c.correlation.is_identity() => {
                    return Err(Error::InvalidParameter("local independence requires identity correlation matrices".into()))
                }
                Family::Homoscedastic if !Arc::ptr_eq(&c.correlation, &self.components[0].correlation) => {
                    return Err(Error::InvalidParameter("homoscedastic components must share one correlation matrix".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Checks that the parameters fit a schema.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        self.validate_structure()?;
        if self.dim() != schema.len() {
            return Err(Error::InvalidParameter(format!(
                "parameters have {} variables, schema has {}",
                self.dim(),
                schema.len()
            )));
        }
        for (k, c) in self.components.iter().enumerate() {
            for (j, (m, col)) in c.margins.iter().zip(schema.columns()).enumerate() {
                if !m.matches(col.kind) {
                    return Err(Error::InvalidParameter(format!(
                        "component {k}, variable {j} ('{}'): {} margin does not fit a {} column",
                        col.name,
                        m.family_name(),
                        col.kind
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Serialize, Deserialize)]
struct ComponentDoc {
    margins: Vec<MarginParams>,
    correlation: Vec<Vec<f64>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct ParamsDoc {
    family: Family,
    g: usize,
    pi: Vec<f64>,
    components: Vec<ComponentDoc>,
}

impl From<MixtureParams> for ParamsDoc {
    fn from(t: MixtureParams) -> Self {
        ParamsDoc {
            family: t.family,
            g: t.g(),
            pi: t.pi.clone(),
            components: t
                .components
                .iter()
                .map(|c| ComponentDoc {
                    margins: c.margins.clone(),
                    correlation: c.correlation.to_rows(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ParamsDoc> for MixtureParams {
    type Error = Error;

    fn try_from(doc: ParamsDoc) -> Result<Self> {
        if doc.g != doc.pi.len() || doc.g != doc.components.len() {
            return Err(Error::InvalidParameter(format!(
                "document declares g = {} but has {} proportions and {} components",
                doc.g,
                doc.pi.len(),
                doc.components.len()
            )));
        }
        let components = doc
            .components
            .into_iter()
            .map(|c| Ok(ComponentParams::new(CorrelationMatrix::from_rows(&c.correlation)?, c.margins)))
            .collect::<Result<Vec<_>>>()?;
        MixtureParams::new(doc.family, doc.pi, components)
    }
}

/// Ψ: standardized continuous coordinates (x − μ)/σ.
pub fn standardize_continuous(x_c: &[f64], alpha: &ComponentParams) -> Vec<f64> {
    x_c.iter()
        .zip(&alpha.margins)
        .map(|(x, m)| match m {
            MarginParams::Gaussian { mu, sigma } => (x - mu) / sigma,
            _ => unreachable!("continuous coordinates precede discrete ones"),
        })
        .collect()
}

/// A log density with a flag raised when the discrete box underflowed and
/// the value was replaced by [`LOG_DENSITY_FLOOR`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensity {
    pub value: f64,
    pub degenerate: bool,
    /// Monte Carlo standard error of the box probability (relative, i.e.
    /// on the log scale); zero for exact evaluations.
    pub std_error: f64,
}

/// Everything about a component that does not depend on the observation,
/// computed once so densities of many rows are cheap.
#[derive(Debug, Clone)]
pub struct ComponentEval {
    c: usize,
    d: usize,
    independent: bool,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    sum_ln_sigma: f64,
    chol_cc: DMatrix<f64>,
    map: ConditionalMap,
    integrator: BoxIntegrator,
    tables: Vec<LatentTable>,
    margins: Vec<MarginParams>,
}

impl ComponentEval {
    /// `max_values` sizes the latent threshold tables of Poisson margins
    /// (entry per variable, ignored for others); larger observations are
    /// still handled, just more slowly.
    pub fn new(alpha: &ComponentParams, c: usize, max_values: &[f64]) -> Result<Self> {
        let e = alpha.dim();
        let d = e - c;
        let gamma = alpha.correlation.matrix();
        let cont: Vec<usize> = (0..c).collect();
        let disc: Vec<usize> = (c..e).collect();
        let gamma_cc = gamma.select_rows(&cont).select_columns(&cont);
        let chol_cc = if c == 0 {
            DMatrix::zeros(0, 0)
        } else {
            Cholesky::new(gamma_cc)
                .ok_or_else(|| Error::NotPositiveDefinite("continuous correlation block".into()))?
                .l()
        };
        let map = ConditionalMap::new(gamma, &disc, &cont)?;
        let integrator = BoxIntegrator::new(&map.cov)?;
        let mut mu = Vec::with_capacity(c);
        let mut sigma = Vec::with_capacity(c);
        for m in &alpha.margins[..c] {
            match m {
                MarginParams::Gaussian { mu: a, sigma: s } => {
                    mu.push(*a);
                    sigma.push(*s);
                }
                _ => return Err(Error::InvalidParameter("discrete margin among the continuous variables".into())),
            }
        }
        let tables = (c..e)
            .map(|j| LatentTable::new(&alpha.margins[j], max_values.get(j).copied().unwrap_or(0.0)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ComponentEval {
            c,
            d,
            independent: alpha.correlation.is_identity(),
            sum_ln_sigma: sigma.iter().map(|s| s.ln()).sum(),
            mu,
            sigma,
            chol_cc,
            map,
            integrator,
            tables,
            margins: alpha.margins.clone(),
        })
    }

    /// Evaluator sized for the observations of a dataset.
    pub fn for_data(alpha: &ComponentParams, data: &MixedDataset) -> Result<Self> {
        let max = column_maxima(data);
        Self::new(alpha, data.schema().n_continuous(), &max)
    }

    pub fn n_continuous(&self) -> usize {
        self.c
    }

    pub fn n_discrete(&self) -> usize {
        self.d
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        (0..self.c).map(|j| (x[j] - self.mu[j]) / self.sigma[j]).collect()
    }

    /// Latent box of the discrete part of `x`.
    pub fn latent_box(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(self.d);
        let mut hi = Vec::with_capacity(self.d);
        for (t, table) in self.tables.iter().enumerate() {
            let (a, b) = table.bounds(x[self.c + t]);
            lo.push(a);
            hi.push(b);
        }
        (lo, hi)
    }

    /// Conditional mean of the discrete latent coordinates given Ψ(x^C).
    pub fn conditional_mean(&self, y_c: &[f64]) -> Vec<f64> {
        if self.c == 0 {
            return vec![0.0; self.d];
        }
        self.map.mean(y_c).as_slice().to_vec()
    }

    pub fn conditional_cov(&self) -> &DMatrix<f64> {
        &self.map.cov
    }

    pub fn table(&self, t: usize) -> &LatentTable {
        &self.tables[t]
    }

    pub fn logpdf(&self, x: &[f64], acc: &BoxAccuracy) -> LogDensity {
        if self.independent {
            let mut v = 0.0;
            for (j, m) in self.margins.iter().enumerate() {
                v += m.logpdf(x[j]).unwrap_or(f64::NEG_INFINITY);
            }
            return finish(v, 0.0);
        }
        let y_c = self.standardize(x);
        let cont = logpdf_with_cholesky(&self.chol_cc, &y_c) - self.sum_ln_sigma;
        if self.d == 0 {
            return finish(cont, 0.0);
        }
        let mean = self.conditional_mean(&y_c);
        let (lo, hi) = self.latent_box(x);
        if self.d == 1 {
            let s = self.map.cov[(0, 0)].sqrt();
            let lp = log_interval_prob((lo[0] - mean[0]) / s, (hi[0] - mean[0]) / s);
            return finish(cont + lp, 0.0);
        }
        let p = self.integrator.probability(&mean, &lo, &hi, acc);
        let rel_se = if p.value > 0.0 { p.std_error / p.value } else { 0.0 };
        finish(cont + p.value.ln(), rel_se)
    }
}

fn finish(v: f64, std_error: f64) -> LogDensity {
    if v.is_finite() {
        LogDensity {
            value: v,
            degenerate: false,
            std_error,
        }
    } else {
        LogDensity {
            value: LOG_DENSITY_FLOOR,
            degenerate: true,
            std_error: 0.0,
        }
    }
}

/// Per-column maxima (used to size latent threshold tables).
pub fn column_maxima(data: &MixedDataset) -> Vec<f64> {
    (0..data.schema().len())
        .map(|j| data.rows().map(|r| r[j]).fold(0.0, f64::max))
        .collect()
}

/// Precomputed evaluators for every component of a mixture.
#[derive(Debug, Clone)]
pub struct MixtureEval {
    pub components: Vec<ComponentEval>,
    pub log_pi: Vec<f64>,
}

/// Membership probabilities of one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub t: Vec<f64>,
    /// Log mixture density of the observation.
    pub log_density: f64,
    pub degenerate: bool,
}

impl MixtureEval {
    pub fn new(theta: &MixtureParams, c: usize, max_values: &[f64]) -> Result<Self> {
        Ok(MixtureEval {
            components: theta
                .components
                .iter()
                .map(|a| ComponentEval::new(a, c, max_values))
                .collect::<Result<_>>()?,
            log_pi: theta.pi.iter().map(|p| p.ln()).collect(),
        })
    }

    pub fn for_data(theta: &MixtureParams, data: &MixedDataset) -> Result<Self> {
        Self::new(theta, data.schema().n_continuous(), &column_maxima(data))
    }

    /// Weighted component log densities log π_k + log p(x | α_k).
    pub fn joint_logs(&self, x: &[f64], acc: &BoxAccuracy) -> (Vec<f64>, bool) {
        let mut all_degenerate = true;
        let logs = self
            .components
            .iter()
            .zip(&self.log_pi)
            .map(|(c, lp)| {
                let d = c.logpdf(x, acc);
                all_degenerate &= d.degenerate;
                lp + d.value
            })
            .collect();
        (logs, all_degenerate)
    }

    pub fn logpdf(&self, x: &[f64], acc: &BoxAccuracy) -> LogDensity {
        let (logs, degenerate) = self.joint_logs(x, acc);
        LogDensity {
            value: log_sum_exp(&logs),
            degenerate,
            std_error: 0.0,
        }
    }

    pub fn posterior(&self, x: &[f64], acc: &BoxAccuracy) -> Posterior {
        let (logs, degenerate) = self.joint_logs(x, acc);
        let g = logs.len();
        if degenerate {
            return Posterior {
                t: vec![1.0 / g as f64; g],
                log_density: log_sum_exp(&logs),
                degenerate: true,
            };
        }
        let lse = log_sum_exp(&logs);
        let mut t: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
        let s: f64 = t.iter().sum();
        for v in &mut t {
            *v /= s;
        }
        Posterior {
            t,
            log_density: lse,
            degenerate: false,
        }
    }
}

fn n_continuous_of(alpha: &ComponentParams) -> usize {
    alpha.margins.iter().take_while(|m| !m.is_discrete()).count()
}

/// Log density of one mixed row under one component.
pub fn component_logpdf(x: &[f64], alpha: &ComponentParams, acc: &BoxAccuracy) -> Result<LogDensity> {
    check_row(x, alpha)?;
    Ok(ComponentEval::new(alpha, n_continuous_of(alpha), x)?.logpdf(x, acc))
}

/// Log mixture density of one row.
pub fn mixture_logpdf(x: &[f64], theta: &MixtureParams, acc: &BoxAccuracy) -> Result<LogDensity> {
    for a in &theta.components {
        check_row(x, a)?;
    }
    let c = n_continuous_of(&theta.components[0]);
    Ok(MixtureEval::new(theta, c, x)?.logpdf(x, acc))
}

/// Membership probabilities t_k(x) = π_k p(x | α_k) / p(x | θ).
pub fn posterior_probs(x: &[f64], theta: &MixtureParams, acc: &BoxAccuracy) -> Result<Posterior> {
    for a in &theta.components {
        check_row(x, a)?;
    }
    let c = n_continuous_of(&theta.components[0]);
    Ok(MixtureEval::new(theta, c, x)?.posterior(x, acc))
}

fn check_row(x: &[f64], alpha: &ComponentParams) -> Result<()> {
    if x.len() != alpha.dim() {
        return Err(Error::InvalidParameter(format!("row has {} values, component has {}", x.len(), alpha.dim())));
    }
    for (v, m) in x.iter().zip(&alpha.margins) {
        m.cdf(*v)?;
    }
    Ok(())
}

/// Output of [`generate`]: data with its ground truth.
#[derive(Debug, Clone)]
pub struct Generated {
    pub data: MixedDataset,
    /// Component of each row, 0-based.
    pub labels: Vec<usize>,
    /// Latent Gaussian vectors, row-major n × e.
    pub latent: Vec<Vec<f64>>,
}

/// Draws `n` rows from the mixture: z ~ π, y | z ~ N(0, Γ_z), x_j = P_j⁻¹(Φ(y_j)).
pub fn generate<R: Rng + ?Sized>(n: usize, theta: &MixtureParams, schema: &Schema, rng: &mut R) -> Result<Generated> {
    if n == 0 {
        return Err(Error::InvalidParameter("cannot generate an empty dataset".into()));
    }
    theta.validate(schema)?;
    let factors = theta
        .components
        .iter()
        .map(|c| {
            Cholesky::new(c.correlation.matrix().clone())
                .map(|ch| ch.l())
                .ok_or_else(|| Error::NotPositiveDefinite("component correlation".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let e = schema.len();
    let mut labels = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut k = 0;
        let mut acc = theta.pi[0];
        while u >= acc && k + 1 < theta.g() {
            k += 1;
            acc += theta.pi[k];
        }
        let eps: Vec<f64> = (0..e).map(|_| rng.sample(StandardNormal)).collect();
        let l = &factors[k];
        let y: Vec<f64> = (0..e).map(|i| (0..=i).map(|j| l[(i, j)] * eps[j]).sum()).collect();
        let x: Vec<f64> = y
            .iter()
            .zip(&theta.components[k].margins)
            .map(|(yj, m)| m.from_latent(*yj))
            .collect();
        labels.push(k);
        latent.push(y);
        rows.push(x);
    }
    Ok(Generated {
        data: MixedDataset::from_rows(schema.clone(), rows)?,
        labels,
        latent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::presets::example1;
    use crate::rng::stream;

    const EX1_P1_LOG: f64 = -3.323763762555972;
    const EX1_MIX_LOG: f64 = -4.0163785386004625;

    #[test]
    fn standardize_examples() {
        let (_, theta) = example1();
        let c2 = &theta.components[1];
        assert_eq!(standardize_continuous(&[3.0], c2), vec![1.0]);
        assert_eq!(standardize_continuous(&[2.0], c2), vec![0.0]);
        let a = ComponentParams::new(
            CorrelationMatrix::identity(1),
            vec![MarginParams::Gaussian { mu: 0.0, sigma: 2.0 }],
        );
        assert_eq!(standardize_continuous(&[-4.0], &a), vec![-2.0]);
    }

    #[test]
    fn example1_densities_match_reference() {
        let (_, theta) = example1();
        let acc = BoxAccuracy::default();
        let x = [-2.0, 5.0, 1.0];
        let p1 = component_logpdf(&x, &theta.components[0], &acc).unwrap();
        assert!((p1.value - EX1_P1_LOG).abs() < 1e-9, "{p1:?}");
        let mix = mixture_logpdf(&x, &theta, &acc).unwrap();
        assert!((mix.value - EX1_MIX_LOG).abs() < 1e-9, "{mix:?}");
        let t = posterior_probs(&[2.0, 15.0, 1.0], &theta, &acc).unwrap();
        assert!(t.t[1] > 0.99);
        assert!((t.t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_continuous_is_multivariate_normal() {
        let g = CorrelationMatrix::from_rows(&[vec![1.0, 0.6], vec![0.6, 1.0]]).unwrap();
        let a = ComponentParams::new(
            g,
            vec![
                MarginParams::Gaussian { mu: 1.0, sigma: 2.0 },
                MarginParams::Gaussian { mu: -1.0, sigma: 0.5 },
            ],
        );
        let x = [2.5, -0.7];
        let got = component_logpdf(&x, &a, &BoxAccuracy::default()).unwrap().value;
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 0.6, 0.6, 0.25]);
        let want = crate::gauss::mvn_logpdf_centered(&cov, &[1.5, 0.3]).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn identical_components_collapse() {
        let (_, theta) = example1();
        let c = theta.components[0].clone();
        let twin = MixtureParams::new(Family::Heteroscedastic, vec![0.3, 0.7], vec![c.clone(), c.clone()]).unwrap();
        let acc = BoxAccuracy::default();
        let x = [-1.0, 4.0, 2.0];
        let single = component_logpdf(&x, &c, &acc).unwrap().value;
        assert!((mixture_logpdf(&x, &twin, &acc).unwrap().value - single).abs() < 1e-12);
        let t = posterior_probs(&x, &twin, &acc).unwrap().t;
        assert!((t[0] - 0.3).abs() < 1e-12 && (t[1] - 0.7).abs() < 1e-12);
        let one = MixtureParams::new(Family::Heteroscedastic, vec![1.0], vec![c]).unwrap();
        assert_eq!(posterior_probs(&x, &one, &acc).unwrap().t, vec![1.0]);
    }

    #[test]
    fn json_round_trip_shares_homoscedastic_matrix() {
        let (_, theta) = example1();
        let text = theta.to_json().unwrap();
        let back = MixtureParams::from_json(&text).unwrap();
        assert_eq!(back, theta);
        let c0 = theta.components[0].clone();
        let mut c1 = theta.components[1].clone();
        c1.correlation = Arc::new((*c0.correlation).clone());
        let homo = MixtureParams::new(Family::Homoscedastic, vec![0.5, 0.5], vec![c0, c1]).unwrap();
        assert!(Arc::ptr_eq(&homo.components[0].correlation, &homo.components[1].correlation));
        let again = MixtureParams::from_json(&homo.to_json().unwrap()).unwrap();
        assert!(Arc::ptr_eq(&again.components[0].correlation, &again.components[1].correlation));
        assert!(MixtureParams::new(Family::Homoscedastic, vec![0.5, 0.5], theta.components.clone()).is_err());
    }

    #[test]
    fn generated_data_satisfy_latent_structure() {
        let (schema, theta) = example1();
        let mut rng = stream(5, &[]);
        let g = generate(2000, &theta, &schema, &mut rng).unwrap();
        for i in 0..g.data.n() {
            let x = g.data.row(i);
            let k = g.labels[i];
            let a = &theta.components[k];
            let y = &g.latent[i];
            match a.margins[0] {
                MarginParams::Gaussian { mu, sigma } => assert_eq!(x[0], mu + sigma * y[0]),
                _ => unreachable!(),
            }
            for j in 1..3 {
                let (lo, hi) = a.margins[j].latent_bounds(x[j]).unwrap();
                assert!(lo < y[j] && y[j] <= hi);
            }
        }
    }
}
