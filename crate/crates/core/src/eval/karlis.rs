//! Bivariate Poisson mixtures built by trivariate reduction:
//! x¹ = w₁ + w₃, x² = w₂ + w₃ with independent w_h ~ Poisson(λ_h).

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margins::poisson_ln_pmf;
use crate::schema::{MixedDataset, Schema, VariableKind};
use crate::special::log_sum_exp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivPoissonMixtureParams {
    pub pi: Vec<f64>,
    /// (λ₁, λ₂, λ₃) per component.
    pub lambda: Vec<[f64; 3]>,
}

impl Default for BivPoissonMixtureParams {
    /// π = (1/3, 2/3), λ_{1h} = h and λ_{2h} = 3 + h.
    fn default() -> Self {
        BivPoissonMixtureParams {
            pi: vec![1.0 / 3.0, 2.0 / 3.0],
            lambda: vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
        }
    }
}

impl BivPoissonMixtureParams {
    pub fn validate(&self) -> Result<()> {
        if self.pi.is_empty() || self.pi.len() != self.lambda.len() {
            return Err(Error::InvalidParameter("one λ triple per proportion is required".into()));
        }
        if self.pi.iter().any(|p| !(*p > 0.0)) || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("proportions {:?} are not on the simplex", self.pi)));
        }
        // λ₃ = 0 is allowed: it gives independent coordinates.
        for l in &self.lambda {
            if !(l[0] > 0.0 && l[1] > 0.0 && l[2] >= 0.0 && l.iter().all(|v| v.is_finite())) {
                return Err(Error::InvalidParameter(format!("invalid λ triple {l:?}")));
            }
        }
        Ok(())
    }

    pub fn schema() -> Schema {
        Schema::from_kinds(&[("x1", VariableKind::Integer), ("x2", VariableKind::Integer)]).expect("static schema")
    }

    /// Component moments (E x¹, E x², Cov, Corr).
    pub fn moments(&self, k: usize) -> (f64, f64, f64, f64) {
        let [l1, l2, l3] = self.lambda[k];
        (l1 + l3, l2 + l3, l3, l3 / ((l1 + l3) * (l2 + l3)).sqrt())
    }

    /// Log pmf of one component.
    pub fn component_logpmf(&self, k: usize, x1: u64, x2: u64) -> f64 {
        let [l1, l2, l3] = self.lambda[k];
        if l3 == 0.0 {
            return poisson_ln_pmf(x1, l1) + poisson_ln_pmf(x2, l2);
        }
        let terms: Vec<f64> = (0..=x1.min(x2))
            .map(|w| poisson_ln_pmf(x1 - w, l1) + poisson_ln_pmf(x2 - w, l2) + poisson_ln_pmf(w, l3))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn logpmf(&self, x: &[f64]) -> f64 {
        let (x1, x2) = (x[0] as u64, x[1] as u64);
        let terms: Vec<f64> = (0..self.pi.len())
            .map(|k| self.pi[k].ln() + self.component_logpmf(k, x1, x2))
            .collect();
        log_sum_exp(&terms)
    }

    /// One draw: (row, component).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ([f64; 2], usize) {
        let u: f64 = rng.random();
        let mut k = 0;
        let mut acc = self.pi[0];
        while u >= acc && k + 1 < self.pi.len() {
            k += 1;
            acc += self.pi[k];
        }
        let w: Vec<f64> = self.lambda[k]
            .iter()
            .map(|&l| if l > 0.0 { Poisson::new(l).expect("positive rate").sample(rng) } else { 0.0 })
            .collect();
        ([w[0] + w[2], w[1] + w[2]], k)
    }
}

/// n rows with their 0-based component labels.
pub fn bivariate_poisson_mixture_generate<R: Rng + ?Sized>(
    params: &BivPoissonMixtureParams,
    n: usize,
    rng: &mut R,
) -> Result<(MixedDataset, Vec<usize>)> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("cannot generate an empty dataset".into()));
    }
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, k) = params.draw(rng);
        rows.push(x.to_vec());
        labels.push(k);
    }
    Ok((MixedDataset::from_rows(BivPoissonMixtureParams::schema(), rows)?, labels))
}
