//! One-dimensional margins: Gaussian, Poisson and ordered multinomial.
//!
//! Besides the usual cdf / quantile / log-density, every discrete margin
//! maps an observation `x` to its latent interval `(b⊖(x), b⊕(x)]`, the set
//! of standard-normal values that the copula transform sends to `x`.
//! Thresholds are computed from whichever of the cdf and survival function
//! is smaller, so intervals stay accurate far into both tails.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::VariableKind;
use crate::special::{
    interval_prob, ln_factorial, ln_gamma, norm_cdf, norm_isf, norm_ppf, norm_sf, threshold_from_tails,
    LN_SQRT_2PI,
};

/// Relative size below which Poisson tail terms are dropped.
const POISSON_TAIL_EPS: f64 = 1e-17;

/// Ordinal probabilities are floored at this value inside prior and
/// posterior log-densities.
pub const ORDINAL_LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum MarginParams {
    Gaussian { mu: f64, sigma: f64 },
    Poisson { lambda: f64 },
    /// Probabilities of levels 1..=m.
    Ordinal { probs: Vec<f64> },
}

impl MarginParams {
    pub fn family_name(&self) -> &'static str {
        match self {
            MarginParams::Gaussian { .. } => "gaussian",
            MarginParams::Poisson { .. } => "poisson",
            MarginParams::Ordinal { .. } => "ordinal",
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, MarginParams::Gaussian { .. })
    }

    /// True when this margin family is the one used for columns of `kind`.
    pub fn matches(&self, kind: VariableKind) -> bool {
        match (self, kind) {
            (MarginParams::Gaussian { .. }, VariableKind::Continuous) => true,
            (MarginParams::Poisson { .. }, VariableKind::Integer) => true,
            (MarginParams::Ordinal { probs }, VariableKind::Ordinal { levels }) => probs.len() == levels as usize,
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MarginParams::Gaussian { mu, sigma } => {
                if !mu.is_finite() || !(*sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::InvalidParameter(format!("gaussian margin needs finite mu and sigma > 0, got ({mu}, {sigma})")));
                }
            }
            MarginParams::Poisson { lambda } => {
                if !(*lambda > 0.0) || !lambda.is_finite() {
                    return Err(Error::InvalidParameter(format!("poisson margin needs lambda > 0, got {lambda}")));
                }
            }
            MarginParams::Ordinal { probs } => {
                if probs.len() < 2 {
                    return Err(Error::InvalidParameter("ordinal margin needs at least 2 levels".into()));
                }
                if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                    return Err(Error::InvalidParameter(format!("ordinal probabilities must be non-negative: {probs:?}")));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!("ordinal probabilities sum to {s}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// Number of free parameters of the margin.
    pub fn n_free(&self) -> usize {
        match self {
            MarginParams::Gaussian { .. } => 2,
            MarginParams::Poisson { .. } => 1,
            MarginParams::Ordinal { probs } => probs.len() - 1,
        }
    }

    fn check_support(&self, x: f64) -> Result<()> {
        let ok = match self {
            MarginParams::Gaussian { .. } => x.is_finite(),
            MarginParams::Poisson { .. } => x >= 0.0 && x.fract() == 0.0 && x.is_finite(),
            MarginParams::Ordinal { probs } => x >= 1.0 && x <= probs.len() as f64 && x.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfSupport {
                value: x,
                family: self.family_name(),
            })
        }
    }

    /// P(X ≤ x).
    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.cdf_sf(x)?.0)
    }

    /// (P(X ≤ x), P(X > x)), each computed without cancellation.
    pub fn cdf_sf(&self, x: f64) -> Result<(f64, f64)> {
        self.check_support(x)?;
        Ok(match self {
            MarginParams::Gaussian { mu, sigma } => {
                let t = (x - mu) / sigma;
                (norm_cdf(t), norm_sf(t))
            }
            MarginParams::Poisson { lambda } => poisson_cdf_sf(x as u64, *lambda),
            MarginParams::Ordinal { probs } => {
                let l = x as usize;
                if l == probs.len() {
                    (1.0, 0.0)
                } else {
                    (probs[..l].iter().sum::<f64>().min(1.0), probs[l..].iter().sum::<f64>().min(1.0))
                }
            }
        })
    }

    /// Probability mass at a discrete `x`.
    pub fn pmf(&self, x: f64) -> Result<f64> {
        self.check_support(x)?;
        match self {
            MarginParams::Gaussian { .. } => Err(Error::InvalidParameter("pmf of a continuous margin".into())),
            MarginParams::Poisson { lambda } => Ok(poisson_ln_pmf(x as u64, *lambda).exp()),
            MarginParams::Ordinal { probs } => Ok(probs[x as usize - 1]),
        }
    }

    /// Log density (continuous) or log mass (discrete).
    pub fn logpdf(&self, x: f64) -> Result<f64> {
        self.check_support(x)?;
        Ok(match self {
            MarginParams::Gaussian { mu, sigma } => {
                let t = (x - mu) / sigma;
                -0.5 * t * t - LN_SQRT_2PI - sigma.ln()
            }
            MarginParams::Poisson { lambda } => poisson_ln_pmf(x as u64, *lambda),
            MarginParams::Ordinal { probs } => probs[x as usize - 1].ln(),
        })
    }

    /// Generalized inverse cdf: the smallest support point with cdf ≥ u.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::InvalidParameter(format!("quantile level must lie in (0, 1), got {u}")));
        }
        match self {
            MarginParams::Gaussian { mu, sigma } => {
                let t = if u <= 0.5 { norm_ppf(u) } else { norm_isf(1.0 - u) };
                Ok(mu + sigma * t)
            }
            MarginParams::Poisson { lambda } => {
                let reached = |x: u64| poisson_cdf_sf(x, *lambda).0 >= u;
                let guess = (lambda + lambda.sqrt() * norm_ppf(u)).floor().max(0.0) as u64;
                Ok(walk_to_smallest(guess, reached) as f64)
            }
            MarginParams::Ordinal { probs } => {
                let mut acc = 0.0;
                for (l, p) in probs.iter().enumerate() {
                    acc += p;
                    if acc >= u {
                        return Ok((l + 1) as f64);
                    }
                }
                Ok(probs.len() as f64)
            }
        }
    }

    /// Upper latent threshold Φ⁻¹(P(X ≤ x)) of a discrete margin.
    pub fn latent_threshold(&self, x: f64) -> Result<f64> {
        if !self.is_discrete() {
            return Err(Error::InvalidParameter("latent bounds requested for a continuous margin".into()));
        }
        let (c, s) = self.cdf_sf(x)?;
        if s == 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(threshold_from_tails(c, s))
    }

    /// Latent interval `(b⊖(x), b⊕(x)]` of a discrete observation.
    pub fn latent_bounds(&self, x: f64) -> Result<(f64, f64)> {
        let hi = self.latent_threshold(x)?;
        let lo = if self.is_support_min(x) {
            f64::NEG_INFINITY
        } else {
            self.latent_threshold(x - 1.0)?
        };
        Ok((lo, hi))
    }

    fn is_support_min(&self, x: f64) -> bool {
        match self {
            MarginParams::Poisson { .. } => x == 0.0,
            MarginParams::Ordinal { .. } => x == 1.0,
            MarginParams::Gaussian { .. } => false,
        }
    }

    /// Maps a latent standard-normal coordinate to the observed scale:
    /// `x = P⁻¹(Φ(y))`. For discrete margins this is the unique support
    /// point whose latent interval contains `y`.
    pub fn from_latent(&self, y: f64) -> f64 {
        match self {
            MarginParams::Gaussian { mu, sigma } => mu + sigma * y,
            MarginParams::Poisson { lambda } => {
                let guess = (lambda + lambda.sqrt() * y).floor().max(0.0) as u64;
                let thr = |x: u64| {
                    let (c, s) = poisson_cdf_sf(x, *lambda);
                    if s == 0.0 {
                        f64::INFINITY
                    } else {
                        threshold_from_tails(c, s)
                    }
                };
                walk_to_smallest(guess, |x| thr(x) >= y) as f64
            }
            MarginParams::Ordinal { probs } => {
                let m = probs.len();
                for l in 1..m {
                    let c: f64 = probs[..l].iter().sum();
                    let s: f64 = probs[l..].iter().sum();
                    if threshold_from_tails(c, s) >= y {
                        return l as f64;
                    }
                }
                m as f64
            }
        }
    }

    /// Draws one value directly from the margin.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let y: f64 = rng.sample(StandardNormal);
        self.from_latent(y)
    }
}

/// Smallest `x ≥ 0` with `pred(x)`, for a monotone predicate, starting the
/// search at `guess`.
fn walk_to_smallest(mut x: u64, pred: impl Fn(u64) -> bool) -> u64 {
    if pred(x) {
        while x > 0 && pred(x - 1) {
            x -= 1;
        }
    } else {
        x += 1;
        while !pred(x) {
            x += 1;
        }
    }
    x
}

pub fn poisson_ln_pmf(x: u64, lambda: f64) -> f64 {
    x as f64 * lambda.ln() - lambda - ln_factorial(x)
}

/// Poisson (cdf, sf) at `x`. The tail containing less than about half of
/// the mass is summed directly in log space; the other is its complement.
pub fn poisson_cdf_sf(x: u64, lambda: f64) -> (f64, f64) {
    if (x as f64) < lambda {
        // Sum pmf(x), pmf(x-1), ..., relative to pmf(x).
        let mut term = 1.0;
        let mut total = 1.0;
        let mut v = x;
        while v > 0 {
            term *= v as f64 / lambda;
            total += term;
            v -= 1;
            if term < POISSON_TAIL_EPS * total {
                break;
            }
        }
        let cdf = (poisson_ln_pmf(x, lambda) + total.ln()).exp().min(1.0);
        (cdf, 1.0 - cdf)
    } else {
        // Sum pmf(x+1), pmf(x+2), ... relative to pmf(x+1).
        let mut term = 1.0;
        let mut total = 1.0;
        let mut v = x + 1;
        loop {
            v += 1;
            term *= lambda / v as f64;
            total += term;
            if term < POISSON_TAIL_EPS * total {
                break;
            }
        }
        let sf = (poisson_ln_pmf(x + 1, lambda) + total.ln()).exp().min(1.0);
        (1.0 - sf, sf)
    }
}

/// Precomputed latent thresholds of a discrete margin for support values
/// up to a maximum, so repeated interval lookups avoid tail summations.
#[derive(Debug, Clone)]
pub struct LatentTable {
    /// `upper[v]` is the upper threshold of the v-th support point
    /// (v = x for Poisson, v = x − 1 for ordinal levels).
    upper: Vec<f64>,
    offset: f64,
    margin: MarginParams,
}

impl LatentTable {
    /// Thresholds for every support value `≤ max_value`.
    pub fn new(margin: &MarginParams, max_value: f64) -> Result<Self> {
        let upper = match margin {
            MarginParams::Gaussian { .. } => {
                return Err(Error::InvalidParameter("latent table for a continuous margin".into()))
            }
            MarginParams::Ordinal { probs } => {
                let m = probs.len();
                let mut upper = Vec::with_capacity(m);
                let mut suffix = vec![0.0; m + 1];
                for l in (0..m).rev() {
                    suffix[l] = suffix[l + 1] + probs[l];
                }
                let mut prefix = 0.0;
                for l in 0..m {
                    prefix += probs[l];
                    let s = suffix[l + 1];
                    upper.push(if l + 1 == m || s == 0.0 {
                        f64::INFINITY
                    } else {
                        threshold_from_tails(prefix.min(1.0), s.min(1.0))
                    });
                }
                upper
            }
            MarginParams::Poisson { lambda } => {
                let max = max_value.max(0.0) as u64;
                let pmf: Vec<f64> = (0..=max).map(|v| poisson_ln_pmf(v, *lambda).exp()).collect();
                let mut sf = vec![0.0; max as usize + 1];
                sf[max as usize] = poisson_cdf_sf(max, *lambda).1;
                for v in (0..max as usize).rev() {
                    sf[v] = sf[v + 1] + pmf[v + 1];
                }
                let mut cdf = 0.0;
                let mut upper = Vec::with_capacity(max as usize + 1);
                for v in 0..=max as usize {
                    // Lower-tail partial sums are exact while cdf ≤ 1/2.
                    cdf += pmf[v];
                    let s = sf[v].min(1.0);
                    upper.push(if s == 0.0 {
                        f64::INFINITY
                    } else if cdf <= 0.5 {
                        norm_ppf(cdf)
                    } else {
                        norm_isf(s)
                    });
                }
                upper
            }
        };
        let offset = match margin {
            MarginParams::Ordinal { .. } => 1.0,
            _ => 0.0,
        };
        Ok(LatentTable {
            upper,
            offset,
            margin: margin.clone(),
        })
    }

    pub fn margin(&self) -> &MarginParams {
        &self.margin
    }

    /// Latent interval of `x`; values beyond the table fall back to direct
    /// evaluation.
    #[inline]
    pub fn bounds(&self, x: f64) -> (f64, f64) {
        let v = (x - self.offset) as usize;
        if v < self.upper.len() {
            let lo = if v == 0 { f64::NEG_INFINITY } else { self.upper[v - 1] };
            (lo, self.upper[v])
        } else {
            self.margin
                .latent_bounds(x)
                .unwrap_or((f64::INFINITY, f64::INFINITY))
        }
    }

    /// Standard-normal mass of the latent interval of `x`.
    #[inline]
    pub fn mass(&self, x: f64) -> f64 {
        let (lo, hi) = self.bounds(x);
        interval_prob(lo, hi)
    }
}

/// Conjugate prior of a margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum MarginPrior {
    /// σ² ~ InvGamma(shape `c0`, scale `cc0`), μ | σ² ~ N(b0, σ²/n0).
    Gaussian { c0: f64, cc0: f64, b0: f64, n0: f64 },
    /// λ ~ Gamma(shape `a0`, rate `aa0`).
    Poisson { a0: f64, aa0: f64 },
    /// p ~ Dirichlet(alpha, ..., alpha) on `levels` cells.
    Ordinal { alpha: f64, levels: usize },
}

impl MarginPrior {
    /// Empirical-Bayes hyper-parameters computed from the full column.
    pub fn empirical(kind: VariableKind, column: &[f64]) -> Result<Self> {
        let n = column.len() as f64;
        match kind {
            VariableKind::Continuous => {
                if column.len() < 2 {
                    return Err(Error::InvalidParameter("continuous prior needs at least 2 values".into()));
                }
                let mean = column.iter().sum::<f64>() / n;
                let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = column.iter().copied().fold(f64::INFINITY, f64::min);
                if !(var > 0.0) || !(max > min) {
                    return Err(Error::InvalidParameter("constant continuous column: prior scale would be 0".into()));
                }
                Ok(MarginPrior::Gaussian {
                    c0: 1.28,
                    cc0: 0.36 * var,
                    b0: mean,
                    n0: 2.6 / (max - min),
                })
            }
            VariableKind::Integer => {
                let s: f64 = column.iter().sum();
                if !(s > 0.0) {
                    return Err(Error::InvalidParameter("integer column is identically zero: prior rate undefined".into()));
                }
                Ok(MarginPrior::Poisson { a0: 1.0, aa0: n / s })
            }
            VariableKind::Ordinal { levels } => Ok(MarginPrior::Ordinal {
                alpha: 0.5,
                levels: levels as usize,
            }),
        }
    }

    /// Conjugate posterior given the values currently assigned to a component.
    pub fn posterior(&self, values: &[f64]) -> MarginPrior {
        let n = values.len() as f64;
        match *self {
            MarginPrior::Gaussian { c0, cc0, b0, n0 } => {
                if values.is_empty() {
                    return self.clone();
                }
                let mean = values.iter().sum::<f64>() / n;
                let ss: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
                let nn = n0 + n;
                MarginPrior::Gaussian {
                    c0: c0 + 0.5 * n,
                    cc0: cc0 + 0.5 * ss + n0 * n / (2.0 * nn) * (mean - b0).powi(2),
                    b0: (n0 * b0 + n * mean) / nn,
                    n0: nn,
                }
            }
            MarginPrior::Poisson { a0, aa0 } => MarginPrior::Poisson {
                a0: a0 + values.iter().sum::<f64>(),
                aa0: aa0 + n,
            },
            MarginPrior::Ordinal { .. } => self.clone(),
        }
    }

    /// Dirichlet parameters after adding level counts (ordinal only).
    fn dirichlet_params(&self, values: &[f64]) -> Vec<f64> {
        match *self {
            MarginPrior::Ordinal { alpha, levels } => {
                let mut a = vec![alpha; levels];
                for &v in values {
                    a[v as usize - 1] += 1.0;
                }
                a
            }
            _ => unreachable!("dirichlet parameters of a non-ordinal prior"),
        }
    }

    /// Draws from the distribution itself (prior or posterior).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MarginParams {
        self.sample_posterior(&[], rng)
    }

    /// Draws from the conjugate posterior given `values`. An empty slice
    /// gives a prior draw.
    pub fn sample_posterior<R: Rng + ?Sized>(&self, values: &[f64], rng: &mut R) -> MarginParams {
        match self.posterior(values) {
            MarginPrior::Gaussian { c0, cc0, b0, n0 } => {
                let var = 1.0 / gamma_draw(c0, 1.0 / cc0, rng);
                let z: f64 = rng.sample(StandardNormal);
                MarginParams::Gaussian {
                    mu: b0 + (var / n0).sqrt() * z,
                    sigma: var.sqrt(),
                }
            }
            MarginPrior::Poisson { a0, aa0 } => MarginParams::Poisson {
                lambda: gamma_draw(a0, 1.0 / aa0, rng).max(f64::MIN_POSITIVE),
            },
            MarginPrior::Ordinal { .. } => MarginParams::Ordinal {
                probs: dirichlet_draw(&self.dirichlet_params(values), rng),
            },
        }
    }

    /// Log density of the conjugate posterior given `values`, at `beta`.
    /// The Gaussian density is taken over (μ, σ²).
    pub fn posterior_logdensity(&self, beta: &MarginParams, values: &[f64]) -> Result<f64> {
        let post = self.posterior(values);
        match (&post, beta) {
            (MarginPrior::Gaussian { c0, cc0, b0, n0 }, MarginParams::Gaussian { mu, sigma }) => {
                if !(*sigma > 0.0) {
                    return Err(Error::OutOfSupport { value: *sigma, family: "gaussian" });
                }
                let s2 = sigma * sigma;
                let ln_ig = c0 * cc0.ln() - ln_gamma(*c0) - (c0 + 1.0) * s2.ln() - cc0 / s2;
                let v = s2 / n0;
                let ln_n = -0.5 * (mu - b0).powi(2) / v - 0.5 * v.ln() - LN_SQRT_2PI;
                Ok(ln_ig + ln_n)
            }
            (MarginPrior::Poisson { a0, aa0 }, MarginParams::Poisson { lambda }) => {
                if !(*lambda > 0.0) {
                    return Err(Error::OutOfSupport { value: *lambda, family: "poisson" });
                }
                Ok(a0 * aa0.ln() - ln_gamma(*a0) + (a0 - 1.0) * lambda.ln() - aa0 * lambda)
            }
            (MarginPrior::Ordinal { levels, .. }, MarginParams::Ordinal { probs }) => {
                if probs.len() != *levels {
                    return Err(Error::InvalidParameter("ordinal level count mismatch".into()));
                }
                let a = post.dirichlet_params(values);
                let a_sum: f64 = a.iter().sum();
                let mut lp = ln_gamma(a_sum);
                for (ai, p) in a.iter().zip(probs) {
                    lp += -ln_gamma(*ai) + (ai - 1.0) * p.max(ORDINAL_LOG_FLOOR).ln();
                }
                Ok(lp)
            }
            _ => Err(Error::InvalidParameter(format!(
                "margin family {} does not match its prior",
                beta.family_name()
            ))),
        }
    }

    /// Prior log density at `beta`.
    pub fn logdensity(&self, beta: &MarginParams) -> Result<f64> {
        self.posterior_logdensity(beta, &[])
    }

    /// Posterior mean of the parameters given `values` (σ reported as
    /// √E[σ²]).
    pub fn posterior_mean(&self, values: &[f64]) -> MarginParams {
        match self.posterior(values) {
            MarginPrior::Gaussian { c0, cc0, b0, .. } => MarginParams::Gaussian {
                mu: b0,
                sigma: (cc0 / (c0 - 1.0)).sqrt(),
            },
            MarginPrior::Poisson { a0, aa0 } => MarginParams::Poisson { lambda: a0 / aa0 },
            MarginPrior::Ordinal { .. } => {
                let a = self.dirichlet_params(values);
                let s: f64 = a.iter().sum();
                MarginParams::Ordinal {
                    probs: a.iter().map(|x| x / s).collect(),
                }
            }
        }
    }
}

/// Gamma(shape, scale) draw.
pub fn gamma_draw<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, scale)
        .expect("gamma parameters are positive and finite")
        .sample(rng)
}

/// Dirichlet draw via normalized gamma variates.
pub fn dirichlet_draw<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut g: Vec<f64> = alpha.iter().map(|&a| gamma_draw(a, 1.0, rng)).collect();
    let s: f64 = g.iter().sum();
    if !(s > 0.0) {
        // All variates underflowed: only possible for tiny shapes.
        let s: f64 = alpha.iter().sum();
        return alpha.iter().map(|a| a / s).collect();
    }
    for v in &mut g {
        *v /= s;
    }
    g
}

/// Log density of Dirichlet(alpha) at `p`.
pub fn dirichlet_logpdf(alpha: &[f64], p: &[f64]) -> f64 {
    let mut lp = ln_gamma(alpha.iter().sum());
    for (a, x) in alpha.iter().zip(p) {
        lp += -ln_gamma(*a) + (a - 1.0) * x.ln();
    }
    lp
}
