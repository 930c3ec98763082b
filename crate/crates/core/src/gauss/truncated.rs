//! Truncated normal sampling: univariate draws by tail-aware inversion
//! with rejection fallbacks, and Gibbs sweeps for boxes in d dimensions.

use nalgebra::DMatrix;
use rand::Rng;

use super::spd_cholesky;
use crate::error::{Error, Result};
use crate::special::{interval_prob, norm_cdf, norm_isf, norm_ppf, norm_sf, truncated_std_normal_mean};

/// Beyond this many standard deviations inversion loses precision and
/// rejection sampling takes over.
const TAIL_SWITCH: f64 = 6.0;

#[inline]
fn clamp_open_closed(y: f64, lo: f64, hi: f64) -> f64 {
    if y <= lo {
        lo.next_up().min(hi)
    } else if y > hi {
        hi
    } else {
        y
    }
}

/// Upper-tail draw from N(0,1) restricted to (a, b], a ≥ 0 large.
fn upper_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let width = b - a;
    if width < 2.0 / a {
        // Uniform proposal, weight exp((a² − z²)/2).
        loop {
            let z = a + width * rng.random::<f64>();
            if rng.random::<f64>().ln() <= 0.5 * (a * a - z * z) {
                return z;
            }
        }
    }
    // Translated exponential proposal with the optimal rate.
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a - (1.0 - rng.random::<f64>()).ln() / lambda;
        if z > b {
            continue;
        }
        if rng.random::<f64>().ln() <= -0.5 * (z - lambda).powi(2) {
            return z;
        }
    }
}

/// Draw from N(0,1) truncated to (lo, hi].
pub fn truncated_std_normal<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::Degenerate(format!("empty truncation interval ({lo}, {hi}]")));
    }
    let y = if lo >= TAIL_SWITCH {
        upper_tail(lo, hi, rng)
    } else if hi <= -TAIL_SWITCH {
        -upper_tail(-hi, -lo, rng)
    } else {
        let mass = interval_prob(lo, hi);
        if !(mass > 1e-300) {
            // Interval inside the body but narrower than the float spacing
            // of its probability.
            if lo.is_finite() && hi.is_finite() {
                return Ok(clamp_open_closed(0.5 * (lo + hi), lo, hi));
            }
            return Err(Error::Degenerate(format!("truncation interval ({lo}, {hi}] has no mass")));
        }
        let u: f64 = rng.random();
        if lo >= 0.0 {
            norm_isf(norm_sf(lo) - u * mass)
        } else if hi <= 0.0 {
            norm_ppf(norm_cdf(lo) + u * mass)
        } else {
            let p = norm_cdf(lo) + u * mass;
            if p <= 0.5 {
                norm_ppf(p)
            } else {
                norm_isf(norm_sf(hi) + (1.0 - u) * mass)
            }
        }
    };
    Ok(clamp_open_closed(y, lo, hi))
}

/// Draw from N(mean, sd²) truncated to (lo, hi].
pub fn truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(Error::InvalidParameter(format!("truncated normal needs sd > 0, got {sd}")));
    }
    let z = truncated_std_normal((lo - mean) / sd, (hi - mean) / sd, rng)?;
    Ok(clamp_open_closed(mean + sd * z, lo, hi))
}

/// Gibbs sampler for N(mean, cov) restricted to a box, with the
/// covariance factored once and reused across calls.
#[derive(Debug, Clone)]
pub struct TruncatedMvn {
    /// Regression weights of each coordinate on the others.
    weights: DMatrix<f64>,
    cond_sd: Vec<f64>,
    marginal_sd: Vec<f64>,
}

impl TruncatedMvn {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        let chol = spd_cholesky(cov)?;
        let q = chol.inverse();
        let weights = DMatrix::from_fn(d, d, |i, j| if i == j { 0.0 } else { -q[(i, j)] / q[(i, i)] });
        let cond_sd = (0..d).map(|i| (1.0 / q[(i, i)]).sqrt()).collect();
        let marginal_sd = (0..d).map(|i| cov[(i, i)].sqrt()).collect();
        Ok(TruncatedMvn {
            weights,
            cond_sd,
            marginal_sd,
        })
    }

    pub fn dim(&self) -> usize {
        self.cond_sd.len()
    }

    /// Starting point: the mean where it lies in the box, otherwise the
    /// mean of the truncated marginal on that coordinate.
    pub fn start(&self, mean: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|j| {
                let (m, l, u) = (mean[j], lower[j], upper[j]);
                if l < m && m <= u {
                    m
                } else {
                    let s = self.marginal_sd[j];
                    let t = m + s * truncated_std_normal_mean((l - m) / s, (u - m) / s);
                    clamp_open_closed(t, l, u)
                }
            })
            .collect()
    }

    /// Runs `sweeps` coordinate-wise Gibbs sweeps from `state`, in place.
    pub fn sweep<R: Rng + ?Sized>(
        &self,
        mean: &[f64],
        lower: &[f64],
        upper: &[f64],
        state: &mut [f64],
        sweeps: usize,
        rng: &mut R,
    ) -> Result<()> {
        let d = self.dim();
        for _ in 0..sweeps {
            for j in 0..d {
                let mut m = mean[j];
                for l in 0..d {
                    if l != j {
                        m += self.weights[(j, l)] * (state[l] - mean[l]);
                    }
                }
                state[j] = truncated_normal(m, self.cond_sd[j], lower[j], upper[j], rng)?;
            }
        }
        Ok(())
    }

    /// A draw after `sweeps` sweeps from the default start.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        mean: &[f64],
        lower: &[f64],
        upper: &[f64],
        sweeps: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        for j in 0..self.dim() {
            if !(lower[j] < upper[j]) {
                return Err(Error::Degenerate(format!("empty box side {j}: ({}, {}]", lower[j], upper[j])));
            }
        }
        let mut state = self.start(mean, lower, upper);
        self.sweep(mean, lower, upper, &mut state, sweeps, rng)?;
        Ok(state)
    }
}
