//! Separation-of-variables rectangle probabilities for d ≥ 3, integrated
//! with randomly shifted Richtmyer lattice rules.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::special::{interval_prob, norm_cdf, norm_isf, norm_ppf, norm_sf};

/// Shifts are drawn from a fixed stream so results are a pure function of
/// the inputs.
const SHIFT_SEED: u64 = 0x9e37_79b9_7f4a_7c15;
const N_SHIFTS: usize = 8;
const INITIAL_POINTS: usize = 32;

/// Target accuracy for Monte Carlo rectangle probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxAccuracy {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Budget of integrand evaluations.
    pub max_points: usize,
    /// Use the deterministic conditioning quadrature in dimension 3
    /// instead of the lattice rule.
    #[serde(default)]
    pub trivariate_quadrature: bool,
}

impl Default for BoxAccuracy {
    fn default() -> Self {
        BoxAccuracy {
            rel_tol: 1e-4,
            abs_tol: 1e-12,
            max_points: 100_000,
            trivariate_quadrature: false,
        }
    }
}

impl BoxAccuracy {
    /// A cheaper setting for inner sampler loops.
    pub fn sampler() -> Self {
        BoxAccuracy {
            rel_tol: 2e-3,
            abs_tol: 1e-12,
            max_points: 4_096,
            trivariate_quadrature: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxProbability {
    pub value: f64,
    /// Zero for the deterministic low-dimensional algorithms.
    pub std_error: f64,
    /// False when the error target was not met within the point budget.
    pub converged: bool,
}

impl BoxProbability {
    pub fn exact(value: f64) -> Self {
        BoxProbability {
            value,
            std_error: 0.0,
            converged: true,
        }
    }
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

/// Point of (lo, hi] splitting the standard-normal mass of the interval in
/// proportions w : 1 − w, evaluated on the tail that avoids cancellation.
#[inline]
pub(crate) fn interval_inverse(lo: f64, hi: f64, mass: f64, w: f64) -> f64 {
    let y = if lo >= 0.0 {
        norm_isf(norm_sf(lo) - w * mass)
    } else if hi <= 0.0 {
        norm_ppf(norm_cdf(lo) + w * mass)
    } else {
        let u = norm_cdf(lo) + w * mass;
        if u <= 0.5 {
            norm_ppf(u)
        } else {
            norm_isf(norm_sf(hi) + (1.0 - w) * mass)
        }
    };
    y.clamp(lo, hi)
}

/// Integrand of the Genz transformation at a point of [0,1]^(d−1).
fn sov_integrand(l: &DMatrix<f64>, lo: &[f64], hi: &[f64], w: &[f64], y: &mut [f64]) -> f64 {
    let d = lo.len();
    let mut f = 1.0;
    for i in 0..d {
        let mut s = 0.0;
        for j in 0..i {
            s += l[(i, j)] * y[j];
        }
        let lii = l[(i, i)];
        let a = (lo[i] - s) / lii;
        let b = (hi[i] - s) / lii;
        let mass = interval_prob(a, b);
        f *= mass;
        if f == 0.0 {
            return 0.0;
        }
        if i + 1 < d {
            y[i] = interval_inverse(a, b, mass, w[i]);
        }
    }
    f
}

/// P(lo < L·u ≤ hi) for u ~ N(0, I), where `l` is the lower Cholesky
/// factor of the covariance and the bounds are centred.
pub(crate) fn sov_probability(l: &DMatrix<f64>, lo: &[f64], hi: &[f64], acc: &BoxAccuracy) -> BoxProbability {
    let d = lo.len();
    let dim = d - 1;
    let gen: Vec<f64> = first_primes(dim).iter().map(|&p| (p as f64).sqrt().fract()).collect();
    let mut shift_rng = ChaCha8Rng::seed_from_u64(SHIFT_SEED);
    let shifts: Vec<Vec<f64>> = (0..N_SHIFTS)
        .map(|_| (0..dim).map(|_| shift_rng.random::<f64>()).collect())
        .collect();

    let mut sums = [0.0f64; N_SHIFTS];
    let mut done = 0usize;
    let mut n = INITIAL_POINTS;
    let mut x = vec![0.0; dim];
    let mut xa = vec![0.0; dim];
    let mut y = vec![0.0; d];
    loop {
        for (s, shift) in shifts.iter().enumerate() {
            for j in done..n {
                let jf = (j + 1) as f64;
                for t in 0..dim {
                    let v = (jf * gen[t] + shift[t]).fract();
                    let tent = (2.0 * v - 1.0).abs();
                    x[t] = tent;
                    xa[t] = 1.0 - tent;
                }
                let f1 = sov_integrand(l, lo, hi, &x, &mut y);
                let f2 = sov_integrand(l, lo, hi, &xa, &mut y);
                sums[s] += 0.5 * (f1 + f2);
            }
        }
        done = n;
        let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let est = means.iter().sum::<f64>() / N_SHIFTS as f64;
        let var = means.iter().map(|m| (m - est).powi(2)).sum::<f64>() / (N_SHIFTS as f64 - 1.0);
        let se = (var / N_SHIFTS as f64).sqrt();
        let target = acc.abs_tol.max(acc.rel_tol * est);
        if se <= target {
            return BoxProbability {
                value: est.clamp(0.0, 1.0),
                std_error: se,
                converged: true,
            };
        }
        if 4 * n * N_SHIFTS > acc.max_points {
            return BoxProbability {
                value: est.clamp(0.0, 1.0),
                std_error: se,
                converged: false,
            };
        }
        n *= 2;
    }
}
