//! Simulation harness: reference parameter sets, generators, a quadrature
//! oracle and the usual scores (KL divergence, misclassification rate).

pub mod karlis;
pub mod oracle;
pub mod presets;
pub mod study;

use itertools::Itertools;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use karlis::{bivariate_poisson_mixture_generate, BivPoissonMixtureParams};
pub use oracle::{oracle_box_probability, oracle_logpdf_quadrature};
pub use study::{run_simulation_study, Study, StudyRecord};

/// Label counts up to which every permutation is enumerated.
const EXHAUSTIVE_MAX_G: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Samples whose log ratio was not finite.
    pub dropped: usize,
}

/// Monte Carlo estimate of KL(p_true ‖ p_est) from `n` draws of p_true.
pub fn kl_divergence_mc<R, S, T, E>(mut sample: S, log_true: T, log_est: E, n: usize, rng: &mut R) -> Result<KlEstimate>
where
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> Vec<f64>,
    T: Fn(&[f64]) -> f64,
    E: Fn(&[f64]) -> f64,
{
    if n == 0 {
        return Err(Error::InvalidParameter("KL estimate needs at least one draw".into()));
    }
    let mut terms = Vec::with_capacity(n);
    let mut dropped = 0;
    for _ in 0..n {
        let x = sample(rng);
        let r = log_true(&x) - log_est(&x);
        if r.is_finite() {
            terms.push(r);
        } else {
            dropped += 1;
        }
    }
    Ok(summarize_terms(&terms, dropped))
}

/// KL estimate from precomputed (log p_true, log p_est) pairs.
pub fn kl_from_log_pairs(pairs: &[(f64, f64)]) -> KlEstimate {
    let mut dropped = 0;
    let terms: Vec<f64> = pairs
        .iter()
        .filter_map(|(a, b)| {
            let r = a - b;
            if r.is_finite() {
                Some(r)
            } else {
                dropped += 1;
                None
            }
        })
        .collect();
    summarize_terms(&terms, dropped)
}

fn summarize_terms(terms: &[f64], dropped: usize) -> KlEstimate {
    let m = terms.len() as f64;
    if terms.is_empty() {
        return KlEstimate {
            value: f64::NAN,
            std_error: f64::NAN,
            dropped,
        };
    }
    let mean = terms.iter().sum::<f64>() / m;
    let var = if terms.len() > 1 {
        terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    KlEstimate {
        value: mean,
        std_error: (var / m).sqrt(),
        dropped,
    }
}

/// Best label matching between an estimated and a reference partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub rate: f64,
    /// `perm[k]` is the reference label matched to estimated label `k`.
    pub perm: Vec<usize>,
}

/// Fraction of disagreeing labels, minimized over relabelings of `est`.
/// Labels are 0-based.
pub fn misclassification_rate(est: &[usize], truth: &[usize]) -> Result<f64> {
    Ok(best_matching(est, truth)?.rate)
}

pub fn best_matching(est: &[usize], truth: &[usize]) -> Result<Matching> {
    if est.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "partitions have lengths {} and {}",
            est.len(),
            truth.len()
        )));
    }
    if est.is_empty() {
        return Err(Error::InvalidParameter("empty partitions".into()));
    }
    let g = est.iter().chain(truth).max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0i64; g]; g];
    for (&a, &b) in est.iter().zip(truth) {
        counts[a][b] += 1;
    }
    let (matched, perm) = if g <= EXHAUSTIVE_MAX_G {
        // Ties resolved by the lexicographically first permutation.
        let mut best = (-1i64, Vec::new());
        for p in (0..g).permutations(g) {
            let s: i64 = (0..g).map(|k| counts[k][p[k]]).sum();
            if s > best.0 {
                best = (s, p);
            }
        }
        best
    } else {
        let m = Matrix::from_rows(counts).expect("square count matrix");
        kuhn_munkres(&m)
    };
    Ok(Matching {
        rate: 1.0 - matched as f64 / est.len() as f64,
        perm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::special::norm_logpdf;
    use rand_distr::StandardNormal;

    #[test]
    fn misclassification_examples() {
        assert_eq!(misclassification_rate(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(misclassification_rate(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(misclassification_rate(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap(), 0.25);
        assert!(misclassification_rate(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn hungarian_agrees_with_enumeration() {
        let mut rng = stream(41, &[]);
        let truth: Vec<usize> = (0..300).map(|_| rng.random_range(0..10)).collect();
        let relabel = [3, 7, 1, 0, 9, 2, 8, 4, 6, 5];
        let mut est: Vec<usize> = truth.iter().map(|&t| relabel[t]).collect();
        for v in est.iter_mut().take(30) {
            *v = (*v + 1) % 10;
        }
        let m = best_matching(&est, &truth).unwrap();
        assert!(m.rate <= 0.1 + 1e-12);
        for k in 0..10 {
            assert_eq!(m.perm[relabel[k]], k);
        }
        let a: Vec<usize> = truth.iter().map(|t| t % 4).collect();
        let b: Vec<usize> = est.iter().map(|t| t % 4).collect();
        let small = best_matching(&a, &b).unwrap().rate;
        let counts = {
            let mut c = vec![vec![0i64; 4]; 4];
            for (x, y) in a.iter().zip(&b) {
                c[*x][*y] += 1;
            }
            c
        };
        let (s, _) = kuhn_munkres(&Matrix::from_rows(counts).unwrap());
        assert!((small - (1.0 - s as f64 / 300.0)).abs() < 1e-15);
    }

    #[test]
    fn kl_of_identical_is_zero_and_shifted_gaussian_is_half() {
        let mut rng = stream(42, &[]);
        let same = kl_divergence_mc(|r| vec![r.sample(StandardNormal)], |x| norm_logpdf(x[0]), |x| norm_logpdf(x[0]), 1000, &mut rng)
            .unwrap();
        assert_eq!(same.value, 0.0);
        let k = kl_divergence_mc(
            |r| vec![r.sample(StandardNormal)],
            |x| norm_logpdf(x[0]),
            |x| norm_logpdf(x[0] - 1.0),
            10_000,
            &mut rng,
        )
        .unwrap();
        assert!((k.value - 0.5).abs() < 3.0 * k.std_error, "{k:?}");
    }
}
