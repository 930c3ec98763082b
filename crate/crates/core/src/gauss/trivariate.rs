//! Deterministic trivariate rectangle probabilities: condition on the most
//! constrained coordinate, integrate it by Gauss–Legendre in probability
//! space and evaluate the remaining pair with the bivariate algorithm.

use std::sync::OnceLock;

use super::bvn::bvn_rectangle;
use super::qmc::{interval_inverse, BoxAccuracy, BoxProbability};
use crate::special::{gauss_legendre, interval_prob};

const RULE_SIZES: [usize; 4] = [8, 16, 32, 64];
/// Conditional variances below this are treated as singular.
const MIN_CONDITIONAL_VAR: f64 = 1e-10;

fn rules() -> &'static [(Vec<f64>, Vec<f64>)] {
    static RULES: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    RULES.get_or_init(|| RULE_SIZES.iter().map(|&n| gauss_legendre(n)).collect())
}

/// P(a < Y ≤ b) for standardized Y with correlation `r`. `None` when the
/// conditional pair is singular; the caller then falls back to QMC. The
/// reported error is the difference between the last two rules.
pub(crate) fn trivariate_probability(r: &[[f64; 3]; 3], a: [f64; 3], b: [f64; 3], acc: &BoxAccuracy) -> Option<BoxProbability> {
    let mass: Vec<f64> = (0..3).map(|i| interval_prob(a[i], b[i])).collect();
    if mass.iter().any(|m| *m <= 0.0) {
        return Some(BoxProbability::exact(0.0));
    }
    let o = (0..3).min_by(|&i, &j| mass[i].total_cmp(&mass[j])).expect("three coordinates");
    let (p, q) = match o {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (rop, roq) = (r[o][p], r[o][q]);
    let (vp, vq) = (1.0 - rop * rop, 1.0 - roq * roq);
    if vp < MIN_CONDITIONAL_VAR || vq < MIN_CONDITIONAL_VAR {
        return None;
    }
    let (sp, sq) = (vp.sqrt(), vq.sqrt());
    let rho = (r[p][q] - rop * roq) / (sp * sq);
    if !(rho.abs() < 1.0 - 1e-12) {
        return None;
    }
    let estimate = |(x, w): &(Vec<f64>, Vec<f64>)| -> f64 {
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            // t ↦ t²(3 − 2t) flattens the endpoint behaviour of infinite bounds.
            let t = 0.5 * (xi + 1.0);
            let wi = wi * 6.0 * t * (1.0 - t);
            let u = interval_inverse(a[o], b[o], mass[o], t * t * (3.0 - 2.0 * t));
            let lo = [(a[p] - rop * u) / sp, (a[q] - roq * u) / sq];
            let hi = [(b[p] - rop * u) / sp, (b[q] - roq * u) / sq];
            s += 0.5 * wi * bvn_rectangle(lo, hi, rho);
        }
        mass[o] * s
    };
    let rules = rules();
    let mut prev = estimate(&rules[0]);
    for rule in &rules[1..] {
        let cur = estimate(rule);
        let err = (cur - prev).abs();
        if err <= acc.abs_tol.max(acc.rel_tol * cur) {
            return Some(BoxProbability {
                value: cur.clamp(0.0, 1.0),
                std_error: err,
                converged: true,
            });
        }
        prev = cur;
    }
    Some(BoxProbability {
        value: prev.clamp(0.0, 1.0),
        std_error: f64::NAN,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::qmc::sov_probability;
    use nalgebra::{Cholesky, DMatrix};

    fn tight() -> BoxAccuracy {
        BoxAccuracy {
            rel_tol: 1e-9,
            abs_tol: 1e-15,
            max_points: 1 << 22,
            trivariate_quadrature: true,
        }
    }

    #[test]
    fn orthant_identity() {
        let rho: f64 = 0.5;
        let r = [[1.0, rho, rho], [rho, 1.0, rho], [rho, rho, 1.0]];
        let p = trivariate_probability(&r, [0.0; 3], [f64::INFINITY; 3], &tight()).unwrap();
        let exact = 0.125 + 3.0 * rho.asin() / (4.0 * std::f64::consts::PI);
        assert!((p.value - exact).abs() < 1e-9, "{p:?} vs {exact}");
    }

    #[test]
    fn agrees_with_lattice_rule() {
        let r = [[1.0, -0.4, 0.3], [-0.4, 1.0, 0.2], [0.3, 0.2, 1.0]];
        let m = DMatrix::from_fn(3, 3, |i, j| r[i][j]);
        let l = Cholesky::new(m).unwrap().l();
        for (a, b) in [
            ([-1.0, f64::NEG_INFINITY, 0.2], [0.5, 0.3, 0.35]),
            ([1.2, 1.3, -3.0], [f64::INFINITY, 1.4, -0.1]),
            ([-6.0, -5.5, -6.5], [-5.0, -5.2, -6.0]),
        ] {
            let t = trivariate_probability(&r, a, b, &tight()).unwrap();
            let q = sov_probability(&l, &a, &b, &BoxAccuracy::default());
            assert!(t.converged);
            assert!((t.value - q.value).abs() < 4.0 * q.std_error + 1e-14, "{t:?} vs {q:?}");
        }
    }

    #[test]
    fn empty_and_singular() {
        let r = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(trivariate_probability(&r, [0.0; 3], [0.0, 1.0, 1.0], &tight()).unwrap().value, 0.0);
        let s = [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(trivariate_probability(&s, [-1.0; 3], [1.0; 3], &tight()).is_none());
    }
}
