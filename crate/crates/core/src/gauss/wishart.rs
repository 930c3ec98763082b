use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::margins::gamma_draw;

/// Draws Λ ~ W⁻¹(df, scale) by the Bartlett decomposition.
///
/// With `scale = U Uᵀ` (Cholesky) and `A` the Bartlett factor of a
/// standard Wishart, `Λ = (U A⁻ᵀ)(U A⁻ᵀ)ᵀ`.
pub fn inverse_wishart_sample<R: Rng + ?Sized>(df: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let e = scale.nrows();
    if !(df > e as f64 - 1.0) {
        return Err(Error::InvalidParameter(format!("inverse-Wishart needs df > {}, got {df}", e as f64 - 1.0)));
    }
    let u = nalgebra::Cholesky::new(scale.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("inverse-Wishart scale".into()))?
        .l();
    let mut a = DMatrix::<f64>::zeros(e, e);
    for i in 0..e {
        // χ²(df − i) = Gamma((df − i)/2, 2)
        a[(i, i)] = gamma_draw(0.5 * (df - i as f64), 2.0, rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    // B = U A⁻ᵀ, i.e. solve B Aᵀ = U, equivalently A Bᵀ = Uᵀ.
    let bt = a
        .solve_lower_triangular(&u.transpose())
        .ok_or_else(|| Error::Degenerate("singular Bartlett factor".into()))?;
    let b = bt.transpose();
    let mut lambda = &b * b.transpose();
    for i in 0..e {
        for j in 0..i {
            let v = 0.5 * (lambda[(i, j)] + lambda[(j, i)]);
            lambda[(i, j)] = v;
            lambda[(j, i)] = v;
        }
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn mean_matches_formula() {
        let mut rng = stream(21, &[]);
        let n = 100_000;
        let scale = DMatrix::identity(2, 2);
        let draws: Vec<DMatrix<f64>> = (0..n).map(|_| inverse_wishart_sample(10.0, &scale, &mut rng).unwrap()).collect();
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let xs: Vec<f64> = draws.iter().map(|d| d[(i, j)]).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let se = (v / n as f64).sqrt();
            let target = if i == j { 1.0 / 7.0 } else { 0.0 };
            assert!((m - target).abs() < 3.0 * se, "({i},{j}): {m} ± {se}");
        }
    }

    #[test]
    fn scale_equivariance() {
        let c = 2.5;
        let mut r1 = stream(22, &[]);
        let mut r2 = stream(22, &[]);
        for _ in 0..100 {
            let a = inverse_wishart_sample(6.0, &DMatrix::identity(3, 3), &mut r1).unwrap();
            let b = inverse_wishart_sample(6.0, &(DMatrix::identity(3, 3) * c), &mut r2).unwrap();
            assert!((b - a * c).abs().max() < 1e-12);
        }
    }

    #[test]
    fn draws_are_positive_definite() {
        let mut rng = stream(23, &[]);
        let scale = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, -0.3, 0.1, -0.3, 0.7]);
        for _ in 0..10_000 {
            let d = inverse_wishart_sample(4.0, &scale, &mut rng).unwrap();
            assert!(nalgebra::Cholesky::new(d).is_some());
        }
        assert!(inverse_wishart_sample(1.5, &scale, &mut rng).is_err());
    }
}
