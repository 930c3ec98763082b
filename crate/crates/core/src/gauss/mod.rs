//! Multivariate normal numerics: correlation matrices, Gaussian
//! conditioning, rectangle probabilities, truncated sampling and
//! inverse-Wishart draws.

mod bvn;
mod qmc;
mod trivariate;
mod truncated;
mod wishart;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::special::{interval_prob, LN_SQRT_2PI};

pub use bvn::{bvn_rectangle, bvnu};
pub use qmc::{BoxAccuracy, BoxProbability};
pub use truncated::{truncated_normal, truncated_std_normal, TruncatedMvn};
pub use wishart::inverse_wishart_sample;

/// Condition number above which a conditioning block counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// A symmetric positive-definite matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    m: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn identity(e: usize) -> Self {
        CorrelationMatrix {
            m: DMatrix::identity(e, e),
        }
    }

    /// Validates symmetry and unit diagonal (within 1e-12) and positive
    /// definiteness. The stored matrix is exactly symmetric with an exact
    /// unit diagonal.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let e = m.nrows();
        if m.ncols() != e || e == 0 {
            return Err(Error::InvalidParameter(format!("correlation matrix must be square and non-empty, got {}x{}", e, m.ncols())));
        }
        let mut m = m;
        for i in 0..e {
            if (m[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("correlation matrix diagonal entry {i} is {}", m[(i, i)])));
            }
            m[(i, i)] = 1.0;
            for j in 0..i {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if !a.is_finite() || (a - b).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!("correlation matrix is not symmetric at ({i}, {j})")));
                }
                let v = 0.5 * (a + b);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        if Cholesky::new(m.clone()).is_none() {
            return Err(Error::NotPositiveDefinite("correlation matrix".into()));
        }
        Ok(CorrelationMatrix { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let e = rows.len();
        if rows.iter().any(|r| r.len() != e) {
            return Err(Error::InvalidParameter("correlation matrix rows must all have length e".into()));
        }
        Self::new(DMatrix::from_fn(e, e, |i, j| rows[i][j]))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.m.row(i).iter().copied().collect()).collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn is_identity(&self) -> bool {
        let e = self.dim();
        (0..e).all(|i| (0..e).all(|j| self.m[(i, j)] == if i == j { 1.0 } else { 0.0 }))
    }

    /// Log density of N(0, Γ) at `y`.
    pub fn logpdf(&self, y: &[f64]) -> Result<f64> {
        mvn_logpdf_centered(&self.m, y)
    }
}

impl Serialize for CorrelationMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CorrelationMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        CorrelationMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Per-dimension bounds `(lower_j, upper_j]`, entries may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidParameter("box bound lengths differ".into()));
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l < u) {
                return Err(Error::InvalidParameter(format!("box dimension {j}: lower {l} is not below upper {u}")));
            }
        }
        Ok(BoxBounds { lower, upper })
    }

    pub fn full(d: usize) -> Self {
        BoxBounds {
            lower: vec![f64::NEG_INFINITY; d],
            upper: vec![f64::INFINITY; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| l < v && v <= u)
    }
}

/// Cholesky factorization with bounded diagonal jitter: 1e-10·I, growing
/// tenfold up to 1e-6·I, before giving up.
pub fn spd_cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows();
    let mut jitter = 1e-10;
    while jitter <= 1e-6 * (1.0 + 1e-9) {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(a) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite(format!("{n}x{n} matrix did not factor even with 1e-6 jitter")))
}

/// Condition number of a symmetric matrix (ratio of extreme eigenvalues).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Linear map giving the law of `y_T | y_G` for `y ~ N(0, cov)`: the
/// conditional mean is `coef · y_G` and the covariance does not depend on
/// the conditioning values.
#[derive(Debug, Clone)]
pub struct ConditionalMap {
    pub coef: DMatrix<f64>,
    pub cov: DMatrix<f64>,
}

impl ConditionalMap {
    pub fn new(cov: &DMatrix<f64>, target: &[usize], given: &[usize]) -> Result<Self> {
        if target.iter().any(|t| given.contains(t)) {
            return Err(Error::InvalidParameter("target and conditioning index sets overlap".into()));
        }
        let s_tt = cov.select_rows(target).select_columns(target);
        if given.is_empty() {
            return Ok(ConditionalMap {
                coef: DMatrix::zeros(target.len(), 0),
                cov: s_tt,
            });
        }
        let s_gg = cov.select_rows(given).select_columns(given);
        let s_gt = cov.select_rows(given).select_columns(target);
        let cond = condition_number(&s_gg);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::Singular { condition: cond });
        }
        let chol = Cholesky::new(s_gg).ok_or(Error::Singular { condition: cond })?;
        // coefᵀ = Σ_GG⁻¹ Σ_GT
        let coef_t = chol.solve(&s_gt);
        let mut cond_cov = s_tt - s_gt.transpose() * &coef_t;
        cond_cov = 0.5 * (&cond_cov + cond_cov.transpose());
        Ok(ConditionalMap {
            coef: coef_t.transpose(),
            cov: cond_cov,
        })
    }

    pub fn mean(&self, y_given: &[f64]) -> DVector<f64> {
        &self.coef * DVector::from_column_slice(y_given)
    }
}

/// Mean and covariance of `y_T | y_G = y_given` for `y ~ N(0, cov)`.
pub fn conditional_gaussian(
    cov: &DMatrix<f64>,
    target: &[usize],
    given: &[usize],
    y_given: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if y_given.len() != given.len() {
        return Err(Error::InvalidParameter("conditioning values do not match the index set".into()));
    }
    let map = ConditionalMap::new(cov, target, given)?;
    Ok((map.mean(y_given), map.cov))
}

/// Rescales a covariance matrix to unit diagonal.
pub fn normalize_to_correlation(lambda: &DMatrix<f64>) -> Result<CorrelationMatrix> {
    let e = lambda.nrows();
    if lambda.ncols() != e {
        return Err(Error::InvalidParameter("covariance matrix must be square".into()));
    }
    if Cholesky::new(lambda.clone()).is_none() {
        return Err(Error::NotPositiveDefinite("covariance passed to normalization".into()));
    }
    let inv_sd: Vec<f64> = (0..e).map(|i| 1.0 / lambda[(i, i)].sqrt()).collect();
    let mut m = DMatrix::from_fn(e, e, |i, j| {
        if i == j {
            1.0
        } else {
            lambda[(i, j)] * inv_sd[i] * inv_sd[j]
        }
    });
    for i in 0..e {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    if Cholesky::new(m.clone()).is_none() {
        return Err(Error::NotPositiveDefinite("normalized correlation matrix".into()));
    }
    Ok(CorrelationMatrix { m })
}

/// Log density of N(0, cov) at `y`.
pub fn mvn_logpdf_centered(cov: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    let n = y.len();
    if n == 0 {
        return Ok(0.0);
    }
    let chol = Cholesky::new(cov.clone()).ok_or_else(|| Error::NotPositiveDefinite("covariance in gaussian density".into()))?;
    Ok(logpdf_with_cholesky(chol.l_dirty(), y))
}

/// Log density of N(0, L Lᵀ) at `y`, given the lower factor `L` (only its
/// lower triangle is read).
pub fn logpdf_with_cholesky(l: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = y.len();
    let mut w = vec![0.0; n];
    let mut quad = 0.0;
    let mut log_det = 0.0;
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * w[k];
        }
        w[i] = s / l[(i, i)];
        quad += w[i] * w[i];
        log_det += l[(i, i)].ln();
    }
    -0.5 * quad - log_det - n as f64 * LN_SQRT_2PI
}

/// Precomputed integrator for rectangle probabilities of N(mean, cov)
/// with a fixed covariance.
#[derive(Debug, Clone)]
pub struct BoxIntegrator {
    d: usize,
    sd: Vec<f64>,
    rho: f64,
    chol: Option<DMatrix<f64>>,
    /// Correlation matrix, kept for d = 3.
    corr3: Option<[[f64; 3]; 3]>,
}

impl BoxIntegrator {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        let sd: Vec<f64> = (0..d).map(|i| cov[(i, i)].sqrt()).collect();
        if sd.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::NotPositiveDefinite("box covariance has a non-positive variance".into()));
        }
        let (rho, chol) = match d {
            0 | 1 => (0.0, None),
            2 => {
                let r = cov[(0, 1)] / (sd[0] * sd[1]);
                if !(r.abs() < 1.0) {
                    return Err(Error::NotPositiveDefinite("bivariate box covariance".into()));
                }
                (r, None)
            }
            _ => (0.0, Some(spd_cholesky(cov)?.l())),
        };
        let corr3 = (d == 3).then(|| {
            let mut r = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    r[i][j] = cov[(i, j)] / (sd[i] * sd[j]);
                }
            }
            r
        });
        Ok(BoxIntegrator { d, sd, rho, chol, corr3 })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn probability(&self, mean: &[f64], lower: &[f64], upper: &[f64], acc: &BoxAccuracy) -> BoxProbability {
        match self.d {
            0 => BoxProbability::exact(1.0),
            1 => {
                let s = self.sd[0];
                BoxProbability::exact(interval_prob((lower[0] - mean[0]) / s, (upper[0] - mean[0]) / s))
            }
            2 => {
                let a = [(lower[0] - mean[0]) / self.sd[0], (lower[1] - mean[1]) / self.sd[1]];
                let b = [(upper[0] - mean[0]) / self.sd[0], (upper[1] - mean[1]) / self.sd[1]];
                BoxProbability::exact(bvn_rectangle(a, b, self.rho))
            }
            _ => {
                if let (true, Some(r)) = (acc.trivariate_quadrature, &self.corr3) {
                    let a = std::array::from_fn(|i| (lower[i] - mean[i]) / self.sd[i]);
                    let b = std::array::from_fn(|i| (upper[i] - mean[i]) / self.sd[i]);
                    if let Some(p) = trivariate::trivariate_probability(r, a, b, acc) {
                        return p;
                    }
                }
                let l = self.chol.as_ref().expect("cholesky factor for d >= 3");
                let lo: Vec<f64> = lower.iter().zip(mean).map(|(a, m)| a - m).collect();
                let hi: Vec<f64> = upper.iter().zip(mean).map(|(b, m)| b - m).collect();
                qmc::sov_probability(l, &lo, &hi, acc)
            }
        }
    }
}

/// Probability that N(mean, cov) falls in `bx`. Exact for d ≤ 2;
/// randomized quasi-Monte Carlo with a standard error for d ≥ 3.
pub fn box_probability(mean: &[f64], cov: &DMatrix<f64>, bx: &BoxBounds, acc: &BoxAccuracy) -> Result<BoxProbability> {
    if mean.len() != bx.dim() || cov.nrows() != bx.dim() {
        return Err(Error::InvalidParameter("box, mean and covariance dimensions differ".into()));
    }
    Ok(BoxIntegrator::new(cov)?.probability(mean, &bx.lower, &bx.upper, acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1_gamma1() -> CorrelationMatrix {
        CorrelationMatrix::from_rows(&[vec![1.0, -0.4, 0.4], vec![-0.4, 1.0, 0.4], vec![0.4, 0.4, 1.0]]).unwrap()
    }

    #[test]
    fn conditional_examples() {
        let (m, c) = conditional_gaussian(&DMatrix::identity(3, 3), &[0, 2], &[1], &[2.0]).unwrap();
        assert_eq!(m.as_slice(), &[0.0, 0.0]);
        assert_eq!(c, DMatrix::identity(2, 2));

        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
        let (m, c) = conditional_gaussian(&g, &[0], &[1], &[1.0]).unwrap();
        assert!((m[0] - 0.8).abs() < 1e-15);
        assert!((c[(0, 0)] - 0.36).abs() < 1e-15);

        let g1 = example1_gamma1();
        let (m, c) = conditional_gaussian(g1.matrix(), &[2], &[0, 1], &[0.0, 0.0]).unwrap();
        assert_eq!(m[0], 0.0);
        assert!((c[(0, 0)] - 0.466_666_666_666_666_7).abs() < 1e-12, "{}", c[(0, 0)]);
    }

    #[test]
    fn conditional_rejects_singular_block() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.2, 1.0, 1.0, 0.2, 0.2, 0.2, 1.0]);
        assert!(matches!(
            conditional_gaussian(&g, &[2], &[0, 1], &[0.0, 0.0]),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn normalization_examples() {
        let d = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        assert!(normalize_to_correlation(&d).unwrap().is_identity());
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 9.0]);
        let c = normalize_to_correlation(&m).unwrap();
        assert!((c.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        let g1 = example1_gamma1();
        assert_eq!(normalize_to_correlation(g1.matrix()).unwrap(), g1);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(normalize_to_correlation(&bad).is_err());
    }

    #[test]
    fn correlation_validation() {
        assert!(CorrelationMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(CorrelationMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).is_err());
        assert!(CorrelationMatrix::from_rows(&[vec![1.0, 1.5], vec![1.5, 1.0]]).is_err());
        let g = example1_gamma1();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<CorrelationMatrix>(&s).unwrap(), g);
    }

    #[test]
    fn box_probability_examples() {
        let acc = BoxAccuracy::default();
        let half = BoxBounds::new(vec![f64::NEG_INFINITY], vec![0.0]).unwrap();
        let p = box_probability(&[0.0], &DMatrix::identity(1, 1), &half, &acc).unwrap();
        assert_eq!(p.value, 0.5);
        let quad = BoxBounds::new(vec![f64::NEG_INFINITY; 2], vec![0.0; 2]).unwrap();
        let p = box_probability(&[0.0; 2], &DMatrix::identity(2, 2), &quad, &acc).unwrap();
        assert!((p.value - 0.25).abs() < 1e-15);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let p = box_probability(&[0.0; 2], &g, &quad, &acc).unwrap();
        assert!((p.value - 1.0 / 3.0).abs() < 1e-14, "{}", p.value);
    }

    #[test]
    fn full_space_has_unit_mass() {
        let acc = BoxAccuracy::default();
        for d in 1..=4 {
            let mut cov = DMatrix::from_element(d, d, 0.3);
            cov.fill_diagonal(1.5);
            let p = box_probability(&vec![0.2; d], &cov, &BoxBounds::full(d), &acc).unwrap();
            assert!((p.value - 1.0).abs() < 1e-10 + 3.0 * p.std_error, "d={d}: {p:?}");
        }
    }

    #[test]
    fn jitter_repair_is_bounded() {
        let near = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_cholesky(&near).is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.1, 1.1, 1.0]);
        assert!(spd_cholesky(&bad).is_err());
    }

    #[test]
    fn logpdf_matches_closed_form() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let y = [0.3, -1.1];
        let det: f64 = 0.75;
        let quad = (y[0] * y[0] - 2.0 * 0.5 * y[0] * y[1] + y[1] * y[1]) / det;
        let expected = -0.5 * quad - 0.5 * det.ln() - std::f64::consts::TAU.ln();
        assert!((mvn_logpdf_centered(&g, &y).unwrap() - expected).abs() < 1e-14);
    }
}
