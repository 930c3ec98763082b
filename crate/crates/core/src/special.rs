//! Standard-normal scalar functions with tail-accurate variants.

use std::f64::consts::FRAC_1_SQRT_2;


/// ln(sqrt(2π)).
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Smallest log value still representable as a positive double.
pub const LOG_DENSITY_FLOOR: f64 = -745.0;

/// Φ(x).
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// 1 − Φ(x), accurate in the upper tail.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

/// φ(x).
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub fn norm_logpdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// ln Γ(x) for x > 0.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Φ⁻¹(p). Returns ∓∞ at 0 and 1.
///
/// Wichura's AS241 rational approximation followed by one Halley step.
/// Accurate for small `p`; for probabilities close to one prefer
/// [`norm_isf`] on the complement.
pub fn norm_ppf(p: f64) -> f64 {
    if p.is_nan() {
        return f64::NAN;
    }
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = as241(p);
    if !x.is_finite() {
        return x;
    }
    // Halley refinement on Φ(x) − p, using the lower tail for precision.
    let (e, dens) = if x <= 0.0 {
        (norm_cdf(x) - p, norm_pdf(x))
    } else {
        ((1.0 - p) - norm_sf(x), norm_pdf(x))
    };
    if dens == 0.0 {
        return x;
    }
    let u = e / dens;
    x - u / (1.0 + 0.5 * x * u)
}

fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r + 67265.770_927_008_7) * r
            + 45921.953_931_549_87)
            * r
            + 13731.693_765_509_461)
            * r
            + 1971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r + 39307.895_800_092_71) * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Inverse survival function: the x with 1 − Φ(x) = q.
#[inline]
pub fn norm_isf(q: f64) -> f64 {
    -norm_ppf(q)
}

/// Latent threshold for a cumulative probability known both as `cdf` and
/// as its complement `sf`; uses whichever tail keeps precision.
#[inline]
pub fn threshold_from_tails(cdf: f64, sf: f64) -> f64 {
    if cdf <= 0.5 {
        norm_ppf(cdf)
    } else {
        norm_isf(sf)
    }
}

/// Standard-normal mass of (lo, hi], computed on the side of zero that
/// avoids cancellation.
#[inline]
pub fn interval_prob(lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    if lo >= 0.0 {
        (norm_sf(lo) - norm_sf(hi)).max(0.0)
    } else if hi <= 0.0 {
        (norm_cdf(hi) - norm_cdf(lo)).max(0.0)
    } else {
        (1.0 - norm_cdf(lo) - norm_sf(hi)).max(0.0)
    }
}

/// log of [`interval_prob`], falling back to a tail expansion when the
/// mass underflows.
pub fn log_interval_prob(lo: f64, hi: f64) -> f64 {
    let p = interval_prob(lo, hi);
    if p > 1e-300 {
        return p.ln();
    }
    if !(hi > lo) {
        return f64::NEG_INFINITY;
    }
    // Both ends in the same far tail; mirror to the upper tail.
    let (a, b) = if lo >= 0.0 { (lo, hi) } else { (-hi, -lo) };
    if a <= 0.0 {
        return f64::NEG_INFINITY;
    }
    // log(Φc(a) − Φc(b)) with Mills-ratio asymptotics Φc(t) ≈ φ(t)/t.
    let log_sf_a = log_sf_asymptotic(a);
    if b.is_infinite() {
        return log_sf_a;
    }
    let log_sf_b = log_sf_asymptotic(b);
    let diff = log_sf_b - log_sf_a;
    if diff >= 0.0 {
        return f64::NEG_INFINITY;
    }
    log_sf_a + (-diff.exp()).ln_1p()
}

fn log_sf_asymptotic(t: f64) -> f64 {
    // Continued-fraction-free series: φ(t)/t · (1 − 1/t² + 3/t⁴ − 15/t⁶).
    let t2 = t * t;
    let series = 1.0 - 1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2);
    norm_logpdf(t) - t.ln() + series.ln()
}

/// Mean of N(0,1) truncated to (lo, hi].
pub fn truncated_std_normal_mean(lo: f64, hi: f64) -> f64 {
    let mass = interval_prob(lo, hi);
    if mass > 1e-280 {
        return (norm_pdf(lo) - norm_pdf(hi)) / mass;
    }
    // Far tail: mean sits at the near edge plus roughly 1/edge.
    if lo >= 0.0 {
        (lo + 1.0 / lo.max(1e-300)).min(hi)
    } else {
        (hi + 1.0 / hi.min(-1e-300)).max(lo)
    }
}

#[inline]
pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// Numerically stable log Σ exp(v).
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on Pₙ.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_symmetry_and_known_values() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 1e-15);
        assert!((norm_sf(8.0) - 6.220960574271785e-16).abs() < 1e-28);
    }

    #[test]
    fn ppf_round_trips_in_both_tails() {
        for &p in &[1e-300, 1e-100, 1e-20, 1e-8, 0.01, 0.3, 0.5] {
            let x = norm_ppf(p);
            let back = norm_cdf(x);
            assert!(((back - p) / p).abs() < 1e-12, "p={p} back={back}");
        }
        for &q in &[1e-200, 1e-12, 0.2] {
            let x = norm_isf(q);
            assert!(((norm_sf(x) - q) / q).abs() < 1e-12);
        }
    }

    #[test]
    fn interval_prob_is_tail_accurate() {
        let p = interval_prob(8.0, 9.0);
        let expected = norm_sf(8.0) - norm_sf(9.0);
        assert!(((p - expected) / expected).abs() < 1e-14);
        assert!((interval_prob(f64::NEG_INFINITY, f64::INFINITY) - 1.0).abs() < 1e-16);
        assert_eq!(interval_prob(1.0, 1.0), 0.0);
    }

    #[test]
    fn log_interval_prob_far_tail_is_finite() {
        let v = log_interval_prob(40.0, 41.0);
        assert!(v.is_finite());
        // exact: log φ(40)/40 approximately
        assert!((v - (norm_logpdf(40.0) - 40f64.ln())).abs() < 1e-3);
        assert!((log_interval_prob(-41.0, -40.0) - v).abs() < 1e-12);
        assert!((log_interval_prob(0.0, 1.0) - (0.341344746068543f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn truncated_mean_half_normal() {
        let m = truncated_std_normal_mean(f64::NEG_INFINITY, 0.0);
        assert!((m + 0.7978845608028654).abs() < 1e-14);
        let far = truncated_std_normal_mean(50.0, f64::INFINITY);
        assert!((far - 50.02).abs() < 0.01);
    }
}
