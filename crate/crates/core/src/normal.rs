//! Scalar normal-distribution helpers shared by the model and mixture code.

use libm::erfc;

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Density of `N(mean, sd^2)` at `x`.
#[inline]
pub fn pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    // Beyond this the value is below 1e-280; returning zero keeps sums out
    // of subnormal arithmetic, which is very slow.
    if z.abs() > 36.0 {
        return 0.0;
    }
    FRAC_1_SQRT_2PI / sd * (-0.5 * z * z).exp()
}

#[inline]
pub fn ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// Distribution function of `N(mean, sd^2)` at `x`, accurate in both tails.
#[inline]
pub fn cdf(x: f64, mean: f64, sd: f64) -> f64 {
    let t = -(x - mean) / (sd * std::f64::consts::SQRT_2);
    // erfc(25) is about 1e-273; see `pdf`.
    if t > 25.0 {
        return 0.0;
    }
    // erfc(-6) rounds to exactly 2; skip the slow tail branch.
    if t < -6.0 {
        return 1.0;
    }
    0.5 * erfc(t)
}

/// Standard normal quantile at probability `p` in `(0, 1)`.
///
/// Full double precision; used wherever a `z` multiplier is needed so that
/// no rounded constant such as 1.96 leaks into results.
pub fn std_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    if p > 0.5 {
        // 1 - p is exact here.
        return -std_quantile(1.0 - p);
    }
    let x = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    // One Halley step against the accurate cdf cleans up the last digits.
    let d = pdf(x, 0.0, 1.0);
    if d == 0.0 {
        return x;
    }
    let u = (cdf(x, 0.0, 1.0) - p) / d;
    x - u / (1.0 + 0.5 * x * u)
}

/// Two-sided multiplier `z` such that `[-z, z]` holds probability `level`.
pub fn two_sided_z(level: f64) -> f64 {
    std_quantile(0.5 * (1.0 + level))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_matches_reference_values() {
        assert!((std_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((std_quantile(0.95) - 1.644_853_626_951_472_2).abs() < 1e-12);
        assert!((std_quantile(0.5)).abs() < 1e-15);
        assert!((std_quantile(1e-9) + 5.997_807_015_007_686).abs() < 1e-9);
    }

    #[test]
    fn cdf_inverts_quantile() {
        for &p in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            let x = std_quantile(p);
            assert!((cdf(x, 0.0, 1.0) - p).abs() <= 1e-14_f64.max(p * 1e-12));
        }
    }

    #[test]
    fn ln_pdf_consistent() {
        let x = pdf(0.3, -1.0, 2.5).ln();
        assert!((x - ln_pdf(0.3, -1.0, 2.5)).abs() < 1e-14);
    }
}
