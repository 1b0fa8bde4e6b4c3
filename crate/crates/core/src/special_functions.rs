//! Special functions: digamma, the unrooted tree function, Borel-type laws,
//! and the totally skewed 3/2-stable density.

use std::f64::consts::{PI, SQRT_2};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::One;

use crate::error::{domain, no_convergence, Result};
use crate::quadrature::gl20_panel;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Relative size below which a series term ends the summation.
pub const SERIES_REL_TOL: f64 = 1e-14;
/// Hard cap on the number of series terms.
pub const SERIES_MAX_TERMS: usize = 1_000_000;

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// `ln k!`
pub fn ln_factorial(k: u64) -> f64 {
    if k < 2 {
        0.0
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

/// Digamma function for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain("digamma", format!("x = {x}, need x > 0")));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let z = 1.0 / (x * x);
    let tail = z
        * (1.0 / 12.0
            - z * (1.0 / 120.0
                - z * (1.0 / 252.0 - z * (1.0 / 240.0 - z * (1.0 / 132.0 - z * (691.0 / 32760.0 - z / 12.0))))));
    Ok(acc + x.ln() - 0.5 / x - tail)
}

/// The root `theta` in (0, 1] of `theta * exp(-theta) = x`, for `0 < x <= 1/e`.
pub fn theta_from_x(x: f64) -> Result<f64> {
    let top = (-1.0f64).exp();
    if !(x > 0.0) || x > top * (1.0 + 1e-15) {
        return Err(domain("tree function", format!("x = {x}, need 0 < x <= 1/e")));
    }
    if x >= top {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if mid * (-mid).exp() < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Unrooted tree function `T(x) = sum k^{k-2} x^k / k!` on (0, 1/e].
pub fn tree_fn(x: f64) -> Result<f64> {
    let theta = theta_from_x(x)?;
    Ok(theta - 0.5 * theta * theta)
}

/// Borel-Tanner law with `r` initial individuals and offspring mean `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BorelParams {
    pub theta: f64,
    pub r: u64,
}

impl BorelParams {
    pub fn new(theta: f64, r: u64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) || r == 0 {
            return Err(domain("Borel-Tanner parameters", format!("theta = {theta}, r = {r}")));
        }
        Ok(Self { theta, r })
    }
}

/// `P(total progeny = k)`, computed in log space.
pub fn borel_pmf(params: BorelParams, k: u64) -> f64 {
    let BorelParams { theta, r } = params;
    if k < r {
        return 0.0;
    }
    let kf = k as f64;
    let j = (k - r) as f64;
    let ln = (r as f64).ln() - ln_factorial(k - r) + (j - 1.0) * kf.ln() + j * theta.ln() - theta * kf;
    ln.exp()
}

/// The pmf from `k = r` up to the point where terms are negligible.
pub fn borel_pmf_series(params: BorelParams) -> Vec<f64> {
    let mut out = Vec::new();
    let mut sum = 0.0;
    let mut prev = 0.0;
    let mut k = params.r;
    while out.len() < SERIES_MAX_TERMS {
        let term = borel_pmf(params, k);
        out.push(term);
        sum += term;
        if term < prev && term < SERIES_REL_TOL * sum {
            break;
        }
        prev = term;
        k += 1;
    }
    out
}

/// The law `mu_x(k) = k^{k-2} x^k / (k! T(x))` on k >= 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuX {
    pub x: f64,
    pub theta: f64,
    pub t: f64,
}

impl MuX {
    pub fn from_x(x: f64) -> Result<Self> {
        let theta = theta_from_x(x)?;
        Ok(Self::build(x, theta))
    }

    pub fn from_theta(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(domain("mu_x", format!("theta = {theta}, need 0 < theta <= 1")));
        }
        Ok(Self::build(theta * (-theta).exp(), theta))
    }

    fn build(x: f64, theta: f64) -> Self {
        Self {
            x,
            theta,
            t: theta - 0.5 * theta * theta,
        }
    }

    pub fn ln_pmf(&self, k: u64) -> f64 {
        if k == 0 {
            return f64::NEG_INFINITY;
        }
        let kf = k as f64;
        (kf - 2.0) * kf.ln() - ln_factorial(k) + kf * self.x.ln() - self.t.ln()
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.ln_pmf(k).exp()
    }

    pub fn mean(&self) -> f64 {
        2.0 / (2.0 - self.theta)
    }

    /// Infinite at `theta = 1`.
    pub fn variance(&self) -> f64 {
        let th = self.theta;
        if th >= 1.0 {
            return f64::INFINITY;
        }
        2.0 * th / ((1.0 - th) * (2.0 - th).powi(2))
    }
}

pub fn mu_pmf(mu: &MuX, k: u64) -> f64 {
    mu.pmf(k)
}

/// `S_N(theta) = sum_{k=1}^N k^k theta^{k-1} e^{-theta k} / k!`.
pub fn partial_sum_s(n: u64, theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(domain("partial sum S_N", format!("theta = {theta}")));
    }
    if theta == 0.0 {
        return Ok(if n >= 1 { 1.0 } else { 0.0 });
    }
    let ln_theta = theta.ln();
    let mut s = 0.0;
    for k in 1..=n {
        let kf = k as f64;
        s += (kf * kf.ln() - ln_factorial(k) + (kf - 1.0) * ln_theta - theta * kf).exp();
    }
    Ok(s)
}

/// Width of an integration panel whose integrand phase changes by at most
/// about 1.5 radians.
fn panel_width(rate: f64) -> f64 {
    (1.5 / rate.max(1e-12)).clamp(1e-4, 1.0)
}

const DECAY_STOP: f64 = -50.0;
const MAX_PANELS: usize = 5_000_000;

/// Density of the totally skewed 3/2-stable law,
/// `p1(x) = (1/pi) int_0^inf exp(-2/3 t^{3/2}) cos(x t + 2/3 t^{3/2}) dt`.
///
/// For `x < -1` the integration line is moved to the saddle point of the
/// Laplace exponent so that the exponentially small left tail is resolved.
pub fn stable_density_p1(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain("stable density", format!("x = {x}")));
    }
    if x < -1.0 {
        return p1_shifted(x);
    }
    let integrand = |t: f64| {
        let a = 2.0 / 3.0 * t * t.sqrt();
        (-a).exp() * (x * t + a).cos()
    };
    let sum = oscillatory_integral(
        integrand,
        |t| x.abs() + 2.0 * t.sqrt() + 1.0,
        |t| -2.0 / 3.0 * t * t.sqrt(),
    )?;
    Ok(sum / PI)
}

/// CDF of the same law via the Gil-Pelaez inversion formula.
pub fn stable_cdf_p1(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain("stable cdf", format!("x = {x}")));
    }
    let integrand = |t: f64| {
        let a = 2.0 / 3.0 * t * t.sqrt();
        if t == 0.0 {
            return x;
        }
        (-a).exp() * (x * t + a).sin() / t
    };
    let sum = oscillatory_integral(
        integrand,
        |t| x.abs() + 2.0 * t.sqrt() + 1.0,
        |t| -2.0 / 3.0 * t * t.sqrt(),
    )?;
    Ok((0.5 + sum / PI).clamp(0.0, 1.0))
}

/// Integral over [0, inf) of an integrand with a `t^{1/2}` branch point at
/// zero. The first panel is integrated in `u = sqrt(t)`.
fn oscillatory_integral<F, R, D>(mut f: F, rate: R, log_envelope: D) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    R: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let h0 = panel_width(rate(0.0)).min(0.25);
    let mut sum = gl20_panel(&mut |u: f64| 2.0 * u * f(u * u), 0.0, h0.sqrt());
    let mut t = h0;
    for _ in 0..MAX_PANELS {
        let h = panel_width(rate(t));
        sum += gl20_panel(&mut f, t, t + h);
        t += h;
        if log_envelope(t) < DECAY_STOP {
            return Ok(sum);
        }
    }
    Err(no_convergence("stable density", "panel budget exhausted"))
}

fn p1_shifted(x: f64) -> Result<f64> {
    let kappa = 2.0 * SQRT_2 / 3.0;
    let c = 0.5 * x * x;
    let exponent = |z: Complex64| x * z + kappa * z * z.sqrt();
    let f_c = exponent(Complex64::new(c, 0.0)).re;
    let mut integrand = |t: f64| (exponent(Complex64::new(c, t)) - f_c).exp().re;
    let rate = |t: f64| {
        let z = Complex64::new(c, t);
        (x + SQRT_2 * z.sqrt()).norm() + (SQRT_2 / 2.0) / z.norm().sqrt()
    };
    let mut sum = 0.0;
    let mut t = 0.0;
    for _ in 0..MAX_PANELS {
        let h = panel_width(rate(t));
        sum += gl20_panel(&mut integrand, t, t + h);
        t += h;
        if (exponent(Complex64::new(c, t)) - f_c).re < DECAY_STOP {
            return Ok(f_c.exp() * sum / PI);
        }
    }
    Err(no_convergence("stable density", "panel budget exhausted"))
}

/// `b^e` as an exact rational, `e` possibly negative.
fn rational_pow(b: u64, e: i64) -> BigRational {
    let base = BigRational::from_integer(BigInt::from(b));
    if e >= 0 {
        num_traits::pow(base, e as usize)
    } else {
        BigRational::one() / num_traits::pow(base, (-e) as usize)
    }
}

fn factorial_big(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// `i^{i-2}/(i-1)!`, the weight of `i` in the Borel law up to `theta^{i-1} e^{-theta i}`.
fn borel_weight(i: u64) -> BigRational {
    rational_pow(i, i as i64 - 2) / BigRational::from_integer(factorial_big(i - 1))
}

/// Both sides of the two-tree convolution identity
/// `2 k^{k-3}/(k-2)! = sum_{i=1}^{k-1} i^{i-2}/(i-1)! (k-i)^{k-i-2}/(k-i-1)!`
/// in exact rational arithmetic, for `k >= 2`.
pub fn borel_convolution_sides(k: u64) -> Result<(BigRational, BigRational)> {
    if k < 2 {
        return Err(domain("Borel convolution identity", format!("k = {k}, need k >= 2")));
    }
    let lhs = rational_pow(k, k as i64 - 3) * BigInt::from(2u32) / BigRational::from_integer(factorial_big(k - 2));
    let rhs = (1..k).map(|i| borel_weight(i) * borel_weight(k - i)).sum();
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: psi(x + 1) = -gamma + sum_n x / (n (n + x)) with an
    /// integral estimate of the tail.
    fn digamma_series(x: f64) -> f64 {
        let y = x - 1.0;
        let n = 200_000u64;
        let mut s = 0.0;
        for k in (1..=n).rev() {
            let kf = k as f64;
            s += y / (kf * (kf + y));
        }
        let m = n as f64 + 0.5;
        -EULER_GAMMA + s + ((m + y) / m).ln()
    }

    fn tree_series(x: f64) -> f64 {
        let mut s = 0.0;
        for k in 1..400u64 {
            let kf = k as f64;
            s += ((kf - 2.0) * kf.ln() - ln_factorial(k) + kf * x.ln()).exp();
        }
        s
    }

    // Composite 5-point Gauss-Legendre with step 1e-4 on [0, 200].
    const P1_AT_ZERO: f64 = 0.258_819_403_792_928_95;

    #[test]
    fn digamma_special_values() {
        assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-10);
        assert!((digamma(2.0).unwrap() + EULER_GAMMA - 1.0).abs() < 1e-10);
        let closed = -EULER_GAMMA - 2.0 * 2f64.ln();
        assert!((digamma(0.5).unwrap() - closed).abs() < 1e-12);
        let h3 = 1.0 + 0.5 + 1.0 / 3.0;
        assert!((digamma(4.0).unwrap() + EULER_GAMMA - h3).abs() < 1e-12);
    }

    #[test]
    fn digamma_matches_series_oracle() {
        for x in [0.3, 0.5, 1.0 / 0.75, 2.5, 4.0, 9.7] {
            let o = digamma_series(x);
            assert!((digamma(x).unwrap() - o).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn digamma_rejects_nonpositive() {
        assert!(digamma(0.0).is_err());
        assert!(digamma(-1.5).is_err());
    }

    #[test]
    fn tree_function_closed_form() {
        for i in 1..=20 {
            let theta = i as f64 / 20.0;
            let t = tree_fn(theta * (-theta).exp()).unwrap();
            assert!((t - (theta - theta * theta / 2.0)).abs() < 1e-10, "theta = {theta}");
        }
        assert!((tree_fn((-1.0f64).exp()).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn tree_function_matches_series() {
        for x in [0.01, 0.1, 0.2, 0.3] {
            assert!((tree_fn(x).unwrap() - tree_series(x)).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn tree_function_domain() {
        assert!(tree_fn(0.0).is_err());
        assert!(tree_fn(0.4).is_err());
    }

    #[test]
    fn mu_at_critical_point() {
        let mu = MuX::from_x((-1.0f64).exp()).unwrap();
        assert!((mu.pmf(1) - 0.735_758_9).abs() < 1e-7);
        let k = 10_000u64;
        let scaled = (k as f64).powf(2.5) * mu.pmf(k);
        let target = (2.0 / PI).sqrt();
        assert!((scaled / target - 1.0).abs() < 0.01);
        assert!(mu.variance().is_infinite());
    }

    #[test]
    fn mu_mean_and_variance() {
        for theta in [0.2, 0.5, 0.8] {
            let mu = MuX::from_theta(theta).unwrap();
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for k in 1..20_000u64 {
                let w = mu.pmf(k);
                let kf = k as f64;
                s0 += w;
                s1 += kf * w;
                s2 += kf * kf * w;
            }
            assert!((s0 - 1.0).abs() < 1e-10);
            assert!((s1 - mu.mean()).abs() < 1e-9);
            assert!((s2 - s1 * s1 - mu.variance()).abs() < 1e-7);
        }
    }

    #[test]
    fn borel_examples() {
        let p = BorelParams::new(0.5, 2).unwrap();
        assert!((borel_pmf(p, 2) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(borel_pmf(p, 1), 0.0);
        let p = BorelParams::new(0.5, 1).unwrap();
        let series = borel_pmf_series(p);
        let mean: f64 = series.iter().enumerate().map(|(i, w)| (i + 1) as f64 * w).sum();
        assert!((mean - 2.0).abs() < 1e-10);
        assert!(BorelParams::new(1.2, 1).is_err());
        assert!(BorelParams::new(0.5, 0).is_err());
    }

    #[test]
    fn borel_convolution_identity() {
        for k in 2..=60 {
            let (lhs, rhs) = borel_convolution_sides(k).unwrap();
            assert_eq!(lhs, rhs, "k = {k}");
        }
        let (lhs, _) = borel_convolution_sides(3).unwrap();
        assert_eq!(lhs, BigRational::from_integer(BigInt::from(2)));
        assert!(borel_convolution_sides(1).is_err());
    }

    #[test]
    fn partial_sums() {
        assert_eq!(partial_sum_s(5, 0.0).unwrap(), 1.0);
        let s = partial_sum_s(10_000, 0.3).unwrap();
        assert!((s - 1.0 / 0.7).abs() < 1e-6);
    }

    #[test]
    fn p1_frozen_oracle_value() {
        assert!((stable_density_p1(0.0).unwrap() - P1_AT_ZERO).abs() < 1e-10);
    }

    /// Recomputes the frozen value above with the brute-force rule.
    #[test]
    fn p1_oracle_rule_reproduces_frozen_value() {
        let (xs, ws) = crate::quadrature::gauss_legendre(5);
        let h = 1e-4;
        let mut total = 0.0;
        for j in 0..2_000_000u64 {
            let a = j as f64 * h;
            for (xi, wi) in xs.iter().zip(&ws) {
                let t = a + 0.5 * h * (1.0 + xi);
                let q = 2.0 / 3.0 * t * t.sqrt();
                total += wi * 0.5 * h * (-q).exp() * q.cos();
            }
        }
        assert!((total / PI - P1_AT_ZERO).abs() < 1e-12);
    }

    #[test]
    fn p1_positive_on_grid() {
        for i in 0..=200 {
            let x = -10.0 + 0.1 * i as f64;
            let v = stable_density_p1(x).unwrap();
            assert!(v > 0.0, "p1({x}) = {v}");
        }
    }

    #[test]
    fn p1_continuous_across_contour_switch() {
        let a = stable_density_p1(-1.0 - 1e-9).unwrap();
        let b = stable_density_p1(-1.0 + 1e-9).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn p1_tails() {
        // Heavy right tail: p1(x) ~ x^{-5/2} / sqrt(2 pi).
        let x: f64 = 200.0;
        let asym = x.powf(-2.5) / (2.0 * PI).sqrt();
        assert!((stable_density_p1(x).unwrap() / asym - 1.0).abs() < 0.01);
        // Light left tail of order exp(-|x|^3 / 6).
        let v = stable_density_p1(-10.0).unwrap();
        assert!(v > 0.0 && v < 1e-70);
    }

    #[test]
    fn p1_cdf_median_and_mass() {
        assert!((stable_cdf_p1(0.0).unwrap() - 2.0 / 3.0).abs() < 1e-10);
        let inner = crate::quadrature::adaptive(|x| stable_density_p1(x).unwrap(), -50.0, 50.0, 1e-9).unwrap();
        let lo = stable_cdf_p1(-50.0).unwrap();
        let hi = stable_cdf_p1(50.0).unwrap();
        assert!((inner - (hi - lo)).abs() < 1e-7);
        assert!((inner + (1.0 - hi) + lo - 1.0).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn digamma_recurrence(x in 0.05f64..50.0) {
            let lhs = digamma(x + 1.0).unwrap();
            let rhs = digamma(x).unwrap() + 1.0 / x;
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn borel_series_normalized(theta in 0.05f64..0.9, r in 1u64..6) {
            let s: f64 = borel_pmf_series(BorelParams::new(theta, r).unwrap()).iter().sum();
            prop_assert!((1.0 - 1e-8..=1.0 + 1e-12).contains(&s));
        }

        #[test]
        fn tree_function_inverse(theta in 1e-3f64..1.0) {
            let x = theta * (-theta).exp();
            let back = theta_from_x(x).unwrap();
            prop_assert!((back * (-back).exp() - x).abs() < 1e-15);
            prop_assert!(back <= 1.0);
        }
    }
}
