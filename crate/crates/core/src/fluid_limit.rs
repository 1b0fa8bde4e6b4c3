//! Fluid-limit functions of the frozen process: the gel fraction `g_p` as the
//! inverse of `f_p`, the derived densities, and limit-law constants.

use serde::{Deserialize, Serialize};

use crate::error::{domain, no_convergence, Result};
use crate::quadrature::{adaptive, tanh_sinh};
use crate::special_functions::{digamma, ln_factorial, EULER_GAMMA};

/// Largest `s` at which `f_p` is inverted; larger times saturate here.
pub const S_CAP: f64 = 1.0 - 1e-8;

const SERIES_SWITCH: f64 = 0.5;
const TABLE_NODES: usize = 256;

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(domain("freezing probability", format!("p = {p}, need 0 < p <= 1")))
    }
}

fn check_s(s: f64) -> Result<()> {
    if (0.0..1.0).contains(&s) {
        Ok(())
    } else {
        Err(domain("f_p argument", format!("s = {s}, need 0 <= s < 1")))
    }
}

/// `Phi(s) = sum_{n>=0} s^n / (n + a)` with `a = 1/p`, for `s > 1/2`, via
/// `Phi(s) = (1/s) int_{ln(1-s)}^0 ((1 - e^v)/s)^{a-1} dv`.
fn phi_integral(a: f64, s: f64) -> Result<f64> {
    let lower = (-s).ln_1p();
    let ex = a - 1.0;
    let v = tanh_sinh(
        |v: f64| {
            let w = -v.exp_m1() / s;
            if ex == 0.0 {
                1.0
            } else {
                w.powf(ex)
            }
        },
        lower,
        0.0,
        1e-14,
    )?;
    Ok(v / s)
}

/// Value and derivative of `f_p` at `s`.
pub fn f_p_with_derivative(p: f64, s: f64) -> Result<(f64, f64)> {
    check_p(p)?;
    check_s(s)?;
    if s <= SERIES_SWITCH {
        let (mut f, mut df) = (0.0, 0.0);
        let mut pw = 1.0;
        let mut n = 0u32;
        loop {
            let nf = n as f64;
            let term = pw / (1.0 + p * nf);
            f += term;
            if n > 0 {
                df += nf * pw / (s * (1.0 + p * nf));
            }
            if term < 1e-18 * f || n > 200 {
                break;
            }
            pw *= s;
            n += 1;
        }
        if s == 0.0 {
            df = 1.0 / (1.0 + p);
        }
        return Ok((0.5 * f, 0.5 * df));
    }
    let a = 1.0 / p;
    let phi = phi_integral(a, s)?;
    let f = phi / (2.0 * p);
    let df = (1.0 / (1.0 - s) - a * phi) / (2.0 * p * s);
    Ok((f, df))
}

/// `f_p(s) = (1/2) sum_{n>=0} s^n / (1 + p n)`.
pub fn f_p(p: f64, s: f64) -> Result<f64> {
    f_p_with_derivative(p, s).map(|v| v.0)
}

pub fn f_p_derivative(p: f64, s: f64) -> Result<f64> {
    f_p_with_derivative(p, s).map(|v| v.1)
}

/// A gel-fraction value with a flag set when the argument lies past the
/// inversion cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GelValue {
    pub value: f64,
    pub saturated: bool,
}

/// The gel fraction `g_p`, inverse of `f_p` on `t > 1/2` and zero below.
/// Holds a table of `(s, f_p(s))` pairs used to bracket the inversion.
#[derive(Debug, Clone)]
pub struct GelCurve {
    p: f64,
    s_nodes: Vec<f64>,
    t_nodes: Vec<f64>,
}

impl GelCurve {
    pub fn new(p: f64) -> Result<Self> {
        check_p(p)?;
        let mut s_nodes = Vec::with_capacity(TABLE_NODES);
        let mut t_nodes = Vec::with_capacity(TABLE_NODES);
        for j in 0..TABLE_NODES {
            let u = std::f64::consts::PI * j as f64 / (TABLE_NODES - 1) as f64;
            let s = S_CAP * 0.5 * (1.0 - u.cos());
            s_nodes.push(s);
            t_nodes.push(f_p(p, s)?);
        }
        Ok(Self { p, s_nodes, t_nodes })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Time past which `g_p` saturates at [`S_CAP`].
    pub fn saturation_time(&self) -> f64 {
        *self.t_nodes.last().unwrap()
    }

    pub fn g_checked(&self, t: f64) -> Result<GelValue> {
        if t.is_nan() {
            return Err(domain("gel fraction", "t is NaN"));
        }
        if t <= 0.5 {
            return Ok(GelValue {
                value: 0.0,
                saturated: false,
            });
        }
        if t >= self.saturation_time() {
            return Ok(GelValue {
                value: S_CAP,
                saturated: true,
            });
        }
        let j = self.t_nodes.partition_point(|&x| x <= t);
        let (mut lo, mut hi) = (self.s_nodes[j - 1], self.s_nodes[j]);
        let (t_lo, t_hi) = (self.t_nodes[j - 1], self.t_nodes[j]);
        let mut s = lo + (t - t_lo) / (t_hi - t_lo) * (hi - lo);
        for _ in 0..100 {
            let (f, df) = f_p_with_derivative(self.p, s)?;
            let r = f - t;
            if r.abs() <= 1e-15 * t {
                break;
            }
            if r < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let newton = s - r / df;
            if (newton - s).abs() <= 4.0 * f64::EPSILON * s {
                break;
            }
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let step = (next - s).abs();
            s = next;
            if step <= 1e-15 * s {
                break;
            }
        }
        if let Ok((f, df)) = f_p_with_derivative(self.p, s) {
            if (f - t).abs() <= 1e-12 * t + 8.0 * f64::EPSILON * s * df {
                return Ok(GelValue {
                    value: s,
                    saturated: false,
                });
            }
        }
        Err(no_convergence("gel fraction inversion", format!("t = {t}")))
    }

    pub fn g(&self, t: f64) -> Result<f64> {
        self.g_checked(t).map(|v| v.value)
    }

    /// Discarded-edge density `d_p = t - g - t (1 - g)^2`.
    pub fn d(&self, t: f64) -> Result<f64> {
        let g = self.g(t)?;
        Ok(t - g - t * (1.0 - g) * (1.0 - g))
    }

    /// Forest vertex density `1 - g`.
    pub fn v(&self, t: f64) -> Result<f64> {
        Ok(1.0 - self.g(t)?)
    }

    /// Forest edge density `t (1 - g)^2`.
    pub fn e(&self, t: f64) -> Result<f64> {
        let w = 1.0 - self.g(t)?;
        Ok(t * w * w)
    }

    /// Edge-to-vertex ratio of the forest part, `t (1 - g)`.
    pub fn r(&self, t: f64) -> Result<f64> {
        Ok(t * (1.0 - self.g(t)?))
    }

    /// Density of trees of size `k`.
    pub fn t_pk(&self, k: u64, t: f64) -> Result<f64> {
        if k == 0 {
            return Err(domain("tree density", "k must be at least 1"));
        }
        if t < 0.0 {
            return Err(domain("tree density", format!("t = {t}")));
        }
        let w = 1.0 - self.g(t)?;
        Ok(tree_density(k, t, w))
    }
}

/// `k^{k-2}/k! (2t)^{k-1} w^k e^{-2 k t w}` evaluated in log space.
pub fn tree_density(k: u64, t: f64, w: f64) -> f64 {
    let kf = k as f64;
    if k == 1 {
        return w * (-2.0 * t * w).exp();
    }
    if t == 0.0 || w == 0.0 {
        return 0.0;
    }
    let ln = (kf - 2.0) * kf.ln() - ln_factorial(k) + (kf - 1.0) * (2.0 * t).ln() + kf * w.ln() - 2.0 * kf * t * w;
    ln.exp()
}

/// Absolute residuals of the three limit ODE systems at one time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeResiduals {
    /// `g' = 2 p g (1 - g) / (1 - 2 t (1 - g))`
    pub gel: f64,
    /// `d' = 2 (1 - p) g (1 - g) + g^2` together with
    /// `g' = 2 p g (1 - g)^2 / (1 - 2t + g + 2d)`
    pub gel_discard: f64,
    /// Largest residual of the tree-density system for `k <= 10`.
    pub trees: f64,
}

pub const RESIDUAL_STEP: f64 = 1e-5;

pub fn ode_residuals(curve: &GelCurve, t: f64) -> Result<OdeResiduals> {
    if !(t > 0.5 + 1e-3) || t + RESIDUAL_STEP >= curve.saturation_time() {
        return Err(domain(
            "ODE residuals",
            format!("t = {t}, need 1/2 + 1e-3 < t below saturation"),
        ));
    }
    let p = curve.p();
    let h = RESIDUAL_STEP;
    let deriv = |f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> { Ok((f(t + h)? - f(t - h)?) / (2.0 * h)) };
    let g = curve.g(t)?;
    let d = curve.d(t)?;
    let dg = deriv(&|x| curve.g(x))?;
    let dd = deriv(&|x| curve.d(x))?;
    let gel = (dg - 2.0 * p * g * (1.0 - g) / (1.0 - 2.0 * t * (1.0 - g))).abs();
    let alt = (dg - 2.0 * p * g * (1.0 - g).powi(2) / (1.0 - 2.0 * t + g + 2.0 * d)).abs();
    let disc = (dd - (2.0 * (1.0 - p) * g * (1.0 - g) + g * g)).abs();
    let kmax = 10u64;
    let tk: Vec<f64> = (1..=kmax).map(|k| curve.t_pk(k, t)).collect::<Result<_>>()?;
    let mut trees: f64 = 0.0;
    for k in 1..=kmax {
        let dtk = deriv(&|x| curve.t_pk(k, x))?;
        let mut gain = 0.0;
        for i in 1..k {
            let j = k - i;
            gain += (i * j) as f64 * tk[i as usize - 1] * tk[j as usize - 1];
        }
        let loss = 2.0 * k as f64 * tk[k as usize - 1] * (1.0 - (1.0 - p) * g);
        trees = trees.max((dtk - (gain - loss)).abs());
    }
    Ok(OdeResiduals {
        gel,
        gel_discard: alt.max(disc),
        trees,
    })
}

/// Both sides of `(1 - p) int_0^inf (1 - g_p) dt = (psi(1/p) + gamma) / 2`.
pub fn integral_identity_check(curve: &GelCurve) -> Result<(f64, f64)> {
    let p = curve.p();
    if p == 1.0 {
        return Ok((0.0, 0.0));
    }
    let rhs = 0.5 * (digamma(1.0 / p)? + EULER_GAMMA);
    let t_end = curve.saturation_time();
    let mut err = None;
    let body = adaptive(
        |t| match curve.g(t) {
            Ok(g) => 1.0 - g,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        0.5,
        t_end,
        1e-11,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    // 1 - g decays like e^{-2pt} past the cap.
    let tail = (1.0 - S_CAP) / (2.0 * p);
    Ok(((1.0 - p) * (0.5 + body + tail), rhs))
}

/// `t^{(k)}_{p,n} = ln n/(kp) + (k-1)/(kp) ln(ln n/(kp))`, in Poissonized
/// time units; the discrete step is about `n t / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTime {
    pub p: f64,
    pub k: u64,
    pub n: u64,
    pub value: f64,
}

pub fn threshold_time(p: f64, k: u64, n: u64) -> Result<ThresholdTime> {
    check_p(p)?;
    if k == 0 || n < 3 {
        return Err(domain("threshold time", format!("k = {k}, n = {n}")));
    }
    let kp = k as f64 * p;
    let base = (n as f64).ln() / kp;
    let value = base + (k as f64 - 1.0) / kp * base.ln();
    Ok(ThresholdTime { p, k, n, value })
}

impl ThresholdTime {
    /// Discrete step corresponding to `t + c`.
    pub fn step(&self, c: f64) -> u64 {
        (self.n as f64 * (self.value + c) / 2.0).floor().max(0.0) as u64
    }
}

/// Location and scale of the limiting law of `A^{(k+)}/n - t^{(k)}/2`,
/// which is `location + scale * Gumbel`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelShift {
    pub location: f64,
    pub scale: f64,
}

pub fn gumbel_shift(p: f64, k: u64) -> Result<GumbelShift> {
    check_p(p)?;
    if k == 0 {
        return Err(domain("Gumbel shift", "k must be at least 1"));
    }
    let kf = k as f64;
    let psi = digamma(1.0 / p)? + EULER_GAMMA;
    let ln_c = (kf - 2.0) * kf.ln() - ln_factorial(k);
    Ok(GumbelShift {
        location: -psi / (2.0 * p) + ln_c / (2.0 * kf * p),
        scale: 1.0 / (2.0 * kf * p),
    })
}

/// `lim #T^{(1)}(nt) / ln n = 1/(2r - 1 - ln 2r)` with `r = t (1 - g_p(t))`.
pub fn largest_tree_constant(curve: &GelCurve, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(domain("largest-tree constant", format!("t = {t}")));
    }
    let r2 = 2.0 * curve.r(t)?;
    let den = r2 - 1.0 - r2.ln();
    if (r2 - 1.0).abs() < 1e-9 || den <= 0.0 {
        return Err(domain(
            "largest-tree constant",
            format!("degenerate at t = {t} (2r = {r2})"),
        ));
    }
    Ok(1.0 / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f_series(p: f64, s: f64) -> f64 {
        let mut acc = 0.0;
        let mut pw = 1.0;
        for n in 0..2_000_000u64 {
            acc += pw / (1.0 + p * n as f64);
            pw *= s;
            if pw < 1e-19 {
                break;
            }
        }
        0.5 * acc
    }

    fn er_fixed_point(t: f64) -> f64 {
        let mut g = 0.9;
        for _ in 0..100_000 {
            let next = 1.0 - (-2.0 * t * g).exp();
            if (next - g).abs() < 1e-15 {
                return next;
            }
            g = next;
        }
        g
    }

    #[test]
    fn closed_forms() {
        for s in [0.1f64, 0.5, 0.7, 0.99, 0.999_999] {
            let f1 = -(-s).ln_1p() / (2.0 * s);
            assert!((f_p(1.0, s).unwrap() / f1 - 1.0).abs() < 1e-13, "s = {s}");
            let fh = -((-s).ln_1p() + s) / (s * s);
            assert!((f_p(0.5, s).unwrap() / fh - 1.0).abs() < 1e-12, "s = {s}");
        }
        assert_eq!(f_p(0.3, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn integral_branch_matches_series() {
        for p in [0.1, 0.3, 0.75] {
            for s in [0.51, 0.9, 0.999] {
                let v = f_p(p, s).unwrap();
                assert!((v / f_series(p, s) - 1.0).abs() < 1e-12, "p = {p}, s = {s}");
            }
        }
    }

    #[test]
    fn derivative_matches_difference() {
        for p in [0.2, 0.6, 1.0] {
            for s in [0.0f64, 0.3, 0.5, 0.6, 0.95] {
                let h = 1e-6;
                let lo = (s - h).max(0.0);
                let num = (f_p(p, s + h).unwrap() - f_p(p, lo).unwrap()) / (s + h - lo);
                let d = f_p_derivative(p, s).unwrap();
                assert!((num - d).abs() < 1e-6 * d.max(1.0), "p = {p}, s = {s}");
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(f_p(0.5, 1.0).is_err());
        assert!(f_p(0.0, 0.5).is_err());
        assert!(f_p(1.5, 0.5).is_err());
        assert!(GelCurve::new(-0.1).is_err());
    }

    #[test]
    fn erdos_renyi_case() {
        let curve = GelCurve::new(1.0).unwrap();
        let g = curve.g(1.0).unwrap();
        assert!((g - er_fixed_point(1.0)).abs() < 1e-8);
        assert!((g - 0.7968).abs() < 1e-4);
        for t in [0.6, 0.8, 1.5, 3.0, 6.0] {
            let g = curve.g(t).unwrap();
            assert!((g - (1.0 - (-2.0 * t * g).exp())).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn subcritical_and_saturation() {
        let curve = GelCurve::new(0.4).unwrap();
        assert_eq!(curve.g(0.5).unwrap(), 0.0);
        assert_eq!(curve.g(0.2).unwrap(), 0.0);
        assert_eq!(curve.d(0.3).unwrap(), 0.0);
        let far = curve.g_checked(1e4).unwrap();
        assert!(far.saturated);
        assert_eq!(far.value, S_CAP);
        assert!(!curve.g_checked(3.0).unwrap().saturated);
    }

    #[test]
    fn slope_at_criticality() {
        let h = 1e-4;
        for p in [0.2, 0.5, 1.0] {
            let curve = GelCurve::new(p).unwrap();
            let slope = (curve.g(0.5 + h).unwrap() - curve.g(0.5).unwrap()) / h;
            assert!((slope / (2.0 * (1.0 + p)) - 1.0).abs() < 0.01, "p = {p}");
        }
    }

    #[test]
    fn exponential_tail() {
        let curve = GelCurve::new(1.0).unwrap();
        let ratio = (1.0 - curve.g(8.0).unwrap()) * 16f64.exp();
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
        assert!((curve.d(5.0).unwrap() - 4.0).abs() <= 2.0 * (-10f64).exp() * 1.5);
        // For p < 1 the prefactor is exp(-(psi(1/p) + gamma)), read off from
        // f_p(s) = (-ln(1-s) - psi(1/p) - gamma) / (2p) + o(1) as s -> 1.
        for p in [0.3, 0.6] {
            let curve = GelCurve::new(p).unwrap();
            let t = 8.0 / p;
            let c = (-(digamma(1.0 / p).unwrap() + EULER_GAMMA)).exp();
            let ratio = (1.0 - curve.g(t).unwrap()) * (2.0 * p * t).exp() / c;
            assert!((ratio - 1.0).abs() < 0.05, "p = {p}, ratio {ratio}");
        }
    }

    #[test]
    fn residuals_small() {
        for p in [0.3, 0.5, 1.0] {
            let curve = GelCurve::new(p).unwrap();
            let mut t = 0.51;
            while t <= 5.0 {
                let r = ode_residuals(&curve, t).unwrap();
                assert!(
                    r.gel < 1e-5 && r.gel_discard < 1e-5 && r.trees < 1e-5,
                    "p {p} t {t} {r:?}"
                );
                t += 0.07;
            }
        }
        let curve = GelCurve::new(0.5).unwrap();
        assert!(ode_residuals(&curve, 0.5).is_err());
    }

    #[test]
    fn gel_integral_identity() {
        for p in [0.25, 0.5, 0.75] {
            let curve = GelCurve::new(p).unwrap();
            let (lhs, rhs) = integral_identity_check(&curve).unwrap();
            assert!((lhs - rhs).abs() < 1e-5, "p = {p}: {lhs} vs {rhs}");
        }
        let (lhs, rhs) = integral_identity_check(&GelCurve::new(0.25).unwrap()).unwrap();
        assert!((rhs - 11.0 / 12.0).abs() < 1e-12);
        assert!((lhs - 11.0 / 12.0).abs() < 1e-5);
    }

    /// Independent route: substitute t = f_p(s) and integrate in s.
    #[test]
    fn gel_integral_by_substitution() {
        let p = 0.5;
        let body = adaptive(|s| (1.0 - s) * f_p_derivative(p, s).unwrap(), 0.0, S_CAP, 1e-11).unwrap();
        let curve = GelCurve::new(p).unwrap();
        let (lhs, _) = integral_identity_check(&curve).unwrap();
        let via_s = (1.0 - p) * (0.5 + body + (1.0 - S_CAP) / (2.0 * p));
        assert!((lhs - via_s).abs() < 1e-7);
    }

    #[test]
    fn monotone_profiles() {
        for p in [0.2, 0.7] {
            let curve = GelCurve::new(p).unwrap();
            let (mut g0, mut d0) = (0.0, 0.0);
            for i in 0..1000 {
                let t = 0.01 * i as f64;
                let g = curve.g(t).unwrap();
                let d = curve.d(t).unwrap();
                assert!(g >= g0 && (0.0..1.0).contains(&g));
                assert!(d >= d0 - 1e-12 && d >= -1e-12);
                g0 = g;
                d0 = d;
            }
        }
    }

    #[test]
    fn tree_densities() {
        let curve = GelCurve::new(1.0).unwrap();
        assert!((curve.t_pk(1, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(curve.t_pk(2, 0.0).unwrap(), 0.0);
        // Before gelation the tree mass sums to one.
        let t = 0.3;
        let mass: f64 = (1..3000).map(|k| k as f64 * curve.t_pk(k, t).unwrap()).sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn limit_constants() {
        let curve = GelCurve::new(1.0).unwrap();
        assert!((largest_tree_constant(&curve, 0.25).unwrap() - 5.177).abs() < 1e-3);
        assert!(largest_tree_constant(&curve, 0.5).is_err());
        let gs = gumbel_shift(1.0, 1).unwrap();
        assert!(gs.location.abs() < 1e-12 && (gs.scale - 0.5).abs() < 1e-15);
        let th = threshold_time(1.0, 1, 100_000).unwrap();
        assert!((th.value - (100_000f64).ln()).abs() < 1e-12);
        let th2 = threshold_time(0.5, 2, 100_000).unwrap();
        let base = (100_000f64).ln();
        assert!((th2.value - base - 1.0 * base.ln()).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn inversion_roundtrip(p in 0.05f64..=1.0, t in 0.5001f64..12.0) {
            let curve = GelCurve::new(p).unwrap();
            let gv = curve.g_checked(t).unwrap();
            if !gv.saturated {
                let (back, slope) = f_p_with_derivative(p, gv.value).unwrap();
                prop_assert!((back - t).abs() < 1e-11 * t + 8.0 * f64::EPSILON * slope);
            }
        }
    }
}
