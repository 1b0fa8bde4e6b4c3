//! Gauss-Legendre and tanh-sinh rules used by the numerical modules.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{no_convergence, Result};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

/// 20-point Gauss-Legendre estimate of the integral of `f` over [a, b].
pub fn gl20_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> f64 {
    let (x, w) = gl20();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        s += wi * f(mid + half * xi);
    }
    s * half
}

/// Adaptive bisection with 20-point panels. Stops refining a panel once the
/// panel and its two halves agree to within its share of `tol`.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let width = (b - a).abs();
    let mut total = 0.0;
    let mut stack = vec![(a, b, gl20_panel(&mut f, a, b), 0u32)];
    let mut evaluations = 0usize;
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = gl20_panel(&mut f, lo, mid);
        let right = gl20_panel(&mut f, mid, hi);
        evaluations += 40;
        let share = tol * ((hi - lo).abs() / width).max(1e-6);
        if (left + right - whole).abs() <= share || depth >= 48 {
            if depth >= 48 {
                return Err(no_convergence(
                    "adaptive quadrature",
                    format!("panel [{lo}, {hi}] still unresolved"),
                ));
            }
            total += left + right;
        } else {
            if evaluations > 4_000_000 {
                return Err(no_convergence(
                    "adaptive quadrature",
                    format!("evaluation budget exhausted on [{a}, {b}]"),
                ));
            }
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    Ok(total)
}

/// Tanh-sinh quadrature on [a, b]. Abscissae near either endpoint are formed
/// as `a + d` or `b - d` so that integrands singular at an endpoint see an
/// accurate distance to it.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let t_max = 4.0;
    let mut h = 0.5;
    let mut sum = PI / 2.0 * f(mid);
    let add_nodes = |f: &mut F, h: f64, start: usize, stride: usize| -> f64 {
        let mut s = 0.0;
        let mut k = start;
        loop {
            let t = k as f64 * h;
            if t > t_max {
                break;
            }
            let u = PI / 2.0 * t.sinh();
            let cu = u.cosh();
            let w = PI / 2.0 * t.cosh() / (cu * cu);
            let d = (b - a) / (1.0 + (2.0 * u).exp());
            if d <= 0.0 || w < 1e-300 {
                break;
            }
            s += w * (f(a + d) + f(b - d));
            k += stride;
        }
        s
    };
    sum += add_nodes(&mut f, h, 1, 1);
    let mut estimate = sum * h * half;
    for _ in 0..12 {
        h *= 0.5;
        sum += add_nodes(&mut f, h, 1, 2);
        let next = sum * h * half;
        if (next - estimate).abs() <= rel_tol * next.abs() {
            return Ok(next);
        }
        estimate = next;
    }
    Err(no_convergence(
        "tanh-sinh quadrature",
        format!("no agreement on [{a}, {b}], last estimate {estimate}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(20);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m38: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(38)).sum();
        assert!((m38 - 2.0 / 39.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_oscillation() {
        let v = adaptive(|x| (50.0 * x).cos(), 0.0, 3.0, 1e-13).unwrap();
        assert!((v - (150.0f64).sin() / 50.0).abs() < 1e-12);
    }

    #[test]
    fn tanh_sinh_endpoint_singularities() {
        let v = tanh_sinh(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
        let v = tanh_sinh(|x: f64| (-x).powf(1.0 / 3.0), -2.0, 0.0, 1e-13).unwrap();
        assert!((v - 0.75 * 2f64.powf(4.0 / 3.0)).abs() < 1e-12);
    }
}
