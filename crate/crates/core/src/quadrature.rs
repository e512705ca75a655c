//! Quadrature on simplices (barycentric rules) and adaptive 1D integration.

use crate::{Error, Result};

/// A quadrature point in barycentric coordinates with a weight normalized so
/// that all weights of a rule sum to one (integral average over the simplex).
#[derive(Clone, Debug)]
pub struct QuadPoint {
    pub bary: Vec<f64>,
    pub weight: f64,
}

/// Gauss–Legendre nodes and weights on [0, 1] (weights sum to 1).
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Fixed simplex rule of the requested polynomial order for dimension `dim`.
///
/// Supported orders are 1, 2 and 4. In 1D these are Gauss rules with 1, 2 and
/// 3 points, in 2D the centroid, the 3-point interior rule and the 6-point
/// symmetric degree-4 rule; in 3D the centroid, the 4-point rule and a
/// collapsed Gauss product rule.
pub fn simplex_rule(dim: usize, order: usize) -> Result<Vec<QuadPoint>> {
    let qp = |bary: Vec<f64>, weight: f64| QuadPoint { bary, weight };
    let rule = match (dim, order) {
        (1, 1) => vec![qp(vec![0.5, 0.5], 1.0)],
        (1, 2) => {
            let g = 0.5 / 3f64.sqrt();
            vec![qp(vec![0.5 + g, 0.5 - g], 0.5), qp(vec![0.5 - g, 0.5 + g], 0.5)]
        }
        (1, 4) => {
            let g = 0.5 * (0.6f64).sqrt();
            vec![
                qp(vec![0.5 + g, 0.5 - g], 5.0 / 18.0),
                qp(vec![0.5, 0.5], 8.0 / 18.0),
                qp(vec![0.5 - g, 0.5 + g], 5.0 / 18.0),
            ]
        }
        (2, 1) => vec![qp(vec![1.0 / 3.0; 3], 1.0)],
        (2, 2) => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            vec![
                qp(vec![a, b, b], 1.0 / 3.0),
                qp(vec![b, a, b], 1.0 / 3.0),
                qp(vec![b, b, a], 1.0 / 3.0),
            ]
        }
        (2, 4) => {
            let mut r = Vec::with_capacity(6);
            for &(a, w) in &[
                (0.445_948_490_915_965, 0.223_381_589_678_011),
                (0.091_576_213_509_771, 0.109_951_743_655_322),
            ] {
                let b = 1.0 - 2.0 * a;
                r.push(qp(vec![b, a, a], w));
                r.push(qp(vec![a, b, a], w));
                r.push(qp(vec![a, a, b], w));
            }
            normalize(r)
        }
        (3, 1) => vec![qp(vec![0.25; 4], 1.0)],
        (3, 2) => {
            let (a, b) = (0.585_410_196_624_968_5, 0.138_196_601_125_010_5);
            (0..4)
                .map(|k| {
                    let mut bary = vec![b; 4];
                    bary[k] = a;
                    qp(bary, 0.25)
                })
                .collect()
        }
        (3, 4) => collapsed_tet_rule(4),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "no quadrature of order {order} in dimension {dim} (supported: 1, 2, 4)"
            )))
        }
    };
    Ok(rule)
}

fn normalize(mut r: Vec<QuadPoint>) -> Vec<QuadPoint> {
    let s: f64 = r.iter().map(|q| q.weight).sum();
    for q in &mut r {
        q.weight /= s;
    }
    r
}

/// Duffy-collapsed tensor Gauss rule on the reference tetrahedron.
fn collapsed_tet_rule(n: usize) -> Vec<QuadPoint> {
    let g = gauss_legendre_unit(n);
    let mut r = Vec::with_capacity(n * n * n);
    for &(u, wu) in &g {
        for &(v, wv) in &g {
            for &(w, ww) in &g {
                let x = u;
                let y = v * (1.0 - u);
                let z = w * (1.0 - u) * (1.0 - v);
                let jac = (1.0 - u).powi(2) * (1.0 - v);
                r.push(QuadPoint {
                    bary: vec![1.0 - x - y - z, x, y, z],
                    weight: wu * wv * ww * jac,
                });
            }
        }
    }
    normalize(r)
}

/// Adaptive Gauss–Legendre integration of a fallible integrand on `[a, b]`.
///
/// Each panel compares a 10-point rule with the same rule on its two halves
/// and bisects until they agree; `tol` is an absolute tolerance for the whole
/// interval. Gauss nodes avoid the dyadic points where a Simpson rule can be
/// fooled by periodic integrands.
pub fn integrate_adaptive<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let rule = gauss_legendre_unit(10);
    let whole = gauss_panel(&mut f, &rule, a, b)?;
    adaptive_rec(&mut f, &rule, a, b, whole, tol, 40)
}

fn gauss_panel<F>(f: &mut F, rule: &[(f64, f64)], a: f64, b: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut s = 0.0;
    for &(t, w) in rule {
        s += w * f(a + (b - a) * t)?;
    }
    Ok(s * (b - a))
}

fn adaptive_rec<F>(f: &mut F, rule: &[(f64, f64)], a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let m = 0.5 * (a + b);
    let left = gauss_panel(f, rule, a, m)?;
    let right = gauss_panel(f, rule, m, b)?;
    let sum = left + right;
    // below rounding level further bisection cannot help
    if depth == 0 || (sum - whole).abs() <= tol.max(8.0 * f64::EPSILON * sum.abs()) {
        return Ok(sum);
    }
    Ok(adaptive_rec(f, rule, a, m, left, 0.5 * tol, depth - 1)?
        + adaptive_rec(f, rule, m, b, right, 0.5 * tol, depth - 1)?)
}
