//! Closed-form linear algebra for the d×d (d ≤ 3) matrices that appear per element.

use nalgebra::DMatrix;

pub type Mat = DMatrix<f64>;

/// Eigenvalues of a symmetric matrix of order 1, 2 or 3, in ascending order.
///
/// Only the upper triangle is read.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    match a.nrows() {
        1 => vec![a[(0, 0)]],
        2 => {
            let (p, q, r) = (a[(0, 0)], a[(0, 1)], a[(1, 1)]);
            let mean = 0.5 * (p + r);
            let rad = (0.5 * (p - r)).hypot(q);
            let hi = mean + rad;
            // smaller root from the determinant avoids cancellation
            let det = p * r - q * q;
            let lo = if hi > 0.0 && det > 0.0 { det / hi } else { mean - rad };
            vec![lo, hi]
        }
        3 => sym3_eigenvalues(a),
        n => {
            let mut ev: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
            debug_assert!(n > 3);
            ev.sort_by(f64::total_cmp);
            ev
        }
    }
}

fn sym3_eigenvalues(a: &Mat) -> Vec<f64> {
    let (a00, a01, a02) = (a[(0, 0)], a[(0, 1)], a[(0, 2)]);
    let (a11, a12, a22) = (a[(1, 1)], a[(1, 2)], a[(2, 2)]);
    let p1 = a01 * a01 + a02 * a02 + a12 * a12;
    let mut ev = if p1 == 0.0 {
        vec![a00, a11, a22]
    } else {
        let q = (a00 + a11 + a22) / 3.0;
        let p2 = (a00 - q).powi(2) + (a11 - q).powi(2) + (a22 - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let (b00, b11, b22) = ((a00 - q) / p, (a11 - q) / p, (a22 - q) / p);
        let (b01, b02, b12) = (a01 / p, a02 / p, a12 / p);
        let det_b = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02)
            + b02 * (b01 * b12 - b11 * b02);
        let r = (0.5 * det_b).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        vec![e1, 3.0 * q - e1 - e3, e3]
    };
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn lambda_min(a: &Mat) -> f64 {
    sym_eigenvalues(a)[0]
}

pub fn lambda_max(a: &Mat) -> f64 {
    *sym_eigenvalues(a).last().unwrap()
}

/// Spectral norm of an arbitrary small square matrix.
pub fn spectral_norm(a: &Mat) -> f64 {
    let ata = a.transpose() * a;
    lambda_max(&ata).max(0.0).sqrt()
}

/// Symmetric part `(A + Aᵀ)/2`; removes rounding asymmetry of congruence products.
pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_eigs(a: &Mat) -> Vec<f64> {
        let mut v: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn diagonal_cases() {
        let a = Mat::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        assert_eq!(sym_eigenvalues(&a), vec![1.0, 2.0, 3.0]);
        let b = Mat::from_row_slice(2, 2, &[1000.0, 0.0, 0.0, 1.0]);
        assert_eq!(sym_eigenvalues(&b), vec![1.0, 1000.0]);
    }

    proptest! {
        #[test]
        fn closed_form_matches_dense(v in prop::collection::vec(-10.0f64..10.0, 9), d in 2usize..=3) {
            let mut a = Mat::zeros(d, d);
            for i in 0..d {
                for j in i..d {
                    a[(i, j)] = v[i * 3 + j];
                    a[(j, i)] = v[i * 3 + j];
                }
            }
            let cf = sym_eigenvalues(&a);
            let de = dense_eigs(&a);
            let scale = de.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for (x, y) in cf.iter().zip(&de) {
                prop_assert!((x - y).abs() <= 1e-9 * scale, "{:?} vs {:?}", cf, de);
            }
        }
    }
}
