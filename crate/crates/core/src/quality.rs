//! Anisotropic element quality in a metric: equidistribution, alignment and
//! the combined measure.

use std::fmt::Write as _;

use serde::Serialize;

use crate::field::{element_averages, TensorField};
use crate::mesh::{reference_edge, SimplicialMesh};
use crate::small::{sym_eigenvalues, Mat};
use crate::sparse::SparseSymMatrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElementQuality {
    /// `|K|_M = |K| det(M_K)^{1/2}`
    pub vol_metric: f64,
    /// `h_{K,M} = |K|_M^{1/d}`
    pub h_elem: f64,
    pub q_eq: f64,
    pub q_ali: f64,
    pub q_m: f64,
    /// Inscribed diameter in the metric, available for `d ≤ 2`.
    pub rho_metric: Option<f64>,
    /// `‖(F_K′)⁻¹ M_K⁻¹ (F_K′)⁻ᵀ‖₂`
    pub norm_fdf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeshQualitySummary {
    /// `h_M`
    pub h_global: f64,
    /// `|Ω|_{M,h}`
    pub vol_domain: f64,
    pub elements: Vec<ElementQuality>,
    pub max_q_m: f64,
    pub max_q_eq: f64,
    pub max_q_ali: f64,
}

/// `|K| √det(M_K)`.
pub fn metric_volume(mesh: &SimplicialMesh, k: usize, mk: &Mat) -> f64 {
    mesh.volume(k) * mk.determinant().sqrt()
}

/// `h_M = (|Ω|_{M,h} / N)^{1/d}` from element metric averages.
pub fn global_h(mesh: &SimplicialMesh, mks: &[Mat]) -> f64 {
    let total: f64 = (0..mesh.n_elements()).map(|k| metric_volume(mesh, k, &mks[k])).sum();
    (total / mesh.n_elements() as f64).powf(1.0 / mesh.dim() as f64)
}

/// `1/λ_min(F_K′ᵀ M_K F_K′)`, i.e. the spectral norm of `(F_K′)⁻¹M_K⁻¹(F_K′)⁻ᵀ`.
pub fn norm_fdf(mesh: &SimplicialMesh, k: usize, mk: &Mat) -> Result<f64> {
    let f = mesh.affine_map(k)?.jacobian;
    let g = f.transpose() * mk * f;
    Ok(1.0 / sym_eigenvalues(&g)[0])
}

/// Diameter of the largest ball inscribed in element `k`, measured with the
/// constant metric `mk`.
pub fn inscribed_diameter_metric(mesh: &SimplicialMesh, k: usize, mk: &Mat) -> Result<f64> {
    match mesh.dim() {
        1 => Ok(metric_volume(mesh, k, mk)),
        2 => {
            let s = mesh.simplex(k);
            let mut perimeter = 0.0;
            for a in 0..3 {
                let (p, q) = (mesh.node(s[a]), mesh.node(s[(a + 1) % 3]));
                let e = nalgebra::DVector::from_vec(vec![q[0] - p[0], q[1] - p[1]]);
                perimeter += (e.transpose() * mk * &e)[(0, 0)].sqrt();
            }
            Ok(4.0 * metric_volume(mesh, k, mk) / perimeter)
        }
        d => Err(Error::Unsupported(format!("inscribed diameter in {d}D"))),
    }
}

pub fn element_quality(mesh: &SimplicialMesh, k: usize, mk: &Mat, h_global: f64) -> Result<ElementQuality> {
    let d = mesh.dim() as f64;
    let vol_metric = metric_volume(mesh, k, mk);
    let h_elem = vol_metric.powf(1.0 / d);
    let norm = norm_fdf(mesh, k, mk)?;
    let q_ali = if mesh.dim() == 1 { 1.0 } else { h_elem * h_elem * norm };
    let q_m = h_global * h_global * norm;
    let rho_metric = if mesh.dim() <= 2 { Some(inscribed_diameter_metric(mesh, k, mk)?) } else { None };
    Ok(ElementQuality { vol_metric, h_elem, q_eq: (h_global / h_elem).powf(d), q_ali, q_m, rho_metric, norm_fdf: norm })
}

pub fn mesh_quality_summary_with(mesh: &SimplicialMesh, mks: &[Mat]) -> Result<MeshQualitySummary> {
    let n = mesh.n_elements();
    if mks.len() != n {
        return Err(Error::DimensionMismatch("one metric tensor per element expected".into()));
    }
    let vol_domain: f64 = (0..n).map(|k| metric_volume(mesh, k, &mks[k])).sum();
    let h_global = (vol_domain / n as f64).powf(1.0 / mesh.dim() as f64);
    let elements: Vec<ElementQuality> =
        (0..n).map(|k| element_quality(mesh, k, &mks[k], h_global)).collect::<Result<_>>()?;
    let max = |f: fn(&ElementQuality) -> f64| elements.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let summary = MeshQualitySummary {
        h_global,
        vol_domain,
        max_q_m: max(|e| e.q_m),
        max_q_eq: max(|e| e.q_eq),
        max_q_ali: max(|e| e.q_ali),
        elements,
    };
    let mean_inv = summary.elements.iter().map(|e| 1.0 / e.q_eq).sum::<f64>() / n as f64;
    if (mean_inv - 1.0).abs() > 1e-10 {
        return Err(Error::IdentityCheck(format!("mean of 1/q_eq is {mean_inv}")));
    }
    if summary.max_q_eq < 1.0 - 1e-12 {
        return Err(Error::IdentityCheck(format!("max q_eq is {} < 1", summary.max_q_eq)));
    }
    Ok(summary)
}

pub fn mesh_quality_summary(mesh: &SimplicialMesh, metric: &TensorField, quad_order: usize) -> Result<MeshQualitySummary> {
    let mks = element_averages(metric, mesh, quad_order)?;
    mesh_quality_summary_with(mesh, &mks)
}

impl MeshQualitySummary {
    /// CSV with columns `element,volume,metric_volume,q_eq,q_ali,q_m`.
    pub fn to_csv(&self, mesh: &SimplicialMesh) -> String {
        let mut s = String::from("element,volume,metric_volume,q_eq,q_ali,q_m\n");
        for (k, e) in self.elements.iter().enumerate() {
            let _ = writeln!(s, "{k},{:e},{:e},{:e},{:e},{:e}", mesh.volume(k), e.vol_metric, e.q_eq, e.q_ali, e.q_m);
        }
        s
    }
}

/// Upper bound `ĥ² (h_{K,M}/ρ_{K,M})²` on the alignment measure.
pub fn alignment_bound(dim: usize, q: &ElementQuality) -> Option<f64> {
    let h = reference_edge(dim);
    q.rho_metric.map(|r| h * h * (q.h_elem / r).powi(2))
}

/// True when `A` is an M-matrix with nonnegative row sums (up to `1e-12 ‖A‖_max`):
/// every off-diagonal entry is nonpositive and every row sum nonnegative.
pub fn is_nonobtuse(a: &SparseSymMatrix) -> bool {
    let tol = 1e-12 * a.max_abs();
    a.max_offdiag() <= tol && a.row_sums().iter().all(|&s| s >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_stiffness, DofMap};
    use crate::mesh::{gen_equidistributed_1d, gen_perturbed_grid_2d, gen_structured_2d, gen_uniform_1d, reference_vertices, Diagonal, Grading, NodeMarker};
    use proptest::prelude::*;

    fn single(coords: Vec<f64>) -> SimplicialMesh {
        SimplicialMesh::new(
            2,
            coords,
            vec![0, 1, 2],
            vec![NodeMarker::Interior, NodeMarker::Dirichlet, NodeMarker::Dirichlet],
            None,
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_alignment_is_one() {
        let m = gen_equidistributed_1d(16, |x| 1.0 + x * x).unwrap();
        let s = mesh_quality_summary(&m, &TensorField::Per1d { eps: 0.25 }, 4).unwrap();
        assert!(s.elements.iter().all(|e| e.q_ali == 1.0));
        // q_m = q_ali q_eq^{2/d} also in 1D
        assert!(s.elements.iter().all(|e| (e.q_m / (e.q_eq * e.q_eq) - 1.0).abs() < 1e-10));
    }

    #[test]
    fn reference_triangle_is_uniform() {
        let v = reference_vertices(2);
        let m = single(v.iter().flatten().copied().collect());
        let s = mesh_quality_summary(&m, &TensorField::identity(2), 4).unwrap();
        let e = &s.elements[0];
        for q in [e.q_eq, e.q_ali, e.q_m] {
            assert!((q - 1.0).abs() < 1e-13);
        }
        let l = reference_edge(2);
        assert!((e.rho_metric.unwrap() - l / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn right_triangle_norm_against_svd() {
        let m = single(vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let f = m.affine_map(0).unwrap().jacobian;
        let sv = f.clone().svd(false, false).singular_values;
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let n = norm_fdf(&m, 0, &Mat::identity(2, 2)).unwrap();
        assert!((n - 1.0 / (smin * smin)).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_inscribed_diameter() {
        let m = gen_uniform_1d(4).unwrap();
        let r = inscribed_diameter_metric(&m, 0, &Mat::from_element(1, 1, 16.0)).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_1d_summary() {
        let m = gen_uniform_1d(8).unwrap();
        let s = mesh_quality_summary(&m, &TensorField::identity(1), 4).unwrap();
        assert!((s.h_global - 1.0 / 8.0).abs() < 1e-15);
        assert!(s.elements.iter().all(|e| (e.q_m - 1.0).abs() < 1e-12));
    }

    #[test]
    fn anisotropic_grid_alignment() {
        let m = gen_structured_2d(4, 256, Grading::Uniform, Diagonal::Right).unwrap();
        let s = mesh_quality_summary(&m, &TensorField::identity(2), 4).unwrap();
        // direct formula: λ_min of FᵀF for the first element
        let f = m.affine_map(0).unwrap().jacobian;
        let g = f.transpose() * &f;
        let (a, b, c) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
        let lmin = 0.5 * (a + c) - (0.25 * (a - c).powi(2) + b * b).sqrt();
        let direct = m.volume(0) / lmin;
        assert!((s.elements[0].q_ali / direct - 1.0).abs() < 1e-8);
        assert!(s.max_q_ali > 20.0);
    }

    #[test]
    fn equidistributed_mesh_has_unit_q_eq() {
        let eps = 1.0 / 16.0;
        let sqrt_m = move |x: f64| 1.0 / crate::field::per1d_value(eps, x).sqrt();
        let m = gen_equidistributed_1d(64, sqrt_m).unwrap();
        // In 1D the mesh equalizes ∫√M per element, so the element metric is
        // taken as the squared mean of √M (independent 30-point Gauss rule).
        let gl = crate::quadrature::gauss_legendre_unit(30);
        let mks: Vec<Mat> = (0..m.n_elements())
            .map(|k| {
                let (a, b) = (m.node(k)[0], m.node(k + 1)[0]);
                let mean: f64 = gl.iter().map(|(t, w)| w * sqrt_m(a + (b - a) * t)).sum();
                Mat::from_element(1, 1, mean * mean)
            })
            .collect();
        let s = mesh_quality_summary_with(&m, &mks).unwrap();
        assert!(s.elements.iter().all(|e| (e.q_eq - 1.0).abs() < 1e-6));
    }

    #[test]
    fn nonobtuse_detection() {
        let m = gen_uniform_1d(7).unwrap();
        let dofs = DofMap::new(&m).unwrap();
        assert!(is_nonobtuse(&assemble_stiffness(&m, &dofs, &TensorField::Per1d { eps: 0.1 }, 4).unwrap()));
        let g = gen_structured_2d(32, 32, Grading::Uniform, Diagonal::Right).unwrap();
        let dofs = DofMap::new(&g).unwrap();
        assert!(is_nonobtuse(&assemble_stiffness(&g, &dofs, &TensorField::identity(2), 4).unwrap()));
        // two triangles sharing an edge, both with a 120° angle opposite it
        let s3 = 3f64.sqrt();
        let m = SimplicialMesh::new(
            2,
            vec![-s3 / 2.0, 0.0, s3 / 2.0, 0.0, 0.0, 0.5, 0.0, -0.5, 0.0, 3.0],
            vec![0, 1, 2, 0, 3, 1, 0, 4, 2, 1, 2, 4],
            vec![NodeMarker::Interior, NodeMarker::Interior, NodeMarker::Dirichlet, NodeMarker::Dirichlet, NodeMarker::Dirichlet],
            None,
        )
        .unwrap();
        let dofs = DofMap::new(&m).unwrap();
        let a = assemble_stiffness(&m, &dofs, &TensorField::identity(2), 4).unwrap();
        assert!(a.get(0, 1) > 0.0);
        assert!(!is_nonobtuse(&a));
    }

    #[test]
    fn alignment_scale_invariance() {
        let m = gen_perturbed_grid_2d(6, 5, 0.3, 9).unwrap();
        let base = mesh_quality_summary(&m, &TensorField::identity(2), 4).unwrap();
        for c in [1e-6, 1.0, 1e6] {
            let s = mesh_quality_summary(&m, &TensorField::isotropic(2, c), 4).unwrap();
            for (a, b) in s.elements.iter().zip(&base.elements) {
                assert!((a.q_ali / b.q_ali - 1.0).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn inscribed_bound_random_triangles(
            pts in proptest::collection::vec(-1.0f64..1.0, 6),
            l1 in 0.01f64..100.0, l2 in 0.01f64..100.0, th in 0.0f64..3.2,
        ) {
            let m = SimplicialMesh::new(
                2, pts, vec![0, 1, 2],
                vec![NodeMarker::Interior, NodeMarker::Dirichlet, NodeMarker::Dirichlet], None,
            );
            prop_assume!(m.is_ok());
            let m = m.unwrap();
            let (s, c) = th.sin_cos();
            let r = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
            let mk = &r * Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![l1, l2])) * r.transpose();
            let h = metric_volume(&m, 0, &mk).sqrt();
            let q = element_quality(&m, 0, &mk, h).unwrap();
            prop_assert!(q.q_ali >= 1.0 - 1e-10);
            prop_assert!((q.q_m - q.q_ali * q.q_eq).abs() <= 1e-10 * q.q_m);
            prop_assert!(q.q_ali <= alignment_bound(2, &q).unwrap() * (1.0 + 1e-10));
        }
    }
}
