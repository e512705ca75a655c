//! Bounds on the largest eigenvalue of `M~⁻¹A` and the resulting time steps.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::assembly::{c_sharp, lumped_all_nodes, DofMap, MassKind, System};
use crate::field::{element_averages, TensorField};
use crate::mesh::{PatchIndex, SimplicialMesh};
use crate::quality::{global_h, is_nonobtuse, norm_fdf};
use crate::small::{lambda_max, lambda_min, spectral_norm, Mat};
use crate::spectral::{lambda_max_exact, lambda_max_lanczos, lambda_max_power, EigEstimate};
use crate::sparse::SparseSymMatrix;
use crate::{Error, Result};

/// Constant of the diagonal-ratio bracket.
///
/// | mesh | full mass | lumped mass |
/// |---|---|---|
/// | general | 2(d+1) | d+1 |
/// | nonobtuse | 4 | 2 |
pub fn c_star(d: usize, lumped: bool, nonobtuse: bool) -> f64 {
    match (lumped, nonobtuse) {
        (false, false) => 2.0 * (d + 1) as f64,
        (true, false) => (d + 1) as f64,
        (false, true) => 4.0,
        (true, true) => 2.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagRatio {
    /// `max_i A_ii / M~_ii`
    pub lower: f64,
    /// `C★ · lower`
    pub upper: f64,
    /// Dof attaining the maximum ratio.
    pub argmax: usize,
    /// `min_i M~_ii / A_ii = 1 / lower`
    pub min_mass_over_stiffness: f64,
}

pub fn diag_ratio_bound(mt: &SparseSymMatrix, a: &SparseSymMatrix, c_star: f64) -> Result<DiagRatio> {
    if mt.n() != a.n() {
        return Err(Error::DimensionMismatch("mass and stiffness sizes differ".into()));
    }
    let (md, ad) = (mt.diag(), a.diag());
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, (m, s)) in md.iter().zip(&ad).enumerate() {
        if !(*m > 0.0 && *s > 0.0) {
            return Err(Error::InvalidArgument(format!("nonpositive diagonal at dof {i}")));
        }
        let r = s / m;
        if r > best.0 {
            best = (r, i);
        }
    }
    Ok(DiagRatio { lower: best.0, upper: c_star * best.0, argmax: best.1, min_mass_over_stiffness: 1.0 / best.0 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometricBound {
    pub value: f64,
    /// Node (mesh numbering) attaining the maximum patch average.
    pub argmax_node: usize,
    /// The same bound through `h_{D⁻¹}⁻² max Σ (|K|/|ω_i|) Q_D(K)`.
    pub quality_form: f64,
}

/// `C★ C_# max_i Σ_{K∈ω_i} (|K|/|ω_i|) ‖(F_K′)⁻¹ D_K (F_K′)⁻ᵀ‖₂` over free nodes.
///
/// The quality form evaluates `Q_D` with the metric `D_K⁻¹` so that both forms
/// agree to rounding; a disagreement beyond `1e-10` is reported as an error.
pub fn geometric_bound(
    mesh: &SimplicialMesh,
    dofs: &DofMap,
    dk: &[Mat],
    patches: &PatchIndex,
    c_star: f64,
) -> Result<GeometricBound> {
    let d = mesh.dim();
    let inv: Vec<Mat> = dk.iter().map(|m| m.clone().try_inverse().expect("SPD tensor")).collect();
    let norms: Vec<f64> = (0..mesh.n_elements()).map(|k| norm_fdf(mesh, k, &inv[k])).collect::<Result<_>>()?;
    let h = global_h(mesh, &inv);
    let q: Vec<f64> = norms.iter().map(|n| h * h * n).collect();
    let mut best = (f64::NEG_INFINITY, 0, 0.0);
    for dof in 0..dofs.len() {
        let i = dofs.node(dof);
        let w = patches.volumes[i];
        let (s_norm, s_q) = patches.elements[i]
            .iter()
            .fold((0.0, 0.0), |(a, b), &k| (a + mesh.volume(k) / w * norms[k], b + mesh.volume(k) / w * q[k]));
        if s_norm > best.0 {
            best = (s_norm, i, s_q);
        }
    }
    let c = c_star * c_sharp(d);
    let value = c * best.0;
    let quality_form = c * best.2 / (h * h);
    if ((value - quality_form) / value).abs() > 1e-10 {
        return Err(Error::IdentityCheck(format!("geometric bound forms differ: {value} vs {quality_form}")));
    }
    Ok(GeometricBound { value, argmax_node: best.1, quality_form })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MUniformBound {
    pub value: f64,
    /// `max_K ‖M_K D_K‖₂`
    pub max_norm_md: f64,
    /// `max_K Q_M(K)`, close to one when the mesh is M-uniform.
    pub max_q_m: f64,
}

/// `C★ C_# h_M⁻² max_i Σ_{K∈ω_i} (|K|/|ω_i|) ‖M_K D_K‖₂` over free nodes.
/// Valid as a bound only for (nearly) M-uniform meshes.
pub fn muniform_bound(
    mesh: &SimplicialMesh,
    dofs: &DofMap,
    mks: &[Mat],
    dk: &[Mat],
    patches: &PatchIndex,
    c_star: f64,
) -> Result<MUniformBound> {
    let h = global_h(mesh, mks);
    let prod: Vec<f64> = mks.iter().zip(dk).map(|(m, d)| spectral_norm(&(m * d))).collect();
    let mut best: f64 = 0.0;
    for dof in 0..dofs.len() {
        let i = dofs.node(dof);
        let w = patches.volumes[i];
        let s: f64 = patches.elements[i].iter().map(|&k| mesh.volume(k) / w * prod[k]).sum();
        best = best.max(s);
    }
    let mut max_q_m: f64 = 0.0;
    for (k, m) in mks.iter().enumerate() {
        max_q_m = max_q_m.max(h * h * norm_fdf(mesh, k, m)?);
    }
    Ok(MUniformBound {
        value: c_star * c_sharp(mesh.dim()) * best / (h * h),
        max_norm_md: prod.iter().copied().fold(0.0, f64::max),
        max_q_m,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometryBracket {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZhuDu {
    pub lower: f64,
    pub upper: f64,
    /// Largest volume ratio between neighbouring elements.
    pub c1: f64,
    pub p_max: usize,
}

/// `Z_K = ((d+1)/d²) Σ_i |V_i|² / |K|²`.
pub fn zhu_du_factor(mesh: &SimplicialMesh, k: usize) -> f64 {
    let d = mesh.dim() as f64;
    let v = mesh.volume(k);
    (d + 1.0) / (d * d) * mesh.face_volumes(k).iter().map(|f| f * f).sum::<f64>() / (v * v)
}

/// Largest volume ratio over pairs of elements sharing a face, or a vertex
/// when `vertex_adjacency` is set.
pub fn neighbour_volume_ratio(mesh: &SimplicialMesh, vertex_adjacency: bool) -> f64 {
    let vol: Vec<f64> = (0..mesh.n_elements()).map(|k| mesh.volume(k)).collect();
    let mut c1: f64 = 1.0;
    let mut pair = |a: usize, b: usize| c1 = c1.max(vol[a] / vol[b]).max(vol[b] / vol[a]);
    if vertex_adjacency {
        let p = mesh.patches();
        for list in &p.elements {
            let (lo, hi) = list.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &k| (l.min(vol[k]), h.max(vol[k])));
            if !list.is_empty() {
                c1 = c1.max(hi / lo);
            }
        }
    } else {
        let mut faces: HashMap<Vec<usize>, usize> = HashMap::new();
        for k in 0..mesh.n_elements() {
            let s = mesh.simplex(k);
            for skip in 0..s.len() {
                let mut f: Vec<usize> = s.iter().enumerate().filter(|&(a, _)| a != skip).map(|(_, &n)| n).collect();
                f.sort_unstable();
                match faces.remove(&f) {
                    Some(other) => pair(other, k),
                    None => {
                        faces.insert(f, k);
                    }
                }
            }
        }
    }
    c1
}

/// Geometric bracket for the full-mass pencil in terms of `Z_K` (`d ≥ 2`):
/// `max_K λ_min(D_K) Z_K / (d(1 + c₁ p_max (d+2))) ≤ λ ≤ (d+2) max_K λ_max(D_K) Z_K`.
pub fn zhu_du_bound(mesh: &SimplicialMesh, dk: &[Mat], patches: &PatchIndex, vertex_adjacency: bool) -> Result<ZhuDu> {
    let d = mesh.dim();
    if d < 2 {
        return Err(Error::Unsupported("Zhu–Du bound needs d >= 2".into()));
    }
    let (mut lo, mut hi): (f64, f64) = (0.0, 0.0);
    for (k, dkk) in dk.iter().enumerate() {
        let z = zhu_du_factor(mesh, k);
        lo = lo.max(lambda_min(dkk) * z);
        hi = hi.max(lambda_max(dkk) * z);
    }
    let c1 = neighbour_volume_ratio(mesh, vertex_adjacency);
    let df = d as f64;
    Ok(ZhuDu {
        lower: lo / (df * (1.0 + c1 * patches.p_max as f64 * (df + 2.0))),
        upper: (df + 2.0) * hi,
        c1,
        p_max: patches.p_max,
    })
}

/// `S_K = (1/d²) Σ_i (|K| / M_lump,i) |V_i|²_{D⁻¹} / |K|²_{D⁻¹}` with lumped
/// masses of all nodes.
pub fn shewchuk_factor(mesh: &SimplicialMesh, k: usize, dk: &Mat, lumped: &[f64]) -> f64 {
    let d = mesh.dim() as f64;
    let inv = dk.clone().try_inverse().expect("SPD tensor");
    let vol = mesh.volume(k);
    let vol_metric = vol / dk.determinant().sqrt();
    let faces = mesh.face_volumes_in_metric(k, &inv);
    let s: f64 = mesh.simplex(k).iter().zip(&faces).map(|(&i, f)| vol / lumped[i] * f * f).sum();
    s / (d * d * vol_metric * vol_metric)
}

/// Geometric bracket for the lumped-mass pencil (`d ≥ 2`):
/// `(1/d) max_K S_K ≤ λ ≤ p_max max_K S_K`.
pub fn shewchuk_bound(mesh: &SimplicialMesh, dk: &[Mat], patches: &PatchIndex) -> Result<GeometryBracket> {
    let d = mesh.dim();
    if d < 2 {
        return Err(Error::Unsupported("Shewchuk bound needs d >= 2".into()));
    }
    let lumped = lumped_all_nodes(mesh);
    let smax = (0..mesh.n_elements()).map(|k| shewchuk_factor(mesh, k, &dk[k], &lumped)).fold(0.0, f64::max);
    Ok(GeometryBracket { lower: smax / d as f64, upper: patches.p_max as f64 * smax })
}

/// `(τ_max/s², τ_h/s²) = (2/λ, (2/C★) min_i M~_ii/A_ii)`.
pub fn tau_values(lambda: f64, min_mass_over_stiffness: f64, c_star: f64) -> (f64, f64) {
    (2.0 / lambda, 2.0 / c_star * min_mass_over_stiffness)
}

/// How `lambda_exact` is obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum EigChoice {
    Exact,
    Lanczos { steps: usize, seed: u64, security: f64 },
    Power { tol: f64 },
}

#[derive(Clone, Debug)]
pub struct AnalyzeOptions {
    pub mass: MassKind,
    pub quad_order: usize,
    pub eig: EigChoice,
    /// Neighbour definition for the Zhu–Du volume ratio.
    pub vertex_adjacency: bool,
    /// Metric for the M-uniform bound; skipped when absent.
    pub metric: Option<TensorField>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { mass: MassKind::Full, quad_order: 4, eig: EigChoice::Exact, vertex_adjacency: false, metric: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub dim: usize,
    pub n_elements: usize,
    pub n_free: usize,
    pub lumped: bool,
    pub nonobtuse: bool,
    pub c_star: f64,
    pub c_sharp: f64,
    pub eig: EigEstimate,
    pub lambda_exact: f64,
    pub lambda_diag_lower: f64,
    pub lambda_diag_upper: f64,
    pub lambda_geo: f64,
    pub lambda_zhudu_lower: Option<f64>,
    pub lambda_zhudu_upper: Option<f64>,
    pub lambda_shewchuk_lower: Option<f64>,
    pub lambda_shewchuk_upper: Option<f64>,
    pub lambda_muniform: Option<f64>,
    pub zhudu_c1: Option<f64>,
    pub p_max: usize,
    pub tau_max_over_s2: f64,
    pub tau_h_over_s2: f64,
    pub tau_geo_over_s2: f64,
    pub tau_zhudu_over_s2: Option<f64>,
    pub tau_shewchuk_over_s2: Option<f64>,
    /// Dof attaining `min_i M~_ii/A_ii`.
    pub argmin_node: usize,
    pub geo_argmax_node: usize,
}

fn opt_ratio(a: f64, b: Option<f64>) -> Option<f64> {
    b.map(|b| a / b)
}

impl StabilityReport {
    pub fn ratio_diag(&self) -> f64 {
        self.tau_max_over_s2 / self.tau_h_over_s2
    }

    pub fn ratio_geo(&self) -> f64 {
        self.tau_max_over_s2 / self.tau_geo_over_s2
    }

    pub fn ratio_zhudu(&self) -> Option<f64> {
        opt_ratio(self.tau_max_over_s2, self.tau_zhudu_over_s2)
    }

    pub fn ratio_shewchuk(&self) -> Option<f64> {
        opt_ratio(self.tau_max_over_s2, self.tau_shewchuk_over_s2)
    }

    /// `lower ≤ λ_exact ≤ upper` up to rounding.
    pub fn bracket_holds(&self) -> bool {
        let tol = 1e-9 * self.lambda_exact;
        self.lambda_diag_lower <= self.lambda_exact + tol && self.lambda_exact <= self.lambda_diag_upper + tol
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str = "N,n_free,mass,method,tau_max_over_s2,tau_h_over_s2,ratio";

    /// One row per bound method in the table layout `N, τ_max/s², τ_h/s², ratio`.
    pub fn to_csv_rows(&self) -> String {
        let mass = if self.lumped { "lumped" } else { "full" };
        let mut s = String::new();
        let mut row = |method: &str, tau_h: Option<f64>| {
            if let Some(t) = tau_h {
                let _ = writeln!(
                    s,
                    "{},{},{mass},{method},{:e},{:e},{:e}",
                    self.n_elements,
                    self.n_free,
                    self.tau_max_over_s2,
                    t,
                    self.tau_max_over_s2 / t
                );
            }
        };
        row("diag", Some(self.tau_h_over_s2));
        row("geometric", Some(self.tau_geo_over_s2));
        if !self.lumped {
            row("zhudu", self.tau_zhudu_over_s2);
        } else {
            row("shewchuk", self.tau_shewchuk_over_s2);
        }
        if let Some(l) = self.lambda_muniform {
            row("muniform", Some(2.0 / l));
        }
        s
    }
}

/// Computes the exact eigenvalue and every bound for one mesh, field and mass choice.
pub fn analyze(mesh: &SimplicialMesh, field: &TensorField, opts: &AnalyzeOptions) -> Result<StabilityReport> {
    let sys = System::assemble(mesh, field, opts.quad_order)?;
    analyze_system(mesh, &sys, opts)
}

/// As [`analyze`] with matrices already assembled.
pub fn analyze_system(mesh: &SimplicialMesh, sys: &System, opts: &AnalyzeOptions) -> Result<StabilityReport> {
    let d = mesh.dim();
    let lumped = opts.mass.is_lumped();
    let mt = sys.mass_of(opts.mass);
    let a = &sys.stiffness;
    let nonobtuse = is_nonobtuse(a);
    let cs = c_star(d, lumped, nonobtuse);
    let eig = match &opts.eig {
        EigChoice::Exact => lambda_max_exact(mt, a)?,
        EigChoice::Lanczos { steps, seed, security } => lambda_max_lanczos(mt, a, *steps, *seed, *security)?,
        EigChoice::Power { tol } => lambda_max_power(mt, a, *tol, None)?,
    };
    let lambda = eig.value;
    let diag = diag_ratio_bound(mt, a, cs)?;
    let patches = mesh.patches();
    let geo = geometric_bound(mesh, &sys.dofs, &sys.dk, &patches, cs)?;
    let (zd, sh) = if d >= 2 {
        (
            Some(zhu_du_bound(mesh, &sys.dk, &patches, opts.vertex_adjacency)?),
            Some(shewchuk_bound(mesh, &sys.dk, &patches)?),
        )
    } else {
        (None, None)
    };
    let mu = match &opts.metric {
        Some(m) => {
            let mks = element_averages(m, mesh, opts.quad_order)?;
            Some(muniform_bound(mesh, &sys.dofs, &mks, &sys.dk, &patches, cs)?.value)
        }
        None => None,
    };
    let (tau_max, tau_h) = tau_values(lambda, diag.min_mass_over_stiffness, cs);
    Ok(StabilityReport {
        dim: d,
        n_elements: mesh.n_elements(),
        n_free: sys.dofs.len(),
        lumped,
        nonobtuse,
        c_star: cs,
        c_sharp: c_sharp(d),
        lambda_exact: lambda,
        eig,
        lambda_diag_lower: diag.lower,
        lambda_diag_upper: diag.upper,
        lambda_geo: geo.value,
        lambda_zhudu_lower: zd.as_ref().map(|z| z.lower),
        lambda_zhudu_upper: zd.as_ref().map(|z| z.upper),
        lambda_shewchuk_lower: sh.as_ref().map(|s| s.lower),
        lambda_shewchuk_upper: sh.as_ref().map(|s| s.upper),
        lambda_muniform: mu,
        zhudu_c1: zd.as_ref().map(|z| z.c1),
        p_max: patches.p_max,
        tau_max_over_s2: tau_max,
        tau_h_over_s2: tau_h,
        tau_geo_over_s2: 2.0 / geo.value,
        tau_zhudu_over_s2: zd.map(|z| 2.0 / z.upper),
        tau_shewchuk_over_s2: sh.map(|s| 2.0 / s.upper),
        argmin_node: diag.argmax,
        geo_argmax_node: geo.argmax_node,
    })
}
