//! Symmetric positive definite tensor fields: diffusion matrices and metrics.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::mesh::SimplicialMesh;
use crate::quadrature::simplex_rule;
use crate::small::{sym_eigenvalues, Mat};
use crate::{Error, Result};

/// Pointwise evaluator used by [`TensorField::Analytic`].
pub type TensorFn = Arc<dyn Fn(&[f64]) -> Mat + Send + Sync>;

/// Element context for fields that are constant per element or region.
#[derive(Clone, Copy, Debug, Default)]
pub struct ElementRef {
    pub id: usize,
    pub region: Option<i64>,
}

#[derive(Clone)]
pub enum TensorField {
    Constant(Mat),
    /// `(2 − sin(2πx/ε))⁻¹`
    Per1d { eps: f64 },
    /// `(2 − sin(2π tan((1−ε)πx/2)))⁻¹`
    NonPer1d { eps: f64 },
    /// `R(θ) diag(κ, 1) R(θ)ᵀ` with `θ = π sin x cos y`.
    Aniso2d { kappa: f64 },
    /// Constant tensor per region tag.
    PiecewiseRegion { dim: usize, table: BTreeMap<i64, Mat> },
    /// Constant tensor per element id.
    PiecewiseElement(Vec<Mat>),
    /// Pointwise inverse of another field.
    InverseOf(Box<TensorField>),
    Scaled(f64, Box<TensorField>),
    Analytic { dim: usize, name: String, eval: TensorFn },
}

impl fmt::Debug for TensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorField::Constant(m) => write!(f, "Constant({:?})", m.as_slice()),
            TensorField::Per1d { eps } => write!(f, "Per1d {{ eps: {eps} }}"),
            TensorField::NonPer1d { eps } => write!(f, "NonPer1d {{ eps: {eps} }}"),
            TensorField::Aniso2d { kappa } => write!(f, "Aniso2d {{ kappa: {kappa} }}"),
            TensorField::PiecewiseRegion { dim, table } => {
                write!(f, "PiecewiseRegion {{ dim: {dim}, regions: {:?} }}", table.keys().collect::<Vec<_>>())
            }
            TensorField::PiecewiseElement(v) => write!(f, "PiecewiseElement(len {})", v.len()),
            TensorField::InverseOf(inner) => write!(f, "InverseOf({inner:?})"),
            TensorField::Scaled(c, inner) => write!(f, "Scaled({c}, {inner:?})"),
            TensorField::Analytic { name, .. } => write!(f, "Analytic({name})"),
        }
    }
}

/// Rotation angle of the anisotropic 2D field.
pub fn aniso2d_angle(x: f64, y: f64) -> f64 {
    PI * x.sin() * y.cos()
}

pub fn per1d_value(eps: f64, x: f64) -> f64 {
    1.0 / (2.0 - (2.0 * PI * x / eps).sin())
}

pub fn nonper1d_value(eps: f64, x: f64) -> f64 {
    1.0 / (2.0 - (2.0 * PI * ((1.0 - eps) * PI * x / 2.0).tan()).sin())
}

pub fn aniso2d_value(kappa: f64, x: f64, y: f64) -> Mat {
    let t = aniso2d_angle(x, y);
    let (s, c) = t.sin_cos();
    Mat::from_row_slice(2, 2, &[
        kappa * c * c + s * s,
        (kappa - 1.0) * c * s,
        (kappa - 1.0) * c * s,
        kappa * s * s + c * c,
    ])
}

impl TensorField {
    pub fn identity(dim: usize) -> Self {
        TensorField::Constant(Mat::identity(dim, dim))
    }

    pub fn isotropic(dim: usize, c: f64) -> Self {
        TensorField::Constant(Mat::identity(dim, dim) * c)
    }

    pub fn inverse(self) -> Self {
        match self {
            TensorField::InverseOf(inner) => *inner,
            other => TensorField::InverseOf(Box::new(other)),
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        TensorField::Scaled(c, Box::new(self))
    }

    pub fn analytic<F>(dim: usize, name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> Mat + Send + Sync + 'static,
    {
        TensorField::Analytic { dim, name: name.into(), eval: Arc::new(f) }
    }

    /// Spatial dimension, or `None` for per-element tables.
    pub fn dim(&self) -> Option<usize> {
        match self {
            TensorField::Constant(m) => Some(m.nrows()),
            TensorField::Per1d { .. } | TensorField::NonPer1d { .. } => Some(1),
            TensorField::Aniso2d { .. } => Some(2),
            TensorField::PiecewiseRegion { dim, .. } | TensorField::Analytic { dim, .. } => Some(*dim),
            TensorField::PiecewiseElement(v) => v.first().map(|m| m.nrows()),
            TensorField::InverseOf(inner) | TensorField::Scaled(_, inner) => inner.dim(),
        }
    }

    /// True when the field is constant on every element, so averaging is exact.
    pub fn is_elementwise_constant(&self) -> bool {
        match self {
            TensorField::Constant(_) | TensorField::PiecewiseRegion { .. } | TensorField::PiecewiseElement(_) => {
                true
            }
            TensorField::InverseOf(inner) | TensorField::Scaled(_, inner) => inner.is_elementwise_constant(),
            _ => false,
        }
    }

    /// Evaluates without the SPD check.
    fn eval_raw(&self, x: &[f64], elem: ElementRef) -> Result<Mat> {
        Ok(match self {
            TensorField::Constant(m) => m.clone(),
            TensorField::Per1d { eps } => Mat::from_element(1, 1, per1d_value(*eps, x[0])),
            TensorField::NonPer1d { eps } => Mat::from_element(1, 1, nonper1d_value(*eps, x[0])),
            TensorField::Aniso2d { kappa } => aniso2d_value(*kappa, x[0], x[1]),
            TensorField::PiecewiseRegion { table, .. } => {
                let tag = elem.region.ok_or_else(|| {
                    Error::InvalidArgument("region-wise field needs a mesh with region tags".into())
                })?;
                table
                    .get(&tag)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("no tensor for region {tag}")))?
            }
            TensorField::PiecewiseElement(v) => v
                .get(elem.id)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("no tensor for element {}", elem.id)))?,
            TensorField::InverseOf(inner) => {
                let m = inner.eval(x, elem)?;
                m.try_inverse().ok_or_else(|| Error::NotSpd {
                    at: format!("{x:?}"),
                    detail: "singular tensor cannot be inverted".into(),
                })?
            }
            TensorField::Scaled(c, inner) => inner.eval_raw(x, elem)? * *c,
            TensorField::Analytic { eval, .. } => eval(x),
        })
    }

    /// Evaluates at `x` inside element `elem` and checks symmetry and
    /// `λ_min > 1e-14 λ_max`.
    pub fn eval(&self, x: &[f64], elem: ElementRef) -> Result<Mat> {
        let m = self.eval_raw(x, elem)?;
        check_spd(&m, || format!("x = {x:?}, element {}", elem.id))?;
        Ok(m)
    }
}

/// Symmetry and definiteness check shared by all evaluations.
pub fn check_spd(m: &Mat, at: impl Fn() -> String) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 || m.nrows() > 3 {
        return Err(Error::NotSpd { at: at(), detail: format!("shape {}x{}", m.nrows(), m.ncols()) });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSpd { at: at(), detail: "non-finite entry".into() });
    }
    let scale = m.abs().max();
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-12 * scale {
        return Err(Error::NotSpd { at: at(), detail: format!("asymmetry {asym:e}") });
    }
    let ev = sym_eigenvalues(m);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if !(hi > 0.0 && lo > 1e-14 * hi) {
        return Err(Error::NotSpd { at: at(), detail: format!("eigenvalues {lo:e} .. {hi:e}") });
    }
    Ok(())
}

/// Average of `field` over element `k`, `(1/|K|) ∫_K field`, using the simplex
/// rule of the given order. Exact for elementwise-constant fields.
pub fn average_tensor(field: &TensorField, mesh: &SimplicialMesh, k: usize, order: usize) -> Result<Mat> {
    let d = mesh.dim();
    if let Some(fd) = field.dim() {
        if fd != d {
            return Err(Error::DimensionMismatch(format!("field is {fd}D, mesh is {d}D")));
        }
    }
    let elem = ElementRef { id: k, region: mesh.region(k) };
    let rule = simplex_rule(d, order)?;
    if field.is_elementwise_constant() {
        let x = mesh.centroid(k);
        return field.eval(&x, elem);
    }
    let mut acc = Mat::zeros(d, d);
    for q in &rule {
        let x = mesh.point_at(k, &q.bary);
        acc += field.eval(&x, elem)? * q.weight;
    }
    let avg = crate::small::symmetrize(&acc);
    check_spd(&avg, || format!("average over element {k}"))?;
    Ok(avg)
}

/// Element averages for every element of the mesh.
pub fn element_averages(field: &TensorField, mesh: &SimplicialMesh, order: usize) -> Result<Vec<Mat>> {
    (0..mesh.n_elements()).map(|k| average_tensor(field, mesh, k, order)).collect()
}

/// Parses the field mini-language.
///
/// ```text
/// identity                 unit tensor in the mesh dimension
/// const:c=2.5              isotropic constant
/// per1d:eps=0.0625
/// nonper1d:eps=0.0625
/// aniso2d:kappa=1000
/// groundwater:low=1e-6     1 outside region 1, `low` inside (2D)
/// piecewise:file=path      per-region constants read from a file
/// inv:<field>              pointwise inverse
/// ```
pub fn parse_field(spec: &str, dim: usize) -> Result<TensorField> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("inv:") {
        return Ok(parse_field(rest, dim)?.inverse());
    }
    let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
    let mut params = BTreeMap::new();
    for kv in args.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("expected key=value in `{kv}`")))?;
        params.insert(k.trim().to_string(), v.trim().to_string());
    }
    let num = |key: &str, default: Option<f64>| -> Result<f64> {
        match params.get(key) {
            Some(v) => v.parse().map_err(|_| Error::InvalidArgument(format!("bad number for {key}: `{v}`"))),
            None => default.ok_or_else(|| Error::InvalidArgument(format!("field `{name}` needs `{key}=`"))),
        }
    };
    let need_dim = |want: usize| -> Result<()> {
        if dim == want {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("field `{name}` is {want}D, mesh is {dim}D")))
        }
    };
    let field = match name {
        "identity" => TensorField::identity(dim),
        "const" => {
            let c = num("c", None)?;
            TensorField::isotropic(dim, c)
        }
        "per1d" => {
            need_dim(1)?;
            TensorField::Per1d { eps: num("eps", Some(1.0 / 16.0))? }
        }
        "nonper1d" => {
            need_dim(1)?;
            TensorField::NonPer1d { eps: num("eps", Some(1.0 / 16.0))? }
        }
        "aniso2d" => {
            need_dim(2)?;
            TensorField::Aniso2d { kappa: num("kappa", Some(1000.0))? }
        }
        "groundwater" => {
            let low = num("low", Some(1e-6))?;
            let mut table = BTreeMap::new();
            table.insert(0, Mat::identity(dim, dim));
            table.insert(1, Mat::identity(dim, dim) * low);
            TensorField::PiecewiseRegion { dim, table }
        }
        "piecewise" => {
            let path = params
                .get("file")
                .ok_or_else(|| Error::InvalidArgument("piecewise field needs `file=`".into()))?;
            load_piecewise(path, dim)?
        }
        _ => return Err(Error::InvalidArgument(format!("unknown field `{name}`"))),
    };
    let known: &[&str] = match name {
        "const" => &["c"],
        "per1d" | "nonper1d" => &["eps"],
        "aniso2d" => &["kappa"],
        "groundwater" => &["low"],
        "piecewise" => &["file"],
        _ => &[],
    };
    if let Some(k) = params.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::InvalidArgument(format!("unknown parameter `{k}` for field `{name}`")));
    }
    Ok(field)
}

/// Reads per-region tensors: each line holds a region tag followed by either
/// one value (isotropic) or `d*d` row-major entries. `#` starts a comment.
pub fn load_piecewise(path: impl AsRef<Path>, dim: usize) -> Result<TensorField> {
    let text = std::fs::read_to_string(path)?;
    let mut table = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        let toks: Vec<&str> = line.split_whitespace().collect();
        let tag: i64 = toks[0].parse().map_err(|_| bad(format!("bad region tag `{}`", toks[0])))?;
        let vals: Vec<f64> = toks[1..]
            .iter()
            .map(|t| t.parse().map_err(|_| bad(format!("bad value `{t}`"))))
            .collect::<Result<_>>()?;
        let m = match vals.len() {
            1 => Mat::identity(dim, dim) * vals[0],
            n if n == dim * dim => Mat::from_row_slice(dim, dim, &vals),
            n => return Err(bad(format!("expected 1 or {} values, got {n}", dim * dim))),
        };
        check_spd(&m, || format!("region {tag}"))?;
        table.insert(tag, m);
    }
    Ok(TensorField::PiecewiseRegion { dim, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gen_uniform_1d, NodeMarker, SimplicialMesh};

    fn small_triangle() -> SimplicialMesh {
        SimplicialMesh::new(
            2,
            vec![0.3, 0.4, 0.35, 0.42, 0.31, 0.47],
            vec![0, 1, 2],
            vec![NodeMarker::Interior, NodeMarker::Dirichlet, NodeMarker::Dirichlet],
            None,
        )
        .unwrap()
    }

    #[test]
    fn constant_average_is_exact() {
        let m = small_triangle();
        let a = average_tensor(&TensorField::identity(2), &m, 0, 4).unwrap();
        assert_eq!(a, Mat::identity(2, 2));
    }

    #[test]
    fn linear_field_average() {
        let m = SimplicialMesh::new(
            1,
            vec![0.0, 0.5, 1.0],
            vec![0, 1, 1, 2],
            vec![NodeMarker::Dirichlet, NodeMarker::Interior, NodeMarker::Dirichlet],
            None,
        )
        .unwrap();
        let f = TensorField::analytic(1, "1+x", |x| Mat::from_element(1, 1, 1.0 + x[0]));
        let a = average_tensor(&f, &m, 0, 2).unwrap();
        assert!((a[(0, 0)] - 1.25).abs() < 1e-15);
    }

    #[test]
    fn aniso_average_against_high_order_oracle() {
        let m = small_triangle();
        let f = TensorField::Aniso2d { kappa: 1000.0 };
        let a4 = average_tensor(&f, &m, 0, 4).unwrap();
        // oracle: Duffy-collapsed 12-point Gauss product rule
        let gl = crate::quadrature::gauss_legendre_unit(12);
        let mut acc = Mat::zeros(2, 2);
        for &(u, wu) in &gl {
            for &(v, wv) in &gl {
                let (b1, b2) = (u, (1.0 - u) * v);
                let x = m.point_at(0, &[1.0 - b1 - b2, b1, b2]);
                acc += aniso2d_value(1000.0, x[0], x[1]) * (2.0 * wu * wv * (1.0 - u));
            }
        }
        assert!((a4 - &acc).abs().max() / acc.abs().max() < 1e-6);
    }

    #[test]
    fn non_spd_rejected() {
        let m = gen_uniform_1d(4).unwrap();
        let f = TensorField::analytic(1, "neg", |x| Mat::from_element(1, 1, x[0] - 0.5));
        assert!(matches!(average_tensor(&f, &m, 0, 2), Err(Error::NotSpd { .. })));
        let bad = TensorField::Constant(Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(bad.eval(&[0.0, 0.0], ElementRef::default()).is_err());
    }

    #[test]
    fn aniso_tensor_eigenvalues() {
        let d = aniso2d_value(1000.0, 0.7, 0.2);
        let ev = sym_eigenvalues(&d);
        assert!((ev[0] - 1.0).abs() < 1e-10 && (ev[1] - 1000.0).abs() < 1e-9);
        let t = aniso2d_angle(0.7, 0.2);
        let v = nalgebra::DVector::from_vec(vec![t.cos(), t.sin()]);
        assert!((&d * &v - &v * 1000.0).norm() < 1e-9);
    }

    #[test]
    fn mini_language() {
        assert!(matches!(parse_field("per1d:eps=0.0625", 1).unwrap(), TensorField::Per1d { eps } if eps == 0.0625));
        assert!(matches!(parse_field("inv:aniso2d:kappa=10", 2).unwrap(), TensorField::InverseOf(_)));
        assert!(parse_field("aniso2d", 1).is_err());
        assert!(parse_field("per1d:epz=1", 1).is_err());
        assert!(parse_field("nosuch", 2).is_err());
        let f = parse_field("inv:per1d:eps=0.0625", 1).unwrap();
        let x = [0.3];
        let v = f.eval(&x, ElementRef::default()).unwrap()[(0, 0)];
        assert!((v * per1d_value(0.0625, 0.3) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn piecewise_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.txt");
        std::fs::write(&p, "# tag values\n0 1\n1 2 0.5 0.5 3\n").unwrap();
        let f = parse_field(&format!("piecewise:file={}", p.display()), 2).unwrap();
        let e = ElementRef { id: 0, region: Some(1) };
        assert_eq!(f.eval(&[0.0, 0.0], e).unwrap()[(1, 1)], 3.0);
        let missing = ElementRef { id: 0, region: Some(7) };
        assert!(f.eval(&[0.0, 0.0], missing).is_err());
    }
}
