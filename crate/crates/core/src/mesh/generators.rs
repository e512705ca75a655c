//! Mesh generators for the unit interval, structured grids on rectangles,
//! and streamline-aligned strips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NodeMarker, SimplicialMesh};
use crate::quadrature::integrate_adaptive;
use crate::{Error, Result};

/// Uniform mesh of `(0, 1)` with `n` elements and Dirichlet endpoints.
pub fn gen_uniform_1d(n: usize) -> Result<SimplicialMesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("element count must be at least 1".into()));
    }
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    mesh_1d(xs)
}

/// Builds a 1D mesh from strictly increasing nodes; endpoints are Dirichlet.
pub fn mesh_1d(xs: Vec<f64>) -> Result<SimplicialMesh> {
    let n = xs.len().saturating_sub(1);
    if n == 0 {
        return Err(Error::InvalidArgument("need at least two nodes".into()));
    }
    let mut markers = vec![NodeMarker::Interior; n + 1];
    markers[0] = NodeMarker::Dirichlet;
    markers[n] = NodeMarker::Dirichlet;
    let cells = (0..n).flat_map(|i| [i, i + 1]).collect();
    SimplicialMesh::new(1, xs, cells, markers, None)
}

/// Nodes of `(0, 1)` that split `∫ w dx` into `n` equal parts.
///
/// For the metric `D⁻¹` the weight is `D(x)^{-1/2}`, which yields a mesh that
/// is uniform in that metric.
pub fn gen_equidistributed_1d<W>(n: usize, w: W) -> Result<SimplicialMesh>
where
    W: Fn(f64) -> f64,
{
    if n < 2 {
        return Err(Error::InvalidArgument("equidistributed mesh needs n >= 2".into()));
    }
    let weight = |x: f64| -> Result<f64> {
        let v = w(x);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidArgument(format!("weight is not positive at x = {x}: {v}")))
        }
    };
    let total = integrate_adaptive(weight, 0.0, 1.0, 1e-14)?;
    let target = total / n as f64;
    let tol = 1e-15 * total;
    let mut xs = Vec::with_capacity(n + 1);
    xs.push(0.0);
    let mut left = 0.0;
    for _ in 1..n {
        let x = solve_segment(&weight, left, target, tol)?;
        xs.push(x);
        left = x;
    }
    xs.push(1.0);
    mesh_1d(xs)
}

/// Finds `x` in `(left, 1)` with `∫_left^x w = target`: Newton steps with a
/// bisection safeguard.
fn solve_segment<F>(w: &F, left: f64, target: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = (left, 1.0);
    let mut x = left + target / w(left)?;
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    let mut resid = f64::INFINITY;
    for _ in 0..200 {
        let g = integrate_adaptive(w, left, x, tol)? - target;
        resid = g;
        if g.abs() <= 1e-13 * target {
            return Ok(x);
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - g / w(x)?;
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence { iterations: 200, residual: resid.abs() / target })
}

/// Jittered 1D mesh: interior nodes of the uniform mesh moved by up to
/// `jitter · h` (`jitter < 0.5`).
pub fn gen_random_1d(n: usize, jitter: f64, seed: u64) -> Result<SimplicialMesh> {
    if !(0.0..0.5).contains(&jitter) {
        return Err(Error::InvalidArgument("jitter must lie in [0, 0.5)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1.0 / n.max(1) as f64;
    let xs: Vec<f64> = (0..=n)
        .map(|i| {
            let x = i as f64 * h;
            if i == 0 || i == n {
                x
            } else {
                x + jitter * h * rng.gen_range(-1.0..1.0)
            }
        })
        .collect();
    mesh_1d(xs)
}

/// Node spacing law along one axis of a structured grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Grading {
    Uniform,
    /// Ratio of consecutive spacings in x and y; values above 1 refine toward
    /// the axis origin.
    Geometric(f64, f64),
}

/// How each quadrilateral cell is split into two triangles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Diagonal {
    /// Every diagonal runs from lower-left to upper-right.
    Right,
    /// Every diagonal runs from lower-right to upper-left.
    Left,
    /// Right and Left in a checkerboard pattern.
    Alternating,
}

impl std::str::FromStr for Diagonal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "right" => Ok(Diagonal::Right),
            "left" => Ok(Diagonal::Left),
            "alternating" | "alt" => Ok(Diagonal::Alternating),
            _ => Err(Error::InvalidArgument(format!("unknown diagonal `{s}`"))),
        }
    }
}

/// `n + 1` nodes on `[0, 1]` with spacings `h, h r, h r², …`.
pub fn graded_axis(n: usize, ratio: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("axis needs at least one cell".into()));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!("grading ratio {ratio} must be positive")));
    }
    if ratio == 1.0 {
        return Ok((0..=n).map(|i| i as f64 / n as f64).collect());
    }
    let weights: Vec<f64> = (0..n).map(|k| ratio.powi(k as i32)).collect();
    let total: f64 = weights.iter().sum();
    if !total.is_finite() {
        return Err(Error::InvalidArgument(format!("grading ratio {ratio} overflows over {n} cells")));
    }
    let mut xs = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    xs.push(0.0);
    for w in &weights[..n - 1] {
        acc += w / total;
        xs.push(acc);
    }
    xs.push(1.0);
    let min_gap = xs.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min);
    if !(min_gap > 1e-13) {
        return Err(Error::InvalidArgument(format!(
            "grading ratio {ratio} with {n} cells underflows the smallest cell"
        )));
    }
    Ok(xs)
}

/// Structured triangulation of the unit square with all boundary nodes Dirichlet.
pub fn gen_structured_2d(
    nx: usize,
    ny: usize,
    grading: Grading,
    diagonal: Diagonal,
) -> Result<SimplicialMesh> {
    let (rx, ry) = match grading {
        Grading::Uniform => (1.0, 1.0),
        Grading::Geometric(a, b) => (a, b),
    };
    let xs = graded_axis(nx, rx)?;
    let ys = graded_axis(ny, ry)?;
    gen_structured_2d_axes(&xs, &ys, diagonal, |ix, iy| {
        if ix == 0 || iy == 0 || ix == nx || iy == ny {
            NodeMarker::Dirichlet
        } else {
            NodeMarker::Interior
        }
    }, |_, _| None)
}

/// Tensor-product triangulation from explicit axis nodes. `marker` receives
/// grid indices, `region` the cell center.
pub fn gen_structured_2d_axes<B, R>(
    xs: &[f64],
    ys: &[f64],
    diagonal: Diagonal,
    marker: B,
    region: R,
) -> Result<SimplicialMesh>
where
    B: Fn(usize, usize) -> NodeMarker,
    R: Fn(f64, f64) -> Option<i64>,
{
    let (nx, ny) = (xs.len().saturating_sub(1), ys.len().saturating_sub(1));
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument("grid needs at least one cell per axis".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut coords = Vec::with_capacity(2 * (nx + 1) * (ny + 1));
    let mut markers = Vec::with_capacity((nx + 1) * (ny + 1));
    for (j, &y) in ys.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            coords.extend([x, y]);
            markers.push(marker(i, j));
        }
    }
    let mut cells = Vec::with_capacity(6 * nx * ny);
    let mut tags = Vec::with_capacity(2 * nx * ny);
    let mut any_tag = false;
    for j in 0..ny {
        for i in 0..nx {
            let (p00, p10, p01, p11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            let right = match diagonal {
                Diagonal::Right => true,
                Diagonal::Left => false,
                Diagonal::Alternating => (i + j) % 2 == 0,
            };
            if right {
                cells.extend([p00, p10, p11, p00, p11, p01]);
            } else {
                cells.extend([p00, p10, p01, p10, p11, p01]);
            }
            let tag = region(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]));
            any_tag |= tag.is_some();
            tags.extend([tag.unwrap_or(0); 2]);
        }
    }
    SimplicialMesh::new(2, coords, cells, markers, any_tag.then_some(tags))
}

/// Unit-square Right-diagonal grid with interior nodes moved randomly by up to
/// `amp` times the local cell size (`amp < 0.5` keeps every element valid).
pub fn gen_perturbed_grid_2d(nx: usize, ny: usize, amp: f64, seed: u64) -> Result<SimplicialMesh> {
    if !(0.0..0.5).contains(&amp) {
        return Err(Error::InvalidArgument("perturbation amplitude must lie in [0, 0.5)".into()));
    }
    let base = gen_structured_2d(nx, ny, Grading::Uniform, Diagonal::Right)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let mut coords = base.coords().to_vec();
    for i in 0..base.n_nodes() {
        if base.marker(i) == NodeMarker::Interior {
            coords[2 * i] += amp * hx * rng.gen_range(-1.0..1.0);
            coords[2 * i + 1] += amp * hy * rng.gen_range(-1.0..1.0);
        }
    }
    SimplicialMesh::new(2, coords, base.cells.clone(), base.markers().to_vec(), None)
}

/// Layout of the aquifer-like test domain `(0, 100)²`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundwaterParams {
    /// Cells per coarse interval between breaklines.
    pub cells: usize,
    /// Cells across each thin strip.
    pub strip_cells: usize,
    /// Spacing ratio toward the strip edges; 1 gives uniform spacing.
    pub grading: f64,
}

impl Default for GroundwaterParams {
    fn default() -> Self {
        GroundwaterParams { cells: 8, strip_cells: 2, grading: 1.3 }
    }
}

/// Region tag of the two low-permeability strips.
pub const STRIP_REGION: i64 = 1;

/// Structured grid of `(0, 100)²` with two thin strips,
/// `(0, 80) × (64, 68)` and `(20, 100) × (40, 44)`, tagged [`STRIP_REGION`]
/// (all other elements carry tag 0). The grid is refined geometrically toward
/// the strip edges. Nodes on `x = 0` and `x = 100` are Dirichlet, the
/// remaining boundary is Neumann.
pub fn gen_groundwater_like(p: &GroundwaterParams) -> Result<SimplicialMesh> {
    if p.cells == 0 || p.strip_cells == 0 {
        return Err(Error::InvalidArgument("cell counts must be positive".into()));
    }
    let xb = [0.0, 20.0, 80.0, 100.0];
    let yb = [0.0, 40.0, 44.0, 64.0, 68.0, 100.0];
    let x_interior = [false, true, true, false];
    let y_interior = [false, true, true, true, true, false];
    let strips_y = [false, false, true, false, true];
    let xs = breakline_axis(&xb, &x_interior, &[false; 3], p)?;
    let ys = breakline_axis(&yb, &y_interior, &strips_y, p)?;
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    gen_structured_2d_axes(
        &xs,
        &ys,
        Diagonal::Right,
        |i, j| {
            if i == 0 || i == nx {
                NodeMarker::Dirichlet
            } else if j == 0 || j == ny {
                NodeMarker::Neumann
            } else {
                NodeMarker::Interior
            }
        },
        |x, y| {
            let in1 = x < 80.0 && y > 64.0 && y < 68.0;
            let in2 = x > 20.0 && y > 40.0 && y < 44.0;
            Some(if in1 || in2 { STRIP_REGION } else { 0 })
        },
    )
}

fn breakline_axis(
    breaks: &[f64],
    interior: &[bool],
    strip: &[bool],
    p: &GroundwaterParams,
) -> Result<Vec<f64>> {
    let mut out = vec![breaks[0]];
    for s in 0..breaks.len() - 1 {
        let (a, b) = (breaks[s], breaks[s + 1]);
        let local: Vec<f64> = if strip[s] {
            (0..=p.strip_cells).map(|i| i as f64 / p.strip_cells as f64).collect()
        } else {
            match (interior[s], interior[s + 1]) {
                (true, true) => {
                    // refine toward both ends
                    let half = p.cells.div_ceil(2);
                    let g = graded_axis(half, p.grading)?;
                    let mut v: Vec<f64> = g.iter().map(|t| 0.5 * t).collect();
                    v.extend(g.iter().rev().skip(1).map(|t| 1.0 - 0.5 * t));
                    v
                }
                (true, false) => graded_axis(p.cells, p.grading)?,
                (false, true) => graded_axis(p.cells, p.grading)?.iter().rev().map(|t| 1.0 - t).collect(),
                (false, false) => graded_axis(p.cells, 1.0)?,
            }
        };
        out.extend(local[1..].iter().map(|t| a + (b - a) * t));
    }
    Ok(out)
}

/// Streamline-aligned strip mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedStripParams {
    /// Start of the seed curve.
    pub center: [f64; 2],
    /// Number of strips (the mesh has `strips + 1` streamlines).
    pub strips: usize,
    /// Elements per strip edge along a streamline.
    pub cells: usize,
    /// Distance between neighbouring streamlines.
    pub spacing: f64,
    /// Ratio of element length along the streamlines to the equilateral length.
    pub stretch: f64,
}

impl Default for AlignedStripParams {
    fn default() -> Self {
        AlignedStripParams { center: [0.2, 0.5], strips: 20, cells: 5, spacing: 5e-4, stretch: 1000f64.sqrt() }
    }
}

/// Triangulates a band of streamlines of the direction field
/// `(cos θ, sin θ)`. The streamlines start on a seed curve traced along the
/// normal direction; nodes on every second streamline are staggered by half
/// an element so that triangles are close to equilateral after stretching by
/// `stretch` along the streamlines. Nodes on the outer streamlines and at
/// streamline ends are Dirichlet.
pub fn gen_aligned_strips_2d<T>(p: &AlignedStripParams, theta: T) -> Result<SimplicialMesh>
where
    T: Fn(f64, f64) -> f64,
{
    if p.strips == 0 || p.cells == 0 || !(p.spacing > 0.0) || !(p.stretch > 0.0) {
        return Err(Error::InvalidArgument("strip mesh parameters must be positive".into()));
    }
    let along = |q: [f64; 2]| {
        let t = theta(q[0], q[1]);
        [t.cos(), t.sin()]
    };
    let across = |q: [f64; 2]| {
        let t = theta(q[0], q[1]);
        [-t.sin(), t.cos()]
    };
    let len = p.stretch * p.spacing * 2.0 / 3f64.sqrt();
    let mut seeds = vec![p.center];
    for _ in 0..p.strips {
        let last = *seeds.last().unwrap();
        seeds.push(trace(last, &across, p.spacing));
    }
    let n = p.cells;
    let mut coords = Vec::new();
    let mut markers = Vec::new();
    let mut lines: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for (j, &s0) in seeds.iter().enumerate() {
        let mut arc: Vec<f64> = if j % 2 == 1 {
            let mut v = vec![0.0];
            v.extend((0..n).map(|k| (k as f64 + 0.5) * len));
            *v.last_mut().unwrap() = n as f64 * len;
            v
        } else {
            (0..=n).map(|k| k as f64 * len).collect()
        };
        arc.dedup();
        let mut ids = Vec::with_capacity(arc.len());
        let mut q = s0;
        for (a, s) in arc.iter().enumerate() {
            if a > 0 {
                q = trace(q, &along, s - arc[a - 1]);
            }
            ids.push(markers.len());
            coords.extend(q);
            let edge = j == 0 || j == p.strips || a == 0 || a + 1 == arc.len();
            markers.push(if edge { NodeMarker::Dirichlet } else { NodeMarker::Interior });
        }
        lines.push((ids, arc));
    }
    let mut cells = Vec::new();
    for j in 0..p.strips {
        let (a_ids, sa) = &lines[j];
        let (b_ids, sb) = &lines[j + 1];
        let (mut a, mut b) = (0, 0);
        while a + 1 < a_ids.len() || b + 1 < b_ids.len() {
            let advance_a = b + 1 == b_ids.len() || (a + 1 < a_ids.len() && sa[a + 1] <= sb[b + 1]);
            if advance_a {
                cells.extend([a_ids[a], a_ids[a + 1], b_ids[b]]);
                a += 1;
            } else {
                cells.extend([a_ids[a], b_ids[b + 1], b_ids[b]]);
                b += 1;
            }
        }
    }
    SimplicialMesh::new(2, coords, cells, markers, None)
}

/// RK4 trace of a unit direction field (sign-continuous) over arclength `s`.
fn trace<F>(start: [f64; 2], dir: &F, s: f64) -> [f64; 2]
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    const SUB: usize = 20;
    let h = s / SUB as f64;
    let mut p = start;
    let mut reference = dir(p);
    for _ in 0..SUB {
        let g = |q: [f64; 2]| {
            let v = dir(q);
            if v[0] * reference[0] + v[1] * reference[1] >= 0.0 {
                v
            } else {
                [-v[0], -v[1]]
            }
        };
        let add = |q: [f64; 2], v: [f64; 2], t: f64| [q[0] + t * v[0], q[1] + t * v[1]];
        let k1 = g(p);
        let k2 = g(add(p, k1, 0.5 * h));
        let k3 = g(add(p, k2, 0.5 * h));
        let k4 = g(add(p, k3, h));
        let step = [
            (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) / 6.0,
            (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) / 6.0,
        ];
        reference = step;
        p = add(p, step, h);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_1d_examples() {
        let m = gen_uniform_1d(4).unwrap();
        let xs: Vec<f64> = (0..5).map(|i| m.node(i)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!((m.n_elements(), m.n_free()), (4, 3));
        assert!(matches!(gen_uniform_1d(1), Err(Error::NoFreeNodes)));
        assert!(gen_uniform_1d(0).is_err());
        let m = gen_uniform_1d(1024).unwrap();
        assert!((0..1024).all(|k| m.volume(k) == 2f64.powi(-10)));
    }

    #[test]
    fn equidistributed_constant_weight_is_uniform() {
        for c in [1.0, 0.3, 17.0] {
            let m = gen_equidistributed_1d(4, |_| c).unwrap();
            let u = gen_uniform_1d(4).unwrap();
            for i in 0..5 {
                assert!((m.node(i)[0] - u.node(i)[0]).abs() < 1e-12);
            }
        }
        let m = gen_equidistributed_1d(50, |_| 2.0).unwrap();
        let u = gen_uniform_1d(50).unwrap();
        assert!((0..51).all(|i| (m.node(i)[0] - u.node(i)[0]).abs() < 1e-12));
    }

    #[test]
    fn equidistributed_linear_weight_closed_form() {
        let m = gen_equidistributed_1d(2, |x| 1.0 + x).unwrap();
        // x + x²/2 = 3/4
        let x1 = -1.0 + 2.5f64.sqrt();
        assert!((m.node(1)[0] - x1).abs() < 1e-12);
    }

    #[test]
    fn equidistributed_oscillatory_weight() {
        let eps = 1.0 / 16.0;
        let w = move |x: f64| (2.0 - (2.0 * std::f64::consts::PI * x / eps).sin()).sqrt();
        let m = gen_equidistributed_1d(64, w).unwrap();
        // independent oracle: composite 20-point Gauss per element
        let gl = crate::quadrature::gauss_legendre_unit(20);
        let per: Vec<f64> = (0..64)
            .map(|k| {
                let (a, b) = (m.node(k)[0], m.node(k + 1)[0]);
                gl.iter().map(|(t, wt)| wt * (b - a) * w(a + (b - a) * t)).sum()
            })
            .collect();
        let mean = per.iter().sum::<f64>() / 64.0;
        assert!(per.iter().all(|v| ((v - mean) / mean).abs() < 1e-8));
    }

    #[test]
    fn nonpositive_weight_rejected() {
        assert!(gen_equidistributed_1d(4, |x| x - 0.5).is_err());
    }

    #[test]
    fn structured_examples() {
        assert!(matches!(
            gen_structured_2d(1, 1, Grading::Uniform, Diagonal::Right),
            Err(Error::NoFreeNodes)
        ));
        let m = gen_structured_2d(32, 32, Grading::Uniform, Diagonal::Right).unwrap();
        assert_eq!(m.n_elements(), 2048);
        assert!((0..2048).all(|k| (m.volume(k) - 1.0 / 2048.0).abs() < 1e-16));
        let m = gen_structured_2d(4, 256, Grading::Uniform, Diagonal::Right).unwrap();
        let max_ar = (0..m.n_elements()).map(|k| m.aspect_ratio(k)).fold(0.0, f64::max);
        // hypotenuse over short leg of a 1/4 × 1/256 right triangle
        let oracle = (0.25f64.powi(2) + (1.0 / 256f64).powi(2)).sqrt() * 256.0;
        assert!((max_ar - oracle).abs() < 1e-9);
        assert!((max_ar - 64.0).abs() < 0.01);
    }

    #[test]
    fn domain_volume_for_all_patterns() {
        for d in [Diagonal::Right, Diagonal::Left, Diagonal::Alternating] {
            for g in [Grading::Uniform, Grading::Geometric(0.8, 1.25)] {
                let m = gen_structured_2d(7, 5, g, d).unwrap();
                assert!((m.total_volume() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn graded_axis_progression() {
        let xs = graded_axis(5, 2.0).unwrap();
        let h: Vec<f64> = xs.windows(2).map(|p| p[1] - p[0]).collect();
        for k in 1..5 {
            assert!((h[k] / h[k - 1] - 2.0).abs() < 1e-12);
        }
        assert!(graded_axis(200, 1e-3).is_err());
        assert!(graded_axis(4, -1.0).is_err());
    }

    #[test]
    fn groundwater_layout() {
        let m = gen_groundwater_like(&GroundwaterParams::default()).unwrap();
        assert!((m.total_volume() - 1e4).abs() < 1e-8);
        let strip_area: f64 = (0..m.n_elements())
            .filter(|&k| m.region(k) == Some(STRIP_REGION))
            .map(|k| m.volume(k))
            .sum();
        assert!((strip_area - 2.0 * 80.0 * 4.0).abs() < 1e-8);
        assert!(m.markers().contains(&NodeMarker::Neumann));
    }

    #[test]
    fn aligned_strips_are_valid() {
        let p = AlignedStripParams::default();
        let m = gen_aligned_strips_2d(&p, |x, y| std::f64::consts::PI * x.sin() * y.cos()).unwrap();
        assert_eq!(m.n_elements(), 2 * p.strips * p.cells);
        assert!(m.n_free() > 0);
    }

    #[test]
    fn perturbed_grid_volume() {
        let m = gen_perturbed_grid_2d(9, 6, 0.35, 3).unwrap();
        assert!((m.total_volume() - 1.0).abs() < 1e-12);
        let m = gen_random_1d(30, 0.4, 5).unwrap();
        assert!((m.total_volume() - 1.0).abs() < 1e-12);
    }
}
