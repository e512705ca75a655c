//! Simplicial meshes in one to three dimensions.
//!
//! A [`SimplicialMesh`] is immutable once validated. Element orientation is
//! canonicalized at construction so that every signed volume is positive.

mod generators;
mod io;

pub use generators::{
    gen_aligned_strips_2d, gen_equidistributed_1d, gen_groundwater_like, gen_perturbed_grid_2d,
    gen_random_1d, gen_structured_2d, gen_structured_2d_axes, gen_uniform_1d, graded_axis,
    AlignedStripParams, Diagonal, Grading, GroundwaterParams,
};
pub use io::{load_mesh, parse_mesh, save_mesh, write_mesh};

use crate::small::{factorial, Mat};
use crate::{Error, Result};

/// Boundary condition attached to a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeMarker {
    Interior,
    Dirichlet,
    Neumann,
}

impl NodeMarker {
    pub fn code(self) -> u8 {
        match self {
            NodeMarker::Interior => 0,
            NodeMarker::Dirichlet => 1,
            NodeMarker::Neumann => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(NodeMarker::Interior),
            1 => Some(NodeMarker::Dirichlet),
            2 => Some(NodeMarker::Neumann),
            _ => None,
        }
    }

    /// Interior and Neumann nodes carry unknowns.
    pub fn is_free(self) -> bool {
        !matches!(self, NodeMarker::Dirichlet)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplicialMesh {
    dim: usize,
    coords: Vec<f64>,
    cells: Vec<usize>,
    markers: Vec<NodeMarker>,
    regions: Option<Vec<i64>>,
}

impl SimplicialMesh {
    /// Builds and validates a mesh. `coords` is node-major with stride `dim`,
    /// `cells` is element-major with stride `dim + 1`.
    pub fn new(
        dim: usize,
        coords: Vec<f64>,
        cells: Vec<usize>,
        markers: Vec<NodeMarker>,
        regions: Option<Vec<i64>>,
    ) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Validation(format!("dimension {dim} not in 1..=3")));
        }
        if coords.len() % dim != 0 {
            return Err(Error::Validation("coordinate array length not a multiple of dim".into()));
        }
        let n_nodes = coords.len() / dim;
        if markers.len() != n_nodes {
            return Err(Error::Validation(format!(
                "{} markers for {} nodes",
                markers.len(),
                n_nodes
            )));
        }
        if cells.is_empty() || cells.len() % (dim + 1) != 0 {
            return Err(Error::Validation("element array empty or malformed".into()));
        }
        let n_cells = cells.len() / (dim + 1);
        if let Some(r) = &regions {
            if r.len() != n_cells {
                return Err(Error::Validation("region tag count differs from element count".into()));
            }
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("non-finite coordinate".into()));
        }
        let mut mesh = SimplicialMesh { dim, coords, cells, markers, regions };
        mesh.validate_and_orient()?;
        Ok(mesh)
    }

    fn validate_and_orient(&mut self) -> Result<()> {
        let d = self.dim;
        let n_nodes = self.n_nodes();
        for k in 0..self.n_elements() {
            let s = &self.cells[k * (d + 1)..(k + 1) * (d + 1)];
            for (a, &i) in s.iter().enumerate() {
                if i >= n_nodes {
                    return Err(Error::Validation(format!(
                        "element {k} references node {i} out of range"
                    )));
                }
                if s[..a].contains(&i) {
                    return Err(Error::Validation(format!("element {k} repeats node {i}")));
                }
            }
            let vol = self.signed_volume(k);
            let scale = self.longest_edge(k).powi(d as i32) / factorial(d);
            if !(vol.abs() > 1e-14 * scale) || !vol.is_finite() {
                return Err(Error::DegenerateElement(k));
            }
            if vol < 0.0 {
                self.cells.swap(k * (d + 1), k * (d + 1) + 1);
            }
        }
        if !self.markers.iter().any(|m| m.is_free()) {
            return Err(Error::NoFreeNodes);
        }
        if !self.markers.contains(&NodeMarker::Dirichlet) {
            return Err(Error::NoDirichlet);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Number of elements `N`.
    pub fn n_elements(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    /// Number of free (interior + Neumann) nodes.
    pub fn n_free(&self) -> usize {
        self.markers.iter().filter(|m| m.is_free()).count()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn simplex(&self, k: usize) -> &[usize] {
        &self.cells[k * (self.dim + 1)..(k + 1) * (self.dim + 1)]
    }

    pub fn marker(&self, i: usize) -> NodeMarker {
        self.markers[i]
    }

    pub fn markers(&self) -> &[NodeMarker] {
        &self.markers
    }

    pub fn region(&self, k: usize) -> Option<i64> {
        self.regions.as_ref().map(|r| r[k])
    }

    pub fn regions(&self) -> Option<&[i64]> {
        self.regions.as_deref()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Edge matrix with columns `p_j - p_0`, j = 1..=d.
    pub fn edge_matrix(&self, k: usize) -> Mat {
        let d = self.dim;
        let s = self.simplex(k);
        let p0 = self.node(s[0]);
        Mat::from_fn(d, d, |r, c| self.node(s[c + 1])[r] - p0[r])
    }

    pub fn signed_volume(&self, k: usize) -> f64 {
        self.edge_matrix(k).determinant() / factorial(self.dim)
    }

    /// Element volume `|K|`.
    pub fn volume(&self, k: usize) -> f64 {
        self.signed_volume(k).abs()
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_elements()).map(|k| self.volume(k)).sum()
    }

    pub fn vertices(&self, k: usize) -> Vec<&[f64]> {
        self.simplex(k).iter().map(|&i| self.node(i)).collect()
    }

    /// Physical point at barycentric coordinates `bary` in element `k`.
    pub fn point_at(&self, k: usize, bary: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (&i, &b) in self.simplex(k).iter().zip(bary) {
            for (xc, pc) in x.iter_mut().zip(self.node(i)) {
                *xc += b * pc;
            }
        }
        x
    }

    pub fn centroid(&self, k: usize) -> Vec<f64> {
        let b = vec![1.0 / (self.dim + 1) as f64; self.dim + 1];
        self.point_at(k, &b)
    }

    pub fn edge_lengths(&self, k: usize) -> Vec<f64> {
        let s = self.simplex(k);
        let mut out = Vec::new();
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                out.push(dist(self.node(s[a]), self.node(s[b])));
            }
        }
        out
    }

    /// Longest edge `h_K`.
    pub fn longest_edge(&self, k: usize) -> f64 {
        self.edge_lengths(k).into_iter().fold(0.0, f64::max)
    }

    /// Longest over shortest edge.
    pub fn aspect_ratio(&self, k: usize) -> f64 {
        let e = self.edge_lengths(k);
        let hi = e.iter().copied().fold(0.0, f64::max);
        let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    }

    /// Affine map from the reference element onto element `k`.
    pub fn affine_map(&self, k: usize) -> Result<AffineMap> {
        AffineMap::of(self, k)
    }

    pub fn patches(&self) -> PatchIndex {
        PatchIndex::build(self)
    }

    /// Element-local face volumes `|V_i|`: face `i` is opposite vertex `i`.
    pub fn face_volumes(&self, k: usize) -> Vec<f64> {
        let id = Mat::identity(self.dim, self.dim);
        self.face_volumes_in_metric(k, &id)
    }

    /// Face volumes measured in a constant metric `g` via Gram determinants.
    pub fn face_volumes_in_metric(&self, k: usize, g: &Mat) -> Vec<f64> {
        let d = self.dim;
        let s = self.simplex(k);
        (0..=d)
            .map(|i| {
                if d == 1 {
                    return 1.0;
                }
                let face: Vec<&[f64]> =
                    s.iter().enumerate().filter(|&(a, _)| a != i).map(|(_, &n)| self.node(n)).collect();
                let edges: Vec<nalgebra::DVector<f64>> = face[1..]
                    .iter()
                    .map(|p| nalgebra::DVector::from_fn(d, |r, _| p[r] - face[0][r]))
                    .collect();
                let m = d - 1;
                let gram = Mat::from_fn(m, m, |a, b| (edges[a].transpose() * g * &edges[b])[(0, 0)]);
                gram.determinant().max(0.0).sqrt() / factorial(m)
            })
            .collect()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Vertices of the equilateral reference simplex of unit volume.
pub fn reference_vertices(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![0.0], vec![1.0]],
        2 => {
            let l = reference_edge(2);
            vec![vec![0.0, 0.0], vec![l, 0.0], vec![0.5 * l, 0.5 * l * 3f64.sqrt()]]
        }
        3 => {
            let a = reference_edge(3);
            vec![
                vec![0.0, 0.0, 0.0],
                vec![a, 0.0, 0.0],
                vec![0.5 * a, 0.5 * a * 3f64.sqrt(), 0.0],
                vec![0.5 * a, a * 3f64.sqrt() / 6.0, a * (2.0f64 / 3.0).sqrt()],
            ]
        }
        _ => panic!("reference simplex only defined for d in 1..=3"),
    }
}

/// Edge length `ĥ` of the reference simplex (all edges are equal).
pub fn reference_edge(dim: usize) -> f64 {
    match dim {
        1 => 1.0,
        2 => 2.0 / 3f64.powf(0.25),
        3 => (6.0 * 2f64.sqrt()).cbrt(),
        _ => panic!("reference simplex only defined for d in 1..=3"),
    }
}

/// Edge matrix of the reference simplex, columns `v̂_j - v̂_0`.
pub fn reference_edge_matrix(dim: usize) -> Mat {
    let v = reference_vertices(dim);
    Mat::from_fn(dim, dim, |r, c| v[c + 1][r] - v[0][r])
}

/// Gradients of the reference barycentric basis functions, one column per vertex.
pub fn reference_gradients(dim: usize) -> Mat {
    let inv_t = reference_edge_matrix(dim)
        .try_inverse()
        .expect("reference simplex is nondegenerate")
        .transpose();
    let mut g = Mat::zeros(dim, dim + 1);
    for j in 0..dim {
        g.set_column(j + 1, &inv_t.column(j));
    }
    let sum = g.columns(1, dim).column_sum();
    g.set_column(0, &(-sum));
    g
}

#[derive(Clone, Debug)]
pub struct AffineMap {
    /// `F_K'`, physical length per reference length.
    pub jacobian: Mat,
    /// `|K| = det(F_K')`.
    pub volume: f64,
}

impl AffineMap {
    fn of(mesh: &SimplicialMesh, k: usize) -> Result<Self> {
        if k >= mesh.n_elements() {
            return Err(Error::InvalidArgument(format!("element {k} out of range")));
        }
        let d = mesh.dim();
        let ref_inv = reference_edge_matrix(d).try_inverse().expect("reference simplex is nondegenerate");
        let jacobian = mesh.edge_matrix(k) * ref_inv;
        let volume = jacobian.determinant();
        if !(volume > 0.0) {
            return Err(Error::DegenerateElement(k));
        }
        Ok(AffineMap { jacobian, volume })
    }

    pub fn inverse(&self) -> Mat {
        self.jacobian.clone().try_inverse().expect("affine map is invertible")
    }
}

/// Node-to-element incidence.
#[derive(Clone, Debug)]
pub struct PatchIndex {
    pub elements: Vec<Vec<usize>>,
    /// `|ω_i|`
    pub volumes: Vec<f64>,
    pub p_max: usize,
}

impl PatchIndex {
    pub fn build(mesh: &SimplicialMesh) -> Self {
        let mut elements = vec![Vec::new(); mesh.n_nodes()];
        let mut volumes = vec![0.0; mesh.n_nodes()];
        for k in 0..mesh.n_elements() {
            let v = mesh.volume(k);
            for &i in mesh.simplex(k) {
                elements[i].push(k);
                volumes[i] += v;
            }
        }
        let p_max = elements.iter().map(Vec::len).max().unwrap_or(0);
        PatchIndex { elements, volumes, p_max }
    }
}
