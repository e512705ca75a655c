//! P1 mass, lumped mass and stiffness matrices on the free nodes.

use crate::field::{element_averages, TensorField};
use crate::mesh::{reference_gradients, SimplicialMesh};
use crate::small::{factorial, Mat};
use crate::sparse::SparseSymMatrix;
use crate::{Error, Result};

/// Numbering of the free (interior and Neumann) nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMap {
    node_to_dof: Vec<Option<usize>>,
    dof_to_node: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &SimplicialMesh) -> Result<Self> {
        let mut node_to_dof = vec![None; mesh.n_nodes()];
        let mut dof_to_node = Vec::new();
        for (i, m) in mesh.markers().iter().enumerate() {
            if m.is_free() {
                node_to_dof[i] = Some(dof_to_node.len());
                dof_to_node.push(i);
            }
        }
        if dof_to_node.is_empty() {
            return Err(Error::NoFreeNodes);
        }
        Ok(DofMap { node_to_dof, dof_to_node })
    }

    /// `N_vi`
    pub fn len(&self) -> usize {
        self.dof_to_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_to_node.is_empty()
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    pub fn node(&self, dof: usize) -> usize {
        self.dof_to_node[dof]
    }

    /// Expands a free-node vector to all nodes, with zeros on Dirichlet nodes.
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        self.node_to_dof.iter().map(|d| d.map_or(0.0, |k| u[k])).collect()
    }
}

/// `C_∇ = d/(d+1) · (√(d+1)/d!)^{2/d}`, the squared reference gradient norm.
pub fn c_nabla(d: usize) -> f64 {
    let df = d as f64;
    df / (df + 1.0) * ((df + 1.0).sqrt() / factorial(d)).powf(2.0 / df)
}

/// `C_# = C_∇ (d+1)(d+2) / 2`.
pub fn c_sharp(d: usize) -> f64 {
    0.5 * c_nabla(d) * ((d + 1) * (d + 2)) as f64
}

/// Physical basis gradients of element `k`, one column per vertex:
/// `(F_K′)⁻ᵀ ∇̂φ̂`.
pub fn element_gradients(mesh: &SimplicialMesh, k: usize) -> Result<Mat> {
    let f = mesh.affine_map(k)?;
    Ok(f.inverse().transpose() * reference_gradients(mesh.dim()))
}

fn scatter(
    mesh: &SimplicialMesh,
    dofs: &DofMap,
    element: impl Fn(usize) -> Result<Mat>,
) -> Result<SparseSymMatrix> {
    let mut t = Vec::with_capacity(mesh.n_elements() * (mesh.dim() + 1) * (mesh.dim() + 2) / 2);
    for k in 0..mesh.n_elements() {
        let local = element(k)?;
        let s = mesh.simplex(k);
        for a in 0..s.len() {
            let Some(i) = dofs.dof(s[a]) else { continue };
            for b in a..s.len() {
                let Some(j) = dofs.dof(s[b]) else { continue };
                t.push((i, j, local[(a, b)]));
            }
        }
    }
    SparseSymMatrix::from_triplets(dofs.len(), t)
}

/// Consistent P1 mass matrix `∫ φ_i φ_j` on the free nodes.
pub fn assemble_mass(mesh: &SimplicialMesh, dofs: &DofMap) -> Result<SparseSymMatrix> {
    let d = mesh.dim();
    let c = 1.0 / ((d + 1) * (d + 2)) as f64;
    scatter(mesh, dofs, |k| {
        let v = mesh.volume(k) * c;
        Ok(Mat::from_fn(d + 1, d + 1, |a, b| if a == b { 2.0 * v } else { v }))
    })
}

/// Lumped mass `Σ_{K∋i} |K|/(d+1)` for every node, free or not.
pub fn lumped_all_nodes(mesh: &SimplicialMesh) -> Vec<f64> {
    let d = mesh.dim();
    let mut m = vec![0.0; mesh.n_nodes()];
    for k in 0..mesh.n_elements() {
        let v = mesh.volume(k) / (d + 1) as f64;
        for &i in mesh.simplex(k) {
            m[i] += v;
        }
    }
    m
}

/// Diagonal lumped mass on the free nodes (full-space row sums).
pub fn assemble_lumped(mesh: &SimplicialMesh, dofs: &DofMap) -> Result<SparseSymMatrix> {
    let all = lumped_all_nodes(mesh);
    SparseSymMatrix::from_diagonal((0..dofs.len()).map(|i| all[dofs.node(i)]).collect())
}

/// Stiffness matrix `∫ ∇φ_i · D ∇φ_j` using per-element averages `D_K`.
pub fn assemble_stiffness_with(mesh: &SimplicialMesh, dofs: &DofMap, dk: &[Mat]) -> Result<SparseSymMatrix> {
    if dk.len() != mesh.n_elements() {
        return Err(Error::DimensionMismatch(format!(
            "{} element tensors for {} elements",
            dk.len(),
            mesh.n_elements()
        )));
    }
    scatter(mesh, dofs, |k| {
        let g = element_gradients(mesh, k)?;
        Ok(g.transpose() * &dk[k] * g * mesh.volume(k))
    })
}

pub fn assemble_stiffness(
    mesh: &SimplicialMesh,
    dofs: &DofMap,
    field: &TensorField,
    quad_order: usize,
) -> Result<SparseSymMatrix> {
    let dk = element_averages(field, mesh, quad_order)?;
    assemble_stiffness_with(mesh, dofs, &dk)
}

/// Diagonal of a stored matrix.
pub fn diag_of(m: &SparseSymMatrix) -> Vec<f64> {
    m.diag()
}

/// Which mass matrix plays the role of `M̃`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassKind {
    Full,
    Lumped,
}

impl MassKind {
    pub fn is_lumped(self) -> bool {
        self == MassKind::Lumped
    }

    pub fn name(self) -> &'static str {
        match self {
            MassKind::Full => "full",
            MassKind::Lumped => "lumped",
        }
    }
}

/// All matrices of one discretization.
#[derive(Clone, Debug)]
pub struct System {
    pub dofs: DofMap,
    pub mass: SparseSymMatrix,
    pub lumped: SparseSymMatrix,
    pub stiffness: SparseSymMatrix,
    /// Element averages of the diffusion tensor.
    pub dk: Vec<Mat>,
}

impl System {
    pub fn assemble(mesh: &SimplicialMesh, field: &TensorField, quad_order: usize) -> Result<Self> {
        let dofs = DofMap::new(mesh)?;
        let dk = element_averages(field, mesh, quad_order)?;
        Ok(System {
            mass: assemble_mass(mesh, &dofs)?,
            lumped: assemble_lumped(mesh, &dofs)?,
            stiffness: assemble_stiffness_with(mesh, &dofs, &dk)?,
            dofs,
            dk,
        })
    }

    pub fn mass_of(&self, kind: MassKind) -> &SparseSymMatrix {
        match kind {
            MassKind::Full => &self.mass,
            MassKind::Lumped => &self.lumped,
        }
    }
}
