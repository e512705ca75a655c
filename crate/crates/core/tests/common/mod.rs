#![allow(dead_code)]

use p1stab::field::TensorField;
use p1stab::mesh::{
    gen_aligned_strips_2d, gen_equidistributed_1d, gen_groundwater_like, gen_perturbed_grid_2d, gen_random_1d,
    gen_structured_2d, gen_uniform_1d, AlignedStripParams, Diagonal, Grading, GroundwaterParams, NodeMarker,
    SimplicialMesh,
};
use p1stab::small::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub name: String,
    pub mesh: SimplicialMesh,
    pub fields: Vec<(String, TensorField)>,
}

pub fn fields_for(dim: usize) -> Vec<(String, TensorField)> {
    match dim {
        1 => vec![
            ("identity".into(), TensorField::identity(1)),
            ("per1d".into(), TensorField::Per1d { eps: 1.0 / 16.0 }),
        ],
        2 => vec![
            ("identity".into(), TensorField::identity(2)),
            ("aniso2d".into(), TensorField::Aniso2d { kappa: 1000.0 }),
        ],
        _ => vec![
            ("identity".into(), TensorField::identity(3)),
            ("const-aniso".into(), TensorField::Constant(Mat::from_row_slice(3, 3, &[
                4.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 1.0,
            ]))),
        ],
    }
}

/// Cube `(0,1)³` split into `n³` cells of six tetrahedra each, all sharing
/// the main diagonal of their cell. Interior nodes are moved by up to
/// `jitter · h`.
pub fn kuhn_cube(n: usize, jitter: f64, seed: u64) -> SimplicialMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
    let mut coords = Vec::new();
    let mut markers = Vec::new();
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                let boundary = [i, j, k].iter().any(|&t| t == 0 || t == n);
                for t in [i, j, k] {
                    let shift = if boundary { 0.0 } else { jitter * h * rng.gen_range(-1.0..1.0) };
                    coords.push(t as f64 * h + shift);
                }
                markers.push(if boundary { NodeMarker::Dirichlet } else { NodeMarker::Interior });
            }
        }
    }
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut cells = Vec::new();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for p in perms {
                    let mut c = [i, j, k];
                    cells.push(idx(c[0], c[1], c[2]));
                    for axis in p {
                        c[axis] += 1;
                        cells.push(idx(c[0], c[1], c[2]));
                    }
                }
            }
        }
    }
    SimplicialMesh::new(3, coords, cells, markers, None).unwrap()
}

/// The fixed mesh suite used by the bracket and identity checks.
pub fn suite() -> Vec<Case> {
    let eps = 1.0 / 16.0;
    let mut meshes: Vec<(String, SimplicialMesh)> = vec![
        ("uniform1d-16".into(), gen_uniform_1d(16).unwrap()),
        ("uniform1d-64".into(), gen_uniform_1d(64).unwrap()),
        ("random1d-50".into(), gen_random_1d(50, 0.4, 1).unwrap()),
        (
            "dinv1d-64".into(),
            gen_equidistributed_1d(64, |x| p1stab::field::per1d_value(eps, x).recip().sqrt()).unwrap(),
        ),
    ];
    for d in [Diagonal::Right, Diagonal::Left, Diagonal::Alternating] {
        meshes.push((format!("grid-8x8-{d:?}"), gen_structured_2d(8, 8, Grading::Uniform, d).unwrap()));
    }
    meshes.push(("grid-4x64".into(), gen_structured_2d(4, 64, Grading::Uniform, Diagonal::Right).unwrap()));
    meshes.push((
        "graded-8x8".into(),
        gen_structured_2d(8, 8, Grading::Geometric(1.3, 1.3), Diagonal::Alternating).unwrap(),
    ));
    for seed in 1..=3 {
        meshes.push((format!("perturbed-10x10-{seed}"), gen_perturbed_grid_2d(10, 10, 0.3, seed).unwrap()));
    }
    meshes.push(("groundwater-4".into(), gen_groundwater_like(&GroundwaterParams { cells: 4, ..Default::default() }).unwrap()));
    meshes.push((
        "aligned".into(),
        gen_aligned_strips_2d(&AlignedStripParams::default(), p1stab::field::aniso2d_angle).unwrap(),
    ));
    meshes.push(("kuhn-3".into(), kuhn_cube(3, 0.0, 0)));
    meshes.push(("kuhn-4-jitter".into(), kuhn_cube(4, 0.25, 7)));
    meshes
        .into_iter()
        .map(|(name, mesh)| {
            let fields = fields_for(mesh.dim());
            Case { name, mesh, fields }
        })
        .collect()
}

/// Randomized meshes: jittered 1D, perturbed 2D grids and jittered cubes.
pub fn random_meshes(count_1d: usize, count_2d: usize, count_3d: usize, seed: u64) -> Vec<(String, SimplicialMesh)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..count_1d {
        let n = rng.gen_range(8..400);
        out.push((format!("random1d-{n}-{i}"), gen_random_1d(n, 0.45, seed + i as u64).unwrap()));
    }
    for i in 0..count_2d {
        let (nx, ny) = (rng.gen_range(3..20), rng.gen_range(3..20));
        out.push((format!("perturbed-{nx}x{ny}-{i}"), gen_perturbed_grid_2d(nx, ny, 0.35, seed + 100 + i as u64).unwrap()));
    }
    for i in 0..count_3d {
        let n = rng.gen_range(2..5);
        out.push((format!("kuhn-{n}-{i}"), kuhn_cube(n, 0.2, seed + 200 + i as u64)));
    }
    out
}
