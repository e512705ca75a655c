//! Largest eigenvalue of the pencil `(A, M~)`, i.e. of `M~⁻¹A`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::small::Mat;
use crate::sparse::{dot, MassSolver, SparseSymMatrix};
use crate::{Error, Result};

/// Largest dimension handled by the dense eigensolver by default.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EigMethod {
    Dense,
    Lanczos { steps: usize, seed: u64, security: f64 },
    Power { tol: f64, warm_start: bool },
}

#[derive(Clone, Debug, Serialize)]
pub struct EigEstimate {
    pub value: f64,
    pub method: EigMethod,
    /// Relative eigen-residual of the returned value (before any security factor).
    pub residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub vector: Option<Vec<f64>>,
}

fn check_pair(mt: &SparseSymMatrix, a: &SparseSymMatrix) -> Result<()> {
    if mt.n() != a.n() {
        return Err(Error::DimensionMismatch(format!("mass is {}, stiffness is {}", mt.n(), a.n())));
    }
    Ok(())
}

/// Symmetric reduction `C = L⁻¹ A L⁻ᵀ` with `M~ = L Lᵀ`, plus `L⁻ᵀ` for
/// mapping eigenvectors back.
fn reduce_dense(mt: &SparseSymMatrix, a: &SparseSymMatrix) -> Result<(Mat, Mat)> {
    check_pair(mt, a)?;
    let ad = a.to_dense();
    if mt.is_diagonal() {
        let d = mt.diag();
        if let Some(i) = d.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::NotPositiveDefinite(format!("mass diagonal {i} is {}", d[i])));
        }
        let s: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
        let c = Mat::from_fn(ad.nrows(), ad.ncols(), |i, j| ad[(i, j)] * s[i] * s[j]);
        return Ok((c, Mat::from_diagonal(&DVector::from_vec(s))));
    }
    let chol = mt
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("dense Cholesky of the mass matrix".into()))?;
    let l = chol.l();
    let x = l.solve_lower_triangular(&ad).expect("Cholesky factor is nonsingular");
    let c = l.solve_lower_triangular(&x.transpose()).expect("Cholesky factor is nonsingular");
    let linv_t = l.transpose().try_inverse().expect("Cholesky factor is nonsingular");
    Ok((crate::small::symmetrize(&c), linv_t))
}

/// All generalized eigenvalues, ascending.
pub fn generalized_eigenvalues(mt: &SparseSymMatrix, a: &SparseSymMatrix) -> Result<Vec<f64>> {
    let (c, _) = reduce_dense(mt, a)?;
    let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    if !(ev[0] > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("pencil eigenvalue {:e}", ev[0])));
    }
    Ok(ev)
}

/// Largest eigenvalue by dense reduction.
pub fn lambda_max_dense(mt: &SparseSymMatrix, a: &SparseSymMatrix) -> Result<EigEstimate> {
    let ev = generalized_eigenvalues(mt, a)?;
    Ok(EigEstimate {
        value: *ev.last().unwrap(),
        method: EigMethod::Dense,
        residual: 0.0,
        iterations: 0,
        vector: None,
    })
}

/// Dominant eigenpair `(λ, x)` with `A x = λ M~ x` and `xᵀ M~ x = 1`.
pub fn dominant_eigenpair(mt: &SparseSymMatrix, a: &SparseSymMatrix) -> Result<(f64, Vec<f64>)> {
    if a.n() <= DENSE_LIMIT {
        let (c, back) = reduce_dense(mt, a)?;
        let eig = SymmetricEigen::new(c);
        let (imax, lmax) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        let x = back * eig.eigenvectors.column(imax);
        return Ok((lmax, x.iter().copied().collect()));
    }
    let est = lanczos_converged(mt, a, 1e-10)?;
    Ok((est.value, est.vector.unwrap()))
}

/// Largest eigenvalue: dense for `n ≤ DENSE_LIMIT`, otherwise Lanczos run to
/// a relative residual of `1e-10`.
pub fn lambda_max_exact(mt: &SparseSymMatrix, a: &SparseSymMatrix) -> Result<EigEstimate> {
    lambda_max_exact_with_limit(mt, a, DENSE_LIMIT)
}

pub fn lambda_max_exact_with_limit(mt: &SparseSymMatrix, a: &SparseSymMatrix, limit: usize) -> Result<EigEstimate> {
    if a.n() <= limit {
        lambda_max_dense(mt, a)
    } else {
        lanczos_converged(mt, a, 1e-10)
    }
}

struct Krylov {
    alphas: Vec<f64>,
    betas: Vec<f64>,
    basis: Vec<Vec<f64>>,
    /// Set when the space became invariant before the requested size.
    exhausted: bool,
}

/// Lanczos for `M~⁻¹A`, orthonormal in the `M~` inner product, with full
/// reorthogonalization.
struct LanczosRun<'a> {
    mt: &'a SparseSymMatrix,
    a: &'a SparseSymMatrix,
    solver: MassSolver,
}

impl<'a> LanczosRun<'a> {
    fn new(mt: &'a SparseSymMatrix, a: &'a SparseSymMatrix) -> Result<Self> {
        check_pair(mt, a)?;
        Ok(LanczosRun { mt, a, solver: MassSolver::new(mt)? })
    }

    fn m_norm(&self, v: &[f64]) -> f64 {
        self.mt.quad_form(v).max(0.0).sqrt()
    }

    fn start(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..self.a.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = self.m_norm(&v);
        v.iter().map(|x| x / s).collect()
    }

    /// Runs up to `steps` steps; `stop` is consulted after each step.
    fn run(&self, v0: Vec<f64>, steps: usize, mut stop: impl FnMut(&Krylov) -> bool) -> Result<Krylov> {
        let n = self.a.n();
        let mut k = Krylov { alphas: Vec::new(), betas: Vec::new(), basis: vec![v0], exhausted: false };
        let mut mbasis: Vec<Vec<f64>> = vec![self.mt.matvec(&k.basis[0])];
        for j in 0..steps.min(n) {
            let av = self.a.matvec(&k.basis[j]);
            let mut w = self.solver.solve(&av)?;
            let alpha = dot(&av, &k.basis[j]);
            k.alphas.push(alpha);
            // two passes of classical Gram–Schmidt in the M~ inner product
            for _ in 0..2 {
                for (v, mv) in k.basis.iter().zip(&mbasis) {
                    let c = dot(&w, mv);
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let beta = self.m_norm(&w);
            k.betas.push(beta);
            if j + 1 == steps.min(n) || stop(&k) {
                break;
            }
            let scale = k.alphas.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            if !(beta > 1e-12 * scale) {
                k.exhausted = true;
                break;
            }
            let v: Vec<f64> = w.iter().map(|x| x / beta).collect();
            mbasis.push(self.mt.matvec(&v));
            k.basis.push(v);
        }
        Ok(k)
    }
}

/// Eigen-decomposition of the Lanczos tridiagonal: largest Ritz value, its
/// residual estimate `β_m |s_m| / θ`, and the Ritz coefficients.
fn top_ritz(k: &Krylov) -> (f64, f64, DVector<f64>) {
    let m = k.alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            k.alphas[i]
        } else if i + 1 == j || j + 1 == i {
            k.betas[i.min(j)]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let (imax, theta) =
        eig.eigenvalues.iter().copied().enumerate().max_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
    let s = eig.eigenvectors.column(imax).into_owned();
    let beta_m = *k.betas.last().unwrap_or(&0.0);
    let resid = (beta_m * s[m - 1]).abs() / theta.abs();
    (theta, resid, s)
}

/// `steps`-step Lanczos estimate multiplied by `security`.
///
/// A Krylov space that becomes invariant before `steps` steps (and before
/// spanning the whole space) is restarted with seed `seed + 1`, at most three
/// times.
pub fn lambda_max_lanczos(
    mt: &SparseSymMatrix,
    a: &SparseSymMatrix,
    steps: usize,
    seed: u64,
    security: f64,
) -> Result<EigEstimate> {
    if steps == 0 {
        return Err(Error::InvalidArgument("Lanczos needs at least one step".into()));
    }
    if !(security > 0.0) {
        return Err(Error::InvalidArgument("security factor must be positive".into()));
    }
    let run = LanczosRun::new(mt, a)?;
    let want = steps.min(a.n());
    for restart in 0..=3u64 {
        let k = run.run(run.start(seed + restart), want, |_| false)?;
        if k.exhausted && k.alphas.len() < want {
            continue;
        }
        let (theta, residual, _) = top_ritz(&k);
        return Ok(EigEstimate {
            value: theta * security,
            method: EigMethod::Lanczos { steps, seed, security },
            residual,
            iterations: k.alphas.len(),
            vector: None,
        });
    }
    Err(Error::Breakdown(3))
}

/// Lanczos continued until the top Ritz value has relative residual `tol`.
pub fn lanczos_converged(mt: &SparseSymMatrix, a: &SparseSymMatrix, tol: f64) -> Result<EigEstimate> {
    let run = LanczosRun::new(mt, a)?;
    let n = a.n();
    let max_steps = n.min(1500);
    let mut last_check = 0;
    let k = run.run(run.start(0), max_steps, |k| {
        let m = k.alphas.len();
        if m < 10 || m - last_check < 10 {
            return false;
        }
        last_check = m;
        top_ritz(k).1 < tol
    })?;
    let (theta, residual, s) = top_ritz(&k);
    let mut x = vec![0.0; n];
    for (c, v) in s.iter().zip(&k.basis) {
        x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += c * vi);
    }
    if residual > tol && !k.exhausted && k.alphas.len() < n {
        return Err(Error::NoConvergence { iterations: k.alphas.len(), residual });
    }
    Ok(EigEstimate {
        value: theta,
        method: EigMethod::Lanczos { steps: k.alphas.len(), seed: 0, security: 1.0 },
        residual,
        iterations: k.alphas.len(),
        vector: Some(x),
    })
}

/// Power iteration on `M~⁻¹A`, stopped when successive Rayleigh quotients
/// differ by less than `tol` relatively. Fails after 10⁵ iterations.
pub fn lambda_max_power(
    mt: &SparseSymMatrix,
    a: &SparseSymMatrix,
    tol: f64,
    warm_start: Option<&[f64]>,
) -> Result<EigEstimate> {
    check_pair(mt, a)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let solver = MassSolver::new(mt)?;
    let n = a.n();
    let mut x: Vec<f64> = match warm_start {
        Some(v) if v.len() == n => v.to_vec(),
        Some(v) => return Err(Error::DimensionMismatch(format!("warm start has {} entries, need {n}", v.len()))),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        }
    };
    let rayleigh = |x: &[f64]| a.quad_form(x) / mt.quad_form(x);
    let mut rho = rayleigh(&x);
    const CAP: usize = 100_000;
    for it in 1..=CAP {
        let y = solver.solve(&a.matvec(&x))?;
        let s = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(s > 0.0) {
            return Err(Error::Breakdown(0));
        }
        x = y.iter().map(|v| v / s).collect();
        let next = rayleigh(&x);
        let diff = (next - rho).abs() / next.abs();
        rho = next;
        if diff < tol {
            return Ok(EigEstimate {
                value: rho,
                method: EigMethod::Power { tol, warm_start: warm_start.is_some() },
                residual: diff,
                iterations: it,
                vector: Some(x),
            });
        }
    }
    Err(Error::NoConvergence { iterations: CAP, residual: f64::NAN })
}
