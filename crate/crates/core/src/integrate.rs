//! First-order Runge–Kutta–Chebyshev stepping for `M~ U' = −A U` with norm
//! monitors.

use std::fmt::Write as _;

use serde::Serialize;

use crate::assembly::MassKind;
use crate::sparse::{MassSolver, SparseSymMatrix};
use crate::{Error, Result};

/// Norms above this are treated as a blow-up.
pub const OVERFLOW: f64 = 1e100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChebyshevScheme {
    pub s: usize,
    pub damping: f64,
    pub mass_kind: MassKind,
    w0: f64,
    w1: f64,
}

/// `(T_n(x), T_n′(x))` by the three-term recurrence.
fn chebyshev_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut t0, mut t1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    if n == 0 {
        return (t0, d0);
    }
    for _ in 1..n {
        let t2 = 2.0 * x * t1 - t0;
        let d2 = 2.0 * t1 + 2.0 * x * d1 - d0;
        (t0, t1, d0, d1) = (t1, t2, d1, d2);
    }
    (t1, d1)
}

pub fn chebyshev_t(n: usize, x: f64) -> f64 {
    chebyshev_with_derivative(n, x).0
}

impl ChebyshevScheme {
    /// `s`-stage scheme with damping `η ≥ 0`; `η = 0` gives `R(z) = T_s(1 + z/s²)`
    /// stable on `[−2s², 0]`.
    pub fn new(s: usize, damping: f64, mass_kind: MassKind) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidArgument("stage count must be at least 1".into()));
        }
        if !(damping >= 0.0 && damping.is_finite()) {
            return Err(Error::InvalidArgument("damping must be nonnegative".into()));
        }
        let w0 = 1.0 + damping / (s * s) as f64;
        let (t, dt) = chebyshev_with_derivative(s, w0);
        Ok(ChebyshevScheme { s, damping, mass_kind, w0, w1: t / dt })
    }

    /// Length `β` of the real stability interval `[−β, 0]`.
    pub fn beta(&self) -> f64 {
        (1.0 + self.w0) / self.w1
    }

    /// Largest stable step for a pencil with largest eigenvalue `lambda`.
    pub fn tau_max(&self, lambda: f64) -> f64 {
        self.beta() / lambda
    }
}

/// `R(z) = T_s(ω₀ + ω₁ z) / T_s(ω₀)`.
pub fn stability_poly_eval(scheme: &ChebyshevScheme, z: f64) -> f64 {
    chebyshev_t(scheme.s, scheme.w0 + scheme.w1 * z) / chebyshev_t(scheme.s, scheme.w0)
}

/// One step `U ← R(−τ M~⁻¹A) U` through the stage recurrence.
pub fn step(scheme: &ChebyshevScheme, mass: &MassSolver, a: &SparseSymMatrix, u: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument("time step must be positive".into()));
    }
    if u.len() != a.n() {
        return Err(Error::DimensionMismatch(format!("vector has {} entries, operator {}", u.len(), a.n())));
    }
    // τ J y with J = −M~⁻¹A
    let apply = |y: &[f64]| -> Result<Vec<f64>> {
        let mut r = mass.solve(&a.matvec(y))?;
        r.iter_mut().for_each(|v| *v *= -tau);
        Ok(r)
    };
    let (w0, w1) = (scheme.w0, scheme.w1);
    let b = |j: usize| 1.0 / chebyshev_t(j, w0);
    let y0 = u.to_vec();
    let f0 = apply(&y0)?;
    let mut prev = y0;
    let mut cur: Vec<f64> = prev.iter().zip(&f0).map(|(y, f)| y + b(1) * w1 * f).collect();
    for j in 2..=scheme.s {
        let (bj, bj1, bj2) = (b(j), b(j - 1), b(j - 2));
        let mu = 2.0 * bj * w0 / bj1;
        let nu = -bj / bj2;
        let mut_ = 2.0 * bj * w1 / bj1;
        let f = apply(&cur)?;
        let next: Vec<f64> =
            (0..cur.len()).map(|i| mu * cur[i] + nu * prev[i] + mut_ * f[i]).collect();
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `((UᵀMU)^{1/2}, (UᵀAU)^{1/2})`.
pub fn norms(u: &[f64], m_norm: &SparseSymMatrix, a: &SparseSymMatrix) -> (f64, f64) {
    (m_norm.quad_form(u).max(0.0).sqrt(), a.quad_form(u).max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormTrace {
    pub tau: f64,
    pub l2: Vec<f64>,
    pub energy: Vec<f64>,
    /// First step whose norm exceeded [`OVERFLOW`]; the trace stops there.
    pub overflow_step: Option<usize>,
}

impl NormTrace {
    /// First step `n` at which either norm grew by more than `rel_tol` times
    /// its initial value.
    pub fn first_increase(&self, rel_tol: f64) -> Option<usize> {
        let check = |v: &[f64]| {
            let tol = rel_tol * v[0];
            v.windows(2).position(|w| w[1] > w[0] + tol).map(|p| p + 1)
        };
        match (check(&self.l2), check(&self.energy)) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn is_contractive(&self, rel_tol: f64) -> bool {
        self.overflow_step.is_none() && self.first_increase(rel_tol).is_none()
    }

    /// CSV with columns `step,time,l2,energy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,time,l2,energy\n");
        for (n, (l, e)) in self.l2.iter().zip(&self.energy).enumerate() {
            let _ = writeln!(s, "{n},{:e},{:e},{:e}", n as f64 * self.tau, l, e);
        }
        s
    }
}

/// Runs `steps` steps from `u0`, recording norms after every step. The L²
/// norm is taken in `m_norm`, which need not be the stepping mass matrix.
pub fn integrate(
    scheme: &ChebyshevScheme,
    mass: &MassSolver,
    m_norm: &SparseSymMatrix,
    a: &SparseSymMatrix,
    u0: &[f64],
    tau: f64,
    steps: usize,
) -> Result<NormTrace> {
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    let (l, e) = norms(u0, m_norm, a);
    let mut trace = NormTrace { tau, l2: vec![l], energy: vec![e], overflow_step: None };
    let mut u = u0.to_vec();
    for n in 1..=steps {
        u = step(scheme, mass, a, &u, tau)?;
        let (l, e) = norms(&u, m_norm, a);
        trace.l2.push(l);
        trace.energy.push(e);
        if !(l <= OVERFLOW && e <= OVERFLOW) {
            trace.overflow_step = Some(n);
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::System;
    use crate::field::TensorField;
    use crate::mesh::gen_uniform_1d;
    use crate::small::Mat;
    use rand::{Rng, SeedableRng};

    fn scheme(s: usize) -> ChebyshevScheme {
        ChebyshevScheme::new(s, 0.0, MassKind::Full).unwrap()
    }

    #[test]
    fn polynomial_values() {
        for s in [1, 2, 5, 10] {
            let sc = scheme(s);
            assert!((stability_poly_eval(&sc, 0.0) - 1.0).abs() < 1e-15);
            assert!((sc.beta() - 2.0 * (s * s) as f64).abs() < 1e-9 * (s * s) as f64);
            // first-order consistency R′(0) = 1
            let h = 1e-6;
            let d = (stability_poly_eval(&sc, h) - stability_poly_eval(&sc, -h)) / (2.0 * h);
            assert!((d - 1.0).abs() < 1e-6);
        }
        assert!((stability_poly_eval(&scheme(2), -8.0) - 1.0).abs() < 1e-14);
        let v = stability_poly_eval(&scheme(5), -30.0);
        let oracle = (5.0 * (-0.2f64).acos()).cos();
        assert!((v - oracle).abs() < 1e-14);
    }

    #[test]
    fn bounded_on_interval() {
        for s in [1, 2, 3, 5, 10, 20] {
            let sc = scheme(s);
            let beta = sc.beta();
            let n = 10 * s + 1;
            for k in 0..n {
                let x = (std::f64::consts::PI * (k as f64 + 0.5) / n as f64).cos();
                let z = -0.5 * beta * (1.0 + x);
                assert!(stability_poly_eval(&sc, z).abs() <= 1.0 + 1e-12);
            }
        }
        let damped = ChebyshevScheme::new(5, 0.05, MassKind::Full).unwrap();
        assert!(damped.beta() < 50.0);
        assert!(stability_poly_eval(&damped, -damped.beta()).abs() < 1.0);
    }

    fn system(n: usize) -> System {
        System::assemble(&gen_uniform_1d(n).unwrap(), &TensorField::Per1d { eps: 0.25 }, 4).unwrap()
    }

    #[test]
    fn zero_and_euler() {
        let s = system(8);
        let solver = MassSolver::new(&s.mass).unwrap();
        let z = step(&scheme(3), &solver, &s.stiffness, &[0.0; 7], 1e-3).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        let u: Vec<f64> = (0..7).map(|i| (i as f64).cos()).collect();
        let e = step(&scheme(1), &solver, &s.stiffness, &u, 1e-3).unwrap();
        let mau = solver.solve(&s.stiffness.matvec(&u)).unwrap();
        for i in 0..7 {
            assert!((e[i] - (u[i] - 1e-3 * mau[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_dense_polynomial() {
        let s = system(8);
        let b = s.mass.to_dense().lu().solve(&s.stiffness.to_dense()).unwrap();
        let solver = MassSolver::new(&s.mass).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for sc in [scheme(4), ChebyshevScheme::new(6, 0.05, MassKind::Full).unwrap()] {
            let tau = 0.7 * sc.beta() / 2000.0;
            // Horner-free evaluation: T_j(ω₀ I − ω₁τB) by recurrence on matrices
            let n = 7;
            let x = Mat::identity(n, n) * sc.w0 - &b * (sc.w1 * tau);
            let (mut t0, mut t1) = (Mat::identity(n, n), x.clone());
            for _ in 1..sc.s {
                let t2 = &x * &t1 * 2.0 - &t0;
                t0 = t1;
                t1 = t2;
            }
            let r = t1 / chebyshev_t(sc.s, sc.w0);
            for _ in 0..5 {
                let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let got = step(&sc, &solver, &s.stiffness, &u, tau).unwrap();
                let want = &r * nalgebra::DVector::from_vec(u);
                let err = (nalgebra::DVector::from_vec(got) - &want).norm() / want.norm();
                assert!(err < 1e-10, "{err}");
            }
        }
    }

    #[test]
    fn norms_basis_vectors() {
        let s = system(6);
        assert_eq!(norms(&[0.0; 5], &s.mass, &s.stiffness), (0.0, 0.0));
        let mut e = vec![0.0; 5];
        e[2] = 1.0;
        let (l, en) = norms(&e, &s.mass, &s.stiffness);
        assert!((l - s.mass.get(2, 2).sqrt()).abs() < 1e-15);
        assert!((en - s.stiffness.get(2, 2).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn steps_zero_rejected() {
        let s = system(6);
        let solver = MassSolver::new(&s.mass).unwrap();
        assert!(integrate(&scheme(1), &solver, &s.mass, &s.stiffness, &[1.0; 5], 1e-3, 0).is_err());
    }

    #[test]
    fn trace_csv_and_monotonicity() {
        let t = NormTrace { tau: 0.5, l2: vec![1.0, 0.9, 0.95], energy: vec![2.0, 1.0, 0.5], overflow_step: None };
        assert_eq!(t.first_increase(1e-12), Some(2));
        assert!(t.to_csv().starts_with("step,time,l2,energy\n0,0e0,"));
    }
}
