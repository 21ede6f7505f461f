//! Discrete-time algebraic Riccati equation:
//!
//! `P = AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q`
//!
//! solved by a structure-preserving doubling iteration with a
//! Kleinman–Newton fallback, plus closed-form sensitivity Jacobians
//! `∂vec(P)/∂vec(A)` and `∂vec(P)/∂vec(B)` of the solution with respect
//! to the system matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_error, Error, Result};
use crate::linalg::{
    frobenius_norm, is_symmetric_positive_definite, kron, min_symmetric_eigenvalue, spectral_radius,
    unvec, vec_mat, vec_permutation,
};
use crate::model::AffineParametrization;

/// Relative Frobenius residual the solver must reach.
pub const DARE_TOLERANCE: f64 = 1e-10;

/// Cap on doubling steps before the fallback path is tried.
const MAX_DOUBLING_STEPS: usize = 200;

/// Converged solution of the DARE together with the LQR gain.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    /// Symmetric positive definite cost-to-go matrix.
    pub p: DMatrix<f64>,
    /// LQR gain `K = −(R + BᵀPB)⁻¹BᵀPA`; the closed loop is `A + BK`.
    pub k: DMatrix<f64>,
    /// Frobenius norm of the DARE residual at `p`.
    pub residual: f64,
    /// Iterations spent by the solver.
    pub iterations: usize,
}

/// Jacobians of the DARE solution with respect to the system matrices,
/// in vectorized form.
#[derive(Debug, Clone)]
pub struct RiccatiJacobians {
    /// `∂vec(P)/∂vec(A)`, an `n² × n²` matrix.
    pub dp_da: DMatrix<f64>,
    /// `∂vec(P)/∂vec(B)`, an `n² × nm` matrix.
    pub dp_db: DMatrix<f64>,
}

fn dare_residual_matrix(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    let btpb = b.transpose() * p * b;
    let m3 = r + btpb;
    let m3_inv = m3.try_inverse().expect("R + BᵀPB must be invertible for R ≻ 0, P ⪰ 0");
    let btpa = b.transpose() * p * a;
    a.transpose() * p * a - btpa.transpose() * m3_inv * btpa + q - p
}

fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let m3 = r + b.transpose() * p * b;
    let m3_inv = m3.try_inverse().expect("R + BᵀPB must be invertible");
    -(m3_inv * b.transpose() * p * a)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Structure-preserving doubling iteration. Returns the candidate `P`
/// and the number of doubling steps, or `None` when an intermediate
/// system is singular or the iterates lose finiteness.
fn doubling_iteration(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, usize)> {
    let n = a.nrows();
    let r_inv = r.clone().try_inverse()?;
    let mut ak = a.clone();
    let mut gk = b * r_inv * b.transpose();
    let mut hk = q.clone();

    for step in 1..=MAX_DOUBLING_STEPS {
        let w = DMatrix::identity(n, n) + &gk * &hk;
        let w_inv = w.try_inverse()?;
        let aw = &ak * &w_inv;
        let a_next = &aw * &ak;
        let g_next = &gk + &aw * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w_inv * &ak;

        let delta = frobenius_norm(&(&h_next - &hk));
        ak = a_next;
        gk = g_next;
        hk = h_next;
        symmetrize(&mut gk);
        symmetrize(&mut hk);
        if !hk.iter().all(|v| v.is_finite()) {
            return None;
        }
        if delta <= DARE_TOLERANCE * (1.0 + frobenius_norm(&hk)) {
            return Some((hk, step));
        }
    }
    None
}

/// Solves the discrete Lyapunov equation `P = AᵀPA + C` by the
/// vectorized linear system `(I − Aᵀ⊗Aᵀ) vec(P) = vec(C)`.
fn discrete_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let coeff = DMatrix::identity(n * n, n * n) - kron(&at, &at);
    let rhs = vec_mat(c);
    let sol = coeff.lu().solve(&rhs)?;
    let mut p = unvec(&sol, n, n);
    symmetrize(&mut p);
    Some(p)
}

/// Kleinman–Newton iteration seeded by a stabilizing gain obtained from
/// the finite-horizon Riccati recursion.
fn kleinman_newton(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, usize)> {
    // Fixed-point Riccati recursion from P = Q until the associated gain
    // stabilizes the closed loop.
    let mut p = q.clone();
    let mut k = lqr_gain(a, b, r, &p);
    let mut iters = 0usize;
    const MAX_SEED_ITERS: usize = 10_000;
    while spectral_radius(&(a + b * &k)) >= 1.0 - 1e-12 {
        iters += 1;
        if iters > MAX_SEED_ITERS {
            return None;
        }
        let res = dare_residual_matrix(a, b, q, r, &p);
        p += res;
        symmetrize(&mut p);
        if !p.iter().all(|v| v.is_finite()) {
            return None;
        }
        k = lqr_gain(a, b, r, &p);
    }

    // Newton steps: each solves a discrete Lyapunov equation for the
    // closed-loop cost of the current gain.
    for _ in 0..100 {
        iters += 1;
        let acl = a + b * &k;
        let c = q + k.transpose() * r * &k;
        let p_next = discrete_lyapunov(&acl, &c)?;
        let res = frobenius_norm(&dare_residual_matrix(a, b, q, r, &p_next));
        p = p_next;
        k = lqr_gain(a, b, r, &p);
        if res <= DARE_TOLERANCE * (1.0 + frobenius_norm(&p)) {
            return Some((p, iters));
        }
    }
    None
}

fn validate_weights(q: &DMatrix<f64>, r: &DMatrix<f64>, n: usize, m: usize) -> Result<()> {
    if q.shape() != (n, n) {
        return Err(dim_error("solve_dare Q", format!("{n}x{n}"), format!("{}x{}", q.nrows(), q.ncols())));
    }
    if r.shape() != (m, m) {
        return Err(dim_error("solve_dare R", format!("{m}x{m}"), format!("{}x{}", r.nrows(), r.ncols())));
    }
    if !is_symmetric_positive_definite(q, 1e-10) {
        return Err(Error::NotPositiveDefinite { name: "Q" });
    }
    if !is_symmetric_positive_definite(r, 1e-10) {
        return Err(Error::NotPositiveDefinite { name: "R" });
    }
    Ok(())
}

/// Computes the stabilizing solution of the DARE and the LQR gain.
///
/// Requires `Q ≻ 0` and `R ≻ 0`. Stabilizability of `(A, B)` is detected
/// a posteriori: solver divergence is reported as
/// [`Error::DareNotConverged`].
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<RiccatiSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n {
        return Err(dim_error("solve_dare A", format!("{n}x{n}"), format!("{}x{}", a.nrows(), a.ncols())));
    }
    if b.nrows() != n {
        return Err(dim_error("solve_dare B", format!("{n} rows"), format!("{} rows", b.nrows())));
    }
    validate_weights(q, r, n, m)?;

    let attempt = doubling_iteration(a, b, q, r).or_else(|| kleinman_newton(a, b, q, r));
    let (mut p, iterations) = match attempt {
        Some(v) => v,
        None => {
            return Err(Error::DareNotConverged { residual: f64::INFINITY, iterations: MAX_DOUBLING_STEPS })
        }
    };
    symmetrize(&mut p);
    let residual = frobenius_norm(&dare_residual_matrix(a, b, q, r, &p));
    let k = lqr_gain(a, b, r, &p);

    let accepted = residual <= DARE_TOLERANCE * (1.0 + frobenius_norm(&p))
        && min_symmetric_eigenvalue(&p) > 0.0
        && spectral_radius(&(a + b * &k)) < 1.0;
    if !accepted {
        return Err(Error::DareNotConverged { residual, iterations });
    }
    Ok(RiccatiSolution { p, k, residual, iterations })
}

/// Closed-form Jacobians of the DARE solution, obtained by implicit
/// differentiation of the Riccati map at a converged solution.
///
/// With `M₃ = R + BᵀPB`, `M₂ = M₃⁻¹`, `M₁ = P − PBM₂BᵀP`:
///
/// `Z₁ = I − (Aᵀ⊗Aᵀ)(I − PBM₂Bᵀ⊗I − I⊗PBM₂Bᵀ + (PB⊗PB)(M₂⊗M₂)(Bᵀ⊗Bᵀ))`
/// `Z₂ = (V_{n,n} + I)(I_n ⊗ AᵀM₁)`
/// `Z₃ = (Aᵀ⊗Aᵀ)((PB⊗PB)(M₂⊗M₂)(I + V_{m,m})(I_m ⊗ BᵀP) − (I + V_{n,n})(PBM₂ ⊗ P))`
///
/// and `∂vec(P)/∂vec(A) = Z₁⁻¹Z₂`, `∂vec(P)/∂vec(B) = Z₁⁻¹Z₃`.
/// `Z₁` also equals `I − (A+BK)ᵀ ⊗ (A+BK)ᵀ` and is invertible whenever
/// the closed loop is Schur stable.
pub fn riccati_jacobians(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    _q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    sol: &RiccatiSolution,
) -> Result<RiccatiJacobians> {
    let n = a.nrows();
    let m = b.ncols();
    let p = &sol.p;
    let at = a.transpose();
    let bt = b.transpose();

    let m3 = r + &bt * p * b;
    let m2 = m3.try_inverse().expect("R + BᵀPB invertible at a converged solution");
    let m1 = p - p * b * &m2 * &bt * p;

    let id_n2 = DMatrix::<f64>::identity(n * n, n * n);
    let id_n = DMatrix::<f64>::identity(n, n);
    let id_m = DMatrix::<f64>::identity(m, m);
    let id_m2 = DMatrix::<f64>::identity(m * m, m * m);
    let at_kron_at = kron(&at, &at);
    let pbm2bt = p * b * &m2 * &bt;
    let pb = p * b;

    let z1 = &id_n2
        - &at_kron_at
            * (&id_n2 - kron(&pbm2bt, &id_n) - kron(&id_n, &pbm2bt)
                + kron(&pb, &pb) * kron(&m2, &m2) * kron(&bt, &bt));

    let v_nn = vec_permutation(n, n);
    let v_mm = vec_permutation(m, m);

    let z2 = (&v_nn + &id_n2) * kron(&id_n, &(&at * &m1));

    let z3 = &at_kron_at
        * (kron(&pb, &pb) * kron(&m2, &m2) * (&id_m2 + &v_mm) * kron(&id_m, &(&bt * p))
            - (&id_n2 + &v_nn) * kron(&(p * b * &m2), p));

    // Condition estimate of Z1 via its singular values.
    let sv = z1.singular_values();
    let smax = sv[0];
    let smin = sv[sv.len() - 1];
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > 1e12 {
        return Err(Error::MarginallyStable { condition });
    }

    let lu = z1.lu();
    let dp_da = lu.solve(&z2).ok_or(Error::MarginallyStable { condition })?;
    let dp_db = lu.solve(&z3).ok_or(Error::MarginallyStable { condition })?;
    Ok(RiccatiJacobians { dp_da, dp_db })
}

/// The alternative closed-loop form of the sensitivity system matrix,
/// `I − (A+BK)ᵀ ⊗ (A+BK)ᵀ`.
pub fn z1_closed_loop_form(a: &DMatrix<f64>, b: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let acl_t = (a + b * k).transpose();
    DMatrix::identity(n * n, n * n) - kron(&acl_t, &acl_t)
}

/// Central-difference Jacobian of `vec(K_LQR(θ))` with respect to `θ`,
/// column `i` being `(vec(K(θ+h eᵢ)) − vec(K(θ−h eᵢ)))/(2h)`.
///
/// The caller must keep `θ ± h eᵢ` inside the stabilizable region;
/// a DARE failure at any probe point propagates.
pub fn gain_jacobian_fd(
    par: &AffineParametrization,
    theta: &DVector<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    assert!(h > 0.0, "gain_jacobian_fd: step must be positive");
    let p_dim = par.param_dim();
    let mn = par.input_dim() * par.state_dim();
    let mut jac = DMatrix::zeros(mn, p_dim);
    for i in 0..p_dim {
        let mut plus = theta.clone();
        plus[i] += h;
        let mut minus = theta.clone();
        minus[i] -= h;
        let (ap, bp) = par.eval_system(&plus)?;
        let (am, bm) = par.eval_system(&minus)?;
        let kp = solve_dare(&ap, &bp, q, r)?.k;
        let km = solve_dare(&am, &bm, q, r)?.k;
        let col = (vec_mat(&kp) - vec_mat(&km)) / (2.0 * h);
        jac.set_column(i, &col);
    }
    Ok(jac)
}
