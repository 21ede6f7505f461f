//! Certainty-equivalent policy update `u = K_LQR(θ̂)x`, with an optional
//! gain cache and an empirical Lipschitz probe of the gain map over Θ.

use nalgebra::{DMatrix, DVector};

use crate::dare::{solve_dare, RiccatiSolution};
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::model::{AffineParametrization, ParamBox};

/// Caches the most recent DARE solution keyed by the estimate it was
/// solved at. With `recompute_tol == 0` (the default) every call
/// re-solves, matching the per-step policy update of the algorithm; a
/// positive tolerance turns the cache into an opt-in speedup.
#[derive(Debug, Clone, Default)]
pub struct PolicyCache {
    last_theta: Option<DVector<f64>>,
    last_solution: Option<RiccatiSolution>,
    recompute_tol: f64,
}

impl PolicyCache {
    pub fn new(recompute_tol: f64) -> Self {
        assert!(recompute_tol >= 0.0);
        Self { last_theta: None, last_solution: None, recompute_tol }
    }

    pub fn last_solution(&self) -> Option<&RiccatiSolution> {
        self.last_solution.as_ref()
    }
}

/// Solves (or reuses) the DARE at `θ̂` and returns the full solution.
pub fn ce_lqr_solution(
    par: &AffineParametrization,
    theta_hat: &DVector<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    cache: &mut PolicyCache,
) -> Result<RiccatiSolution> {
    if let (Some(prev), Some(sol)) = (&cache.last_theta, &cache.last_solution) {
        if cache.recompute_tol > 0.0 && (prev - theta_hat).norm() <= cache.recompute_tol {
            return Ok(sol.clone());
        }
        if prev == theta_hat {
            return Ok(sol.clone());
        }
    }
    let (a, b) = par.eval_system(theta_hat)?;
    let sol = solve_dare(&a, &b, q, r).map_err(|e| Error::DareAtEstimate {
        theta: theta_hat.iter().copied().collect(),
        source: Box::new(e),
    })?;
    cache.last_theta = Some(theta_hat.clone());
    cache.last_solution = Some(sol.clone());
    Ok(sol)
}

/// The certainty-equivalent LQR gain at `θ̂`.
pub fn ce_lqr_gain(
    par: &AffineParametrization,
    theta_hat: &DVector<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    cache: &mut PolicyCache,
) -> Result<DMatrix<f64>> {
    Ok(ce_lqr_solution(par, theta_hat, q, r, cache)?.k)
}

/// Applies the static feedback `u = Kx`.
pub fn apply_policy(k: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    k * x
}

/// Empirical lower bound on the Lipschitz constant of `θ ↦ K_LQR(θ)`
/// over the box, from slopes between adjacent points of a uniform grid
/// with `grid_per_dim` points per axis. Monotone nondecreasing under
/// refinement.
pub fn estimate_gain_lipschitz(
    par: &AffineParametrization,
    boxx: &ParamBox,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    grid_per_dim: usize,
) -> Result<f64> {
    assert!(grid_per_dim >= 2, "need at least two grid points per axis");
    let p = boxx.dim();
    let total: usize = grid_per_dim.pow(p as u32);

    let point = |idx: &[usize]| -> DVector<f64> {
        DVector::from_fn(p, |i, _| {
            let lo = boxx.lower()[i];
            let hi = boxx.upper()[i];
            lo + (hi - lo) * idx[i] as f64 / (grid_per_dim - 1) as f64
        })
    };
    let unravel = |mut flat: usize| -> Vec<usize> {
        let mut idx = vec![0usize; p];
        for slot in idx.iter_mut() {
            *slot = flat % grid_per_dim;
            flat /= grid_per_dim;
        }
        idx
    };

    let mut gains: Vec<DMatrix<f64>> = Vec::with_capacity(total);
    for flat in 0..total {
        let theta = point(&unravel(flat));
        let (a, b) = par.eval_system(&theta)?;
        let sol = solve_dare(&a, &b, q, r).map_err(|e| Error::GridPointFailure {
            theta: theta.iter().copied().collect(),
            source: Box::new(e),
        })?;
        gains.push(sol.k);
    }

    let mut max_slope: f64 = 0.0;
    for flat in 0..total {
        let idx = unravel(flat);
        for axis in 0..p {
            if idx[axis] + 1 < grid_per_dim {
                let neighbor = flat + grid_per_dim.pow(axis as u32);
                let t0 = point(&idx);
                let mut idx2 = idx.clone();
                idx2[axis] += 1;
                let t1 = point(&idx2);
                let dist = (t1 - t0).norm();
                if dist > 0.0 {
                    let slope = spectral_norm(&(&gains[neighbor] - &gains[flat])) / dist;
                    max_slope = max_slope.max(slope);
                }
            }
        }
    }
    Ok(max_slope)
}
