//! Runtime certificates: the per-step estimator inequalities, the exact
//! LQR Lyapunov decrease identity, the joint Lyapunov trace, and the
//! empirical ℓ² accounting of the closed loop.
//!
//! Each check reports slack = RHS − LHS of the certified inequality, so
//! nonnegative slack (up to floating-point tolerance) means the
//! certificate held.

use nalgebra::DMatrix;

use crate::controller::{ce_lqr_solution, PolicyCache};
use crate::error::{Error, Result};
use crate::linalg::min_symmetric_eigenvalue;
use crate::model::{AffineParametrization, ParamBox};
use crate::sim::{PolicyMode, TrajectoryLog};

/// Default absolute slack tolerance: the inequalities are exact in real
/// arithmetic, the slack covers rounding over long horizons.
pub const DEFAULT_SLACK_TOLERANCE: f64 = 1e-8;

/// Per-step slack series of one inequality, with precondition
/// bookkeeping (slack is only guaranteed nonnegative at steps where the
/// step-size condition held).
#[derive(Debug, Clone)]
pub struct SlackSeries {
    pub slacks: Vec<f64>,
    pub precondition_held: Vec<bool>,
    /// Minimum slack over steps with satisfied preconditions; `None`
    /// when no step qualified.
    pub min_slack: Option<f64>,
    /// First step violating the inequality beyond `tolerance` while its
    /// precondition held.
    pub first_violation: Option<usize>,
    pub fraction_preconditions_held: f64,
    pub tolerance: f64,
}

impl SlackSeries {
    fn build(slacks: Vec<f64>, held: Vec<bool>, tolerance: f64) -> Self {
        let qualified: Vec<f64> = slacks
            .iter()
            .zip(&held)
            .filter(|(_, h)| **h)
            .map(|(s, _)| *s)
            .collect();
        let min_slack = qualified.iter().copied().fold(None, |acc: Option<f64>, s| {
            Some(acc.map_or(s, |a| a.min(s)))
        });
        let first_violation = slacks
            .iter()
            .zip(&held)
            .position(|(s, h)| *h && *s < -tolerance);
        let frac = if held.is_empty() {
            1.0
        } else {
            held.iter().filter(|h| **h).count() as f64 / held.len() as f64
        };
        Self {
            slacks,
            precondition_held: held,
            min_slack,
            first_violation,
            fraction_preconditions_held: frac,
            tolerance,
        }
    }

    pub fn ok(&self) -> bool {
        self.first_violation.is_none()
    }
}

fn require_linear_plant(log: &TrajectoryLog) -> Result<()> {
    if !log.linear_plant {
        return Err(Error::MissingLogData {
            what: "a linear plant with observable true parameters",
        });
    }
    if log.is_empty() {
        return Err(Error::MissingLogData { what: "at least one logged step" });
    }
    Ok(())
}

/// Parameter-error Lyapunov inequality:
/// `‖φₖ₊₁‖² − ‖φₖ‖² ≤ −μ‖e₁|ₖ‖² + μ‖wₖ‖² + 2d‖Δθₖ‖`.
pub fn check_prop1a(log: &TrajectoryLog, tolerance: f64) -> Result<SlackSeries> {
    require_linear_plant(log)?;
    let mu = log.mu;
    let d = log.param_diameter;
    let mut slacks = Vec::with_capacity(log.len());
    let mut held = Vec::with_capacity(log.len());
    for k in 0..log.len() {
        let rec = &log.steps[k];
        let theta_next = if k + 1 < log.len() { &log.steps[k + 1].theta } else { &log.final_theta };
        let delta_theta = (theta_next - &rec.theta).norm();
        let phi_next_sq = log.phi_at(k + 1).norm_squared();
        let rhs = -mu * rec.e1.norm_squared() + mu * rec.w.norm_squared() + 2.0 * d * delta_theta;
        let lhs = phi_next_sq - rec.phi.norm_squared();
        slacks.push(rhs - lhs);
        held.push(rec.stepsize_ok);
    }
    Ok(SlackSeries::build(slacks, held, tolerance))
}

/// Consecutive-estimate bound: `‖θ̂ₖ₊₁ − θ̂ₖ‖ ≤ √μ‖e₁|ₖ + wₖ‖`.
pub fn check_prop1b(log: &TrajectoryLog, tolerance: f64) -> Result<SlackSeries> {
    require_linear_plant(log)?;
    let sqrt_mu = log.mu.sqrt();
    let mut slacks = Vec::with_capacity(log.len());
    let mut held = Vec::with_capacity(log.len());
    for k in 0..log.len() {
        let rec = &log.steps[k];
        let step_norm = (log.theta_hat_at(k + 1) - &rec.theta_hat).norm();
        let bound = sqrt_mu * (&rec.e1 + &rec.w).norm();
        slacks.push(bound - step_norm);
        held.push(rec.stepsize_ok);
    }
    Ok(SlackSeries::build(slacks, held, tolerance))
}

/// One horizon prefix of the cumulative prediction-error bound.
#[derive(Debug, Clone, Copy)]
pub struct PrefixBound {
    pub horizon: usize,
    /// `Σ₀ᵀ ‖e₁|ₖ‖²`
    pub lhs: f64,
    /// `(1/μ)‖φ₀‖² + Σ₀ᵀ (‖wₖ‖² + (2d/μ)‖Δθₖ‖)`
    pub rhs: f64,
    /// Whether the step-size condition held at every step up to `horizon`.
    pub preconditions_held: bool,
}

/// Cumulative prediction-error bound, evaluated at every prefix.
/// Guaranteed only while the step-size condition has held throughout.
pub fn check_prop1c(log: &TrajectoryLog, tolerance: f64) -> Result<Vec<PrefixBound>> {
    require_linear_plant(log)?;
    let mu = log.mu;
    let d = log.param_diameter;
    let phi0_sq = log.steps[0].phi.norm_squared();
    let mut out = Vec::with_capacity(log.len());
    let mut lhs = 0.0;
    let mut rhs = phi0_sq / mu;
    let mut all_held = true;
    for k in 0..log.len() {
        let rec = &log.steps[k];
        let theta_next = if k + 1 < log.len() { &log.steps[k + 1].theta } else { &log.final_theta };
        let delta_theta = (theta_next - &rec.theta).norm();
        lhs += rec.e1.norm_squared();
        rhs += rec.w.norm_squared() + 2.0 * d / mu * delta_theta;
        all_held &= rec.stepsize_ok;
        out.push(PrefixBound { horizon: k, lhs, rhs, preconditions_held: all_held });
    }
    let _ = tolerance;
    Ok(out)
}

/// True when every prefix with satisfied preconditions respects the
/// bound within tolerance.
pub fn prop1c_ok(prefixes: &[PrefixBound], tolerance: f64) -> bool {
    prefixes
        .iter()
        .filter(|p| p.preconditions_held)
        .all(|p| p.lhs <= p.rhs + tolerance)
}

/// Exact LQR decrease identity on a conforming run (oracle or frozen
/// gain, no disturbance, constant parameter):
/// `V(xₖ₊₁) − V(xₖ) = −xₖᵀ(Q + KᵀRK)xₖ`, checked in relative terms.
///
/// Returns the per-step identity residual `|V⁺ − V + stage| / (1 + V)`.
pub fn check_frozen_lqr_decrease(log: &TrajectoryLog, tolerance: f64) -> Result<SlackSeries> {
    if log.mode == PolicyMode::Adaptive {
        return Err(Error::NonconformingRun {
            requirement: "an oracle or frozen-gain run",
            actual: "adaptive mode".to_string(),
        });
    }
    if !log.disturbance_free || log.explored {
        return Err(Error::NonconformingRun {
            requirement: "a disturbance-free run without exploration noise",
            actual: "nonzero inputs beyond the feedback law".to_string(),
        });
    }
    if log.is_empty() {
        return Err(Error::MissingLogData { what: "at least one logged step" });
    }
    let theta0 = &log.steps[0].theta;
    if log.steps.iter().any(|r| &r.theta != theta0) {
        return Err(Error::NonconformingRun {
            requirement: "a constant true parameter",
            actual: "time-varying parameter trajectory".to_string(),
        });
    }
    let mut slacks = Vec::with_capacity(log.len());
    for k in 0..log.len() {
        let rec = &log.steps[k];
        let v_next = log.v_at(k + 1);
        let residual = (v_next - rec.v + rec.stage_cost).abs() / (1.0 + rec.v);
        // Stored as slack = tolerance − residual so the usual "slack ≥ 0"
        // reading applies.
        slacks.push(tolerance - residual);
    }
    let held = vec![true; log.len()];
    Ok(SlackSeries::build(slacks, held, 0.0))
}

/// Empirical ℓ² accounting of one trajectory.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub sum_x_sq: f64,
    pub sum_w_sq: f64,
    pub sum_dtheta: f64,
    pub sum_e1_sq: f64,
    /// `Σ‖x‖² / (Σ‖w‖² + Σ‖Δθ‖ + 1)`; infinite when the run diverged.
    pub empirical_gain: f64,
    /// Fraction of `Σ‖x‖²` accumulated over the final quarter.
    pub state_tail_fraction: f64,
    pub w_l2_empirical: bool,
    pub dtheta_l1_empirical: bool,
    pub bounded: bool,
    pub diverged: bool,
    pub max_state_norm: f64,
}

fn tail_fraction(series: &[f64]) -> f64 {
    let total: f64 = series.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let start = series.len() - series.len() / 4;
    series[start..].iter().sum::<f64>() / total
}

/// Computes partial sums and the empirical finite-gain ratio. The flag
/// `bounded` requires a converging state tail when the disturbance and
/// parameter-variation summability hypotheses hold empirically; when
/// they do not, non-divergence alone earns the flag (and the violated
/// hypothesis is reported).
pub fn l2_gain_report(log: &TrajectoryLog, tail_threshold: f64) -> CertificateReport {
    let x_sq: Vec<f64> = log.steps.iter().map(|r| r.x.norm_squared()).collect();
    let w_sq: Vec<f64> = log.steps.iter().map(|r| r.w.norm_squared()).collect();
    let e1_sq: Vec<f64> = log.steps.iter().map(|r| r.e1.norm_squared()).collect();
    let dtheta: Vec<f64> = (0..log.len())
        .map(|k| {
            let next = if k + 1 < log.len() { &log.steps[k + 1].theta } else { &log.final_theta };
            (next - &log.steps[k].theta).norm()
        })
        .collect();

    let sum_x_sq: f64 = x_sq.iter().sum();
    let sum_w_sq: f64 = w_sq.iter().sum();
    let sum_dtheta: f64 = dtheta.iter().sum();
    let sum_e1_sq: f64 = e1_sq.iter().sum();
    let state_tail = tail_fraction(&x_sq);
    let w_l2 = tail_fraction(&w_sq) < tail_threshold;
    let dtheta_l1 = tail_fraction(&dtheta) < tail_threshold;

    let empirical_gain = if log.diverged {
        f64::INFINITY
    } else {
        sum_x_sq / (sum_w_sq + sum_dtheta + 1.0)
    };
    let bounded = !log.diverged && (!(w_l2 && dtheta_l1) || state_tail < tail_threshold);
    let max_state_norm = log
        .steps
        .iter()
        .map(|r| r.x.norm())
        .chain(std::iter::once(log.final_x.norm()))
        .fold(0.0, f64::max);

    CertificateReport {
        sum_x_sq,
        sum_w_sq,
        sum_dtheta,
        sum_e1_sq,
        empirical_gain,
        state_tail_fraction: state_tail,
        w_l2_empirical: w_l2,
        dtheta_l1_empirical: dtheta_l1,
        bounded,
        diverged: log.diverged,
        max_state_norm,
    }
}

/// The joint Lyapunov trace `Ṽₖ = V(xₖ, θ̂ₖ) + (β/μ)‖φₖ‖²` with its
/// sandwich bounds `q̲‖x‖² + (β/μ)‖φ‖² ≤ Ṽ ≤ p̄‖x‖² + (β/μ)‖φ‖²`.
/// The weight β/μ is user-supplied (the underlying constant is
/// existential); the trace is an inspection aid, not an asserted
/// certificate.
#[derive(Debug, Clone)]
pub struct VtildeTrace {
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `q̲ = λ_min(Q)`.
    pub q_lower: f64,
    /// Grid maximum of `‖P(θ)‖` over Θ.
    pub p_upper: f64,
}

/// Computes the Ṽ trace. `p_upper` comes from a `grid_per_dim` sweep of
/// the DARE over the box.
pub fn vtilde_trace(
    log: &TrajectoryLog,
    beta_over_mu: f64,
    par: &AffineParametrization,
    boxx: &ParamBox,
    grid_per_dim: usize,
) -> Result<VtildeTrace> {
    require_linear_plant(log)?;
    let q_lower = min_symmetric_eigenvalue(&log.q);
    let p_upper = grid_max_p_norm(par, boxx, &log.q, &log.r, grid_per_dim)?;

    let mut values = Vec::with_capacity(log.len());
    let mut lower = Vec::with_capacity(log.len());
    let mut upper = Vec::with_capacity(log.len());
    for rec in &log.steps {
        let phi_term = beta_over_mu * rec.phi.norm_squared();
        values.push(rec.v + phi_term);
        let x_sq = rec.x.norm_squared();
        lower.push(q_lower * x_sq + phi_term);
        upper.push(p_upper * x_sq + phi_term);
    }
    Ok(VtildeTrace { values, lower, upper, q_lower, p_upper })
}

/// Grid maximum of the DARE solution's spectral norm over the box.
pub fn grid_max_p_norm(
    par: &AffineParametrization,
    boxx: &ParamBox,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    grid_per_dim: usize,
) -> Result<f64> {
    assert!(grid_per_dim >= 2);
    let p_dim = boxx.dim();
    let total = grid_per_dim.pow(p_dim as u32);
    let mut cache = PolicyCache::default();
    let mut max_norm: f64 = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let theta = nalgebra::DVector::from_fn(p_dim, |i, _| {
            let _ = i;
            let idx = rem % grid_per_dim;
            rem /= grid_per_dim;
            boxx.lower()[i] + (boxx.upper()[i] - boxx.lower()[i]) * idx as f64 / (grid_per_dim - 1) as f64
        });
        let sol = ce_lqr_solution(par, &theta, q, r, &mut cache)?;
        max_norm = max_norm.max(crate::linalg::spectral_norm(&sol.p));
    }
    Ok(max_norm)
}
