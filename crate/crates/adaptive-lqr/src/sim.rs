//! Closed-loop orchestration: per-step gain synthesis, input application,
//! plant step, and LMS update, producing a complete trajectory log.
//! Also runs the frozen-gain baseline and the oracle (true-parameter)
//! controller for comparison.

use nalgebra::{DMatrix, DVector};

use crate::controller::{ce_lqr_solution, PolicyCache};
use crate::error::{Error, Result};
use crate::estimator::{lms_update, predict, stepsize_condition_holds, EstimatorState};
use crate::model::{AffineParametrization, ParamBox};
use crate::plant::{
    quadrotor_linear_disturbance, quadrotor_step_linear, quadrotor_step_nonlinear, seeded_rng,
    standard_normal, DisturbanceModel, ParamTrajectory, QuadrotorParams,
};

/// Which ground-truth dynamics drive the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantKind {
    /// Full nonlinear planar quadrotor; the 2-d actuation disturbance
    /// enters the nonlinear remainder.
    NonlinearQuadrotor(QuadrotorParams),
    /// Linearized quadrotor; the disturbance vector is
    /// `Ts·(0,0,0,θ₁,wᶻ,wᵠ)`.
    LinearQuadrotor(QuadrotorParams),
    /// `x⁺ = A(θ)x + B(θ)u + w` with a full `n`-dimensional disturbance.
    GenericLtv,
}

/// How the feedback gain is chosen each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    /// Per-step certainty-equivalent LQR at the LMS estimate.
    Adaptive,
    /// The initial gain `K_LQR(θ̂₀)` held for the whole run.
    Frozen,
    /// `θ̂ₖ = θₖ`: the true parameter revealed to the controller.
    Oracle,
}

/// Complete description of one closed-loop experiment.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub par: AffineParametrization,
    pub plant: PlantKind,
    pub horizon: usize,
    pub x0: DVector<f64>,
    pub theta_hat0: DVector<f64>,
    pub mu: f64,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub param_box: ParamBox,
    pub param_traj: ParamTrajectory,
    pub disturbance: DisturbanceModel,
    /// Per-component standard deviations of the exploratory input noise
    /// `u = Kx + ε`; `None` disables exploration.
    pub exploration_std: Option<DVector<f64>>,
    pub mode: PolicyMode,
    pub seed: u64,
    pub divergence_threshold: f64,
}

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e6;

impl SimConfig {
    /// Validates the invariants the runner relies on.
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !self.param_box.contains(&self.theta_hat0) {
            return Err(Error::InvalidConfig("initial estimate must lie in the parameter box".into()));
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidConfig("step size mu must be positive".into()));
        }
        if !crate::linalg::is_symmetric_positive_definite(&self.q, 1e-10) {
            return Err(Error::NotPositiveDefinite { name: "Q" });
        }
        if !crate::linalg::is_symmetric_positive_definite(&self.r, 1e-10) {
            return Err(Error::NotPositiveDefinite { name: "R" });
        }
        if self.x0.len() != self.par.state_dim() {
            return Err(Error::InvalidConfig("x0 dimension does not match the parametrization".into()));
        }
        Ok(())
    }
}

/// One logged transition.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub k: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub theta: DVector<f64>,
    pub theta_hat: DVector<f64>,
    /// Disturbance as entering the state equation (an `n`-vector).
    pub w: DVector<f64>,
    /// One-step nominal prediction error `e₁|ₖ = xₖ₊₁ − x̂₁|ₖ − wₖ`.
    pub e1: DVector<f64>,
    /// Estimation error `φₖ = θ̂ₖ − θₖ`.
    pub phi: DVector<f64>,
    /// Lyapunov value `V(xₖ, θ̂ₖ) = xₖᵀ P(θ̂ₖ) xₖ`.
    pub v: f64,
    /// Stage cost `xₖᵀ (Q + KₖᵀRKₖ) xₖ` under the applied gain.
    pub stage_cost: f64,
    /// Whether `1/μ ≥ ‖D(xₖ, uₖ)‖²` held at this step.
    pub stepsize_ok: bool,
}

/// Trajectory log with enough config echo for the diagnostics layer to
/// operate without re-reading the experiment definition.
#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub steps: Vec<StepRecord>,
    pub final_x: DVector<f64>,
    pub final_theta: DVector<f64>,
    pub final_theta_hat: DVector<f64>,
    /// `V(x_T, θ̂_T)` under the gain active at the end of the run.
    pub final_v: f64,
    pub diverged: bool,
    pub mode: PolicyMode,
    pub mu: f64,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub param_diameter: f64,
    pub disturbance_free: bool,
    /// Whether the plant was exactly linear in the logged parameters
    /// (the estimator certificates require this).
    pub linear_plant: bool,
    /// Whether exploration noise was added to the feedback input.
    pub explored: bool,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Estimates `φₖ` at index `k`, including the terminal one.
    pub fn phi_at(&self, k: usize) -> DVector<f64> {
        if k < self.steps.len() {
            self.steps[k].phi.clone()
        } else {
            &self.final_theta_hat - &self.final_theta
        }
    }

    /// `θ̂ₖ` at index `k`, including the terminal one.
    pub fn theta_hat_at(&self, k: usize) -> &DVector<f64> {
        if k < self.steps.len() {
            &self.steps[k].theta_hat
        } else {
            &self.final_theta_hat
        }
    }

    pub fn v_at(&self, k: usize) -> f64 {
        if k < self.steps.len() {
            self.steps[k].v
        } else {
            self.final_v
        }
    }
}

fn plant_step(
    plant: &PlantKind,
    par: &AffineParametrization,
    x: &DVector<f64>,
    u: &DVector<f64>,
    theta: &DVector<f64>,
    disturbance: &DisturbanceModel,
    k: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(DVector<f64>, DVector<f64>)> {
    match plant {
        PlantKind::NonlinearQuadrotor(qp) => {
            let w_act = disturbance.disturbance(k, 2, rng);
            let x_next = quadrotor_step_nonlinear(qp, x, u, theta, &w_act);
            // Logged disturbance: the actuation part of the remainder;
            // the rest of the nonlinearity lands in e₁.
            let w_logged =
                DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, w_act[0], w_act[1]]) * qp.ts;
            Ok((x_next, w_logged))
        }
        PlantKind::LinearQuadrotor(qp) => {
            let w_act = disturbance.disturbance(k, 2, rng);
            let x_next = quadrotor_step_linear(qp, x, u, theta, &w_act);
            Ok((x_next, quadrotor_linear_disturbance(qp, theta, &w_act)))
        }
        PlantKind::GenericLtv => {
            let n = par.state_dim();
            let w = disturbance.disturbance(k, n, rng);
            let (a, b) = par.eval_system(theta)?;
            Ok((a * x + b * u + &w, w))
        }
    }
}

/// Runs one closed-loop experiment.
///
/// Per step, in order: the gain is synthesized from the current estimate,
/// the input is applied, the plant advances, and only then is the
/// estimate updated. A state norm above the divergence threshold stops
/// the run early with the flag set.
pub fn run(config: &SimConfig) -> Result<TrajectoryLog> {
    config.validate()?;
    let par = &config.par;
    let mut rng = seeded_rng(config.seed);
    let mut cache = PolicyCache::default();

    let mut x = config.x0.clone();
    let mut estimator = EstimatorState::new(config.theta_hat0.clone(), config.mu, &config.param_box);

    // Frozen mode keeps the initial solution for the entire run.
    let frozen_solution = if config.mode == PolicyMode::Frozen {
        Some(
            ce_lqr_solution(par, &config.theta_hat0, &config.q, &config.r, &mut cache)
                .map_err(|e| Error::DareAtStep { step: 0, source: Box::new(e) })?,
        )
    } else {
        None
    };

    let mut steps = Vec::with_capacity(config.horizon);
    let mut diverged = false;
    let mut last_solution = frozen_solution.clone();

    for k in 0..config.horizon {
        let theta = config.param_traj.wind_profile(&config.param_box, k);
        let theta_hat = match config.mode {
            PolicyMode::Oracle => theta.clone(),
            _ => estimator.theta_hat().clone(),
        };

        let solution = match &frozen_solution {
            Some(sol) => sol.clone(),
            None => ce_lqr_solution(par, &theta_hat, &config.q, &config.r, &mut cache)
                .map_err(|e| Error::DareAtStep { step: k, source: Box::new(e) })?,
        };

        let mut u = &solution.k * &x;
        if let Some(std) = &config.exploration_std {
            for i in 0..u.len() {
                u[i] += std[i] * standard_normal(&mut rng);
            }
        }

        let (x_next, w_logged) =
            plant_step(&config.plant, par, &x, &u, &theta, &config.disturbance, k, &mut rng)?;

        let x_hat = predict(par, &theta_hat, &x, &u)?;
        let e1 = &x_next - &x_hat - &w_logged;
        let v = (x.transpose() * &solution.p * &x)[(0, 0)];
        let stage = (x.transpose()
            * (&config.q + solution.k.transpose() * &config.r * &solution.k)
            * &x)[(0, 0)];
        let stepsize_ok = stepsize_condition_holds(par, config.mu, &x, &u)?;

        steps.push(StepRecord {
            k,
            x: x.clone(),
            u,
            theta: theta.clone(),
            theta_hat: theta_hat.clone(),
            w: w_logged,
            e1,
            phi: &theta_hat - &theta,
            v,
            stage_cost: stage,
            stepsize_ok,
        });

        // LMS update from the observed transition (skipped when frozen;
        // overridden by the true parameter in oracle mode).
        if config.mode == PolicyMode::Adaptive {
            let record = steps.last().expect("just pushed");
            estimator = lms_update(&estimator, par, &config.param_box, &record.x, &record.u, &x_next)?;
        }

        last_solution = Some(solution);
        x = x_next;
        if x.norm() > config.divergence_threshold {
            diverged = true;
            break;
        }
    }

    let final_theta = config
        .param_traj
        .wind_profile(&config.param_box, steps.len());
    let final_theta_hat = match config.mode {
        PolicyMode::Oracle => final_theta.clone(),
        PolicyMode::Frozen => config.theta_hat0.clone(),
        PolicyMode::Adaptive => estimator.theta_hat().clone(),
    };
    let final_v = match &last_solution {
        Some(sol) => (x.transpose() * &sol.p * &x)[(0, 0)],
        None => f64::NAN,
    };

    Ok(TrajectoryLog {
        steps,
        final_x: x,
        final_theta,
        final_theta_hat,
        final_v,
        diverged,
        mode: config.mode,
        mu: config.mu,
        q: config.q.clone(),
        r: config.r.clone(),
        param_diameter: config.param_box.diameter(),
        disturbance_free: config.disturbance == DisturbanceModel::None,
        linear_plant: !matches!(config.plant, PlantKind::NonlinearQuadrotor(_)),
        explored: config.exploration_std.is_some(),
    })
}

/// Runs every config, collecting per-run results without aborting the
/// batch on individual failures.
pub fn run_batch(configs: &[SimConfig]) -> Vec<Result<TrajectoryLog>> {
    configs.iter().map(run).collect()
}

/// Benchmark scenario builders.
pub mod scenarios {
    use super::*;

    /// State with both positions at −2 and everything else at rest.
    pub fn quadrotor_x0() -> DVector<f64> {
        DVector::from_vec(vec![-2.0, -2.0, 0.0, 0.0, 0.0, 0.0])
    }

    /// The benchmark weights Q = I₆, R = 10·I₂ and step size μ = 50.
    pub fn quadrotor_config(
        plant: PlantKind,
        traj: ParamTrajectory,
        mode: PolicyMode,
        seed: u64,
    ) -> SimConfig {
        let qp = QuadrotorParams::default();
        SimConfig {
            par: crate::plant::quadrotor_parametrization(&qp),
            plant,
            horizon: 2000,
            x0: quadrotor_x0(),
            theta_hat0: DVector::from_vec(vec![0.0, 100.0]),
            mu: 50.0,
            q: DMatrix::identity(6, 6),
            r: DMatrix::identity(2, 2) * 10.0,
            param_box: crate::plant::quadrotor_param_box(),
            param_traj: traj,
            disturbance: DisturbanceModel::benchmark_decaying(),
            exploration_std: None,
            mode,
            seed,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }

    /// The exploration noise law ε ~ N(0, diag(0.5², 0.1²)).
    pub fn benchmark_exploration_std() -> DVector<f64> {
        DVector::from_vec(vec![0.5, 0.1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::QuadrotorParams;

    fn oracle_linear_config(horizon: usize) -> SimConfig {
        let mut cfg = scenarios::quadrotor_config(
            PlantKind::LinearQuadrotor(QuadrotorParams::default()),
            ParamTrajectory::Constant(DVector::from_vec(vec![0.0, 250.0])),
            PolicyMode::Oracle,
            1,
        );
        cfg.horizon = horizon;
        cfg.disturbance = DisturbanceModel::None;
        cfg
    }

    #[test]
    fn oracle_run_is_exponentially_stable() {
        let cfg = oracle_linear_config(200);
        let log = run(&cfg).unwrap();
        assert!(!log.diverged);
        assert!(log.final_x.norm() <= 1e-6 * cfg.x0.norm(), "final {}", log.final_x.norm());
    }

    #[test]
    fn single_step_horizon() {
        let cfg = oracle_linear_config(1);
        let log = run(&cfg).unwrap();
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = oracle_linear_config(0);
        assert!(run(&cfg).is_err());
        cfg.horizon = 10;
        cfg.theta_hat0 = DVector::from_vec(vec![0.0, 10.0]); // below box
        assert!(run(&cfg).is_err());
    }

    #[test]
    fn determinism_same_seed_same_log() {
        let mut cfg = scenarios::quadrotor_config(
            PlantKind::LinearQuadrotor(QuadrotorParams::default()),
            ParamTrajectory::case_a(),
            PolicyMode::Adaptive,
            1234,
        );
        cfg.horizon = 300;
        cfg.exploration_std = Some(scenarios::benchmark_exploration_std());
        let l1 = run(&cfg).unwrap();
        let l2 = run(&cfg).unwrap();
        assert_eq!(l1.len(), l2.len());
        for (a, b) in l1.steps.iter().zip(&l2.steps) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.u, b.u);
            assert_eq!(a.theta_hat, b.theta_hat);
            assert_eq!(a.w, b.w);
        }
        assert_eq!(l1.final_x, l2.final_x);
    }

    #[test]
    fn linear_plant_prediction_error_identity() {
        // e₁|ₖ = −D(xₖ,uₖ)φₖ on the linear plant.
        let mut cfg = scenarios::quadrotor_config(
            PlantKind::LinearQuadrotor(QuadrotorParams::default()),
            ParamTrajectory::case_a(),
            PolicyMode::Adaptive,
            77,
        );
        cfg.horizon = 400;
        let log = run(&cfg).unwrap();
        for rec in &log.steps {
            let (_, d) = cfg.par.regression_terms(&rec.x, &rec.u).unwrap();
            let expected = -(&d * &rec.phi);
            assert!(
                (&rec.e1 - &expected).norm() <= 1e-10 * (1.0 + expected.norm()),
                "step {}", rec.k
            );
        }
    }

    #[test]
    fn algorithm_ordering_gain_uses_current_estimate() {
        // Replaying the logged estimate through a fresh DARE solve must
        // reproduce the logged input, confirming uₖ depends on θ̂ₖ.
        let mut cfg = scenarios::quadrotor_config(
            PlantKind::LinearQuadrotor(QuadrotorParams::default()),
            ParamTrajectory::case_b(),
            PolicyMode::Adaptive,
            5,
        );
        cfg.horizon = 50;
        let log = run(&cfg).unwrap();
        for rec in log.steps.iter().step_by(7) {
            let (a, b) = cfg.par.eval_system(&rec.theta_hat).unwrap();
            let sol = crate::dare::solve_dare(&a, &b, &cfg.q, &cfg.r).unwrap();
            let expected_u = &sol.k * &rec.x;
            assert!((&rec.u - &expected_u).norm() <= 1e-9 * (1.0 + expected_u.norm()));
        }
    }

    #[test]
    fn batch_matches_sequential_and_handles_empty() {
        let cfg = oracle_linear_config(50);
        let batch = run_batch(&[cfg.clone(), cfg.clone()]);
        assert_eq!(batch.len(), 2);
        let l0 = batch[0].as_ref().unwrap();
        let l1 = batch[1].as_ref().unwrap();
        assert_eq!(l0.final_x, l1.final_x);
        assert!(run_batch(&[]).is_empty());
    }

    #[test]
    fn frozen_mode_keeps_initial_estimate() {
        let mut cfg = scenarios::quadrotor_config(
            PlantKind::LinearQuadrotor(QuadrotorParams::default()),
            ParamTrajectory::case_a(),
            PolicyMode::Frozen,
            9,
        );
        cfg.horizon = 100;
        let log = run(&cfg).unwrap();
        for rec in &log.steps {
            assert_eq!(rec.theta_hat, cfg.theta_hat0);
        }
    }
}
