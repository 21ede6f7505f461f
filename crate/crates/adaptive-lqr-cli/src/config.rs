//! Experiment definition file (TOML). Unknown keys are rejected so
//! typos surface as config errors instead of silently applied defaults.

use adaptive_lqr::model::{AffineParametrization, ParamBox};
use adaptive_lqr::plant::{
    quadrotor_param_box, quadrotor_parametrization, DisturbanceModel, ParamTrajectory,
    QuadrotorParams, WaveKind,
};
use adaptive_lqr::sim::{PlantKind, PolicyMode, SimConfig};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub theta: ThetaSection,
    #[serde(default)]
    pub disturbance: DisturbanceSection,
    pub controller: ControllerSection,
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// "quadrotor" or "custom".
    pub kind: String,
    /// Plant used for propagation: "nonlinear" (quadrotor only),
    /// "linear" (quadrotor only), or "generic".
    pub plant: String,
    pub gravity: Option<f64>,
    pub mass: Option<f64>,
    pub arm: Option<f64>,
    pub ts: Option<f64>,
    /// Custom affine parametrization: nested row-major arrays.
    pub a0: Option<Vec<Vec<f64>>>,
    pub a_incr: Option<Vec<Vec<Vec<f64>>>>,
    pub b0: Option<Vec<Vec<f64>>>,
    pub b_incr: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ThetaSection {
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// "case_a", "case_b", "constant", "decaying_square", "square".
    pub trajectory: Option<String>,
    /// Constant value, or waveform base.
    pub value: Option<Vec<f64>>,
    /// Component the waveform is applied to.
    pub component: Option<usize>,
    pub amplitude: Option<f64>,
    pub decay: Option<f64>,
    pub period: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    /// "none", "uniform_decaying", "uniform_constant". Default: the
    /// benchmark decaying law.
    pub kind: Option<String>,
    pub amplitude: Option<f64>,
    pub decay: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub q_diag: Option<Vec<f64>>,
    pub q: Option<Vec<Vec<f64>>>,
    pub r_diag: Option<Vec<f64>>,
    pub r: Option<Vec<Vec<f64>>>,
    pub mu: f64,
    pub theta_hat0: Vec<f64>,
    /// "adaptive", "frozen", "oracle".
    pub mode: String,
    pub exploration_std: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: usize,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    pub divergence_threshold: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Base name for the emitted files; default "run".
    pub prefix: Option<String>,
    /// Row cap for the downsampled plot file; default 500.
    pub plot_rows: Option<usize>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, String> {
    let nr = rows.len();
    if nr == 0 {
        return Err(format!("{what}: empty matrix"));
    }
    let nc = rows[0].len();
    if rows.iter().any(|r| r.len() != nc) {
        return Err(format!("{what}: ragged rows"));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn diag_or_full(
    diag: &Option<Vec<f64>>,
    full: &Option<Vec<Vec<f64>>>,
    what: &str,
) -> Result<DMatrix<f64>, String> {
    match (diag, full) {
        (Some(d), None) => Ok(DMatrix::from_diagonal(&DVector::from_vec(d.clone()))),
        (None, Some(rows)) => matrix(rows, what),
        _ => Err(format!("{what}: provide exactly one of {what}_diag and {what}")),
    }
}

/// Defaults whose values are implementation choices rather than part of
/// the benchmark description; echoed into run metadata.
pub const NON_PAPER_DEFAULTS: &[&str] = &[
    "theta.trajectory waveform amplitude=5, decay=0.002, period=200",
    "disturbance uniform_decaying amplitude=1, decay=0.001",
    "sim.divergence_threshold=1e6",
    "output.plot_rows=500",
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    fn quadrotor_params(&self) -> QuadrotorParams {
        let d = QuadrotorParams::default();
        QuadrotorParams {
            g: self.system.gravity.unwrap_or(d.g),
            mass: self.system.mass.unwrap_or(d.mass),
            arm: self.system.arm.unwrap_or(d.arm),
            ts: self.system.ts.unwrap_or(d.ts),
        }
    }

    fn parametrization(&self) -> Result<AffineParametrization, String> {
        match self.system.kind.as_str() {
            "quadrotor" => Ok(quadrotor_parametrization(&self.quadrotor_params())),
            "custom" => {
                let a0 = matrix(
                    self.system.a0.as_deref().ok_or("system.a0 required for custom")?,
                    "system.a0",
                )?;
                let b0 = matrix(
                    self.system.b0.as_deref().ok_or("system.b0 required for custom")?,
                    "system.b0",
                )?;
                let a_incr = self
                    .system
                    .a_incr
                    .as_deref()
                    .ok_or("system.a_incr required for custom")?
                    .iter()
                    .map(|m| matrix(m, "system.a_incr"))
                    .collect::<Result<Vec<_>, _>>()?;
                let b_incr = self
                    .system
                    .b_incr
                    .as_deref()
                    .ok_or("system.b_incr required for custom")?
                    .iter()
                    .map(|m| matrix(m, "system.b_incr"))
                    .collect::<Result<Vec<_>, _>>()?;
                AffineParametrization::new(a0, a_incr, b0, b_incr).map_err(|e| e.to_string())
            }
            other => Err(format!("system.kind: unknown value {other:?}")),
        }
    }

    fn plant(&self) -> Result<PlantKind, String> {
        match (self.system.kind.as_str(), self.system.plant.as_str()) {
            ("quadrotor", "nonlinear") => Ok(PlantKind::NonlinearQuadrotor(self.quadrotor_params())),
            ("quadrotor", "linear") => Ok(PlantKind::LinearQuadrotor(self.quadrotor_params())),
            (_, "generic") => Ok(PlantKind::GenericLtv),
            (k, p) => Err(format!("system.plant: {p:?} is not valid for system.kind {k:?}")),
        }
    }

    fn param_box(&self) -> Result<ParamBox, String> {
        match (&self.theta.lower, &self.theta.upper) {
            (Some(lo), Some(hi)) => ParamBox::new(
                DVector::from_vec(lo.clone()),
                DVector::from_vec(hi.clone()),
            )
            .map_err(|e| e.to_string()),
            (None, None) if self.system.kind == "quadrotor" => Ok(quadrotor_param_box()),
            _ => Err("theta: provide both lower and upper (or neither, quadrotor only)".into()),
        }
    }

    fn trajectory(&self) -> Result<ParamTrajectory, String> {
        let kind = self.theta.trajectory.as_deref().unwrap_or("case_a");
        let base = || -> Result<DVector<f64>, String> {
            Ok(DVector::from_vec(
                self.theta.value.clone().ok_or("theta.value required for this trajectory")?,
            ))
        };
        match kind {
            "case_a" => Ok(ParamTrajectory::case_a()),
            "case_b" => Ok(ParamTrajectory::case_b()),
            "constant" => Ok(ParamTrajectory::Constant(base()?)),
            "decaying_square" => Ok(ParamTrajectory::Waveform {
                base: base()?,
                component: self.theta.component.unwrap_or(0),
                kind: WaveKind::DecayingSquare {
                    amplitude: self.theta.amplitude.unwrap_or(5.0),
                    decay: self.theta.decay.unwrap_or(0.002),
                    period: self.theta.period.unwrap_or(200),
                },
            }),
            "square" => Ok(ParamTrajectory::Waveform {
                base: base()?,
                component: self.theta.component.unwrap_or(0),
                kind: WaveKind::Square {
                    amplitude: self.theta.amplitude.unwrap_or(5.0),
                    period: self.theta.period.unwrap_or(200),
                },
            }),
            other => Err(format!("theta.trajectory: unknown value {other:?}")),
        }
    }

    fn disturbance(&self) -> Result<DisturbanceModel, String> {
        match self.disturbance.kind.as_deref().unwrap_or("uniform_decaying") {
            "none" => Ok(DisturbanceModel::None),
            "uniform_decaying" => Ok(DisturbanceModel::UniformDecaying {
                amplitude: self.disturbance.amplitude.unwrap_or(1.0),
                decay: self.disturbance.decay.unwrap_or(0.001),
            }),
            "uniform_constant" => Ok(DisturbanceModel::UniformConstant {
                amplitude: self.disturbance.amplitude.unwrap_or(1.0),
            }),
            other => Err(format!("disturbance.kind: unknown value {other:?}")),
        }
    }

    fn mode(&self) -> Result<PolicyMode, String> {
        match self.controller.mode.as_str() {
            "adaptive" => Ok(PolicyMode::Adaptive),
            "frozen" => Ok(PolicyMode::Frozen),
            "oracle" => Ok(PolicyMode::Oracle),
            other => Err(format!("controller.mode: unknown value {other:?}")),
        }
    }

    /// Lowers the file schema into a runnable simulation config.
    /// `seed_override` comes from the command line.
    pub fn to_sim_config(&self, seed_override: Option<u64>) -> Result<SimConfig, String> {
        let par = self.parametrization()?;
        let n = par.state_dim();
        let q = diag_or_full(&self.controller.q_diag, &self.controller.q, "controller.q")?;
        let r = diag_or_full(&self.controller.r_diag, &self.controller.r, "controller.r")?;
        if q.nrows() != n {
            return Err(format!("controller.q: expected {n}x{n}, got {}x{}", q.nrows(), q.ncols()));
        }
        Ok(SimConfig {
            plant: self.plant()?,
            horizon: self.sim.horizon,
            x0: DVector::from_vec(self.sim.x0.clone()),
            theta_hat0: DVector::from_vec(self.controller.theta_hat0.clone()),
            mu: self.controller.mu,
            q,
            r,
            param_box: self.param_box()?,
            param_traj: self.trajectory()?,
            disturbance: self.disturbance()?,
            exploration_std: self
                .controller
                .exploration_std
                .as_ref()
                .map(|v| DVector::from_vec(v.clone())),
            mode: self.mode()?,
            seed: seed_override.unwrap_or(self.sim.seed),
            divergence_threshold: self.sim.divergence_threshold.unwrap_or(1e6),
            par,
        })
    }

    pub fn prefix(&self) -> &str {
        self.output.prefix.as_deref().unwrap_or("run")
    }

    pub fn plot_rows(&self) -> usize {
        self.output.plot_rows.unwrap_or(500)
    }
}
