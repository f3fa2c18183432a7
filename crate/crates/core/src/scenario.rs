//! Declarative scenario runner.
//!
//! A scenario file (TOML, `schema_version = 1`) names an arm description,
//! a task, the controller and estimator settings, and every disturbance
//! knob: friction, payload events, sensor noise, injected torques, and
//! plant parameter perturbation. `run_scenario` executes the closed loop —
//! sense, estimate, control, actuate, at a fixed rate — and returns the
//! full trace plus a per-joint RMSE report. Runs are deterministic in the
//! seed, down to the exported bytes.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Deserialize;

use crate::control::{control_no_comp, control_with_comp, ControlGains, Reference};
use crate::error::{Error, Result};
use crate::estimator::DisturbanceEstimator;
use crate::filter::FilterParams;
use crate::model::ArmModel;
use crate::observer::MomentumObserver;
use crate::plant::{
    FrictionModel, InjectedDisturbance, PayloadEvent, Plant, SensorModel,
};
use crate::trace::{RmseReport, SimTrace, TraceRow};

/// Divergence guard: any joint beyond this magnitude aborts the run.
pub const DIVERGENCE_LIMIT_RAD: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    NoComp,
    WithComp,
}

impl ControllerKind {
    pub fn id(&self) -> &'static str {
        match self {
            ControllerKind::NoComp => "no_comp",
            ControllerKind::WithComp => "with_comp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "no_comp" => Ok(ControllerKind::NoComp),
            "with_comp" => Ok(ControllerKind::WithComp),
            other => Err(Error::Config(format!("unknown controller '{other}'"))),
        }
    }
}

/// Where the control law takes its `q`, `qd` feedback from.
///
/// `TrueState` bypasses sensor noise in the feedback path; estimation
/// comparison scenarios use it so the loop trajectory stays independent of
/// the velocity-noise sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSource {
    Measured,
    TrueState,
}

/// Which disturbance signal the compensating controller receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// The dual-filter estimator (the normal mode).
    Filters,
    /// Feed the simulator's ground-truth disturbance instead; exact for
    /// friction/injected torques (the model-mismatch component lags one
    /// step). Verification runs only.
    Oracle,
}

/// Reference trajectory shape.
#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    /// Stay at the start pose.
    Hold,
    /// Step to `q0 + increment` at `start_time`, then hold.
    Goto { increment: DVector<f64>, start_time: f64 },
    /// `q0 + amplitude sin(2 pi f t + phase)` on every joint.
    Sine {
        amplitude: DVector<f64>,
        frequency: f64,
        phase: f64,
    },
}

impl Task {
    /// Reference at time `t` for a task anchored at `q0`.
    pub fn reference(&self, q0: &DVector<f64>, t: f64) -> Reference {
        let n = q0.len();
        match self {
            Task::Hold => Reference::hold(q0.clone()),
            Task::Goto { increment, start_time } => {
                if t < *start_time {
                    Reference::hold(q0.clone())
                } else {
                    Reference::hold(q0 + increment)
                }
            }
            Task::Sine {
                amplitude,
                frequency,
                phase,
            } => {
                let w = 2.0 * std::f64::consts::PI * frequency;
                let arg = w * t + phase;
                Reference {
                    q_des: q0 + amplitude * arg.sin(),
                    qd_des: amplitude * (w * arg.cos()),
                    qdd_des: amplitude * (-w * w * arg.sin()),
                }
            }
        }
    }

    /// Start of the RMSE scoring window.
    pub fn scoring_window_start(&self) -> f64 {
        match self {
            Task::Goto { start_time, .. } => *start_time,
            _ => 0.0,
        }
    }
}

/// Fully validated scenario description.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub id: String,
    pub arm: ArmModel,
    pub arm_file: PathBuf,
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    pub controller: ControllerKind,
    pub control_feedback: FeedbackSource,
    pub q0: DVector<f64>,
    pub task: Task,
    pub gains: ControlGains,
    pub torque_limit: Option<DVector<f64>>,
    pub filter_params: FilterParams,
    pub estimator_mode: EstimatorMode,
    /// Momentum-observer bandwidths; `Some` enables the baseline channel.
    pub baseline_gains: Option<DVector<f64>>,
    pub friction: FrictionModel,
    pub payload: Vec<PayloadEvent>,
    pub sensor: SensorModel,
    pub injected: Option<InjectedDisturbance>,
    pub model_perturbation: f64,
}

impl ScenarioConfig {
    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read scenario {}: {e}", path.display()))
        })?;
        let raw: ScenarioFile =
            toml::from_str(&text).map_err(|e| Error::Parse(format!("scenario file: {e}")))?;
        raw.into_config(path.parent().unwrap_or(Path::new(".")))
    }

    pub fn n_dof(&self) -> usize {
        self.arm.n_dof()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_dof();
        if !(self.duration > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if self.q0.len() != n {
            return Err(Error::Config(format!(
                "q0 has {} entries, arm has {n} DOF",
                self.q0.len()
            )));
        }
        match &self.task {
            Task::Hold => {}
            Task::Goto { increment, start_time } => {
                if increment.len() != n {
                    return Err(Error::Config("goto increment dimension mismatch".into()));
                }
                if !(*start_time >= 0.0) {
                    return Err(Error::Config("goto start_time must be non-negative".into()));
                }
            }
            Task::Sine {
                amplitude,
                frequency,
                ..
            } => {
                if amplitude.len() != n {
                    return Err(Error::Config("sine amplitude dimension mismatch".into()));
                }
                if !(*frequency > 0.0) {
                    return Err(Error::Config("sine frequency must be positive".into()));
                }
            }
        }
        if self.gains.kp.len() != n {
            return Err(Error::Config("gains dimension mismatch".into()));
        }
        self.gains.validate()?;
        if let Some(limit) = &self.torque_limit {
            if limit.len() != n || !limit.iter().all(|&l| l > 0.0) {
                return Err(Error::Config("torque limits must be positive, one per joint".into()));
            }
        }
        self.filter_params.validate()?;
        if let Some(g) = &self.baseline_gains {
            if g.len() != n || !g.iter().all(|&l| l > 0.0) {
                return Err(Error::Config("baseline gains must be positive, one per joint".into()));
            }
        }
        if self.friction.coulomb.len() != n {
            return Err(Error::Config("friction dimension mismatch".into()));
        }
        self.friction.validate()?;
        for ev in &self.payload {
            ev.validate(n)?;
        }
        self.sensor.validate()?;
        if let Some(inj) = &self.injected {
            if inj.amplitude.len() != n || !(inj.frequency > 0.0) {
                return Err(Error::Config("injected disturbance malformed".into()));
            }
        }
        if !(self.model_perturbation > -1.0 && self.model_perturbation.is_finite()) {
            return Err(Error::Config("model_perturbation must exceed -1".into()));
        }
        Ok(())
    }

    /// Set one of the sweepable parameters by dotted path.
    pub fn set_param(&mut self, path: &str, value: f64) -> Result<()> {
        match path {
            "sensor.sigma_q" => self.sensor.sigma_q = value,
            "sensor.sigma_qd" => self.sensor.sigma_qd = value,
            "sensor.sigma_tau" => self.sensor.sigma_tau = value,
            "model_perturbation" => self.model_perturbation = value,
            other => {
                return Err(Error::Config(format!(
                    "unknown sweep parameter '{other}' (supported: sensor.sigma_q, \
                     sensor.sigma_qd, sensor.sigma_tau, model_perturbation)"
                )))
            }
        }
        self.validate()
    }
}

/// Run the closed loop for the configured duration.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(SimTrace, RmseReport)> {
    cfg.validate()?;
    let n = cfg.n_dof();
    let nominal = cfg.arm.clone();
    let plant_model = nominal.perturbed(cfg.model_perturbation)?;

    let mut sensors = cfg.sensor.clone();
    sensors.seed = cfg.seed;
    let mut plant = Plant::new(
        plant_model,
        nominal.clone(),
        cfg.q0.clone(),
        cfg.friction.clone(),
        cfg.payload.clone(),
        cfg.injected.clone(),
        sensors,
        None,
    )?;

    let mut estimator: Option<DisturbanceEstimator> = None;
    let mut baseline = cfg
        .baseline_gains
        .as_ref()
        .map(|g| MomentumObserver::new(g.clone()))
        .transpose()?;

    let steps = (cfg.duration / cfg.dt).round() as usize;
    let mut trace = SimTrace::new(n, cfg.dt, baseline.is_some());
    trace.rows.reserve(steps);

    // Oracle mode feeds the previous step's ground truth; for the first
    // step that is the known torques at the start state (exact when the
    // plant parameters are exact).
    let mut last_d_true = cfg.friction.torque_at(&cfg.q0, &DVector::zeros(n))
        + cfg
            .injected
            .as_ref()
            .map(|inj| inj.torque(0.0))
            .unwrap_or_else(|| DVector::zeros(n));

    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let m = plant.sense();

        if estimator.is_none() {
            estimator = Some(DisturbanceEstimator::new(
                cfg.filter_params,
                &m.q_m,
                &m.tau_m,
                cfg.dt,
            )?);
        }
        let d_hat = match cfg.estimator_mode {
            EstimatorMode::Filters => {
                estimator
                    .as_mut()
                    .expect("estimator initialized above")
                    .step(&nominal, &m.q_m, &m.tau_m)?
                    .d_hat
            }
            EstimatorMode::Oracle => last_d_true.clone(),
        };
        let d_base = match &mut baseline {
            Some(obs) => Some(obs.step(&nominal, &m.q_m, &m.qd_m, &m.tau_m, cfg.dt)?),
            None => None,
        };

        let reference = cfg.task.reference(&cfg.q0, t);
        let (q_fb, qd_fb) = match cfg.control_feedback {
            FeedbackSource::Measured => (m.q_m.clone(), m.qd_m.clone()),
            FeedbackSource::TrueState => (plant.q().clone(), plant.qd().clone()),
        };
        let mut tau_cmd = match cfg.controller {
            ControllerKind::NoComp => {
                control_no_comp(&nominal, &q_fb, &qd_fb, &reference, &cfg.gains)?
            }
            ControllerKind::WithComp => {
                control_with_comp(&nominal, &q_fb, &qd_fb, &reference, &cfg.gains, &d_hat)?
            }
        };
        if let Some(limit) = &cfg.torque_limit {
            for j in 0..n {
                tau_cmd[j] = tau_cmd[j].clamp(-limit[j], limit[j]);
            }
        }

        let q_true = plant.q().clone();
        let qd_true = plant.qd().clone();
        let outcome = plant.step(&tau_cmd, cfg.dt)?;

        if plant.q().iter().any(|&x| x.abs() > DIVERGENCE_LIMIT_RAD) {
            return Err(Error::Divergence {
                step: k,
                detail: format!("|q| exceeded {DIVERGENCE_LIMIT_RAD} rad"),
            });
        }

        trace.rows.push(TraceRow {
            time: t,
            e: &q_true - &reference.q_des,
            q_true,
            qd_true,
            q_des: reference.q_des,
            q_m: m.q_m,
            tau_cmd,
            d_true: outcome.d_true.clone(),
            d_hat,
            d_hat_baseline: d_base,
        });
        last_d_true = outcome.d_true;
    }

    let report = RmseReport::from_trace(
        &trace,
        &cfg.id,
        cfg.controller.id(),
        cfg.task.scoring_window_start(),
    );
    Ok((trace, report))
}

// ---------------------------------------------------------------------------
// On-disk schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    id: String,
    arm_file: PathBuf,
    duration: f64,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_controller")]
    controller: String,
    #[serde(default = "default_feedback")]
    control_feedback: String,
    q0: Option<Vec<f64>>,
    task: TaskFile,
    gains: GainsFile,
    torque_limit: Option<Vec<f64>>,
    estimator: EstimatorFile,
    baseline: Option<BaselineFile>,
    friction: Option<FrictionFile>,
    #[serde(default)]
    payload: Vec<PayloadFile>,
    sensor: Option<SensorFile>,
    injected: Option<InjectedFile>,
    #[serde(default)]
    model_perturbation: f64,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_controller() -> String {
    "with_comp".into()
}

fn default_feedback() -> String {
    "measured".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    kind: String,
    increment: Option<Vec<f64>>,
    start_time: Option<f64>,
    amplitude: Option<Vec<f64>>,
    frequency: Option<f64>,
    #[serde(default)]
    phase: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsFile {
    kp: Vec<f64>,
    kd: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimatorFile {
    zeta: f64,
    omega1: f64,
    omega2: f64,
    #[serde(default = "default_estimator_mode")]
    mode: String,
}

fn default_estimator_mode() -> String {
    "filters".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaselineFile {
    gains: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrictionFile {
    coulomb: Vec<f64>,
    viscous: Vec<f64>,
    #[serde(default = "default_stiction_velocity")]
    stiction_velocity: f64,
    #[serde(default)]
    position_scaled: bool,
}

fn default_stiction_velocity() -> f64 {
    0.01
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PayloadFile {
    t_drop: f64,
    t_remove: f64,
    mass: f64,
    attach_link: usize,
    impulse: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorFile {
    #[serde(default)]
    sigma_q: f64,
    #[serde(default)]
    sigma_qd: f64,
    #[serde(default)]
    sigma_tau: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InjectedFile {
    amplitude: Vec<f64>,
    frequency: f64,
    #[serde(default)]
    phase: f64,
}

impl ScenarioFile {
    fn into_config(self, base_dir: &Path) -> Result<ScenarioConfig> {
        if self.schema_version != 1 {
            return Err(Error::Parse(format!(
                "unsupported scenario schema_version {}",
                self.schema_version
            )));
        }
        let arm_file = if self.arm_file.is_absolute() {
            self.arm_file.clone()
        } else {
            base_dir.join(&self.arm_file)
        };
        if !arm_file.exists() {
            return Err(Error::Config(format!(
                "arm file {} does not exist",
                arm_file.display()
            )));
        }
        let arm = ArmModel::from_toml_path(&arm_file)?;
        let n = arm.n_dof();

        let task = match self.task.kind.as_str() {
            "hold" => Task::Hold,
            "goto" => Task::Goto {
                increment: DVector::from_vec(self.task.increment.ok_or_else(|| {
                    Error::Config("goto task requires 'increment'".into())
                })?),
                start_time: self
                    .task
                    .start_time
                    .ok_or_else(|| Error::Config("goto task requires 'start_time'".into()))?,
            },
            "sine" => Task::Sine {
                amplitude: DVector::from_vec(self.task.amplitude.ok_or_else(|| {
                    Error::Config("sine task requires 'amplitude'".into())
                })?),
                frequency: self
                    .task
                    .frequency
                    .ok_or_else(|| Error::Config("sine task requires 'frequency'".into()))?,
                phase: self.task.phase,
            },
            other => return Err(Error::Config(format!("unknown task kind '{other}'"))),
        };

        let estimator_mode = match self.estimator.mode.as_str() {
            "filters" => EstimatorMode::Filters,
            "oracle" => EstimatorMode::Oracle,
            other => return Err(Error::Config(format!("unknown estimator mode '{other}'"))),
        };

        let friction = match self.friction {
            Some(f) => FrictionModel {
                coulomb: DVector::from_vec(f.coulomb),
                viscous: DVector::from_vec(f.viscous),
                stiction_velocity: f.stiction_velocity,
                position_scaled: f.position_scaled,
            },
            None => FrictionModel::none(n),
        };
        let sensor = match self.sensor {
            Some(s) => SensorModel {
                sigma_q: s.sigma_q,
                sigma_qd: s.sigma_qd,
                sigma_tau: s.sigma_tau,
                seed: self.seed,
            },
            None => SensorModel::noiseless(self.seed),
        };

        let cfg = ScenarioConfig {
            id: self.id,
            arm,
            arm_file,
            duration: self.duration,
            dt: self.dt,
            seed: self.seed,
            controller: ControllerKind::parse(&self.controller)?,
            control_feedback: match self.control_feedback.as_str() {
                "measured" => FeedbackSource::Measured,
                "true_state" => FeedbackSource::TrueState,
                other => {
                    return Err(Error::Config(format!(
                        "unknown control_feedback '{other}'"
                    )))
                }
            },
            q0: self
                .q0
                .map(DVector::from_vec)
                .unwrap_or_else(|| DVector::zeros(n)),
            task,
            gains: ControlGains::new(
                DVector::from_vec(self.gains.kp),
                DVector::from_vec(self.gains.kd),
            )?,
            torque_limit: self.torque_limit.map(DVector::from_vec),
            filter_params: FilterParams::new(
                self.estimator.zeta,
                self.estimator.omega1,
                self.estimator.omega2,
            )?,
            estimator_mode,
            baseline_gains: self.baseline.map(|b| DVector::from_vec(b.gains)),
            friction,
            payload: self
                .payload
                .into_iter()
                .map(|p| PayloadEvent {
                    t_drop: p.t_drop,
                    t_remove: p.t_remove,
                    mass: p.mass,
                    attach_link: p.attach_link,
                    impulse: DVector::from_vec(p.impulse),
                })
                .collect(),
            sensor,
            injected: self.injected.map(|i| InjectedDisturbance {
                amplitude: DVector::from_vec(i.amplitude),
                frequency: i.frequency,
                phase: i.phase,
            }),
            model_perturbation: self.model_perturbation,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
