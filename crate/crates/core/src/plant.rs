//! Ground-truth plant simulation.
//!
//! The plant integrates the true dynamics — a (possibly parameter-perturbed)
//! model plus joint friction, an optional injected torque, and payload
//! drop/remove events — and produces noisy measurements for the controller.
//! Everything is seeded and stepped on a fixed grid, so a run is bitwise
//! reproducible.
//!
//! The recorded ground-truth disturbance is defined against the *nominal*
//! model: `d = M_nom qdd + C_nom + G_nom - tau_delivered`, evaluated at the
//! true state. That is the quantity the estimators are scored against.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{forward_dynamics, gravity_vector, inverse_dynamics};
use crate::error::{Error, Result};
use crate::model::{ArmModel, JointState};

/// Smoothed Coulomb + viscous joint friction.
#[derive(Clone, Debug, PartialEq)]
pub struct FrictionModel {
    /// Coulomb magnitude per joint (N m).
    pub coulomb: DVector<f64>,
    /// Viscous coefficient per joint (N m s/rad).
    pub viscous: DVector<f64>,
    /// Velocity scale of the tanh stiction smoothing (rad/s).
    pub stiction_velocity: f64,
    /// Scale the Coulomb level by `1 + 0.5 sin(q)` per joint, mimicking
    /// actuators whose static friction varies with position.
    pub position_scaled: bool,
}

impl FrictionModel {
    pub fn none(n: usize) -> Self {
        Self {
            coulomb: DVector::zeros(n),
            viscous: DVector::zeros(n),
            stiction_velocity: 0.01,
            position_scaled: false,
        }
    }

    pub fn new(coulomb: DVector<f64>, viscous: DVector<f64>) -> Result<Self> {
        let fm = Self {
            coulomb,
            viscous,
            stiction_velocity: 0.01,
            position_scaled: false,
        };
        fm.validate()?;
        Ok(fm)
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = self.coulomb.iter().all(|&c| c >= 0.0)
            && self.viscous.iter().all(|&v| v >= 0.0)
            && self.stiction_velocity > 0.0;
        if !non_negative || self.coulomb.len() != self.viscous.len() {
            return Err(Error::Config("friction coefficients must be non-negative".into()));
        }
        Ok(())
    }

    /// Friction torque opposing `qd`: `-coulomb tanh(qd/vs) - viscous qd`.
    pub fn torque(&self, qd: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(qd.len(), |j, _| {
            -self.coulomb[j] * (qd[j] / self.stiction_velocity).tanh() - self.viscous[j] * qd[j]
        })
    }

    /// Position-aware variant used by the plant.
    pub fn torque_at(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        if !self.position_scaled {
            return self.torque(qd);
        }
        DVector::from_fn(qd.len(), |j, _| {
            let level = self.coulomb[j] * (1.0 + 0.5 * q[j].sin());
            -level * (qd[j] / self.stiction_velocity).tanh() - self.viscous[j] * qd[j]
        })
    }
}

/// A weight dropped on (and later removed from) a link.
#[derive(Clone, Debug, PartialEq)]
pub struct PayloadEvent {
    pub t_drop: f64,
    pub t_remove: f64,
    /// Point mass (kg), rigidly attached at the link's end while active.
    pub mass: f64,
    pub attach_link: usize,
    /// Generalized impulse (N m s) transferred at the drop instant,
    /// realized as a one-step velocity jump `dqd = M^-1 J`.
    pub impulse: DVector<f64>,
}

impl PayloadEvent {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.t_remove > self.t_drop) {
            return Err(Error::Config("payload t_remove must exceed t_drop".into()));
        }
        if !(self.mass >= 0.0) {
            return Err(Error::Config("payload mass must be non-negative".into()));
        }
        if self.attach_link >= n || self.impulse.len() != n {
            return Err(Error::Config("payload link/impulse dimensions out of range".into()));
        }
        Ok(())
    }
}

/// Gaussian measurement noise levels and the RNG seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorModel {
    pub sigma_q: f64,
    pub sigma_qd: f64,
    pub sigma_tau: f64,
    pub seed: u64,
}

impl SensorModel {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            sigma_q: 0.0,
            sigma_qd: 0.0,
            sigma_tau: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_q >= 0.0 && self.sigma_qd >= 0.0 && self.sigma_tau >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config("sensor noise std deviations must be non-negative".into()))
        }
    }
}

/// Per-joint sinusoidal torque injected into the plant.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectedDisturbance {
    pub amplitude: DVector<f64>,
    /// Hz.
    pub frequency: f64,
    /// rad.
    pub phase: f64,
}

impl InjectedDisturbance {
    pub fn torque(&self, t: f64) -> DVector<f64> {
        &self.amplitude * (2.0 * std::f64::consts::PI * self.frequency * t + self.phase).sin()
    }
}

/// One set of measurements.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub q_m: DVector<f64>,
    pub qd_m: DVector<f64>,
    pub tau_m: DVector<f64>,
}

/// Snapshot of the true plant state.
#[derive(Clone, Debug)]
pub struct PlantState {
    pub state: JointState,
    pub attached_mass_active: bool,
    pub time: f64,
}

/// What one integration step produced.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Ground-truth disturbance at the step start (nominal-model residual,
    /// including any drop-impulse equivalent torque).
    pub d_true: DVector<f64>,
    /// True acceleration at the step start.
    pub qdd: DVector<f64>,
}

pub struct Plant {
    /// Perturbed model the true dynamics follow.
    plant_model: ArmModel,
    /// Nominal model the controller/estimator believe in; used only for
    /// ground-truth disturbance bookkeeping.
    nominal_model: ArmModel,
    /// Plant model augmented with the currently attached payloads.
    active_model: ArmModel,
    friction: FrictionModel,
    events: Vec<PayloadEvent>,
    event_attached: Vec<bool>,
    injected: Option<InjectedDisturbance>,
    sensors: SensorModel,
    /// Optional per-joint first-order torque tracking lag (s).
    lag_time_constant: Option<DVector<f64>>,
    q: DVector<f64>,
    qd: DVector<f64>,
    time: f64,
    tau_applied: DVector<f64>,
    rng: ChaCha8Rng,
}

impl Plant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        plant_model: ArmModel,
        nominal_model: ArmModel,
        q0: DVector<f64>,
        friction: FrictionModel,
        events: Vec<PayloadEvent>,
        injected: Option<InjectedDisturbance>,
        sensors: SensorModel,
        lag_time_constant: Option<DVector<f64>>,
    ) -> Result<Self> {
        let n = plant_model.n_dof();
        if nominal_model.n_dof() != n || q0.len() != n || friction.coulomb.len() != n {
            return Err(Error::Config("plant component dimensions disagree".into()));
        }
        friction.validate()?;
        sensors.validate()?;
        for ev in &events {
            ev.validate(n)?;
        }
        if let Some(tc) = &lag_time_constant {
            if tc.len() != n || !tc.iter().all(|&t| t > 0.0) {
                return Err(Error::Config("lag time constants must be positive".into()));
            }
        }
        // The scenario starts from a gravity-compensated hold, so the
        // initially delivered torque is the nominal gravity load.
        let tau_applied = gravity_vector(&nominal_model, &q0)?;
        let rng = ChaCha8Rng::seed_from_u64(sensors.seed);
        let event_attached = vec![false; events.len()];
        Ok(Self {
            active_model: plant_model.clone(),
            plant_model,
            nominal_model,
            friction,
            events,
            event_attached,
            injected,
            sensors,
            lag_time_constant,
            q: q0.clone(),
            qd: DVector::zeros(n),
            time: 0.0,
            tau_applied,
            rng,
        })
    }

    pub fn n_dof(&self) -> usize {
        self.plant_model.n_dof()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn qd(&self) -> &DVector<f64> {
        &self.qd
    }

    pub fn tau_applied(&self) -> &DVector<f64> {
        &self.tau_applied
    }

    pub fn payload_active(&self) -> bool {
        self.event_attached.iter().any(|&a| a)
    }

    pub fn snapshot(&self) -> PlantState {
        PlantState {
            state: JointState {
                q: self.q.clone(),
                qd: self.qd.clone(),
                qdd: DVector::zeros(self.n_dof()),
            },
            attached_mass_active: self.payload_active(),
            time: self.time,
        }
    }

    /// Measure the current state. Draws exactly `3 n` normals per call in a
    /// fixed order (q, qd, tau), so the stream is deterministic in
    /// (seed, step index) and independent of which sigmas are zero.
    pub fn sense(&mut self) -> Measurement {
        let n = self.n_dof();
        let mut draw = |sigma: f64, base: &DVector<f64>| {
            DVector::from_fn(n, |j, _| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                base[j] + sigma * z
            })
        };
        let q_m = draw(self.sensors.sigma_q, &self.q.clone());
        let qd_m = draw(self.sensors.sigma_qd, &self.qd.clone());
        let tau_m = draw(self.sensors.sigma_tau, &self.tau_applied.clone());
        Measurement { q_m, qd_m, tau_m }
    }

    fn rebuild_active_model(&mut self) -> Result<()> {
        let mut model = self.plant_model.clone();
        for (ev, attached) in self.events.iter().zip(&self.event_attached) {
            if *attached && ev.mass > 0.0 {
                let point = model.attach_point(ev.attach_link);
                model = model.with_point_mass(ev.attach_link, ev.mass, point)?;
            }
        }
        self.active_model = model;
        Ok(())
    }

    /// Advance one RK4 step of duration `dt` under the commanded torque.
    /// Payload events are snapped to step boundaries.
    pub fn step(&mut self, tau_cmd: &DVector<f64>, dt: f64) -> Result<StepOutcome> {
        let n = self.n_dof();
        if tau_cmd.len() != n || !tau_cmd.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidState("tau_cmd must be finite with n entries".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidState(format!("dt must be positive, got {dt}")));
        }

        // Actuator: either perfect tracking or a first-order lag.
        match &self.lag_time_constant {
            None => self.tau_applied = tau_cmd.clone(),
            Some(tc) => {
                for j in 0..n {
                    self.tau_applied[j] += dt / tc[j] * (tau_cmd[j] - self.tau_applied[j]);
                }
            }
        }

        // Payload events at this boundary. A drop transfers momentum as a
        // one-step velocity jump through the payload-augmented inertia.
        let mut impulse_torque = DVector::zeros(n);
        let mut membership_changed = false;
        for idx in 0..self.events.len() {
            let ev = self.events[idx].clone();
            if !self.event_attached[idx] && self.time >= ev.t_drop && self.time < ev.t_remove {
                self.event_attached[idx] = true;
                self.rebuild_active_model()?;
                let dqd = forward_impulse(&self.active_model, &self.q, &ev.impulse)?;
                self.qd += dqd;
                impulse_torque += &ev.impulse / dt;
                membership_changed = true;
            } else if self.event_attached[idx] && self.time >= ev.t_remove {
                self.event_attached[idx] = false;
                membership_changed = true;
            }
        }
        if membership_changed {
            self.rebuild_active_model()?;
        }

        // Acceleration at the step start, reused for bookkeeping.
        let qdd0 = self.accel(self.time, &self.q, &self.qd)?;
        let d_true = inverse_dynamics(
            &self.nominal_model,
            &JointState {
                q: self.q.clone(),
                qd: self.qd.clone(),
                qdd: qdd0.clone(),
            },
        )? - &self.tau_applied
            + impulse_torque;

        // RK4 on (q, qd).
        let h = dt;
        let t = self.time;
        let (k1q, k1v) = (self.qd.clone(), qdd0.clone());
        let (q2, v2) = (&self.q + &k1q * (h / 2.0), &self.qd + &k1v * (h / 2.0));
        let (k2q, k2v) = (v2.clone(), self.accel(t + h / 2.0, &q2, &v2)?);
        let (q3, v3) = (&self.q + &k2q * (h / 2.0), &self.qd + &k2v * (h / 2.0));
        let (k3q, k3v) = (v3.clone(), self.accel(t + h / 2.0, &q3, &v3)?);
        let (q4, v4) = (&self.q + &k3q * h, &self.qd + &k3v * h);
        let (k4q, k4v) = (v4.clone(), self.accel(t + h, &q4, &v4)?);
        self.q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
        self.qd += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        self.time += h;

        Ok(StepOutcome { d_true, qdd: qdd0 })
    }

    fn accel(&self, t: f64, q: &DVector<f64>, qd: &DVector<f64>) -> Result<DVector<f64>> {
        let mut tau = self.tau_applied.clone() + self.friction.torque_at(q, qd);
        if let Some(inj) = &self.injected {
            tau += inj.torque(t);
        }
        forward_dynamics(&self.active_model, q, qd, &tau)
    }
}

/// Velocity jump produced by a generalized impulse: `dqd = M(q)^-1 J`.
fn forward_impulse(model: &ArmModel, q: &DVector<f64>, impulse: &DVector<f64>) -> Result<DVector<f64>> {
    let m = crate::dynamics::mass_matrix(model, q)?;
    let chol = m
        .cholesky()
        .ok_or(Error::SingularDynamics { cond: f64::INFINITY })?;
    Ok(chol.solve(impulse))
}
