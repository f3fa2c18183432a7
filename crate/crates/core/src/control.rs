//! Computed-torque control, with and without disturbance compensation.
//!
//! Both laws feed forward the full model torque at the commanded
//! acceleration and add PD feedback on the tracking error directly to the
//! torque (not premultiplied by the mass matrix):
//!
//! ```text
//! tau = M(q) qdd_des + C(q, qd) qd + G(q) - Kd (qd - qd_des) - Kp (q - q_des) [- d_hat]
//! ```
//!
//! The model terms use the current `q`, `qd`; only `d_hat` comes from the
//! filtered estimates.

use nalgebra::DVector;

use crate::dynamics::inverse_dynamics;
use crate::error::{Error, Result};
use crate::model::{ArmModel, JointState};

/// Per-joint diagonal PD gains.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlGains {
    pub kp: DVector<f64>,
    pub kd: DVector<f64>,
}

impl ControlGains {
    pub fn new(kp: DVector<f64>, kd: DVector<f64>) -> Result<Self> {
        let g = Self { kp, kd };
        g.validate()?;
        Ok(g)
    }

    /// `kp = 100`, `kd = 20` per joint: critically damped second-order
    /// error dynamics with a 10 rad/s pole pair on a unit-inertia joint.
    pub fn default_for(n: usize) -> Self {
        Self {
            kp: DVector::from_element(n, 100.0),
            kd: DVector::from_element(n, 20.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kp.len() != self.kd.len() {
            return Err(Error::Config("kp and kd must have equal length".into()));
        }
        if !self.kp.iter().chain(self.kd.iter()).all(|&k| k > 0.0 && k.is_finite()) {
            return Err(Error::Config("gains must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Desired joint position, velocity, and acceleration at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub q_des: DVector<f64>,
    pub qd_des: DVector<f64>,
    pub qdd_des: DVector<f64>,
}

impl Reference {
    pub fn hold(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q_des: q,
            qd_des: DVector::zeros(n),
            qdd_des: DVector::zeros(n),
        }
    }
}

fn check(model: &ArmModel, gains: &ControlGains, reference: &Reference, q: &DVector<f64>, qd: &DVector<f64>) -> Result<()> {
    gains.validate()?;
    let n = model.n_dof();
    for (name, v) in [
        ("q", q),
        ("qd", qd),
        ("q_des", &reference.q_des),
        ("qd_des", &reference.qd_des),
        ("qdd_des", &reference.qdd_des),
        ("kp", &gains.kp),
    ] {
        if v.len() != n {
            return Err(Error::InvalidState(format!(
                "{name} has length {}, expected {n}",
                v.len()
            )));
        }
    }
    let finite = q.iter().chain(qd.iter()).all(|x| x.is_finite())
        && reference
            .q_des
            .iter()
            .chain(reference.qd_des.iter())
            .chain(reference.qdd_des.iter())
            .all(|x| x.is_finite());
    if !finite {
        return Err(Error::InvalidState("non-finite control input".into()));
    }
    Ok(())
}

/// Control law without disturbance attenuation.
pub fn control_no_comp(
    model: &ArmModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    reference: &Reference,
    gains: &ControlGains,
) -> Result<DVector<f64>> {
    check(model, gains, reference, q, qd)?;
    // One Newton-Euler pass gives M qdd_des + C qd + G in a single sweep.
    let feedforward = inverse_dynamics(
        model,
        &JointState {
            q: q.clone(),
            qd: qd.clone(),
            qdd: reference.qdd_des.clone(),
        },
    )?;
    let e = q - &reference.q_des;
    let ed = qd - &reference.qd_des;
    Ok(feedforward - gains.kd.component_mul(&ed) - gains.kp.component_mul(&e))
}

/// Control law with disturbance compensation: the no-compensation torque
/// minus the disturbance estimate.
pub fn control_with_comp(
    model: &ArmModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    reference: &Reference,
    gains: &ControlGains,
    d_hat: &DVector<f64>,
) -> Result<DVector<f64>> {
    if d_hat.len() != model.n_dof() || !d_hat.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidState("d_hat must be finite with n_dof entries".into()));
    }
    Ok(control_no_comp(model, q, qd, reference, gains)? - d_hat)
}
