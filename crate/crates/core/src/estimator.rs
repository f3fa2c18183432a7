//! Disturbance estimation from joint positions and torques only.
//!
//! Two identical third-order filter banks run side by side: one on the
//! measured joint angles (states = smoothed `q`, `qd`, `qdd`) and one on
//! the measured torque (state `y1` = smoothed `tau`). Passing both signals
//! through the *same* dynamics cancels the filter phase shift in the
//! residual, so the estimate
//!
//! ```text
//! d_hat = M(q_hat) qdd_hat + C(q_hat, qd_hat) qd_hat + G(q_hat) - tau_hat
//! ```
//!
//! tracks the lumped disturbance without ever reading a velocity
//! measurement. The model terms are evaluated at the filtered states, not
//! the raw measurements, for the same phase-matching reason.

use nalgebra::DVector;

use crate::dynamics::inverse_dynamics;
use crate::error::{Error, Result};
use crate::filter::{FilterBank, FilterParams};
use crate::model::{ArmModel, JointState};

/// One step's worth of estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct DisturbanceEstimate {
    /// Estimated total disturbance torque (N m).
    pub d_hat: DVector<f64>,
    pub q_hat: DVector<f64>,
    pub qd_hat: DVector<f64>,
    pub qdd_hat: DVector<f64>,
    pub tau_hat: DVector<f64>,
}

/// Owns both filter banks so they can only advance together, on the same
/// measurement timestamp. Stepping them independently would break the
/// phase cancellation the estimate relies on.
#[derive(Clone, Debug)]
pub struct DisturbanceEstimator {
    signal_bank: FilterBank,
    torque_bank: FilterBank,
}

impl DisturbanceEstimator {
    /// Build from the first position and torque measurements; derivative
    /// states start at zero (robot at rest).
    pub fn new(
        params: FilterParams,
        initial_q: &DVector<f64>,
        initial_tau: &DVector<f64>,
        dt: f64,
    ) -> Result<Self> {
        if initial_q.len() != initial_tau.len() {
            return Err(Error::Config(format!(
                "q has {} channels, tau has {}",
                initial_q.len(),
                initial_tau.len()
            )));
        }
        Ok(Self {
            signal_bank: FilterBank::new(params, initial_q, dt)?,
            torque_bank: FilterBank::new(params, initial_tau, dt)?,
        })
    }

    /// Wrap two existing banks. They must share parameters, step size, and
    /// channel count.
    pub fn from_banks(signal_bank: FilterBank, torque_bank: FilterBank) -> Result<Self> {
        if signal_bank.params() != torque_bank.params() {
            return Err(Error::Config(
                "signal and torque banks must share identical filter parameters".into(),
            ));
        }
        if signal_bank.dt() != torque_bank.dt() {
            return Err(Error::Config(
                "signal and torque banks must share the same dt".into(),
            ));
        }
        if signal_bank.channels() != torque_bank.channels() {
            return Err(Error::Config(
                "signal and torque banks must have the same channel count".into(),
            ));
        }
        Ok(Self {
            signal_bank,
            torque_bank,
        })
    }

    pub fn params(&self) -> FilterParams {
        self.signal_bank.params()
    }

    /// Advance both banks one step and evaluate the inverse-dynamics
    /// residual at the filtered states.
    pub fn step(
        &mut self,
        model: &ArmModel,
        q_m: &DVector<f64>,
        tau_m: &DVector<f64>,
    ) -> Result<DisturbanceEstimate> {
        if self.signal_bank.channels() != model.n_dof() {
            return Err(Error::Config(format!(
                "estimator has {} channels, model has {} DOF",
                self.signal_bank.channels(),
                model.n_dof()
            )));
        }
        self.signal_bank.step(q_m)?;
        self.torque_bank.step(tau_m)?;

        let q_hat = self.signal_bank.x1().clone();
        let qd_hat = self.signal_bank.x2().clone();
        let qdd_hat = self.signal_bank.x3().clone();
        let tau_hat = self.torque_bank.x1().clone();

        let model_torque = inverse_dynamics(
            model,
            &JointState {
                q: q_hat.clone(),
                qd: qd_hat.clone(),
                qdd: qdd_hat.clone(),
            },
        )?;
        Ok(DisturbanceEstimate {
            d_hat: model_torque - &tau_hat,
            q_hat,
            qd_hat,
            qdd_hat,
            tau_hat,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};

    use crate::dynamics::gravity_vector;
    use crate::model::Link;

    fn pendulum() -> ArmModel {
        ArmModel::new(
            vec![Link {
                axis: Vector3::y(),
                offset: Vector3::zeros(),
                mass: 2.0,
                com: Vector3::new(0.0, 0.0, -0.5),
                inertia: Matrix3::identity() * 1e-9,
            }],
            Vector3::new(0.0, 0.0, -9.81),
        )
        .unwrap()
    }

    fn params() -> FilterParams {
        FilterParams::new(0.8, 50.0, 50.0).unwrap()
    }

    #[test]
    fn static_plant_with_exact_gravity_torque_reads_zero() {
        let model = pendulum();
        let q = DVector::from_row_slice(&[0.6]);
        let tau = gravity_vector(&model, &q).unwrap();
        let mut est = DisturbanceEstimator::new(params(), &q, &tau, 0.001).unwrap();
        for _ in 0..2000 {
            let e = est.step(&model, &q, &tau).unwrap();
            assert!(
                e.d_hat[0].abs() < 1e-9,
                "residual {} should stay below 1e-9",
                e.d_hat[0]
            );
        }
    }

    #[test]
    fn constant_torque_deficit_converges_to_disturbance() {
        // tau short of gravity by 5 N m on a held joint reads as +5 N m.
        let model = pendulum();
        let q = DVector::from_row_slice(&[0.6]);
        let tau = gravity_vector(&model, &q).unwrap() - DVector::from_row_slice(&[5.0]);
        let mut est = DisturbanceEstimator::new(params(), &q, &q.map(|_| 0.0), 0.001).unwrap();
        // Torque bank starts at 0, so it must settle; 5/omega1 seconds.
        let steps = (5.0 / 50.0 / 0.001).ceil() as usize * 50;
        let mut last = DVector::zeros(1);
        for _ in 0..steps {
            last = est.step(&model, &q, &tau).unwrap().d_hat;
        }
        assert!(
            (last[0] - 5.0).abs() < 1e-6,
            "expected +5 N m, got {}",
            last[0]
        );
    }

    #[test]
    fn mismatched_banks_rejected() {
        let a = FilterBank::new(params(), &DVector::zeros(2), 0.001).unwrap();
        let b = FilterBank::new(
            FilterParams::new(0.8, 40.0, 50.0).unwrap(),
            &DVector::zeros(2),
            0.001,
        )
        .unwrap();
        assert!(matches!(
            DisturbanceEstimator::from_banks(a.clone(), b),
            Err(Error::Config(_))
        ));
        let c = FilterBank::new(params(), &DVector::zeros(2), 0.002).unwrap();
        assert!(DisturbanceEstimator::from_banks(a, c).is_err());
    }

    #[test]
    fn non_finite_measurement_is_an_error() {
        let model = pendulum();
        let q = DVector::from_row_slice(&[0.0]);
        let mut est = DisturbanceEstimator::new(params(), &q, &q, 0.001).unwrap();
        assert!(matches!(
            est.step(&model, &DVector::from_row_slice(&[f64::NAN]), &q),
            Err(Error::Measurement(_))
        ));
    }
}
