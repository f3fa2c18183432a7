//! Dynamics, disturbance estimation, and disturbance-attenuating control
//! for fixed-base serial arms, plus a reproducible scenario harness.
//!
//! The crate is organized around a single idea: estimate the lumped
//! disturbance torque (friction, payloads, model error) from joint
//! positions and torques alone — no velocity measurement — by running the
//! position and torque signals through identical third-order low-pass
//! filters and evaluating the inverse-dynamics residual at the filtered
//! states. The estimate then feeds a computed-torque controller that
//! subtracts it from the commanded torque.
//!
//! - [`model`] — arm description (kinematics, inertia, file format)
//! - [`dynamics`] — mass matrix, Coriolis matrix, gravity, inverse/forward
//!   dynamics
//! - [`filter`] — the third-order signal/derivative filter
//! - [`estimator`] — dual-filter disturbance estimator
//! - [`control`] — computed-torque laws with/without compensation
//! - [`observer`] — generalized-momentum baseline observer
//! - [`plant`] — ground-truth simulator (friction, payloads, sensor noise)
//! - [`scenario`] — declarative scenario runner
//! - [`trace`] — run records, CSV export, RMSE reports
//!
//! A quick taste (a 1-DOF pendulum and its gravity load):
//!
//! ```
//! use armctl::model::{ArmModel, Link};
//! use armctl::dynamics::gravity_vector;
//! use nalgebra::{DVector, Matrix3, Vector3};
//!
//! let pendulum = ArmModel::new(
//!     vec![Link {
//!         axis: Vector3::y(),
//!         offset: Vector3::zeros(),
//!         mass: 2.0,
//!         com: Vector3::new(0.0, 0.0, -0.5),
//!         inertia: Matrix3::identity() * 1e-6,
//!     }],
//!     Vector3::new(0.0, 0.0, -9.81),
//! )?;
//! let g = gravity_vector(&pendulum, &DVector::from_element(1, std::f64::consts::FRAC_PI_2))?;
//! assert!((g[0] - 2.0 * 9.81 * 0.5).abs() < 1e-6);
//! # Ok::<(), armctl::Error>(())
//! ```
//!
//! The book under `book/` walks through each module with worked examples;
//! the `armctl` binary runs the bundled scenarios.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod filter;
pub mod model;
pub mod observer;
pub mod plant;
pub mod scenario;
pub mod trace;

pub use error::{Error, Result};
