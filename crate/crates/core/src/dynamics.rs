//! Rigid-body dynamics of a fixed-base serial chain with revolute joints:
//!
//! ```text
//! M(q) qdd + C(q, qd) qd + G(q) = tau
//! ```
//!
//! Three independent computation routes are kept on purpose:
//!
//! - [`mass_matrix`] assembles `M` from link Jacobians,
//! - [`coriolis_matrix`] builds the Christoffel-symbol matrix from the
//!   analytic partials `dM/dq_k`, so that `Mdot - 2C` is skew-symmetric
//!   and `C qd` equals the Coriolis/centripetal torque vector,
//! - [`inverse_dynamics`] runs the O(n) recursive Newton-Euler pass.
//!
//! The routes cross-check each other in the test suite. All functions are
//! pure; nothing is cached between calls.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::model::{ArmModel, JointState};

/// Condition-number ceiling beyond which the mass matrix is treated as
/// numerically singular.
pub const SINGULARITY_COND_LIMIT: f64 = 1e12;

/// World-frame kinematic quantities for one configuration.
struct Frames {
    /// Link orientations.
    rot: Vec<Matrix3<f64>>,
    /// Joint origins.
    origin: Vec<Vector3<f64>>,
    /// Joint axes.
    axis: Vec<Vector3<f64>>,
    /// Link centres of mass.
    com: Vec<Vector3<f64>>,
    /// Link inertias about the COM, world frame.
    inertia: Vec<Matrix3<f64>>,
}

fn frames(model: &ArmModel, q: &DVector<f64>) -> Frames {
    let n = model.n_dof();
    let mut rot = Vec::with_capacity(n);
    let mut origin = Vec::with_capacity(n);
    let mut axis = Vec::with_capacity(n);
    let mut com = Vec::with_capacity(n);
    let mut inertia = Vec::with_capacity(n);

    let mut r_parent = Matrix3::identity();
    let mut p_parent = Vector3::zeros();
    for (i, link) in model.links.iter().enumerate() {
        let p = p_parent + r_parent * link.offset;
        let r = r_parent * joint_rotation(&link.axis, q[i]);
        rot.push(r);
        origin.push(p);
        axis.push(r * link.axis);
        com.push(p + r * link.com);
        inertia.push(r * link.inertia * r.transpose());
        r_parent = r;
        p_parent = p;
    }
    Frames {
        rot,
        origin,
        axis,
        com,
        inertia,
    }
}

fn joint_rotation(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle).matrix()
}

fn check_vec(model: &ArmModel, name: &str, v: &DVector<f64>) -> Result<()> {
    if v.len() != model.n_dof() {
        return Err(Error::InvalidState(format!(
            "{name} has length {}, expected {}",
            v.len(),
            model.n_dof()
        )));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidState(format!("{name} contains non-finite entries")));
    }
    Ok(())
}

/// Joint-space mass matrix `M(q)`: symmetric positive definite.
pub fn mass_matrix(model: &ArmModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_vec(model, "q", q)?;
    let n = model.n_dof();
    let fr = frames(model, q);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let mass = model.links[i].mass;
        for a in 0..=i {
            let jv_a = fr.axis[a].cross(&(fr.com[i] - fr.origin[a]));
            for b in 0..=a {
                let jv_b = fr.axis[b].cross(&(fr.com[i] - fr.origin[b]));
                let val = mass * jv_a.dot(&jv_b)
                    + fr.axis[a].dot(&(fr.inertia[i] * fr.axis[b]));
                m[(a, b)] += val;
            }
        }
    }
    // Mirror the lower triangle so symmetry holds exactly.
    for a in 0..n {
        for b in (a + 1)..n {
            m[(a, b)] = m[(b, a)];
        }
    }
    Ok(m)
}

/// Analytic partial derivatives `dM/dq_k` for every joint `k`.
///
/// Built by differentiating the Jacobian form of `M` using the rigid-chain
/// identities `dz_j/dq_k = z_k x z_j` (k < j), `dp/dq_k = z_k x (p - p_k)`
/// for points carried by links at or below `k`, and
/// `dI_w/dq_k = [z_k] I_w - I_w [z_k]`.
pub fn mass_matrix_partials(model: &ArmModel, q: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
    check_vec(model, "q", q)?;
    let n = model.n_dof();
    let fr = frames(model, q);

    // dz[j][k], dp[j][k], dcom[i][k]: zero unless k < j (axes, origins)
    // or k <= i (COMs, inertias).
    let dz = |j: usize, k: usize| -> Vector3<f64> {
        if k < j {
            fr.axis[k].cross(&fr.axis[j])
        } else {
            Vector3::zeros()
        }
    };
    let dp = |j: usize, k: usize| -> Vector3<f64> {
        if k < j {
            fr.axis[k].cross(&(fr.origin[j] - fr.origin[k]))
        } else {
            Vector3::zeros()
        }
    };
    let dcom = |i: usize, k: usize| -> Vector3<f64> {
        if k <= i {
            fr.axis[k].cross(&(fr.com[i] - fr.origin[k]))
        } else {
            Vector3::zeros()
        }
    };

    let mut out = vec![DMatrix::zeros(n, n); n];
    for i in 0..n {
        let mass = model.links[i].mass;
        let iw = &fr.inertia[i];
        for k in 0..=i {
            let zk_hat = skew(&fr.axis[k]);
            let diw = zk_hat * iw - iw * zk_hat;
            for a in 0..=i {
                let jv_a = fr.axis[a].cross(&(fr.com[i] - fr.origin[a]));
                let djv_a = dz(a, k).cross(&(fr.com[i] - fr.origin[a]))
                    + fr.axis[a].cross(&(dcom(i, k) - dp(a, k)));
                for b in 0..=a {
                    let jv_b = fr.axis[b].cross(&(fr.com[i] - fr.origin[b]));
                    let djv_b = dz(b, k).cross(&(fr.com[i] - fr.origin[b]))
                        + fr.axis[b].cross(&(dcom(i, k) - dp(b, k)));
                    let val = mass * (djv_a.dot(&jv_b) + jv_a.dot(&djv_b))
                        + dz(a, k).dot(&(iw * fr.axis[b]))
                        + fr.axis[a].dot(&(diw * fr.axis[b]))
                        + fr.axis[a].dot(&(iw * dz(b, k)));
                    out[k][(a, b)] += val;
                    if a != b {
                        out[k][(b, a)] += val;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Coriolis/centripetal matrix from Christoffel symbols of `M`:
///
/// ```text
/// C[i,j] = sum_k 1/2 (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i) qd_k
/// ```
///
/// Satisfies `C qd = Coriolis torque vector` and the skew-symmetry of
/// `Mdot - 2C`, which the momentum observer depends on.
pub fn coriolis_matrix(model: &ArmModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_vec(model, "q", q)?;
    check_vec(model, "qd", qd)?;
    let n = model.n_dof();
    let dm = mass_matrix_partials(model, q)?;
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]) * qd[k];
            }
            c[(i, j)] = acc;
        }
    }
    Ok(c)
}

/// Gravity torque vector `G(q) = dU/dq` with `U = -sum_i m_i g . com_i`.
pub fn gravity_vector(model: &ArmModel, q: &DVector<f64>) -> Result<DVector<f64>> {
    check_vec(model, "q", q)?;
    let n = model.n_dof();
    let fr = frames(model, q);
    let mut g = DVector::zeros(n);
    for i in 0..n {
        let mass = model.links[i].mass;
        for j in 0..=i {
            let jv = fr.axis[j].cross(&(fr.com[i] - fr.origin[j]));
            g[j] -= mass * model.gravity.dot(&jv);
        }
    }
    Ok(g)
}

/// Gravitational potential energy (J), zero at the world origin.
pub fn potential_energy(model: &ArmModel, q: &DVector<f64>) -> Result<f64> {
    check_vec(model, "q", q)?;
    let fr = frames(model, q);
    Ok(model
        .links
        .iter()
        .zip(&fr.com)
        .map(|(link, com)| -link.mass * model.gravity.dot(com))
        .sum())
}

/// Kinetic energy `1/2 qd' M qd` (J).
pub fn kinetic_energy(model: &ArmModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<f64> {
    let m = mass_matrix(model, q)?;
    check_vec(model, "qd", qd)?;
    Ok(0.5 * qd.dot(&(&m * qd)))
}

/// Inverse dynamics via the recursive Newton-Euler algorithm: the joint
/// torques realizing `state.qdd` at `(state.q, state.qd)`, gravity included.
pub fn inverse_dynamics(model: &ArmModel, state: &JointState) -> Result<DVector<f64>> {
    state.validate(model.n_dof())?;
    let n = model.n_dof();

    // Forward pass, all quantities in the local link frame. The base is
    // given the acceleration -g, which folds gravity into every link.
    let mut omega = vec![Vector3::zeros(); n];
    let mut alpha = vec![Vector3::zeros(); n];
    let mut a_origin = vec![Vector3::zeros(); n];
    let mut a_com = vec![Vector3::zeros(); n];
    let mut rot_to_parent = vec![Matrix3::identity(); n];

    for i in 0..n {
        let link = &model.links[i];
        let rot = joint_rotation(&link.axis, state.q[i]);
        rot_to_parent[i] = rot;
        let rt = rot.transpose();
        let (w_p, al_p, a_p) = if i == 0 {
            (Vector3::zeros(), Vector3::zeros(), -model.gravity)
        } else {
            (omega[i - 1], alpha[i - 1], a_origin[i - 1])
        };
        let w_p_local = rt * w_p;
        let axis_rate = link.axis * state.qd[i];
        omega[i] = w_p_local + axis_rate;
        alpha[i] = rt * al_p + link.axis * state.qdd[i] + w_p_local.cross(&axis_rate);
        a_origin[i] = rt * (a_p + al_p.cross(&link.offset) + w_p.cross(&w_p.cross(&link.offset)));
        a_com[i] =
            a_origin[i] + alpha[i].cross(&link.com) + omega[i].cross(&omega[i].cross(&link.com));
    }

    // Backward pass: accumulate forces/moments toward the base.
    let mut force = vec![Vector3::zeros(); n];
    let mut moment = vec![Vector3::zeros(); n];
    let mut tau = DVector::zeros(n);
    for i in (0..n).rev() {
        let link = &model.links[i];
        let f_inertial = link.mass * a_com[i];
        let n_inertial = link.inertia * alpha[i] + omega[i].cross(&(link.inertia * omega[i]));
        let mut f = f_inertial;
        let mut m = n_inertial + link.com.cross(&f_inertial);
        if i + 1 < n {
            let child_offset = model.links[i + 1].offset;
            let f_child = rot_to_parent[i + 1] * force[i + 1];
            f += f_child;
            m += rot_to_parent[i + 1] * moment[i + 1] + child_offset.cross(&f_child);
        }
        force[i] = f;
        moment[i] = m;
        tau[i] = m.dot(&link.axis);
    }
    Ok(tau)
}

/// Forward dynamics: `qdd = M(q)^-1 (tau - C qd - G)`, with the bias torque
/// taken from a zero-acceleration Newton-Euler pass.
pub fn forward_dynamics(
    model: &ArmModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    tau: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_vec(model, "q", q)?;
    check_vec(model, "qd", qd)?;
    check_vec(model, "tau", tau)?;
    let m = mass_matrix(model, q)?;
    let cond = condition_number(&m);
    if !cond.is_finite() || cond > SINGULARITY_COND_LIMIT {
        return Err(Error::SingularDynamics { cond });
    }
    let bias = inverse_dynamics(
        model,
        &JointState {
            q: q.clone(),
            qd: qd.clone(),
            qdd: DVector::zeros(model.n_dof()),
        },
    )?;
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::SingularDynamics { cond })?;
    Ok(chol.solve(&(tau - bias)))
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    use crate::model::Link;

    /// Point mass `m` at distance `l` below a horizontal revolute axis;
    /// `q` is measured from hanging straight down.
    fn pendulum(mass: f64, length: f64) -> ArmModel {
        ArmModel::new(
            vec![Link {
                axis: Vector3::y(),
                offset: Vector3::zeros(),
                mass,
                com: Vector3::new(0.0, 0.0, -length),
                inertia: Matrix3::identity() * 1e-12,
            }],
            Vector3::new(0.0, 0.0, -9.81),
        )
        .unwrap()
    }

    fn dv(values: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(values)
    }

    #[test]
    fn pendulum_mass_matrix_is_ml2() {
        let model = pendulum(2.0, 0.5);
        for q in [-1.2, 0.0, 0.7, 3.0] {
            let m = mass_matrix(&model, &dv(&[q])).unwrap();
            assert_relative_eq!(m[(0, 0)], 2.0 * 0.25, max_relative = 1e-9);
        }
    }

    #[test]
    fn pendulum_gravity_vector() {
        let model = pendulum(2.0, 0.5);
        let g0 = gravity_vector(&model, &dv(&[0.0])).unwrap();
        assert!(g0[0].abs() < 1e-12, "equilibrium at q=0, got {}", g0[0]);
        let g90 = gravity_vector(&model, &dv(&[std::f64::consts::FRAC_PI_2])).unwrap();
        assert_relative_eq!(g90[0], 2.0 * 9.81 * 0.5, max_relative = 1e-12);
    }

    #[test]
    fn pendulum_inverse_dynamics_matches_textbook() {
        let (mass, length, accel, q) = (2.0, 0.5, 1.7, 0.4);
        let model = pendulum(mass, length);
        let tau = inverse_dynamics(
            &model,
            &JointState {
                q: dv(&[q]),
                qd: dv(&[0.0]),
                qdd: dv(&[accel]),
            },
        )
        .unwrap();
        let expected = mass * length * length * accel + mass * 9.81 * length * q.sin();
        assert_relative_eq!(tau[0], expected, max_relative = 1e-9);
    }

    #[test]
    fn pendulum_drop_acceleration() {
        let model = pendulum(1.0, 0.4);
        let qdd = forward_dynamics(
            &model,
            &dv(&[std::f64::consts::FRAC_PI_2]),
            &dv(&[0.0]),
            &dv(&[0.0]),
        )
        .unwrap();
        assert_relative_eq!(qdd[0], -9.81 / 0.4, max_relative = 1e-9);
    }

    #[test]
    fn statics_reduce_to_gravity() {
        let model = pendulum(1.3, 0.3);
        let q = dv(&[0.9]);
        let tau = inverse_dynamics(
            &model,
            &JointState {
                q: q.clone(),
                qd: dv(&[0.0]),
                qdd: dv(&[0.0]),
            },
        )
        .unwrap();
        let g = gravity_vector(&model, &q).unwrap();
        assert_relative_eq!(tau[0], g[0], max_relative = 1e-12);
    }

    #[test]
    fn gravity_compensation_holds_still() {
        let model = pendulum(1.0, 0.25);
        let q = dv(&[0.37]);
        let tau = gravity_vector(&model, &q).unwrap();
        let qdd = forward_dynamics(&model, &q, &dv(&[0.0]), &tau).unwrap();
        assert!(qdd[0].abs() < 1e-10);
    }

    #[test]
    fn zero_velocity_zero_coriolis() {
        let model = pendulum(1.0, 0.25);
        let c = coriolis_matrix(&model, &dv(&[0.3]), &dv(&[0.0])).unwrap();
        assert_eq!((c * dv(&[0.0]))[0], 0.0);
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let model = pendulum(1.0, 0.25);
        assert!(matches!(
            mass_matrix(&model, &dv(&[f64::NAN])),
            Err(Error::InvalidState(_))
        ));
        assert!(matches!(
            gravity_vector(&model, &dv(&[f64::INFINITY])),
            Err(Error::InvalidState(_))
        ));
        assert!(matches!(
            coriolis_matrix(&model, &dv(&[0.0]), &dv(&[f64::NAN])),
            Err(Error::InvalidState(_))
        ));
        assert!(matches!(
            forward_dynamics(&model, &dv(&[0.0]), &dv(&[0.0]), &dv(&[f64::NAN])),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let model = pendulum(1.0, 0.25);
        assert!(mass_matrix(&model, &dv(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn near_singular_mass_matrix_reports_error() {
        // Second link almost massless and inertia-free: M is PD but with a
        // condition number far beyond the 1e12 ceiling.
        let model = ArmModel::new(
            vec![
                Link {
                    axis: Vector3::z(),
                    offset: Vector3::zeros(),
                    mass: 1.0,
                    com: Vector3::new(0.2, 0.0, 0.0),
                    inertia: Matrix3::identity() * 0.01,
                },
                Link {
                    axis: Vector3::z(),
                    offset: Vector3::new(0.4, 0.0, 0.0),
                    mass: 1e-14,
                    com: Vector3::new(0.1, 0.0, 0.0),
                    inertia: Matrix3::identity() * 1e-16,
                },
            ],
            Vector3::zeros(),
        )
        .unwrap();
        let res = forward_dynamics(&model, &dv(&[0.0, 0.0]), &dv(&[0.0, 0.0]), &dv(&[0.0, 0.0]));
        assert!(matches!(res, Err(Error::SingularDynamics { .. })));
    }
}
