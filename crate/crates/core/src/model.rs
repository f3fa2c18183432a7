//! Arm description: kinematic and inertial parameters of a fixed-base
//! serial chain with revolute joints.
//!
//! Conventions:
//!
//! - Link `i` is attached to its parent (link `i-1`, or the base for `i=0`)
//!   by revolute joint `i`.
//! - `offset` is the joint origin expressed in the parent frame.
//! - `axis` is the joint rotation axis expressed in the link's own frame
//!   (it is invariant under the joint's own rotation).
//! - `com` and `inertia` are the link's centre of mass and rotational
//!   inertia about that centre of mass, both in the link frame.
//! - Gravity is a world-frame acceleration vector, default `[0, 0, -9.81]`.

use std::path::Path;

use nalgebra::{DVector, Matrix3, Vector3};
use serde::Deserialize;

use crate::error::{Error, Result};

pub const DEFAULT_GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

/// One rigid link plus the revolute joint that carries it.
#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    /// Joint rotation axis, unit vector in the link frame.
    pub axis: Vector3<f64>,
    /// Joint origin in the parent frame (m).
    pub offset: Vector3<f64>,
    /// Link mass (kg).
    pub mass: f64,
    /// Centre of mass in the link frame (m).
    pub com: Vector3<f64>,
    /// Rotational inertia about the COM, link frame (kg m^2).
    pub inertia: Matrix3<f64>,
}

/// Kinematic + inertial description of an n-DOF fixed-base serial chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmModel {
    pub links: Vec<Link>,
    /// World-frame gravity acceleration (m/s^2).
    pub gravity: Vector3<f64>,
    /// Optional end-effector reference point in the last link's frame.
    /// Used as the attachment point for payloads on the terminal link.
    pub tool: Option<Vector3<f64>>,
}

/// Joint-space state of the arm.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub qdd: DVector<f64>,
}

impl JointState {
    pub fn zeros(n: usize) -> Self {
        Self {
            q: DVector::zeros(n),
            qd: DVector::zeros(n),
            qdd: DVector::zeros(n),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [("q", &self.q), ("qd", &self.qd), ("qdd", &self.qdd)] {
            if v.len() != n {
                return Err(Error::InvalidState(format!(
                    "{name} has length {}, expected {n}",
                    v.len()
                )));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidState(format!("{name} contains non-finite entries")));
            }
        }
        Ok(())
    }
}

const AXIS_UNIT_TOL: f64 = 1e-12;

impl ArmModel {
    /// Build a model, validating every invariant (positive masses, SPD
    /// inertias, unit joint axes).
    pub fn new(links: Vec<Link>, gravity: Vector3<f64>) -> Result<Self> {
        let model = Self {
            links,
            gravity,
            tool: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_tool(mut self, tool: Vector3<f64>) -> Self {
        self.tool = Some(tool);
        self
    }

    pub fn n_dof(&self) -> usize {
        self.links.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.links.is_empty() {
            return Err(Error::Config("arm must have at least one link".into()));
        }
        if !self.gravity.iter().all(|x| x.is_finite()) {
            return Err(Error::Config("gravity vector must be finite".into()));
        }
        for (i, link) in self.links.iter().enumerate() {
            if !(link.mass > 0.0 && link.mass.is_finite()) {
                return Err(Error::Config(format!("link {i}: mass must be positive")));
            }
            if (link.axis.norm() - 1.0).abs() > AXIS_UNIT_TOL {
                return Err(Error::Config(format!(
                    "link {i}: joint axis must be a unit vector (norm {})",
                    link.axis.norm()
                )));
            }
            let sym_err = (link.inertia - link.inertia.transpose()).norm();
            if sym_err > 1e-9 * link.inertia.norm().max(1.0) {
                return Err(Error::Config(format!("link {i}: inertia must be symmetric")));
            }
            // Symmetric positive definite <=> all eigenvalues positive.
            let eig = link.inertia.symmetric_eigenvalues();
            if !eig.iter().all(|&l| l > 0.0) {
                return Err(Error::Config(format!(
                    "link {i}: inertia must be positive definite"
                )));
            }
            let finite = link.offset.iter().all(|x| x.is_finite())
                && link.com.iter().all(|x| x.is_finite())
                && link.inertia.iter().all(|x| x.is_finite());
            if !finite {
                return Err(Error::Config(format!("link {i}: non-finite parameter")));
            }
        }
        Ok(())
    }

    /// Plant copy with mass, COM, and inertia of every link scaled by
    /// `1 + frac`. Models the controller/plant parameter mismatch.
    pub fn perturbed(&self, frac: f64) -> Result<Self> {
        if !(frac.is_finite() && frac > -1.0) {
            return Err(Error::Config(format!("bad perturbation fraction {frac}")));
        }
        let mut out = self.clone();
        for link in &mut out.links {
            link.mass *= 1.0 + frac;
            link.com *= 1.0 + frac;
            link.inertia *= 1.0 + frac;
        }
        out.validate()?;
        Ok(out)
    }

    /// Rigidly attach a point mass at `point` (link frame of `link_index`),
    /// returning the augmented model. The link's mass, COM, and inertia are
    /// recombined about the new centre of mass; the point mass carries no
    /// rotational inertia of its own.
    pub fn with_point_mass(&self, link_index: usize, mass: f64, point: Vector3<f64>) -> Result<Self> {
        if link_index >= self.links.len() {
            return Err(Error::Config(format!(
                "attach link {link_index} out of range (n_dof {})",
                self.links.len()
            )));
        }
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(Error::Config("payload mass must be non-negative".into()));
        }
        let mut out = self.clone();
        let link = &mut out.links[link_index];
        let m0 = link.mass;
        let m1 = mass;
        let total = m0 + m1;
        let com_new = (link.com * m0 + point * m1) / total;
        let shift = |m: f64, d: Vector3<f64>| -> Matrix3<f64> {
            m * (d.norm_squared() * Matrix3::identity() - d * d.transpose())
        };
        link.inertia =
            link.inertia + shift(m0, link.com - com_new) + shift(m1, point - com_new);
        link.mass = total;
        link.com = com_new;
        Ok(out)
    }

    /// Payload attachment point for a link: the child joint's origin for
    /// interior links, the tool point (or the COM when none is set) for the
    /// terminal link.
    pub fn attach_point(&self, link_index: usize) -> Vector3<f64> {
        if link_index + 1 < self.links.len() {
            self.links[link_index + 1].offset
        } else {
            self.tool.unwrap_or(self.links[link_index].com)
        }
    }

    /// Load an arm description from a TOML file. See the schema in
    /// `scenarios/arm6.toml` and the book's dynamics chapter.
    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: ArmFile =
            toml::from_str(text).map_err(|e| Error::Parse(format!("arm file: {e}")))?;
        if raw.schema_version != 1 {
            return Err(Error::Parse(format!(
                "unsupported arm schema_version {}",
                raw.schema_version
            )));
        }
        let links = raw
            .links
            .into_iter()
            .map(|l| {
                let [ixx, iyy, izz, ixy, ixz, iyz] = l.inertia;
                Link {
                    axis: Vector3::from(l.axis),
                    offset: Vector3::from(l.offset),
                    mass: l.mass,
                    com: Vector3::from(l.com),
                    inertia: Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz),
                }
            })
            .collect();
        let mut model = ArmModel::new(links, Vector3::from(raw.gravity))?;
        if let Some(tool) = raw.tool {
            model = model.with_tool(Vector3::from(tool));
        }
        Ok(model)
    }
}

/// On-disk schema, one `[[links]]` entry per link. Inertia is the 6-tuple
/// `[Ixx, Iyy, Izz, Ixy, Ixz, Iyz]` about the COM in the link frame.
#[derive(Debug, Deserialize)]
struct ArmFile {
    schema_version: u32,
    #[allow(dead_code)]
    name: Option<String>,
    #[serde(default = "default_gravity")]
    gravity: [f64; 3],
    tool: Option<[f64; 3]>,
    links: Vec<LinkFile>,
}

fn default_gravity() -> [f64; 3] {
    DEFAULT_GRAVITY
}

#[derive(Debug, Deserialize)]
struct LinkFile {
    mass: f64,
    com: [f64; 3],
    inertia: [f64; 6],
    axis: [f64; 3],
    offset: [f64; 3],
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_link() -> Link {
        Link {
            axis: Vector3::z(),
            offset: Vector3::zeros(),
            mass: 1.0,
            com: Vector3::new(0.1, 0.0, 0.0),
            inertia: Matrix3::from_diagonal(&Vector3::new(0.01, 0.01, 0.02)),
        }
    }

    #[test]
    fn rejects_zero_mass() {
        let mut link = simple_link();
        link.mass = 0.0;
        assert!(matches!(
            ArmModel::new(vec![link], Vector3::from(DEFAULT_GRAVITY)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rejects_non_unit_axis() {
        let mut link = simple_link();
        link.axis = Vector3::new(0.0, 0.0, 2.0);
        assert!(ArmModel::new(vec![link], Vector3::from(DEFAULT_GRAVITY)).is_err());
    }

    #[test]
    fn rejects_indefinite_inertia() {
        let mut link = simple_link();
        link.inertia = Matrix3::from_diagonal(&Vector3::new(0.01, -0.01, 0.02));
        assert!(ArmModel::new(vec![link], Vector3::from(DEFAULT_GRAVITY)).is_err());
    }

    #[test]
    fn rejects_empty_chain() {
        assert!(ArmModel::new(vec![], Vector3::from(DEFAULT_GRAVITY)).is_err());
    }

    #[test]
    fn point_mass_preserves_total_mass_and_moves_com() {
        let model = ArmModel::new(vec![simple_link()], Vector3::from(DEFAULT_GRAVITY)).unwrap();
        let aug = model
            .with_point_mass(0, 1.0, Vector3::new(0.3, 0.0, 0.0))
            .unwrap();
        assert_eq!(aug.links[0].mass, 2.0);
        // COM at the midpoint of the two equal masses.
        assert!((aug.links[0].com - Vector3::new(0.2, 0.0, 0.0)).norm() < 1e-12);
        // Parallel-axis terms keep the inertia SPD.
        assert!(aug.validate().is_ok());
    }

    #[test]
    fn parses_arm_file() {
        let text = r#"
schema_version = 1
name = "test"
gravity = [0.0, 0.0, -9.81]
tool = [0.0, 0.0, -0.1]

[[links]]
mass = 2.0
com = [0.0, 0.0, -0.05]
inertia = [0.01, 0.01, 0.005, 0.0, 0.0, 0.0]
axis = [0.0, 0.0, 1.0]
offset = [0.0, 0.0, 0.0]
"#;
        let model = ArmModel::from_toml_str(text).unwrap();
        assert_eq!(model.n_dof(), 1);
        assert_eq!(model.links[0].mass, 2.0);
        assert_eq!(model.tool, Some(Vector3::new(0.0, 0.0, -0.1)));
    }

    #[test]
    fn rejects_unknown_schema_version() {
        let text = "schema_version = 99\nlinks = []\n";
        assert!(matches!(
            ArmModel::from_toml_str(text),
            Err(Error::Parse(_))
        ));
    }
}
