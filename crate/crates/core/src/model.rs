//! Robot model description: kinematic tree, inertial parameters, contacts
//! and the motor/transmission parameters.
//!
//! A [`ModelDescription`] mirrors the JSON model file one-to-one and may be
//! invalid; [`RobotModel`] is the validated, immutable form used everywhere
//! else. Motor positions are never stored: the transmission is rigid, so
//! `θ = Γ⁻¹ s` is always recoverable from the joint positions.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_GRAVITY: f64 = 9.81;
pub const DEFAULT_EPSILON: f64 = 1e-4;

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

/// Pose given as translation plus roll-pitch-yaw (fixed-axis XYZ).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl Origin {
    pub fn isometry(&self) -> Isometry3<f64> {
        let [x, y, z] = self.xyz;
        let [r, p, yaw] = self.rpy;
        Isometry3::from_parts(
            Translation3::new(x, y, z),
            UnitQuaternion::from_euler_angles(r, p, yaw),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkDescription {
    pub name: String,
    pub mass: f64,
    /// Rotational inertia about the link CoM, in link axes.
    pub inertia: [[f64; 3]; 3],
    /// CoM offset from the link origin, in link axes.
    pub com: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDescription {
    pub name: String,
    #[serde(rename = "type")]
    pub joint_type: JointType,
    pub parent: String,
    pub child: String,
    /// Rotation axis in the joint (= child) frame.
    pub axis: [f64; 3],
    /// Joint frame relative to the parent link frame at `s = 0`.
    #[serde(default)]
    pub origin: Origin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactSpec {
    pub link: String,
    /// Contact frame relative to the link frame; its z axis is the surface normal.
    #[serde(default)]
    pub origin: Origin,
    /// Half-extents of the rectangular foot sole along contact x and y.
    pub half_extents: [f64; 2],
    pub mu: f64,
    #[serde(default)]
    pub f_min: f64,
    /// Torsional friction coefficient; defaults to `mu · min(half_extents)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torsional_mu: Option<f64>,
}

impl ContactSpec {
    pub fn torsional_coefficient(&self) -> f64 {
        self.torsional_mu
            .unwrap_or(self.mu * self.half_extents[0].min(self.half_extents[1]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuationDescription {
    /// Transmission coupling `s = Γ θ`.
    pub gamma: Vec<Vec<f64>>,
    /// Motor rotor inertias (diagonal).
    pub im: Vec<Vec<f64>>,
    /// Motor-side viscous coefficients (diagonal).
    pub kv: Vec<Vec<f64>>,
    /// Motor-side Coulomb coefficients (diagonal).
    pub kc: Vec<Vec<f64>>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

/// Raw model file contents. See `docs/model-format.md`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDescription {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub links: Vec<LinkDescription>,
    pub joints: Vec<JointDescription>,
    #[serde(default)]
    pub contacts: Vec<ContactSpec>,
    pub actuation: ActuationDescription,
    #[serde(default)]
    pub floating_base: bool,
    #[serde(default = "default_gravity")]
    pub gravity_norm: f64,
}

impl ModelDescription {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model description serializes")
    }
}

/// List of invariant violations; empty iff the description is valid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }
}

fn check_square(report: &mut ValidationReport, name: &str, m: &[Vec<f64>], n: usize) -> bool {
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        report.push(format!("{name} must be {n}x{n}"));
        return false;
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        report.push(format!("{name} has non-finite entries"));
        return false;
    }
    true
}

fn check_diagonal(report: &mut ValidationReport, name: &str, m: &[Vec<f64>]) {
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j && v != 0.0 {
                report.push(format!("{name} must be diagonal ({name}[{i}][{j}] = {v})"));
                return;
            }
        }
    }
}

/// Check every model invariant, collecting all violations.
pub fn validate(desc: &ModelDescription) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = desc.joints.len();

    let mut link_index = HashMap::new();
    for (i, link) in desc.links.iter().enumerate() {
        if link_index.insert(link.name.as_str(), i).is_some() {
            report.push(format!("duplicate link name '{}'", link.name));
        }
        if !(link.mass > 0.0) || !link.mass.is_finite() {
            report.push(format!("link '{}' mass must be > 0", link.name));
        }
        let inertia = Matrix3::from_fn(|r, c| link.inertia[r][c]);
        let dyn_inertia = DMatrix::from_column_slice(3, 3, inertia.as_slice());
        if inertia.iter().any(|v| !v.is_finite()) || !linalg::is_spd(&dyn_inertia) {
            report.push(format!(
                "link '{}' inertia must be symmetric positive definite",
                link.name
            ));
        }
    }
    if desc.links.is_empty() {
        report.push("model has no links");
    }

    // Tree structure.
    let mut parent_of: HashMap<&str, &str> = HashMap::new();
    let mut joint_names = HashSet::new();
    for joint in &desc.joints {
        if !joint_names.insert(joint.name.as_str()) {
            report.push(format!("duplicate joint name '{}'", joint.name));
        }
        for end in [&joint.parent, &joint.child] {
            if !link_index.contains_key(end.as_str()) {
                report.push(format!(
                    "joint '{}' references unknown link '{}'",
                    joint.name, end
                ));
            }
        }
        if joint.parent == joint.child {
            report.push(format!("joint '{}' connects link '{}' to itself", joint.name, joint.child));
        }
        if parent_of
            .insert(joint.child.as_str(), joint.parent.as_str())
            .is_some()
        {
            report.push(format!("link '{}' is the child of more than one joint", joint.child));
        }
        let axis = Vector3::from(joint.axis);
        if !axis.iter().all(|v| v.is_finite()) || (axis.norm() - 1.0).abs() > 1e-9 {
            report.push(format!("joint '{}' axis must be a unit vector", joint.name));
        }
    }
    let roots: Vec<&str> = desc
        .links
        .iter()
        .map(|l| l.name.as_str())
        .filter(|name| !parent_of.contains_key(name))
        .collect();
    if !desc.links.is_empty() && roots.len() != 1 {
        report.push(format!(
            "kinematic tree must have exactly one root, found {} ({})",
            roots.len(),
            roots.join(", ")
        ));
    }
    let mut reported: HashSet<Vec<&str>> = HashSet::new();
    for link in &desc.links {
        let mut path = vec![link.name.as_str()];
        let mut current = link.name.as_str();
        while let Some(&parent) = parent_of.get(current) {
            if let Some(pos) = path.iter().position(|&p| p == parent) {
                let mut cycle: Vec<&str> = path[pos..].to_vec();
                // Canonical rotation so each cycle is reported once.
                let start = cycle
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, name)| **name)
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                cycle.rotate_left(start);
                if reported.insert(cycle.clone()) {
                    let mut names = cycle.clone();
                    names.push(cycle[0]);
                    report.push(format!("cycle in joint graph: {}", names.join(" -> ")));
                }
                break;
            }
            path.push(parent);
            current = parent;
        }
    }

    // Contacts.
    for contact in &desc.contacts {
        if !link_index.contains_key(contact.link.as_str()) {
            report.push(format!("contact references unknown link '{}'", contact.link));
        }
        if !(contact.mu > 0.0) {
            report.push(format!("contact on '{}': friction coefficient must be > 0", contact.link));
        }
        if !(contact.half_extents[0] > 0.0 && contact.half_extents[1] > 0.0) {
            report.push(format!("contact on '{}': half-extents must be > 0", contact.link));
        }
        if !(contact.f_min >= 0.0) {
            report.push(format!("contact on '{}': minimum normal force must be >= 0", contact.link));
        }
        if let Some(mu_z) = contact.torsional_mu {
            if !(mu_z > 0.0) {
                report.push(format!(
                    "contact on '{}': torsional friction coefficient must be > 0",
                    contact.link
                ));
            }
        }
    }

    // Actuation.
    let act = &desc.actuation;
    if check_square(&mut report, "Gamma", &act.gamma, n) {
        let gamma = linalg::from_rows(&act.gamma);
        if n > 0 {
            let sv = linalg::singular_values(&gamma);
            if !(sv.min() > sv.max() * 1e-12) {
                report.push("Gamma not invertible");
            }
        }
    }
    if check_square(&mut report, "Im", &act.im, n) {
        check_diagonal(&mut report, "Im", &act.im);
        for i in 0..n {
            if !(act.im[i][i] > 0.0) {
                report.push(format!("motor inertia must be > 0 (Im[{i}][{i}] = {})", act.im[i][i]));
            }
        }
    }
    if check_square(&mut report, "Kv", &act.kv, n) {
        check_diagonal(&mut report, "Kv", &act.kv);
        for i in 0..n {
            if !(act.kv[i][i] >= 0.0) {
                report.push(format!(
                    "viscous coefficient must be ≥ 0 (Kv[{i}][{i}] = {})",
                    act.kv[i][i]
                ));
            }
        }
    }
    if check_square(&mut report, "Kc", &act.kc, n) {
        check_diagonal(&mut report, "Kc", &act.kc);
        for i in 0..n {
            if !(act.kc[i][i] >= 0.0) {
                report.push(format!(
                    "Coulomb coefficient must be ≥ 0 (Kc[{i}][{i}] = {})",
                    act.kc[i][i]
                ));
            }
        }
    }
    if !(act.epsilon > 0.0) || !act.epsilon.is_finite() {
        report.push("friction regularizer epsilon must be > 0");
    }
    if !(desc.gravity_norm >= 0.0) || !desc.gravity_norm.is_finite() {
        report.push("gravity_norm must be finite and >= 0");
    }
    if !desc.contacts.is_empty() && !desc.floating_base {
        // Fixed-base models are handled without contact constraints.
        report.push("contacts are only supported on floating-base models");
    }
    report
}

#[derive(Clone, Debug)]
pub struct Link {
    pub name: String,
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    pub com: Vector3<f64>,
}

#[derive(Clone, Debug)]
pub struct Joint {
    pub name: String,
    pub parent: usize,
    pub child: usize,
    pub axis: Vector3<f64>,
    pub origin: Isometry3<f64>,
}

#[derive(Clone, Debug)]
pub struct Contact {
    pub link: usize,
    pub origin: Isometry3<f64>,
    pub spec: ContactSpec,
}

/// Validated, immutable robot model.
#[derive(Clone, Debug)]
pub struct RobotModel {
    desc: ModelDescription,
    links: Vec<Link>,
    joints: Vec<Joint>,
    contacts: Vec<Contact>,
    root: usize,
    /// Joints in parent-before-child order.
    joint_order: Vec<usize>,
    /// Joint whose child is the given link (`None` for the root).
    parent_joint: Vec<Option<usize>>,
    gamma: DMatrix<f64>,
    gamma_inv: DMatrix<f64>,
    /// `Γ⁻ᵀ I_m Γ⁻¹`.
    reflected: DMatrix<f64>,
    im: DMatrix<f64>,
    kv: DMatrix<f64>,
    kc: DMatrix<f64>,
    total_mass: f64,
}

impl RobotModel {
    pub fn new(desc: ModelDescription) -> Result<Self> {
        let report = validate(&desc);
        if !report.is_empty() {
            return Err(Error::Validation(report.violations));
        }
        let link_index: HashMap<&str, usize> = desc
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.as_str(), i))
            .collect();
        let links: Vec<Link> = desc
            .links
            .iter()
            .map(|l| Link {
                name: l.name.clone(),
                mass: l.mass,
                inertia: Matrix3::from_fn(|r, c| l.inertia[r][c]),
                com: Vector3::from(l.com),
            })
            .collect();
        let joints: Vec<Joint> = desc
            .joints
            .iter()
            .map(|j| Joint {
                name: j.name.clone(),
                parent: link_index[j.parent.as_str()],
                child: link_index[j.child.as_str()],
                axis: Vector3::from(j.axis),
                origin: j.origin.isometry(),
            })
            .collect();
        let contacts = desc
            .contacts
            .iter()
            .map(|c| Contact {
                link: link_index[c.link.as_str()],
                origin: c.origin.isometry(),
                spec: c.clone(),
            })
            .collect();

        let mut parent_joint = vec![None; links.len()];
        for (j, joint) in joints.iter().enumerate() {
            parent_joint[joint.child] = Some(j);
        }
        let root = (0..links.len())
            .find(|&l| parent_joint[l].is_none())
            .expect("validated tree has a root");
        let mut joint_order = Vec::with_capacity(joints.len());
        let mut frontier = std::collections::VecDeque::from([root]);
        while let Some(link) = frontier.pop_front() {
            for (j, joint) in joints.iter().enumerate() {
                if joint.parent == link {
                    joint_order.push(j);
                    frontier.push_back(joint.child);
                }
            }
        }
        debug_assert_eq!(joint_order.len(), joints.len());

        let gamma = linalg::from_rows(&desc.actuation.gamma);
        let gamma_inv = linalg::inverse(&gamma, "Gamma")?;
        let im = linalg::from_rows(&desc.actuation.im);
        let reflected = linalg::symmetrize(&(gamma_inv.transpose() * &im * &gamma_inv));
        let total_mass = desc.links.iter().map(|l| l.mass).sum();
        Ok(Self {
            im,
            reflected,
            kv: linalg::from_rows(&desc.actuation.kv),
            kc: linalg::from_rows(&desc.actuation.kc),
            gamma,
            gamma_inv,
            links,
            joints,
            contacts,
            root,
            joint_order,
            parent_joint,
            total_mass,
            desc,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(ModelDescription::from_json(text)?)
    }

    pub fn to_json(&self) -> String {
        self.desc.to_json()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn description(&self) -> &ModelDescription {
        &self.desc
    }

    pub fn name(&self) -> &str {
        self.desc.name.as_deref().unwrap_or("robot")
    }

    /// Number of actuated joints.
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// Size of the base velocity block: 6 when floating, 0 when fixed.
    pub fn base_dof(&self) -> usize {
        if self.desc.floating_base {
            6
        } else {
            0
        }
    }

    pub fn num_contacts(&self) -> usize {
        self.contacts.len()
    }

    pub fn is_floating(&self) -> bool {
        self.desc.floating_base
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn contacts(&self) -> &[Contact] {
        &self.contacts
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn joint_order(&self) -> &[usize] {
        &self.joint_order
    }

    pub fn parent_joint(&self, link: usize) -> Option<usize> {
        self.parent_joint[link]
    }

    /// Joints on the path from the root to `link`, root-side first.
    pub fn support_joints(&self, link: usize) -> Vec<usize> {
        let mut chain = Vec::new();
        let mut current = link;
        while let Some(j) = self.parent_joint[current] {
            chain.push(j);
            current = self.joints[j].parent;
        }
        chain.reverse();
        chain
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn gamma_inv(&self) -> &DMatrix<f64> {
        &self.gamma_inv
    }

    /// Reflected rotor inertia `Γ⁻ᵀ I_m Γ⁻¹`.
    pub fn reflected_inertia(&self) -> &DMatrix<f64> {
        &self.reflected
    }

    pub fn motor_inertia(&self) -> &DMatrix<f64> {
        &self.im
    }

    pub fn viscous(&self) -> &DMatrix<f64> {
        &self.kv
    }

    pub fn coulomb(&self) -> &DMatrix<f64> {
        &self.kc
    }

    pub fn epsilon(&self) -> f64 {
        self.desc.actuation.epsilon
    }

    pub fn gravity(&self) -> f64 {
        self.desc.gravity_norm
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Copy of this model with the actuation block edited.
    pub fn with_actuation(&self, edit: impl FnOnce(&mut ActuationDescription)) -> Result<Self> {
        let mut desc = self.desc.clone();
        edit(&mut desc.actuation);
        Self::new(desc)
    }
}

/// Read, parse and validate a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<RobotModel> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::ModelNotFound(path.to_owned()));
    }
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    RobotModel::from_json(&text)
}

/// Diagonal matrix helper for building descriptions in code.
pub fn diag_rows(values: &[f64]) -> Vec<Vec<f64>> {
    let n = values.len();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { values[i] } else { 0.0 }).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pendulum_desc() -> ModelDescription {
        let inertia = [[0.01, 0.0, 0.0], [0.0, 0.01, 0.0], [0.0, 0.0, 0.001]];
        ModelDescription {
            name: Some("pendulum".into()),
            links: vec![
                LinkDescription { name: "base".into(), mass: 1.0, inertia, com: [0.0; 3] },
                LinkDescription { name: "l1".into(), mass: 1.0, inertia, com: [0.0, 0.0, -0.25] },
                LinkDescription { name: "l2".into(), mass: 0.5, inertia, com: [0.0, 0.0, -0.2] },
            ],
            joints: vec![
                JointDescription {
                    name: "j1".into(),
                    joint_type: JointType::Revolute,
                    parent: "base".into(),
                    child: "l1".into(),
                    axis: [0.0, 1.0, 0.0],
                    origin: Origin::default(),
                },
                JointDescription {
                    name: "j2".into(),
                    joint_type: JointType::Revolute,
                    parent: "l1".into(),
                    child: "l2".into(),
                    axis: [0.0, 1.0, 0.0],
                    origin: Origin { xyz: [0.0, 0.0, -0.5], rpy: [0.0; 3] },
                },
            ],
            contacts: vec![],
            actuation: ActuationDescription {
                gamma: diag_rows(&[0.01, 0.01]),
                im: diag_rows(&[1e-5, 1e-5]),
                kv: diag_rows(&[1e-4, 1e-4]),
                kc: diag_rows(&[0.0, 0.0]),
                epsilon: 1e-4,
            },
            floating_base: false,
            gravity_norm: 9.81,
        }
    }

    #[test]
    fn valid_description_has_empty_report() {
        assert!(validate(&pendulum_desc()).is_empty());
        let model = RobotModel::new(pendulum_desc()).unwrap();
        assert_eq!(model.dof(), 2);
        assert_eq!(model.total_mass(), 2.5);
    }

    #[test]
    fn negative_viscous_coefficient_is_rejected() {
        let mut d = pendulum_desc();
        d.actuation.kv[1][1] = -0.1;
        let report = validate(&d);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].starts_with("viscous coefficient must be ≥ 0"));
    }

    #[test]
    fn singular_gamma_is_reported() {
        let mut d = pendulum_desc();
        d.actuation.gamma = vec![vec![0.01, 0.02], vec![0.01, 0.02]];
        let report = validate(&d);
        assert!(report.violations.iter().any(|v| v == "Gamma not invertible"));
    }

    #[test]
    fn cycle_is_named() {
        let mut d = pendulum_desc();
        // base -> l1 -> l2 and l2 -> base closes a loop; base loses root status.
        d.joints.push(JointDescription {
            name: "j3".into(),
            joint_type: JointType::Revolute,
            parent: "l2".into(),
            child: "base".into(),
            axis: [1.0, 0.0, 0.0],
            origin: Origin::default(),
        });
        d.actuation = ActuationDescription {
            gamma: diag_rows(&[1.0; 3]),
            im: diag_rows(&[1.0; 3]),
            kv: diag_rows(&[0.0; 3]),
            kc: diag_rows(&[0.0; 3]),
            epsilon: 1e-4,
        };
        let report = validate(&d);
        assert!(
            report
                .violations
                .iter()
                .any(|v| v == "cycle in joint graph: base -> l2 -> l1 -> base"),
            "{:?}",
            report.violations
        );
    }

    #[test]
    fn unknown_link_and_bad_inertia_are_all_reported() {
        let mut d = pendulum_desc();
        d.joints[1].parent = "nope".into();
        d.links[2].inertia[0][1] = 0.5;
        let report = validate(&d);
        assert!(report.violations.iter().any(|v| v.contains("unknown link 'nope'")));
        assert!(report.violations.iter().any(|v| v.contains("'l2' inertia")));
    }

    #[test]
    fn default_epsilon_and_gravity_apply() {
        let mut v: serde_json::Value = serde_json::from_str(&pendulum_desc().to_json()).unwrap();
        v.as_object_mut().unwrap().remove("gravity_norm");
        v["actuation"].as_object_mut().unwrap().remove("epsilon");
        let model = RobotModel::from_json(&v.to_string()).unwrap();
        assert_eq!(model.gravity(), DEFAULT_GRAVITY);
        assert_eq!(model.epsilon(), DEFAULT_EPSILON);
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(RobotModel::from_json("{ links: "), Err(Error::Parse(_))));
    }
}
