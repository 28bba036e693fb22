//! Multi-body dynamics in centroidal coordinates.
//!
//! The recursions in [`spatial`] work with the internal base velocity
//! `(ṗ_B, ω_B)`. [`compute_dynamics`] then applies the velocity
//! transformation `ν_c = T ν_int` with `T = [[Λ⁻¹A_b, Λ⁻¹A_s], [0, 1]]`,
//! where `A = [A_b, A_s]` is the centroidal momentum map about the CoM and
//! `Λ = blockdiag(m 1₃, I_c)` is the locked inertia. In the new coordinates
//! the base velocity is `v_B = (ṗ_c, ω_o)`, the mass matrix is block
//! diagonal and `H = M_b v_B`.
//!
//! All 6-vectors outside [`spatial`] are ordered (linear; angular): contact
//! velocities `(v_p; ω)`, contact wrenches `(force; moment about the contact
//! point)` and momentum `(H_L; H_ω)` about the CoM, all in world axes.
//! `J̇ν` is expressed in the same world-aligned contact frames as `J`.

pub mod spatial;

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::friction::FrictionQuantities;
use crate::linalg;
use crate::model::RobotModel;
pub use spatial::Kinematics;

/// Configuration and velocity in centroidal coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub base_position: Vector3<f64>,
    pub base_orientation: UnitQuaternion<f64>,
    pub s: DVector<f64>,
    /// `(ṗ_c, ω_o)`: CoM velocity and locked angular velocity. Zero and
    /// ignored for fixed-base models.
    pub base_velocity: Vector6<f64>,
    pub sdot: DVector<f64>,
}

impl RobotState {
    pub fn zeros(model: &RobotModel) -> Self {
        Self {
            base_position: Vector3::zeros(),
            base_orientation: UnitQuaternion::identity(),
            s: DVector::zeros(model.dof()),
            base_velocity: Vector6::zeros(),
            sdot: DVector::zeros(model.dof()),
        }
    }

    pub fn at_rest(model: &RobotModel, s: DVector<f64>) -> Self {
        Self {
            s,
            ..Self::zeros(model)
        }
    }

    /// Generalized velocity `ν = (v_B, ṡ)`; just `ṡ` for fixed base.
    pub fn nu(&self, model: &RobotModel) -> DVector<f64> {
        let nb = model.base_dof();
        let n = model.dof();
        let mut nu = DVector::zeros(nb + n);
        if nb == 6 {
            nu.rows_mut(0, 6).copy_from(&self.base_velocity);
        }
        nu.rows_mut(nb, n).copy_from(&self.sdot);
        nu
    }

    pub fn set_nu(&mut self, model: &RobotModel, nu: &DVector<f64>) {
        let nb = model.base_dof();
        if nb == 6 {
            self.base_velocity = nu.fixed_rows::<6>(0).into_owned();
        }
        self.sdot = nu.rows(nb, model.dof()).into_owned();
    }

    pub fn base_pose(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.base_position), self.base_orientation)
    }
}

/// Dynamics quantities at one state, in centroidal coordinates.
#[derive(Clone, Debug)]
pub struct DynamicsQuantities {
    pub mb: DMatrix<f64>,
    pub ms: DMatrix<f64>,
    pub hb: DVector<f64>,
    pub hs: DVector<f64>,
    pub jb: DMatrix<f64>,
    pub js: DMatrix<f64>,
    pub jdot_nu: DVector<f64>,
    /// Centroidal momentum matrix `J̄_G` (6 × n).
    pub jg: DMatrix<f64>,
    /// `H = M_b v_B`; empty for fixed-base models.
    pub momentum: DVector<f64>,
    pub com: Vector3<f64>,
    pub mass: f64,
    pub gravity: f64,
    pub base_dof: usize,
    /// Momentum per joint velocity with the internal base at rest (6 × n).
    pub joint_momentum_map: DMatrix<f64>,
    /// Maps centroidal `ν` back to internal `(ṗ_B, ω_B, ṡ)`.
    pub t_inv: DMatrix<f64>,
    pub contact_frames: Vec<Isometry3<f64>>,
    /// Generalized velocity the quantities were evaluated at.
    pub nu: DVector<f64>,
}

impl DynamicsQuantities {
    pub fn dof(&self) -> usize {
        self.ms.nrows()
    }

    pub fn num_contacts(&self) -> usize {
        self.jb.nrows() / 6
    }

    pub fn sdot(&self) -> DVector<f64> {
        self.nu.rows(self.base_dof, self.dof()).into_owned()
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        linalg::block_diag(&self.mb, &self.ms)
    }

    pub fn bias(&self) -> DVector<f64> {
        let mut h = DVector::zeros(self.base_dof + self.dof());
        h.rows_mut(0, self.base_dof).copy_from(&self.hb);
        h.rows_mut(self.base_dof, self.dof()).copy_from(&self.hs);
        h
    }

    /// Full contact Jacobian `J = [J_b, J_s]`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let rows = self.jb.nrows();
        let mut j = DMatrix::zeros(rows, self.base_dof + self.dof());
        j.view_mut((0, 0), (rows, self.base_dof)).copy_from(&self.jb);
        j.view_mut((0, self.base_dof), (rows, self.dof())).copy_from(&self.js);
        j
    }

    /// Selector `B = (0_{n×6}, 1_n)ᵀ`.
    pub fn selector(&self) -> DMatrix<f64> {
        let n = self.dof();
        let mut b = DMatrix::zeros(self.base_dof + n, n);
        b.view_mut((self.base_dof, 0), (n, n)).fill_with_identity();
        b
    }

    /// `m g e₃` lifted into the linear part of a 6-vector.
    pub fn gravity_wrench(&self) -> Vector6<f64> {
        Vector6::new(0.0, 0.0, self.mass * self.gravity, 0.0, 0.0, 0.0)
    }

    /// `M̄ = blockdiag(M_b, M̄_s)`.
    pub fn mass_matrix_bar(&self, fq: &FrictionQuantities) -> DMatrix<f64> {
        linalg::block_diag(&self.mb, &fq.ms_bar)
    }
}

/// Evaluate all dynamics quantities at `state`.
pub fn compute_dynamics(model: &RobotModel, state: &RobotState) -> Result<DynamicsQuantities> {
    let n = model.dof();
    if state.s.len() != n || state.sdot.len() != n {
        return Err(Error::Dimension {
            context: "compute_dynamics state",
            expected: n,
            actual: state.s.len().min(state.sdot.len()),
        });
    }
    let kin = Kinematics::new(model, &state.base_position, &state.base_orientation, &state.s);
    let m_int = kin.mass_matrix(model);
    let mass = model.total_mass();
    let g = model.gravity();
    let com = kin
        .link_com
        .iter()
        .zip(model.links())
        .map(|(c, l)| c * l.mass)
        .sum::<Vector3<f64>>()
        / mass;

    // Momentum map about the CoM, rows (linear; angular).
    let a_origin = kin.momentum_map(model);
    let nb = model.base_dof();
    let mut a_com = DMatrix::zeros(6, nb + n);
    for c in 0..nb + n {
        let col = a_origin.column(c);
        let lin = Vector3::new(col[3], col[4], col[5]);
        let ang = Vector3::new(col[0], col[1], col[2]) - com.cross(&lin);
        for k in 0..3 {
            a_com[(k, c)] = lin[k];
            a_com[(3 + k, c)] = ang[k];
        }
    }
    let a_s = a_com.columns(nb, n).into_owned();
    let contact_frames: Vec<Isometry3<f64>> = model
        .contacts()
        .iter()
        .map(|c| {
            let link_pose = Isometry3::from_parts(
                Translation3::from(kin.link_position[c.link]),
                UnitQuaternion::from_matrix(&kin.link_rotation[c.link]),
            );
            link_pose * c.origin
        })
        .collect();
    let nc = contact_frames.len();
    let j_int = if nc > 0 {
        let mut j = DMatrix::zeros(6 * nc, nb + n);
        for (k, c) in model.contacts().iter().enumerate() {
            let p = contact_frames[k].translation.vector;
            j.view_mut((6 * k, 0), (6, nb + n))
                .copy_from(&kin.point_jacobian(model, c.link, &p));
        }
        j
    } else {
        DMatrix::zeros(0, nb + n)
    };

    if nb == 0 {
        let nu = state.sdot.clone();
        let hs = kin.inverse_dynamics(model, &nu, &DVector::zeros(n), true);
        return Ok(DynamicsQuantities {
            mb: DMatrix::zeros(0, 0),
            ms: linalg::symmetrize(&m_int),
            hb: DVector::zeros(0),
            hs,
            jb: DMatrix::zeros(j_int.nrows(), 0),
            js: j_int.clone(),
            jdot_nu: DVector::zeros(j_int.nrows()),
            jg: a_s.clone(),
            momentum: DVector::zeros(0),
            com,
            mass,
            gravity: g,
            base_dof: 0,
            joint_momentum_map: a_s,
            t_inv: DMatrix::identity(n, n),
            contact_frames,
            nu,
        });
    }

    // Locked inertia about the CoM.
    let ic_origin: Matrix3<f64> = kin.composite_inertia[model.root()]
        .fixed_view::<3, 3>(0, 0)
        .into_owned();
    let cx = linalg::skew(&com);
    let ic = ic_origin - mass * cx * cx.transpose();
    let ic = (ic + ic.transpose()) * 0.5;
    let mut lambda = DMatrix::zeros(6, 6);
    lambda.view_mut((0, 0), (3, 3)).fill_with_identity();
    lambda.view_mut((0, 0), (3, 3)).scale_mut(mass);
    lambda.view_mut((3, 3), (3, 3)).copy_from(&ic);
    let ic_inv = ic
        .try_inverse()
        .ok_or(Error::Singular("locked inertia"))?;
    let mut lambda_inv = DMatrix::zeros(6, 6);
    lambda_inv.view_mut((0, 0), (3, 3)).fill_with_identity();
    lambda_inv.view_mut((0, 0), (3, 3)).scale_mut(1.0 / mass);
    lambda_inv.view_mut((3, 3), (3, 3)).copy_from(&ic_inv);

    let a_b = a_com.columns(0, 6).into_owned();
    let t_bb = &lambda_inv * &a_b;
    let t_bs = &lambda_inv * &a_s;
    let t_bb_inv = linalg::inverse(&t_bb, "centroidal transform")?;
    let a_b_inv = linalg::inverse(&a_b, "base momentum map")?;
    let mut t_inv = DMatrix::identity(6 + n, 6 + n);
    t_inv.view_mut((0, 0), (6, 6)).copy_from(&t_bb_inv);
    t_inv
        .view_mut((0, 6), (6, n))
        .copy_from(&(-&t_bb_inv * &t_bs));

    let nu_c = state.nu(model);
    let nu_int = &t_inv * &nu_c;
    let vel = kin.link_velocities(model, &nu_int);

    // İ_c from link motion relative to the CoM.
    let com_vel = Vector3::new(state.base_velocity[0], state.base_velocity[1], state.base_velocity[2]);
    let omega_o = Vector3::new(state.base_velocity[3], state.base_velocity[4], state.base_velocity[5]);
    let mut ic_dot = Matrix3::zeros();
    for (l, link) in model.links().iter().enumerate() {
        let w = spatial::angular(&vel[l]);
        let c = kin.link_com[l];
        let vc = spatial::linear(&vel[l]) + w.cross(&c);
        let r = c - com;
        let rdot = vc - com_vel;
        let wx = linalg::skew(&w);
        let iw = kin.link_inertia[l];
        ic_dot += wx * iw - iw * wx;
        ic_dot += link.mass
            * (2.0 * r.dot(&rdot) * Matrix3::identity() - rdot * r.transpose() - r * rdot.transpose());
    }

    // Internal base acceleration that keeps the centroidal velocity constant.
    let h_int0 = kin.inverse_dynamics(model, &nu_int, &DVector::zeros(6 + n), true);
    let mut gravity_wrench = DVector::zeros(6);
    gravity_wrench[2] = mass * g;
    let hdot0 = t_bb_inv.transpose() * h_int0.rows(0, 6) - &gravity_wrench;
    let mut lambda_dot_v = DVector::zeros(6);
    lambda_dot_v.rows_mut(3, 3).copy_from(&(ic_dot * omega_o));
    let a_base = &a_b_inv * (lambda_dot_v - hdot0);
    let h_int = h_int0 + m_int.columns(0, 6) * &a_base;
    let hb = t_bb_inv.transpose() * h_int.rows(0, 6);
    let hs = h_int.rows(6, n) - t_bs.transpose() * &hb;

    let ms = linalg::symmetrize(
        &(m_int.view((6, 6), (n, n)) - a_s.transpose() * &lambda_inv * &a_s),
    );

    let jb = j_int.columns(0, 6) * &t_bb_inv;
    let js = j_int.columns(6, n) - &jb * &t_bs;
    let mut jdot_nu = DVector::zeros(6 * nc);
    if nc > 0 {
        let mut nudot_int = DVector::zeros(6 + n);
        nudot_int.rows_mut(0, 6).copy_from(&a_base);
        let acc = kin.link_accelerations(model, &vel, &nu_int, &nudot_int, false);
        for (k, c) in model.contacts().iter().enumerate() {
            let p = contact_frames[k].translation.vector;
            let a = spatial::point_acceleration(&vel[c.link], &acc[c.link], &p);
            jdot_nu.fixed_rows_mut::<6>(6 * k).copy_from(&a);
        }
    }

    let mb = lambda;
    let momentum = &mb * DVector::from_column_slice(state.base_velocity.as_slice());
    let jg = if nc > 0 {
        // J_b⁺ J_s through the normal equations; J_b has full column rank.
        let gram = jb.transpose() * &jb;
        match linalg::inverse(&gram, "J_bᵀ J_b") {
            Ok(gram_inv) => -&mb * (gram_inv * (jb.transpose() * &js)),
            Err(_) => {
                return Err(Error::RankDeficient {
                    what: "base contact Jacobian J_b",
                    rank: linalg::rank(&jb).min(5),
                    required: 6,
                })
            }
        }
    } else {
        a_s.clone()
    };

    Ok(DynamicsQuantities {
        mb,
        ms,
        hb,
        hs,
        jb,
        js,
        jdot_nu,
        jg,
        momentum,
        com,
        mass,
        gravity: g,
        base_dof: 6,
        joint_momentum_map: a_s,
        t_inv,
        contact_frames,
        nu: nu_c,
    })
}

/// `J ν̇ + J̇ ν`.
pub fn contact_constraint_residual(dq: &DynamicsQuantities, nudot: &DVector<f64>) -> Result<DVector<f64>> {
    let dim = dq.base_dof + dq.dof();
    if nudot.len() != dim {
        return Err(Error::Dimension {
            context: "contact_constraint_residual",
            expected: dim,
            actual: nudot.len(),
        });
    }
    Ok(dq.jacobian() * nudot + &dq.jdot_nu)
}

/// Contact pose anchors and gain for Baumgarte drift correction.
#[derive(Clone, Debug)]
pub struct Stabilization {
    pub alpha: f64,
    pub anchors: Vec<Isometry3<f64>>,
}

impl Stabilization {
    pub const DEFAULT_ALPHA: f64 = 10.0;

    pub fn anchored_at(dq: &DynamicsQuantities) -> Self {
        Self {
            alpha: Self::DEFAULT_ALPHA,
            anchors: dq.contact_frames.clone(),
        }
    }

    /// Stacked `(Δp; log(R Rₐᵀ))` per contact, in world axes.
    pub fn position_error(&self, frames: &[Isometry3<f64>]) -> DVector<f64> {
        let mut e = DVector::zeros(6 * frames.len());
        for (k, (frame, anchor)) in frames.iter().zip(&self.anchors).enumerate() {
            let dp = frame.translation.vector - anchor.translation.vector;
            let dr = (frame.rotation * anchor.rotation.inverse()).scaled_axis();
            e.fixed_rows_mut::<3>(6 * k).copy_from(&dp);
            e.fixed_rows_mut::<3>(6 * k + 3).copy_from(&dr);
        }
        e
    }

    /// `2α Jν + α² e`, the term moved to the left of `Jν̇ + J̇ν = 0`.
    pub fn correction(&self, dq: &DynamicsQuantities) -> DVector<f64> {
        let jnu = dq.jacobian() * &dq.nu;
        jnu * (2.0 * self.alpha) + self.position_error(&dq.contact_frames) * (self.alpha * self.alpha)
    }
}

/// Constrained accelerations and contact wrenches for precomputed quantities.
///
/// Solves `M̄ν̇ + h = Jᵀf + Bu − B K̄_f ṡ` with
/// `Jν̇ + J̇ν + correction = 0`.
pub fn solve_constrained(
    dq: &DynamicsQuantities,
    fq: &FrictionQuantities,
    u: &DVector<f64>,
    correction: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = dq.dof();
    if u.len() != n {
        return Err(Error::Dimension {
            context: "forward dynamics input u",
            expected: n,
            actual: u.len(),
        });
    }
    let nb = dq.base_dof;
    let sdot = dq.sdot();
    let mut rhs = -dq.bias();
    let joint_force = u - &fq.kf_bar * &sdot;
    let mut joint_rows = rhs.rows_mut(nb, n);
    joint_rows += joint_force;

    let mbar = dq.mass_matrix_bar(fq);
    let chol = linalg::cholesky(&mbar, "mass matrix M̄")?;
    let nc = dq.num_contacts();
    if nc == 0 {
        return Ok((chol.solve(&rhs), DVector::zeros(0)));
    }
    let j = dq.jacobian();
    let minv_jt = chol.solve(&j.transpose());
    let gram = &j * &minv_jt;
    let gram_chol = linalg::cholesky(&linalg::symmetrize(&gram), "contact Gram matrix J M̄⁻¹ Jᵀ")
        .map_err(|_| Error::Singular("contact Gram matrix J M̄⁻¹ Jᵀ"))?;
    let free_acc = chol.solve(&rhs);
    let mut target = -(&j * &free_acc) - &dq.jdot_nu;
    if let Some(c) = correction {
        target -= c;
    }
    let f = gram_chol.solve(&target);
    let nudot = free_acc + minv_jt * &f;
    Ok((nudot, f))
}

/// Forward dynamics of the robot-plus-motor plant under joint-side input `u`.
pub fn forward_dynamics_constrained(
    model: &RobotModel,
    state: &RobotState,
    u: &DVector<f64>,
    stabilization: Option<&Stabilization>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let dq = compute_dynamics(model, state)?;
    let fq = FrictionQuantities::new(model, &dq.ms, &state.sdot)?;
    let correction = stabilization.map(|s| s.correction(&dq));
    solve_constrained(&dq, &fq, u, correction.as_ref())
}

/// Kinetic energy `½ νᵀ M ν` (rigid-body part only).
pub fn kinetic_energy(dq: &DynamicsQuantities) -> f64 {
    0.5 * dq.nu.dot(&(dq.mass_matrix() * &dq.nu))
}

/// Gravitational potential energy `m g z_c`.
pub fn potential_energy(dq: &DynamicsQuantities) -> f64 {
    dq.mass * dq.gravity * dq.com.z
}
