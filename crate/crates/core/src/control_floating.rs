//! Momentum-based balancing for floating-base robots in rigid contact.
//!
//! Both controllers choose contact wrenches that produce a desired momentum
//! rate, resolve the remaining wrench freedom with a QP, and then compute
//! joint torques that instantaneously realize those wrenches, with a
//! postural task in the null space.
//!
//! The friction-exploiting variant splits the contact wrench into a part
//! `f_m` set by the input and a part `D K̄_f ṡ` set by joint friction. Its
//! momentum reference carries the extra `T H^d` term, with
//! `T = J_bᵀ D K̄_f Dᵀ J_b`, so that under rigid contact the momentum error
//! obeys `Ḣ̃ + (K_p + T) H̃ + K_i I_H̃ = 0`: friction adds damping `T`.
//!
//! All wrenches are stacked per contact as (force; moment about the contact
//! point) in world axes.

use nalgebra::{DMatrix, DVector, Isometry3};
use serde::{Deserialize, Serialize};

use crate::control_fixed::{JointGains, JointReference};
use crate::dynamics::{DynamicsQuantities, RobotState};
use crate::error::{Error, Result};
use crate::friction::FrictionQuantities;
use crate::linalg;
use crate::model::ContactSpec;
use crate::qp::{self, TorqueCost};

pub const DEFAULT_INTEGRAL_BOUND: f64 = 50.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MomentumGains {
    pub kp: DMatrix<f64>,
    pub ki: DMatrix<f64>,
    /// Inner-loop integral gain `K_I`.
    pub ki_inner: DMatrix<f64>,
    pub postural: JointGains,
}

impl MomentumGains {
    /// Symmetric positive definite check on the momentum and inner gains.
    pub fn validate(&self) -> Result<()> {
        for (m, what) in [
            (&self.kp, "momentum gain Kp"),
            (&self.ki, "momentum gain Ki"),
            (&self.ki_inner, "inner-loop gain KI"),
        ] {
            if linalg::symmetry_residual(m) > 1e-12 || !linalg::is_spd(m) {
                return Err(Error::NotPositiveDefinite(what));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentumReference {
    pub h: DVector<f64>,
    pub hdot: DVector<f64>,
    /// Subtracted from the momentum-integral integrand. Zero reproduces the
    /// plain joint-velocity integrand; `(H^d_L, 0)` with a constant postural
    /// reference makes the linear part integrate `m(ṗ_c − ṗ_c^d)`.
    pub integral_offset: DVector<f64>,
}

impl MomentumReference {
    pub fn zero() -> Self {
        Self {
            h: DVector::zeros(6),
            hdot: DVector::zeros(6),
            integral_offset: DVector::zeros(6),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    /// `I_H̃`, the momentum-error integral approximation.
    pub momentum_integral: DVector<f64>,
    /// Component-wise anti-windup bound; `None` disables clamping.
    pub integral_bound: Option<f64>,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self {
            momentum_integral: DVector::zeros(6),
            integral_bound: Some(DEFAULT_INTEGRAL_BOUND),
        }
    }
}

/// Which joint mass matrix the baseline uses in its torque computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointInertia {
    /// `M_s`, rigid-body only.
    Rigid,
    /// `M̄_s`, including reflected rotor inertia.
    #[default]
    Reflected,
}

#[derive(Clone, Debug)]
pub struct ControlOutput {
    /// `τ*` for the baseline, `u*` for the friction-exploiting controller.
    pub command: DVector<f64>,
    /// Wrench commanded through the input: `f*` or `f_m*`.
    pub f_star: DVector<f64>,
    /// Particular solution `f₁` or `f_m1`.
    pub f_particular: DVector<f64>,
    /// Wrench expected at the contacts: `f*` or `f_m* + D K̄_f ṡ`.
    pub f_expected: DVector<f64>,
    /// `D`; zero-sized for the baseline.
    pub d: DMatrix<f64>,
    /// `T`; zero for the baseline.
    pub t: DMatrix<f64>,
    pub n_b: DMatrix<f64>,
    /// `Λ` or `Λ̄`.
    pub lambda: DMatrix<f64>,
    /// `N_Λ` or `N̄_Λ`.
    pub n_lambda: DMatrix<f64>,
    /// `τ₀` or `u_null`.
    pub u_null: DVector<f64>,
    pub u0: DVector<f64>,
    pub hdot_star: DVector<f64>,
    pub momentum_error: DVector<f64>,
    /// `min(b − A f_expected)`; negative when a cone row is violated.
    pub cone_margin: f64,
    /// Smallest eigenvalue of `T` (zero for the baseline).
    pub t_min_eigenvalue: f64,
}

/// `N = I − A†A`.
pub fn nullspace_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::nullspace_projector(a)
}

/// Stacked linear inequalities `A f ≤ b`.
#[derive(Clone, Debug)]
pub struct ConeConstraints {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl ConeConstraints {
    pub const ROWS_PER_CONTACT: usize = 11;

    pub fn margins(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * f
    }

    pub fn min_margin(&self, f: &DVector<f64>) -> f64 {
        if self.b.is_empty() {
            return f64::INFINITY;
        }
        self.margins(f).min()
    }

    /// Name of a stacked row, e.g. `contact 1: CoP x (-m_y)`.
    pub fn describe_row(row: usize) -> String {
        const NAMES: [&str; 11] = [
            "friction +f_x",
            "friction -f_x",
            "friction +f_y",
            "friction -f_y",
            "normal force f_z >= f_min",
            "CoP x (+m_y)",
            "CoP x (-m_y)",
            "CoP y (+m_x)",
            "CoP y (-m_x)",
            "torsion +m_z",
            "torsion -m_z",
        ];
        format!("contact {}: {}", row / Self::ROWS_PER_CONTACT, NAMES[row % Self::ROWS_PER_CONTACT])
    }

    /// Index of the most violated row, if any row is violated beyond `tol`.
    pub fn most_violated(&self, f: &DVector<f64>, tol: f64) -> Option<(usize, f64)> {
        let margins = self.margins(f);
        let (i, m) = margins.argmin();
        (margins.len() > 0 && m < -tol).then_some((i, -m))
    }
}

/// Linearized contact stability region per contact, in the contact frame:
///
/// - 4 pyramid facets `±f_x ≤ (μ/√2) f_z`, `±f_y ≤ (μ/√2) f_z`
/// - unilaterality `f_z ≥ f_min`
/// - 4 CoP rows `±m_y ≤ X f_z`, `±m_x ≤ Y f_z` (foot half-extents X, Y)
/// - 2 torsion rows `±m_z ≤ μ_z f_z`
///
/// The rows are rotated into world axes with each contact frame.
pub fn friction_cone_constraints(
    contacts: &[ContactSpec],
    frames: &[Isometry3<f64>],
) -> ConeConstraints {
    let rows = ConeConstraints::ROWS_PER_CONTACT;
    let nc = contacts.len().min(frames.len());
    let mut a = DMatrix::zeros(rows * nc, 6 * nc);
    let mut b = DVector::zeros(rows * nc);
    for (k, (spec, frame)) in contacts.iter().zip(frames).enumerate() {
        let mu = spec.mu / std::f64::consts::SQRT_2;
        let [hx, hy] = spec.half_extents;
        let mz = spec.torsional_coefficient();
        // Local rows over (fx, fy, fz, mx, my, mz).
        let local: [[f64; 6]; 11] = [
            [1.0, 0.0, -mu, 0.0, 0.0, 0.0],
            [-1.0, 0.0, -mu, 0.0, 0.0, 0.0],
            [0.0, 1.0, -mu, 0.0, 0.0, 0.0],
            [0.0, -1.0, -mu, 0.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, -hx, 0.0, 1.0, 0.0],
            [0.0, 0.0, -hx, 0.0, -1.0, 0.0],
            [0.0, 0.0, -hy, 1.0, 0.0, 0.0],
            [0.0, 0.0, -hy, -1.0, 0.0, 0.0],
            [0.0, 0.0, -mz, 0.0, 0.0, 1.0],
            [0.0, 0.0, -mz, 0.0, 0.0, -1.0],
        ];
        let r = frame.rotation.to_rotation_matrix();
        for (i, row) in local.iter().enumerate() {
            let f_loc = nalgebra::Vector3::new(row[0], row[1], row[2]);
            let m_loc = nalgebra::Vector3::new(row[3], row[4], row[5]);
            let f_w = r * f_loc;
            let m_w = r * m_loc;
            for c in 0..3 {
                a[(rows * k + i, 6 * k + c)] = f_w[c];
                a[(rows * k + i, 6 * k + 3 + c)] = m_w[c];
            }
        }
        b[rows * k + 4] = -spec.f_min;
    }
    ConeConstraints { a, b }
}

/// `D` and the affine input-to-wrench map `f_m(u) = free − D u`.
#[derive(Clone, Debug)]
pub struct WrenchMap {
    pub d: DMatrix<f64>,
    /// `(JM̄⁻¹Jᵀ)⁻¹ (JM̄⁻¹h − J̇ν)`.
    pub free: DVector<f64>,
}

impl WrenchMap {
    pub fn f_m(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.free - &self.d * u
    }
}

/// `D = (JM̄⁻¹Jᵀ)⁻¹ J M̄⁻¹ B`, `f_m(u) = (JM̄⁻¹Jᵀ)⁻¹(JM̄⁻¹(h − Bu) − J̇ν)`.
pub fn wrench_map_d(dq: &DynamicsQuantities, fq: &FrictionQuantities) -> Result<WrenchMap> {
    let mbar = dq.mass_matrix_bar(fq);
    let chol = linalg::cholesky(&mbar, "mass matrix M̄")?;
    let j = dq.jacobian();
    let jminv = chol.solve(&j.transpose()).transpose();
    let gram = linalg::symmetrize(&(&jminv * j.transpose()));
    let gram_chol = linalg::cholesky(&gram, "contact Gram matrix J M̄⁻¹ Jᵀ")
        .map_err(|_| Error::Singular("contact Gram matrix J M̄⁻¹ Jᵀ"))?;
    let jminv_b = jminv.columns(dq.base_dof, dq.dof()).into_owned();
    let d = gram_chol.solve(&jminv_b);
    let free = gram_chol.solve(&(&jminv * dq.bias() - &dq.jdot_nu));
    Ok(WrenchMap { d, free })
}

/// `Ḣ = J_bᵀ f − m g e₃`.
pub fn momentum_rate(dq: &DynamicsQuantities, f: &DVector<f64>) -> DVector<f64> {
    dq.jb.transpose() * f - gravity_wrench(dq)
}

fn gravity_wrench(dq: &DynamicsQuantities) -> DVector<f64> {
    DVector::from_column_slice(dq.gravity_wrench().as_slice())
}

/// One explicit Euler step of `İ_H̃ = [J_G^L(s); J_G^ω(s^d)](ṡ − ṡ^d) − offset`.
///
/// `jg` is `J̄_G` at the current configuration and `jg_desired` at `s^d`.
pub fn momentum_integral_update(
    istate: &ControllerState,
    jg: &DMatrix<f64>,
    jg_desired: &DMatrix<f64>,
    reference: &MomentumReference,
    sdot: &DVector<f64>,
    sdot_d: &DVector<f64>,
    dt: f64,
) -> ControllerState {
    let e = sdot - sdot_d;
    let mut rate = DVector::zeros(6);
    rate.rows_mut(0, 3).copy_from(&(jg.rows(0, 3) * &e));
    rate.rows_mut(3, 3).copy_from(&(jg_desired.rows(3, 3) * &e));
    rate -= &reference.integral_offset;
    let mut next = istate.clone();
    next.momentum_integral += rate * dt;
    if let Some(c) = istate.integral_bound {
        next.momentum_integral.apply(|x| *x = x.clamp(-c, c));
    }
    next
}

/// Pieces shared by both controllers for a given joint mass matrix.
struct TaskMaps {
    lambda: DMatrix<f64>,
    lambda_pinv: DMatrix<f64>,
    n_lambda: DMatrix<f64>,
    /// `J M⁻¹` for the full mass matrix.
    jminv: DMatrix<f64>,
    ms: DMatrix<f64>,
}

impl TaskMaps {
    fn new(dq: &DynamicsQuantities, ms: &DMatrix<f64>) -> Result<Self> {
        let m = linalg::block_diag(&dq.mb, ms);
        let chol = linalg::cholesky(&m, "mass matrix")?;
        let j = dq.jacobian();
        let jminv = chol.solve(&j.transpose()).transpose();
        let lambda = jminv.columns(dq.base_dof, dq.dof()).into_owned();
        let (lambda_pinv, rank) = linalg::pinv_and_rank(&lambda);
        if rank < lambda.nrows() {
            return Err(Error::RankDeficient {
                what: "joint task map J_s M_s⁻¹",
                rank,
                required: lambda.nrows(),
            });
        }
        let n = dq.dof();
        let n_lambda = DMatrix::identity(n, n) - &lambda_pinv * &lambda;
        Ok(Self {
            lambda,
            lambda_pinv,
            n_lambda,
            jminv,
            ms: ms.clone(),
        })
    }

    /// `u₀ = −K_p N M s̃ − K_d N M ṡ̃`.
    fn postural_feedback(&self, state: &RobotState, jref: &JointReference, gains: &JointGains) -> DVector<f64> {
        let nm = &self.n_lambda * &self.ms;
        -(&gains.kp * &nm * (&state.s - &jref.s)) - &gains.kd * &nm * (&state.sdot - &jref.sdot)
    }

    /// Affine `f ↦ Λ†(JM⁻¹(h − Jᵀf) − J̇ν) + N(h_s − J_sᵀf + extra)`.
    fn torque_cost(&self, dq: &DynamicsQuantities, extra: &DVector<f64>) -> TorqueCost {
        let j = dq.jacobian();
        let map = -(&self.lambda_pinv * (&self.jminv * j.transpose())) - &self.n_lambda * dq.js.transpose();
        let offset = &self.lambda_pinv * (&self.jminv * dq.bias() - &dq.jdot_nu)
            + &self.n_lambda * (&dq.hs + extra);
        TorqueCost { map, offset }
    }
}

fn base_wrench_maps(dq: &DynamicsQuantities) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let jbt = dq.jb.transpose();
    let (pinv, rank) = linalg::pinv_and_rank(&jbt);
    if rank < 6 {
        return Err(Error::RankDeficient {
            what: "J_bᵀ",
            rank,
            required: 6,
        });
    }
    let n = jbt.ncols();
    let null = DMatrix::identity(n, n) - &pinv * &jbt;
    Ok((pinv, null))
}

fn check_momentum_inputs(dq: &DynamicsQuantities, reference: &MomentumReference) -> Result<()> {
    if dq.base_dof != 6 || dq.num_contacts() == 0 {
        return Err(Error::Config(
            "momentum control needs a floating-base model with contacts".into(),
        ));
    }
    for v in [&reference.h, &reference.hdot, &reference.integral_offset] {
        if v.len() != 6 {
            return Err(Error::Dimension {
                context: "momentum reference",
                expected: 6,
                actual: v.len(),
            });
        }
    }
    Ok(())
}

/// Classical controller: `f* = f₁ + N_b f₀`, `τ* = Λ†(JM⁻¹(h − Jᵀf*) − J̇ν) + N_Λ τ₀`.
#[allow(clippy::too_many_arguments)]
pub fn baseline_momentum_controller(
    dq: &DynamicsQuantities,
    fq: &FrictionQuantities,
    state: &RobotState,
    reference: &MomentumReference,
    istate: &ControllerState,
    gains: &MomentumGains,
    cones: &ConeConstraints,
    jref: &JointReference,
    inertia: JointInertia,
) -> Result<ControlOutput> {
    check_momentum_inputs(dq, reference)?;
    let ms = match inertia {
        JointInertia::Rigid => &dq.ms,
        JointInertia::Reflected => &fq.ms_bar,
    };
    let maps = TaskMaps::new(dq, ms)?;
    let (jbt_pinv, n_b) = base_wrench_maps(dq)?;
    let h_err = &dq.momentum - &reference.h;
    let hdot_star = &reference.hdot - &gains.kp * &h_err - &gains.ki * &istate.momentum_integral;
    let f1 = &jbt_pinv * (&hdot_star + gravity_wrench(dq));

    let u0 = maps.postural_feedback(state, jref, &gains.postural);
    let cost = maps.torque_cost(dq, &u0);
    let f0 = qp::solve_redundancy_qp(&cost, &cones.a, &cones.b, &n_b, &f1)?;
    let f_star = &f1 + &n_b * f0;
    let command = cost.eval(&f_star);
    let u_null = &dq.hs - dq.js.transpose() * &f_star + &u0;
    let n = dq.num_contacts() * 6;
    Ok(ControlOutput {
        command,
        cone_margin: cones.min_margin(&f_star),
        f_expected: f_star.clone(),
        f_star,
        f_particular: f1,
        d: DMatrix::zeros(n, 0),
        t: DMatrix::zeros(6, 6),
        n_b,
        lambda: maps.lambda,
        n_lambda: maps.n_lambda,
        u_null,
        u0,
        hdot_star,
        momentum_error: h_err,
        t_min_eigenvalue: 0.0,
    })
}

/// Friction-exploiting controller:
/// `Ḣ* = Ḣ^d − K_p H̃ − K_i I_H̃ + T H^d`,
/// `f_m1 = J_bᵀ†(Ḣ* − J_bᵀ D K̄_f (1 + Dᵀ J_b J̄_G) ṡ + m g e₃)`,
/// `u* = Λ̄†(JM̄⁻¹(h − Jᵀ f_m*) − J̇ν) + N̄_Λ u_null`.
///
/// The cone constraints act on the expected wrench `f_m* + D K̄_f ṡ`.
#[allow(clippy::too_many_arguments)]
pub fn ef_momentum_controller(
    dq: &DynamicsQuantities,
    fq: &FrictionQuantities,
    state: &RobotState,
    reference: &MomentumReference,
    istate: &ControllerState,
    gains: &MomentumGains,
    cones: &ConeConstraints,
    jref: &JointReference,
) -> Result<ControlOutput> {
    check_momentum_inputs(dq, reference)?;
    let maps = TaskMaps::new(dq, &fq.ms_bar)?;
    let (jbt_pinv, n_b) = base_wrench_maps(dq)?;
    let wm = wrench_map_d(dq, fq)?;
    let jbt_d = dq.jb.transpose() * &wm.d;
    let t = &jbt_d * (&fq.kf_bar * jbt_d.transpose());
    let t_min_eigenvalue = linalg::min_eigenvalue(&linalg::symmetrize(&t));

    let h_err = &dq.momentum - &reference.h;
    let hdot_star = &reference.hdot - &gains.kp * &h_err - &gains.ki * &istate.momentum_integral
        + &t * &reference.h;
    let sdot = &state.sdot;
    let split = sdot + wm.d.transpose() * (&dq.jb * (&dq.jg * sdot));
    let f_m1 = &jbt_pinv * (&hdot_star - &jbt_d * (&fq.kf_bar * split) + gravity_wrench(dq));

    let u0 = maps.postural_feedback(state, jref, &gains.postural);
    let extra = &fq.kf_bar * &jref.sdot + &u0;
    let cost = maps.torque_cost(dq, &extra);
    let friction_wrench = &wm.d * (&fq.kf_bar * sdot);
    let b_shifted = &cones.b - &cones.a * &friction_wrench;
    let f_m0 = qp::solve_redundancy_qp(&cost, &cones.a, &b_shifted, &n_b, &f_m1)?;
    let f_star = &f_m1 + &n_b * f_m0;
    let command = cost.eval(&f_star);
    let u_null = &dq.hs - dq.js.transpose() * &f_star + &extra;
    let f_expected = &f_star + friction_wrench;
    Ok(ControlOutput {
        command,
        cone_margin: cones.min_margin(&f_expected),
        f_expected,
        f_star,
        f_particular: f_m1,
        d: wm.d,
        t,
        n_b,
        lambda: maps.lambda,
        n_lambda: maps.n_lambda,
        u_null,
        u0,
        hdot_star,
        momentum_error: h_err,
        t_min_eigenvalue,
    })
}
