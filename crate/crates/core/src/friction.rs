//! Joint friction and transmission algebra.
//!
//! Motor-side friction `K_v θ̇ + K_c sign(θ̇)` is rewritten with the
//! regularized sign `θ̇ / (|θ̇| + ε)` into a diagonal, velocity-dependent
//! matrix `K_f`. Mapped through the transmission `s = Γ θ` it becomes the
//! joint-side friction `K̄_f = Γ⁻ᵀ K_f Γ⁻¹`, and the rotor inertias add the
//! reflected inertia `Γ⁻ᵀ I_m Γ⁻¹` to the joint-space mass matrix.
//!
//! The Coulomb term uses the *motor* velocity `Γ⁻¹ ṡ`, which differs from
//! the joint velocity whenever `Γ` couples joints.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::RobotModel;

#[derive(Clone, Debug)]
pub struct FrictionQuantities {
    /// Motor-side diagonal friction matrix `K_f(ṡ)`.
    pub kf: DMatrix<f64>,
    /// Joint-side friction `K̄_f = Γ⁻ᵀ K_f Γ⁻¹`.
    pub kf_bar: DMatrix<f64>,
    /// `M̄_s = M_s + Γ⁻ᵀ I_m Γ⁻¹`.
    pub ms_bar: DMatrix<f64>,
    /// Reflected rotor inertia `Γ⁻ᵀ I_m Γ⁻¹`.
    pub reflected: DMatrix<f64>,
}

impl FrictionQuantities {
    pub fn new(model: &RobotModel, ms: &DMatrix<f64>, sdot: &DVector<f64>) -> Result<Self> {
        let kf = friction_matrix(model, sdot);
        let kf_bar = joint_side(&kf, model.gamma_inv());
        let (ms_bar, reflected) = reflected_inertia(model, ms)?;
        Ok(Self {
            kf,
            kf_bar,
            ms_bar,
            reflected,
        })
    }

    /// Same quantities with the joint-side friction replaced (e.g. zeroed).
    pub fn with_kf_bar(mut self, kf_bar: DMatrix<f64>) -> Self {
        self.kf_bar = kf_bar;
        self
    }
}

/// Diagonal `K_f` with `k_f(i) = k_v(i) + k_c(i) / (|e_iᵀ Γ⁻¹ ṡ| + ε)`.
pub fn friction_matrix(model: &RobotModel, sdot: &DVector<f64>) -> DMatrix<f64> {
    let theta_dot = model.gamma_inv() * sdot;
    let eps = model.epsilon();
    let n = model.dof();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            model.viscous()[(i, i)] + model.coulomb()[(i, i)] / (theta_dot[i].abs() + eps)
        } else {
            0.0
        }
    })
}

/// `K̄_f = Γ⁻ᵀ K_f Γ⁻¹`, symmetrized.
pub fn coupled_friction(kf: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if kf.shape() != gamma.shape() {
        return Err(Error::Dimension {
            context: "coupled_friction",
            expected: gamma.nrows(),
            actual: kf.nrows(),
        });
    }
    Ok(joint_side(kf, &linalg::inverse(gamma, "Gamma")?))
}

/// `K̄_f(ṡ)` with the model's cached `Γ⁻¹`.
pub fn joint_friction(model: &RobotModel, sdot: &DVector<f64>) -> DMatrix<f64> {
    joint_side(&friction_matrix(model, sdot), model.gamma_inv())
}

fn joint_side(kf: &DMatrix<f64>, gi: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::symmetrize(&(gi.transpose() * kf * gi))
}

/// `(M̄_s, Γ⁻ᵀ I_m Γ⁻¹)`.
pub fn reflected_inertia(
    model: &RobotModel,
    ms: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if ms.nrows() != model.dof() {
        return Err(Error::Dimension {
            context: "reflected_inertia",
            expected: model.dof(),
            actual: ms.nrows(),
        });
    }
    let reflected = model.reflected_inertia().clone();
    Ok((linalg::symmetrize(&(ms + &reflected)), reflected))
}

/// `σ_max / σ_min` of a symmetric positive definite matrix.
pub fn condition_number(m: &DMatrix<f64>) -> Result<f64> {
    if !linalg::is_spd(m) {
        return Err(Error::NotPositiveDefinite("condition_number input"));
    }
    Ok(linalg::condition_number(m))
}

/// Motor-side friction torque `K_v θ̇ + K_c θ̇/(|θ̇|+ε)` for motor velocity `θ̇`.
pub fn motor_friction_torque(model: &RobotModel, theta_dot: &DVector<f64>) -> DVector<f64> {
    let eps = model.epsilon();
    DVector::from_fn(model.dof(), |i, _| {
        let w = theta_dot[i];
        model.viscous()[(i, i)] * w + model.coulomb()[(i, i)] * w / (w.abs() + eps)
    })
}
