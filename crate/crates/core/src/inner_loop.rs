//! Motor torque inner loops.
//!
//! The baseline cancels motor friction with the measured motor velocity and
//! integrates the joint-torque error. The friction-exploiting loop applies
//! no friction compensation and only drives the joint-side input
//! `u = Γ⁻ᵀ τ_m` toward `u*`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::friction;
use crate::model::RobotModel;

pub const DEFAULT_INTEGRAL_BOUND: f64 = 50.0;

#[derive(Clone, Debug, PartialEq)]
pub struct InnerLoopState {
    /// `∫τ̃ dt` (baseline) or `∫(u − u*) dt` (friction-exploiting).
    pub integral: DVector<f64>,
    /// Component-wise anti-windup bound; `None` disables clamping.
    pub bound: Option<f64>,
    pub time: f64,
}

impl InnerLoopState {
    pub fn new(n: usize) -> Self {
        Self {
            integral: DVector::zeros(n),
            bound: Some(DEFAULT_INTEGRAL_BOUND),
            time: 0.0,
        }
    }

    fn advance(&self, error: &DVector<f64>, dt: f64) -> Self {
        let mut integral = &self.integral + error * dt;
        if let Some(c) = self.bound {
            integral.apply(|x| *x = x.clamp(-c, c));
        }
        Self {
            integral,
            bound: self.bound,
            time: self.time + dt,
        }
    }
}

fn check(model: &RobotModel, vectors: &[&DVector<f64>], ki: &DMatrix<f64>, dt: f64) -> Result<()> {
    let n = model.dof();
    if let Some(v) = vectors.iter().find(|v| v.len() != n) {
        return Err(Error::Dimension {
            context: "inner loop",
            expected: n,
            actual: v.len(),
        });
    }
    if ki.shape() != (n, n) {
        return Err(Error::Dimension {
            context: "inner-loop gain KI",
            expected: n,
            actual: ki.nrows(),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("inner-loop dt must be positive, got {dt}")));
    }
    Ok(())
}

/// `τ_m* = K_v θ̇ + K_c θ̇/(|θ̇| + ε) + Γᵀ(τ* − K_I ∫τ̃)`, then `∫τ̃ += dt (τ − τ*)`.
#[allow(clippy::too_many_arguments)]
pub fn baseline_motor_torque(
    model: &RobotModel,
    tau_star: &DVector<f64>,
    tau_measured: &DVector<f64>,
    theta_dot: &DVector<f64>,
    state: &InnerLoopState,
    ki: &DMatrix<f64>,
    dt: f64,
) -> Result<(DVector<f64>, InnerLoopState)> {
    check(model, &[tau_star, tau_measured, theta_dot], ki, dt)?;
    let tau_m = friction::motor_friction_torque(model, theta_dot)
        + model.gamma().transpose() * (tau_star - ki * &state.integral);
    Ok((tau_m, state.advance(&(tau_measured - tau_star), dt)))
}

/// `τ_m* = Γᵀ(u* − K_I ∫(u − u*))`, then `∫(u − u*) += dt (u − u*)`.
pub fn ef_motor_torque(
    model: &RobotModel,
    u_star: &DVector<f64>,
    u_measured: &DVector<f64>,
    state: &InnerLoopState,
    ki: &DMatrix<f64>,
    dt: f64,
) -> Result<(DVector<f64>, InnerLoopState)> {
    check(model, &[u_star, u_measured], ki, dt)?;
    let tau_m = model.gamma().transpose() * (u_star - ki * &state.integral);
    Ok((tau_m, state.advance(&(u_measured - u_star), dt)))
}

/// `u = Γ⁻ᵀ τ_m`.
pub fn measure_u(model: &RobotModel, tau_m: &DVector<f64>) -> Result<DVector<f64>> {
    if tau_m.len() != model.dof() {
        return Err(Error::Dimension {
            context: "measure_u",
            expected: model.dof(),
            actual: tau_m.len(),
        });
    }
    Ok(model.gamma_inv().transpose() * tau_m)
}

/// Joint torque `τ = u − Γ⁻ᵀ I_m Γ⁻¹ s̈ − K̄_f(ṡ) ṡ` seen by a joint torque
/// sensor when the plant runs under input `u` with acceleration `s̈`.
pub fn joint_torque(
    model: &RobotModel,
    u: &DVector<f64>,
    sdot: &DVector<f64>,
    sddot: &DVector<f64>,
) -> Result<DVector<f64>> {
    let gi = model.gamma_inv();
    let kf_bar = friction::joint_friction(model, sdot);
    Ok(u - gi.transpose() * (model.motor_inertia() * (gi * sddot)) - kf_bar * sdot)
}
