//! Joint-space tracking for fixed-base robots.
//!
//! The friction-exploiting law multiplies the joint-side friction matrix by
//! the *reference* velocity, so the physical friction `−K̄_f ṡ` combines with
//! it into `−K̄_f ṡ̃` and acts as extra damping on the error:
//!
//! ```text
//! M̄_s s̈̃ + (K_d + K̄_f) ṡ̃ + K_p s̃ = 0
//! ```
//!
//! The baseline instead leaves friction to the inner loop.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{DynamicsQuantities, RobotState};
use crate::error::{Error, Result};
use crate::friction::FrictionQuantities;
use crate::linalg;

#[derive(Clone, Debug, PartialEq)]
pub struct JointGains {
    pub kp: DMatrix<f64>,
    pub kd: DMatrix<f64>,
}

impl JointGains {
    pub fn diagonal(kp: &[f64], kd: &[f64]) -> Self {
        Self {
            kp: DMatrix::from_diagonal(&DVector::from_row_slice(kp)),
            kd: DMatrix::from_diagonal(&DVector::from_row_slice(kd)),
        }
    }

    pub fn uniform(n: usize, kp: f64, kd: f64) -> Self {
        Self {
            kp: DMatrix::from_diagonal_element(n, n, kp),
            kd: DMatrix::from_diagonal_element(n, n, kd),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointReference {
    pub s: DVector<f64>,
    pub sdot: DVector<f64>,
    pub sddot: DVector<f64>,
}

impl JointReference {
    pub fn hold(s: DVector<f64>) -> Self {
        let n = s.len();
        Self {
            s,
            sdot: DVector::zeros(n),
            sddot: DVector::zeros(n),
        }
    }
}

fn check_dims(dq: &DynamicsQuantities, reference: &JointReference, state: &RobotState, gains: &JointGains) -> Result<usize> {
    let n = dq.dof();
    let lens = [
        reference.s.len(),
        reference.sdot.len(),
        reference.sddot.len(),
        state.s.len(),
        state.sdot.len(),
        gains.kp.nrows(),
        gains.kp.ncols(),
        gains.kd.nrows(),
        gains.kd.ncols(),
    ];
    match lens.iter().find(|&&l| l != n) {
        Some(&actual) => Err(Error::Dimension {
            context: "joint controller",
            expected: n,
            actual,
        }),
        None => Ok(n),
    }
}

/// `h_s + M̄_s s̈^d − K_p s̃` shared by all laws below.
fn feedforward_and_stiffness(
    dq: &DynamicsQuantities,
    ms: &DMatrix<f64>,
    reference: &JointReference,
    state: &RobotState,
    kp: &DMatrix<f64>,
) -> DVector<f64> {
    &dq.hs + ms * &reference.sddot - kp * (&state.s - &reference.s)
}

/// `u* = h_s + M̄_s s̈^d − K_p s̃ − K_d ṡ̃ + K̄_f ṡ^d`.
pub fn ef_fixed_control(
    dq: &DynamicsQuantities,
    fq: &FrictionQuantities,
    reference: &JointReference,
    state: &RobotState,
    gains: &JointGains,
) -> Result<DVector<f64>> {
    check_dims(dq, reference, state, gains)?;
    let sdot_err = &state.sdot - &reference.sdot;
    Ok(feedforward_and_stiffness(dq, &fq.ms_bar, reference, state, &gains.kp) - &gains.kd * sdot_err
        + &fq.kf_bar * &reference.sdot)
}

/// `τ* = h_s + M s̈^d − K_p s̃ − K_d ṡ̃` with `M` the supplied joint mass
/// matrix (normally `M̄_s`). Friction is left to the inner loop.
pub fn baseline_fixed_control(
    dq: &DynamicsQuantities,
    ms: &DMatrix<f64>,
    reference: &JointReference,
    state: &RobotState,
    gains: &JointGains,
) -> Result<DVector<f64>> {
    check_dims(dq, reference, state, gains)?;
    let sdot_err = &state.sdot - &reference.sdot;
    Ok(feedforward_and_stiffness(dq, ms, reference, state, &gains.kp) - &gains.kd * sdot_err)
}

fn require_spd(k: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if linalg::symmetry_residual(k) > 1e-12 * k.amax().max(1.0) || !linalg::is_spd(k) {
        return Err(Error::NotPositiveDefinite(what));
    }
    Ok(())
}

/// `u_f = h_s + M̄_s s̈^d − K_p s̃ − K ṡ̃ + K̄_f ṡ`.
pub fn family_control(
    k: &DMatrix<f64>,
    dq: &DynamicsQuantities,
    fq: &FrictionQuantities,
    reference: &JointReference,
    state: &RobotState,
    kp: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    require_spd(k, "family gain K")?;
    let gains = JointGains {
        kp: kp.clone(),
        kd: k.clone(),
    };
    check_dims(dq, reference, state, &gains)?;
    let sdot_err = &state.sdot - &reference.sdot;
    Ok(feedforward_and_stiffness(dq, &fq.ms_bar, reference, state, kp) - k * sdot_err + &fq.kf_bar * &state.sdot)
}

/// `‖K̄_f − K‖²_F`, the squared sensitivity of the family's velocity
/// feedback to the measured velocity. Zero exactly at `K = K̄_f`.
pub fn sensitivity_norm(k: &DMatrix<f64>, kf_bar: &DMatrix<f64>) -> Result<f64> {
    require_spd(k, "family gain K")?;
    if k.shape() != kf_bar.shape() {
        return Err(Error::Dimension {
            context: "sensitivity_norm",
            expected: kf_bar.nrows(),
            actual: k.nrows(),
        });
    }
    Ok((kf_bar - k).norm_squared())
}

/// Instantaneous closed-loop error acceleration
/// `−M̄_s⁻¹((K_d + K̄_f) ṡ̃ + K_p s̃)` predicted for the EF law.
pub fn ef_error_acceleration(
    fq: &FrictionQuantities,
    gains: &JointGains,
    s_err: &DVector<f64>,
    sdot_err: &DVector<f64>,
) -> Result<DVector<f64>> {
    let rhs = (&gains.kd + &fq.kf_bar) * sdot_err + &gains.kp * s_err;
    Ok(-linalg::cholesky(&fq.ms_bar, "M̄_s")?.solve(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn scalar_quantities(ms: f64, h: f64, kf: f64) -> (DynamicsQuantities, FrictionQuantities) {
        let m = DMatrix::from_element(1, 1, ms);
        let dq = DynamicsQuantities {
            mb: DMatrix::zeros(0, 0),
            ms: m.clone(),
            hb: DVector::zeros(0),
            hs: DVector::from_element(1, h),
            jb: DMatrix::zeros(0, 0),
            js: DMatrix::zeros(0, 1),
            jdot_nu: DVector::zeros(0),
            jg: DMatrix::zeros(6, 1),
            momentum: DVector::zeros(0),
            com: Vector3::zeros(),
            mass: 1.0,
            gravity: 9.81,
            base_dof: 0,
            joint_momentum_map: DMatrix::zeros(6, 1),
            t_inv: DMatrix::identity(1, 1),
            contact_frames: vec![],
            nu: DVector::zeros(1),
        };
        let fq = FrictionQuantities {
            kf: DMatrix::from_element(1, 1, kf),
            kf_bar: DMatrix::from_element(1, 1, kf),
            ms_bar: m,
            reflected: DMatrix::zeros(1, 1),
        };
        (dq, fq)
    }

    fn scalar_state(s: f64, sdot: f64) -> RobotState {
        RobotState {
            base_position: Vector3::zeros(),
            base_orientation: nalgebra::UnitQuaternion::identity(),
            s: DVector::from_element(1, s),
            base_velocity: nalgebra::Vector6::zeros(),
            sdot: DVector::from_element(1, sdot),
        }
    }

    #[test]
    fn one_dof_hand_value() {
        let (dq, fq) = scalar_quantities(1.0, 0.0, 2.0);
        let reference = JointReference::hold(DVector::zeros(1));
        let gains = JointGains::uniform(1, 10.0, 1.0);
        let state = scalar_state(0.1, 0.0);
        assert_eq!(ef_fixed_control(&dq, &fq, &reference, &state, &gains).unwrap()[0], -1.0);
        assert_eq!(baseline_fixed_control(&dq, &fq.ms_bar, &reference, &state, &gains).unwrap()[0], -1.0);
    }

    #[test]
    fn zero_error_gives_bias() {
        let (dq, fq) = scalar_quantities(2.0, 3.5, 4.0);
        let reference = JointReference::hold(DVector::from_element(1, 0.3));
        let state = scalar_state(0.3, 0.0);
        let gains = JointGains::uniform(1, 10.0, 1.0);
        assert_eq!(ef_fixed_control(&dq, &fq, &reference, &state, &gains).unwrap()[0], 3.5);
    }

    #[test]
    fn velocity_error_enters_linearly() {
        let (dq, fq) = scalar_quantities(2.0, 0.5, 0.0);
        let mut reference = JointReference::hold(DVector::zeros(1));
        reference.sddot[0] = 0.7;
        let state = scalar_state(0.0, 0.25);
        let gains = JointGains::uniform(1, 10.0, 3.0);
        let tau = baseline_fixed_control(&dq, &fq.ms_bar, &reference, &state, &gains).unwrap();
        assert_eq!(tau[0], 0.5 + 2.0 * 0.7 - 3.0 * 0.25);
    }

    #[test]
    fn sensitivity_examples() {
        let kf = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 2.0, 3.0]));
        assert_eq!(sensitivity_norm(&kf, &kf).unwrap(), 0.0);
        let k = &kf + DMatrix::identity(3, 3);
        assert!((sensitivity_norm(&k, &kf).unwrap() - 3.0).abs() < 1e-14);
        let indefinite = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, -1.0, 1.0]));
        assert!(sensitivity_norm(&indefinite, &kf).is_err());
    }

    #[test]
    fn family_rejects_asymmetric_gain() {
        let (dq, fq) = scalar_quantities(1.0, 0.0, 2.0);
        let reference = JointReference::hold(DVector::zeros(1));
        let state = scalar_state(0.0, 0.0);
        let k = DMatrix::from_element(1, 1, -1.0);
        assert!(family_control(&k, &dq, &fq, &reference, &state, &DMatrix::identity(1, 1)).is_err());
    }
}
