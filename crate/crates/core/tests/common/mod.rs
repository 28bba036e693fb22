#![allow(dead_code)]

use std::path::PathBuf;

use frictorq::dynamics::{compute_dynamics, DynamicsQuantities, Kinematics, RobotState};
use frictorq::friction::FrictionQuantities;
use frictorq::linalg;
use frictorq::model::{load_model, RobotModel};
use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn fixture(name: &str) -> RobotModel {
    load_model(models_dir().join(format!("{name}.json"))).expect("fixture model")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-half_width..half_width))
}

/// Bent-knee standing posture of the biped fixture.
pub fn biped_posture(model: &RobotModel) -> DVector<f64> {
    let mut s = DVector::zeros(model.dof());
    for side in ["l", "r"] {
        s[model.joint_index(&format!("{side}_hip_pitch")).unwrap()] = -0.3;
        s[model.joint_index(&format!("{side}_knee")).unwrap()] = 0.6;
        s[model.joint_index(&format!("{side}_ankle_pitch")).unwrap()] = -0.3;
    }
    s
}

pub fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> UnitQuaternion<f64> {
    let v = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    UnitQuaternion::from_scaled_axis(v.normalize() * rng.random_range(0.0..max_angle))
}

/// Random configuration and arbitrary velocity.
pub fn random_state(model: &RobotModel, rng: &mut ChaCha8Rng) -> RobotState {
    let n = model.dof();
    let mut st = RobotState::zeros(model);
    st.s = if model.is_floating() {
        biped_posture(model) + uniform(rng, n, 0.2)
    } else {
        uniform(rng, n, 1.5)
    };
    st.sdot = uniform(rng, n, 1.0);
    if model.is_floating() {
        st.base_position = Vector3::from_iterator(uniform(rng, 3, 0.5).iter().copied());
        st.base_orientation = random_rotation(rng, 0.5);
        st.base_velocity = nalgebra::Vector6::from_iterator(uniform(rng, 6, 0.5).iter().copied());
    }
    st
}

/// Random configuration with a velocity that satisfies `Jν = 0`.
pub fn random_feasible_state(model: &RobotModel, rng: &mut ChaCha8Rng) -> RobotState {
    let mut st = random_state(model, rng);
    st.base_velocity = nalgebra::Vector6::zeros();
    st.sdot = DVector::zeros(model.dof());
    if model.num_contacts() > 0 {
        let dq = compute_dynamics(model, &st).unwrap();
        let z = linalg::nullspace_basis(&dq.jacobian());
        let nu = &z * uniform(rng, z.ncols(), 1.0);
        st.set_nu(model, &nu);
    } else {
        st.sdot = uniform(rng, model.dof(), 1.0);
    }
    st
}

/// Configuration advanced by `h` along internal velocity `(ṗ_B, ω_B, ṡ)`.
pub fn advance_configuration(model: &RobotModel, st: &RobotState, nu_int: &DVector<f64>, h: f64) -> RobotState {
    let mut out = st.clone();
    let nb = model.base_dof();
    if nb == 6 {
        let pdot = Vector3::new(nu_int[0], nu_int[1], nu_int[2]);
        let w = Vector3::new(nu_int[3], nu_int[4], nu_int[5]);
        out.base_position += pdot * h;
        out.base_orientation = UnitQuaternion::from_scaled_axis(w * h) * st.base_orientation;
    }
    out.s += nu_int.rows(nb, model.dof()) * h;
    out
}

/// Kinetic energy from finite-differenced link poses (no velocity recursion).
pub fn kinetic_energy_fd(model: &RobotModel, st: &RobotState, nu_int: &DVector<f64>) -> f64 {
    let h = 1e-6;
    let plus = advance_configuration(model, st, nu_int, h);
    let minus = advance_configuration(model, st, nu_int, -h);
    let kp = Kinematics::new(model, &plus.base_position, &plus.base_orientation, &plus.s);
    let km = Kinematics::new(model, &minus.base_position, &minus.base_orientation, &minus.s);
    let k0 = Kinematics::new(model, &st.base_position, &st.base_orientation, &st.s);
    let mut ke = 0.0;
    for (l, link) in model.links().iter().enumerate() {
        let v = (kp.link_com[l] - km.link_com[l]) / (2.0 * h);
        let rdot = (kp.link_rotation[l] - km.link_rotation[l]) / (2.0 * h);
        let wx: Matrix3<f64> = rdot * k0.link_rotation[l].transpose();
        let w = Vector3::new(wx[(2, 1)] - wx[(1, 2)], wx[(0, 2)] - wx[(2, 0)], wx[(1, 0)] - wx[(0, 1)]) * 0.5;
        ke += 0.5 * link.mass * v.norm_squared() + 0.5 * w.dot(&(k0.link_inertia[l] * w));
    }
    ke
}

/// Internal-coordinate mass matrix from kinetic-energy polarization.
pub fn mass_matrix_fd(model: &RobotModel, st: &RobotState) -> DMatrix<f64> {
    let dim = model.base_dof() + model.dof();
    let e = |i: usize| DVector::from_fn(dim, |k, _| if k == i { 1.0 } else { 0.0 });
    let diag: Vec<f64> = (0..dim).map(|i| kinetic_energy_fd(model, st, &e(i))).collect();
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            2.0 * diag[i]
        } else {
            kinetic_energy_fd(model, st, &(e(i) + e(j))) - diag[i] - diag[j]
        }
    })
}

/// Locked inertia about the CoM, summed link by link.
pub fn locked_inertia(model: &RobotModel, st: &RobotState) -> (Matrix3<f64>, Vector3<f64>) {
    let k = Kinematics::new(model, &st.base_position, &st.base_orientation, &st.s);
    let m = model.total_mass();
    let c: Vector3<f64> = model.links().iter().enumerate().map(|(l, link)| k.link_com[l] * link.mass).sum::<Vector3<f64>>() / m;
    let mut ic = Matrix3::zeros();
    for (l, link) in model.links().iter().enumerate() {
        let r = k.link_com[l] - c;
        ic += k.link_inertia[l] + link.mass * (r.norm_squared() * Matrix3::identity() - r * r.transpose());
    }
    (ic, c)
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

pub fn rel_err_v(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Dense KKT solve of `[M̄, −Jᵀ; J, 0] (ν̇, f) = (Bu − B K̄_f ṡ − h, −J̇ν)`.
pub fn kkt_oracle(dq: &DynamicsQuantities, fq: &FrictionQuantities, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let dim = dq.base_dof + dq.dof();
    let k = dq.jdot_nu.len();
    let mut a = DMatrix::zeros(dim + k, dim + k);
    a.view_mut((0, 0), (dim, dim)).copy_from(&dq.mass_matrix_bar(fq));
    a.view_mut((0, dim), (dim, k)).copy_from(&(-dq.jacobian().transpose()));
    a.view_mut((dim, 0), (k, dim)).copy_from(&dq.jacobian());
    let mut rhs = DVector::zeros(dim + k);
    let mut top = dq.selector() * (u - &fq.kf_bar * dq.sdot()) - dq.bias();
    rhs.rows_mut(0, dim).copy_from(&top);
    rhs.rows_mut(dim, k).copy_from(&(-&dq.jdot_nu));
    let x = a.lu().solve(&rhs).unwrap();
    top.copy_from(&x.rows(0, dim));
    (top, x.rows(dim, k).into_owned())
}

/// `τ*(f)` assembled from explicit inverses, evaluated column by column.
pub fn dense_torque_map(dq: &DynamicsQuantities, ms: &DMatrix<f64>, extra: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let m = linalg::block_diag(&dq.mb, ms);
    let minv = m.clone().try_inverse().unwrap();
    let j = dq.jacobian();
    let lambda = &dq.js * ms.clone().try_inverse().unwrap();
    let lp = linalg::pinv(&lambda);
    let n_l = DMatrix::identity(dq.dof(), dq.dof()) - &lp * &lambda;
    let eval = |f: &DVector<f64>| {
        &lp * (&j * &minv * (dq.bias() - j.transpose() * f) - &dq.jdot_nu) + &n_l * (&dq.hs - dq.js.transpose() * f + extra)
    };
    let k = j.nrows();
    let offset = eval(&DVector::zeros(k));
    let mut map = DMatrix::zeros(dq.dof(), k);
    for i in 0..k {
        let mut e = DVector::zeros(k);
        e[i] = 1.0;
        map.set_column(i, &(eval(&e) - &offset));
    }
    (map, offset)
}
