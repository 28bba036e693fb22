//! Rigid-body recursions in world-frame Plücker coordinates.
//!
//! Spatial motion vectors are `(ω; v_O)` and force vectors `(n_O; f)`, both
//! expressed in world axes at the world origin. With everything in one frame
//! no per-link coordinate transforms are needed: composite inertias are plain
//! sums and joint motion subspaces are `(a; o × a)` for a world axis `a`
//! through the world point `o`.
//!
//! The floating base uses the generalized velocity `(ṗ_B, ω_B)`: base origin
//! velocity and base angular velocity, both in world axes.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Matrix6xX, UnitQuaternion, Vector3, Vector6};

use crate::linalg::skew;
use crate::model::RobotModel;

pub(crate) fn angular(v: &Vector6<f64>) -> Vector3<f64> {
    v.fixed_rows::<3>(0).into_owned()
}

pub(crate) fn linear(v: &Vector6<f64>) -> Vector3<f64> {
    v.fixed_rows::<3>(3).into_owned()
}

pub(crate) fn stack(top: &Vector3<f64>, bottom: &Vector3<f64>) -> Vector6<f64> {
    Vector6::new(top.x, top.y, top.z, bottom.x, bottom.y, bottom.z)
}

/// Motion cross product `v × m`.
pub(crate) fn cross_motion(v: &Vector6<f64>, m: &Vector6<f64>) -> Vector6<f64> {
    let (w, vo) = (angular(v), linear(v));
    let (mw, mv) = (angular(m), linear(m));
    stack(&w.cross(&mw), &(w.cross(&mv) + vo.cross(&mw)))
}

/// Force cross product `v ×* f`.
pub(crate) fn cross_force(v: &Vector6<f64>, f: &Vector6<f64>) -> Vector6<f64> {
    let (w, vo) = (angular(v), linear(v));
    let (n, fl) = (angular(f), linear(f));
    stack(&(w.cross(&n) + vo.cross(&fl)), &w.cross(&fl))
}

/// Spatial inertia at the world origin of a body with mass `m`, world CoM
/// `c` and world-axes rotational inertia `ic` about the CoM.
pub(crate) fn spatial_inertia(m: f64, c: &Vector3<f64>, ic: &Matrix3<f64>) -> Matrix6<f64> {
    let cx = skew(c);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(ic + m * cx * cx.transpose()));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(m * cx));
    out.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(m * cx.transpose()));
    out.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(m * Matrix3::identity()));
    out
}

/// Motion subspace of the floating base for `(ṗ_B, ω_B)`.
pub(crate) fn base_subspace(p_b: &Vector3<f64>) -> Matrix6<f64> {
    let mut s = Matrix6::zeros();
    s.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    s.fixed_view_mut::<3, 3>(3, 0).copy_from(&Matrix3::identity());
    s.fixed_view_mut::<3, 3>(3, 3).copy_from(&skew(p_b));
    s
}

/// Link frames, joint axes and inertias at one configuration.
#[derive(Clone, Debug)]
pub struct Kinematics {
    pub base_position: Vector3<f64>,
    pub link_rotation: Vec<Matrix3<f64>>,
    pub link_position: Vec<Vector3<f64>>,
    pub link_com: Vec<Vector3<f64>>,
    pub link_inertia: Vec<Matrix3<f64>>,
    /// Joint motion subspace in world Plücker coordinates.
    pub joint_subspace: Vec<Vector6<f64>>,
    pub joint_axis: Vec<Vector3<f64>>,
    pub joint_point: Vec<Vector3<f64>>,
    pub spatial_inertia: Vec<Matrix6<f64>>,
    /// Composite inertia of the subtree rooted at each link.
    pub composite_inertia: Vec<Matrix6<f64>>,
    pub base_subspace: Matrix6<f64>,
}

impl Kinematics {
    pub fn new(
        model: &RobotModel,
        base_position: &Vector3<f64>,
        base_orientation: &UnitQuaternion<f64>,
        s: &DVector<f64>,
    ) -> Self {
        let nl = model.links().len();
        let nj = model.dof();
        let mut rot = vec![Matrix3::identity(); nl];
        let mut pos = vec![Vector3::zeros(); nl];
        let mut axis = vec![Vector3::zeros(); nj];
        let mut point = vec![Vector3::zeros(); nj];
        let root = model.root();
        rot[root] = *base_orientation.to_rotation_matrix().matrix();
        pos[root] = *base_position;
        for &j in model.joint_order() {
            let joint = &model.joints()[j];
            let (rp, pp) = (rot[joint.parent], pos[joint.parent]);
            let r_origin = *joint.origin.rotation.to_rotation_matrix().matrix();
            let r_joint = rp * r_origin;
            let o = pp + rp * joint.origin.translation.vector;
            let a = r_joint * joint.axis;
            let r_motion = *nalgebra::Rotation3::from_axis_angle(
                &nalgebra::Unit::new_unchecked(joint.axis),
                s[j],
            )
            .matrix();
            rot[joint.child] = r_joint * r_motion;
            pos[joint.child] = o;
            axis[j] = a;
            point[j] = o;
        }
        let mut com = Vec::with_capacity(nl);
        let mut inertia = Vec::with_capacity(nl);
        let mut spatial = Vec::with_capacity(nl);
        for (l, link) in model.links().iter().enumerate() {
            let c = pos[l] + rot[l] * link.com;
            let ic = rot[l] * link.inertia * rot[l].transpose();
            spatial.push(spatial_inertia(link.mass, &c, &ic));
            com.push(c);
            inertia.push(ic);
        }
        let mut composite = spatial.clone();
        for &j in model.joint_order().iter().rev() {
            let joint = &model.joints()[j];
            let child = composite[joint.child];
            composite[joint.parent] += child;
        }
        let joint_subspace = (0..nj)
            .map(|j| stack(&axis[j], &point[j].cross(&axis[j])))
            .collect();
        Self {
            base_position: *base_position,
            link_rotation: rot,
            link_position: pos,
            link_com: com,
            link_inertia: inertia,
            joint_subspace,
            joint_axis: axis,
            joint_point: point,
            spatial_inertia: spatial,
            composite_inertia: composite,
            base_subspace: base_subspace(base_position),
        }
    }

    /// Joint-space mass matrix in internal coordinates via the
    /// composite-rigid-body recursion.
    pub fn mass_matrix(&self, model: &RobotModel) -> DMatrix<f64> {
        let nb = model.base_dof();
        let n = model.dof();
        let mut m = DMatrix::zeros(nb + n, nb + n);
        if nb == 6 {
            let f0 = self.composite_inertia[model.root()] * self.base_subspace;
            let mbb = self.base_subspace.transpose() * f0;
            m.view_mut((0, 0), (6, 6)).copy_from(&mbb);
        }
        for i in 0..n {
            let child = model.joints()[i].child;
            let f = self.composite_inertia[child] * self.joint_subspace[i];
            m[(nb + i, nb + i)] = self.joint_subspace[i].dot(&f);
            let mut link = model.joints()[i].parent;
            while let Some(j) = model.parent_joint(link) {
                let v = self.joint_subspace[j].dot(&f);
                m[(nb + j, nb + i)] = v;
                m[(nb + i, nb + j)] = v;
                link = model.joints()[j].parent;
            }
            if nb == 6 {
                let col = self.base_subspace.transpose() * f;
                for k in 0..6 {
                    m[(k, nb + i)] = col[k];
                    m[(nb + i, k)] = col[k];
                }
            }
        }
        m
    }

    /// Spatial velocity of every link for internal velocity `nu`.
    pub fn link_velocities(&self, model: &RobotModel, nu: &DVector<f64>) -> Vec<Vector6<f64>> {
        let nb = model.base_dof();
        let mut vel = vec![Vector6::zeros(); model.links().len()];
        if nb == 6 {
            let vb = nu.fixed_rows::<6>(0).into_owned();
            vel[model.root()] = self.base_subspace * vb;
        }
        for &j in model.joint_order() {
            let joint = &model.joints()[j];
            vel[joint.child] = vel[joint.parent] + self.joint_subspace[j] * nu[nb + j];
        }
        vel
    }

    /// Spatial accelerations for internal `(nu, nudot)`; `gravity` adds the
    /// fictitious upward acceleration `g e₃` at the root.
    pub fn link_accelerations(
        &self,
        model: &RobotModel,
        vel: &[Vector6<f64>],
        nu: &DVector<f64>,
        nudot: &DVector<f64>,
        gravity: bool,
    ) -> Vec<Vector6<f64>> {
        let nb = model.base_dof();
        let mut acc = vec![Vector6::zeros(); model.links().len()];
        let root = model.root();
        if nb == 6 {
            let vb = nu.fixed_rows::<6>(0).into_owned();
            let ab = nudot.fixed_rows::<6>(0).into_owned();
            let pdot = Vector3::new(vb[0], vb[1], vb[2]);
            let w = Vector3::new(vb[3], vb[4], vb[5]);
            acc[root] = self.base_subspace * ab + stack(&Vector3::zeros(), &pdot.cross(&w));
        }
        if gravity {
            acc[root] += Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, model.gravity());
        }
        for &j in model.joint_order() {
            let joint = &model.joints()[j];
            let sj = self.joint_subspace[j];
            acc[joint.child] = acc[joint.parent]
                + sj * nudot[nb + j]
                + cross_motion(&vel[joint.child], &sj) * nu[nb + j];
        }
        acc
    }

    /// Recursive Newton-Euler inverse dynamics in internal coordinates.
    pub fn inverse_dynamics(
        &self,
        model: &RobotModel,
        nu: &DVector<f64>,
        nudot: &DVector<f64>,
        gravity: bool,
    ) -> DVector<f64> {
        let nb = model.base_dof();
        let n = model.dof();
        let vel = self.link_velocities(model, nu);
        let acc = self.link_accelerations(model, &vel, nu, nudot, gravity);
        let mut force: Vec<Vector6<f64>> = (0..model.links().len())
            .map(|l| {
                let i = &self.spatial_inertia[l];
                i * acc[l] + cross_force(&vel[l], &(i * vel[l]))
            })
            .collect();
        let mut tau = DVector::zeros(nb + n);
        for &j in model.joint_order().iter().rev() {
            let joint = &model.joints()[j];
            tau[nb + j] = self.joint_subspace[j].dot(&force[joint.child]);
            let child = force[joint.child];
            force[joint.parent] += child;
        }
        if nb == 6 {
            let fb = self.base_subspace.transpose() * force[model.root()];
            tau.rows_mut(0, 6).copy_from(&fb);
        }
        tau
    }

    /// Total spatial momentum map at the world origin, `h_O = A_O ν`.
    pub fn momentum_map(&self, model: &RobotModel) -> Matrix6xX<f64> {
        let nb = model.base_dof();
        let n = model.dof();
        let mut a = Matrix6xX::zeros(nb + n);
        if nb == 6 {
            let f0 = self.composite_inertia[model.root()] * self.base_subspace;
            a.columns_mut(0, 6).copy_from(&f0);
        }
        for j in 0..n {
            let child = model.joints()[j].child;
            a.set_column(nb + j, &(self.composite_inertia[child] * self.joint_subspace[j]));
        }
        a
    }

    /// Geometric Jacobian `(v_p; ω)` of a point rigidly attached to `link`.
    pub fn point_jacobian(&self, model: &RobotModel, link: usize, p: &Vector3<f64>) -> DMatrix<f64> {
        let nb = model.base_dof();
        let n = model.dof();
        let mut jac = DMatrix::zeros(6, nb + n);
        if nb == 6 {
            let r = p - self.base_position;
            for k in 0..3 {
                jac[(k, k)] = 1.0;
                jac[(3 + k, 3 + k)] = 1.0;
            }
            jac.view_mut((0, 3), (3, 3)).copy_from(&(-skew(&r)));
        }
        for j in model.support_joints(link) {
            let a = self.joint_axis[j];
            let lin = a.cross(&(p - self.joint_point[j]));
            for k in 0..3 {
                jac[(k, nb + j)] = lin[k];
                jac[(3 + k, nb + j)] = a[k];
            }
        }
        jac
    }
}

/// Classical linear acceleration of world point `p` and angular acceleration
/// of a body with spatial velocity `v` and spatial acceleration `a`.
pub(crate) fn point_acceleration(v: &Vector6<f64>, a: &Vector6<f64>, p: &Vector3<f64>) -> Vector6<f64> {
    let (w, vo) = (angular(v), linear(v));
    let (alpha, ao) = (angular(a), linear(a));
    let vp = vo + w.cross(p);
    stack(&(ao + alpha.cross(p) + w.cross(&vp)), &alpha)
}
