//! Deterministic fixed-step simulation of the robot-plus-motor plant.
//!
//! Three rates run nested: the outer controller every `dt_outer`, the motor
//! torque inner loop every `dt_inner`, and RK4 physics steps of
//! `dt_physics`. Commands are held constant between ticks. Velocities reach
//! the controllers through a [`noise::Sensor`], sampled once per inner tick.
//!
//! The integrator state is `(Δp_B, δ, Δs, ν)`: position and joint offsets
//! from the step start, the orientation increment `δ` with
//! `R = exp(δ) R₀` (world-frame angular velocity, truncated `dexp⁻¹`), and
//! the centroidal velocity `ν`.

pub mod config;
pub mod log;
pub mod noise;

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control_fixed::{baseline_fixed_control, ef_fixed_control, JointGains, JointReference};
use crate::control_floating::{
    baseline_momentum_controller, ef_momentum_controller, friction_cone_constraints,
    momentum_integral_update, ControllerState, JointInertia, MomentumGains,
    MomentumReference,
};
use crate::dynamics::{compute_dynamics, solve_constrained, DynamicsQuantities, RobotState, Stabilization};
use crate::error::{Error, Result};
use crate::friction::{self, FrictionQuantities};
use crate::inner_loop::{self, InnerLoopState};
use crate::linalg;
use crate::model::{load_model, ContactSpec, RobotModel};

pub use config::{ControllerKind, Mode, ScenarioConfig};
pub use log::{compare_runs, ComparisonReport, RunLog, RunMetrics};
pub use noise::{NoiseModel, Sensor};

fn dexp_inv(d: &Vector3<f64>, w: &Vector3<f64>) -> Vector3<f64> {
    w - d.cross(w) * 0.5 + d.cross(&d.cross(w)) / 12.0
}

fn stage_state(model: &RobotModel, start: &RobotState, y: &DVector<f64>) -> RobotState {
    let nb = model.base_dof();
    let n = model.dof();
    let mut st = start.clone();
    let mut o = 0;
    if nb == 6 {
        st.base_position = start.base_position + y.fixed_rows::<3>(0);
        st.base_orientation = UnitQuaternion::from_scaled_axis(y.fixed_rows::<3>(3).into_owned()) * start.base_orientation;
        o = 6;
    }
    st.s = &start.s + y.rows(o, n);
    st.set_nu(model, &y.rows(o + n, nb + n).into_owned());
    st
}

fn derivative<F>(
    model: &RobotModel,
    st: &RobotState,
    y: &DVector<f64>,
    t: f64,
    stabilization: Option<&Stabilization>,
    input: &mut F,
) -> Result<DVector<f64>>
where
    F: FnMut(f64, &RobotState, &DynamicsQuantities, &FrictionQuantities) -> Result<DVector<f64>>,
{
    let nb = model.base_dof();
    let n = model.dof();
    let dq = compute_dynamics(model, st)?;
    let fq = FrictionQuantities::new(model, &dq.ms, &st.sdot)?;
    let u = input(t, st, &dq, &fq)?;
    let correction = stabilization.map(|s| s.correction(&dq));
    let (nudot, _) = solve_constrained(&dq, &fq, &u, correction.as_ref())?;
    let nu_int = &dq.t_inv * &dq.nu;
    let mut dy = DVector::zeros(y.len());
    let mut o = 0;
    if nb == 6 {
        dy.fixed_rows_mut::<3>(0).copy_from(&nu_int.fixed_rows::<3>(0));
        let w = nu_int.fixed_rows::<3>(3).into_owned();
        let d = y.fixed_rows::<3>(3).into_owned();
        dy.fixed_rows_mut::<3>(3).copy_from(&dexp_inv(&d, &w));
        o = 6;
    }
    dy.rows_mut(o, n).copy_from(&nu_int.rows(nb, n));
    dy.rows_mut(o + n, nb + n).copy_from(&nudot);
    Ok(dy)
}

/// One RK4 step from time `t` with the joint-side input supplied per stage.
pub fn rk4_step<F>(
    model: &RobotModel,
    state: &RobotState,
    t: f64,
    dt: f64,
    stabilization: Option<&Stabilization>,
    mut input: F,
) -> Result<RobotState>
where
    F: FnMut(f64, &RobotState, &DynamicsQuantities, &FrictionQuantities) -> Result<DVector<f64>>,
{
    let nb = model.base_dof();
    let n = model.dof();
    let off = if nb == 6 { 6 } else { 0 };
    let mut y0 = DVector::zeros(off + n + nb + n);
    y0.rows_mut(off + n, nb + n).copy_from(&state.nu(model));

    let mut k = |y: &DVector<f64>, tt: f64| {
        let st = stage_state(model, state, y);
        derivative(model, &st, y, tt, stabilization, &mut input)
    };
    let k1 = k(&y0, t)?;
    let k2 = k(&(&y0 + &k1 * (0.5 * dt)), t + 0.5 * dt)?;
    let k3 = k(&(&y0 + &k2 * (0.5 * dt)), t + 0.5 * dt)?;
    let k4 = k(&(&y0 + &k3 * dt), t + dt)?;
    let y1 = y0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let mut next = stage_state(model, state, &y1);
    next.base_orientation = UnitQuaternion::new_normalize(next.base_orientation.into_inner());
    Ok(next)
}

/// One RK4 step of the plant under a held motor torque `τ_m`.
///
/// Fails with [`Error::Divergence`] (time relative to the step start) when
/// the resulting state is not finite.
pub fn step_physics(
    model: &RobotModel,
    state: &RobotState,
    tau_m: &DVector<f64>,
    dt: f64,
    stabilization: Option<&Stabilization>,
) -> Result<RobotState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("physics step must be positive, got {dt}")));
    }
    let u = inner_loop::measure_u(model, tau_m)?;
    let next = rk4_step(model, state, 0.0, dt, stabilization, |_, _, _, _| Ok(u.clone()))?;
    if !is_finite(&next) {
        return Err(Error::Divergence {
            time: dt,
            reason: "non-finite state".into(),
        });
    }
    Ok(next)
}

fn is_finite(st: &RobotState) -> bool {
    st.s.iter().chain(st.sdot.iter()).chain(st.base_velocity.iter()).all(|x| x.is_finite())
        && st.base_position.iter().all(|x| x.is_finite())
        && st.base_orientation.coords.iter().all(|x| x.is_finite())
}

fn watchdog(model: &RobotModel, st: &RobotState, t: f64, limit: f64) -> Result<()> {
    if !is_finite(st) {
        return Err(Error::Divergence {
            time: t,
            reason: "non-finite state".into(),
        });
    }
    let norm = st.nu(model).norm();
    if norm > limit {
        return Err(Error::Divergence {
            time: t,
            reason: format!("|nu| = {norm:.3e} exceeds {limit:.3e}"),
        });
    }
    Ok(())
}

/// Constrained accelerations and wrenches of the true plant under `u`.
fn plant_response(
    dq: &DynamicsQuantities,
    fq: &FrictionQuantities,
    u: &DVector<f64>,
    stabilization: Option<&Stabilization>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let correction = stabilization.map(|s| s.correction(dq));
    solve_constrained(dq, fq, u, correction.as_ref())
}

fn joint_inertia<'a>(dq: &'a DynamicsQuantities, fq: &'a FrictionQuantities, which: JointInertia) -> &'a DMatrix<f64> {
    match which {
        JointInertia::Rigid => &dq.ms,
        JointInertia::Reflected => &fq.ms_bar,
    }
}

fn vector_columns(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}_{i}"))
}

/// CSV header for a model; see `docs/output-format.md`.
pub fn log_columns(model: &RobotModel) -> Vec<String> {
    let n = model.dof();
    let mut c = vec!["t".to_string()];
    for p in ["s", "sd", "sdot", "sdot_meas", "cmd", "tau_m"] {
        c.extend(vector_columns(p, n));
    }
    if model.is_floating() {
        c.extend(vector_columns("f", 6 * model.num_contacts()));
        for p in ["h", "hd", "ih"] {
            c.extend(vector_columns(p, 6));
        }
        c.extend(vector_columns("com", 3));
        c.extend(vector_columns("com_d", 3));
    }
    c.extend(["s_err_norm", "com_err_norm", "h_lin_err_norm"].map(String::from));
    if model.is_floating() {
        c.extend(["constraint_residual", "cone_margin"].map(String::from));
    }
    c.extend(["cond_ms", "cond_ms_bar"].map(String::from));
    c
}

struct Gains {
    joint: JointGains,
    ki_inner: DMatrix<f64>,
    momentum: Option<MomentumGains>,
}

fn gains(cfg: &ScenarioConfig, model: &RobotModel) -> Result<Gains> {
    let n = model.dof();
    let joint = JointGains {
        kp: cfg.gains.kp.matrix(n, "kp")?,
        kd: cfg.gains.kd.matrix(n, "kd")?,
    };
    let ki_inner = cfg.gains.ki_inner.matrix(n, "ki_inner")?;
    if !linalg::is_spd(&ki_inner) {
        return Err(Error::NotPositiveDefinite("inner-loop gain KI"));
    }
    let momentum = match (&cfg.gains.momentum_kp, &cfg.gains.momentum_ki) {
        (Some(kp), Some(ki)) if model.is_floating() => {
            let g = MomentumGains {
                kp: kp.matrix(6, "momentum_kp")?,
                ki: ki.matrix(6, "momentum_ki")?,
                ki_inner: ki_inner.clone(),
                postural: joint.clone(),
            };
            g.validate()?;
            Some(g)
        }
        _ => None,
    };
    Ok(Gains {
        joint,
        ki_inner,
        momentum,
    })
}

/// Initial state: reference at t = 0 plus configured offsets. With contacts,
/// velocities are projected onto the contact-consistent subspace; floating
/// runs then get the smallest consistent velocity change that makes the
/// momentum equal the CoM reference's `H^d(0)`.
fn initial_state(cfg: &ScenarioConfig, model: &RobotModel, jref0: &JointReference) -> Result<RobotState> {
    let n = model.dof();
    let offset = |v: &Option<Vec<f64>>| v.as_ref().map_or_else(|| DVector::zeros(n), |v| DVector::from_row_slice(v));
    let mut st = RobotState::at_rest(model, &jref0.s + offset(&cfg.initial.s_offset));
    st.sdot = &jref0.sdot + offset(&cfg.initial.sdot_offset);
    if model.num_contacts() == 0 {
        return Ok(st);
    }
    let dq = compute_dynamics(model, &st)?;
    let z = linalg::nullspace_basis(&dq.jacobian());
    let mut nu = &z * (z.transpose() * st.nu(model));
    if model.is_floating() {
        st.set_nu(model, &nu);
        let dq = compute_dynamics(model, &st)?;
        let href = floating_reference(&config::ComTrajectory::new(cfg, dq.com), dq.mass, 0.0);
        // H = M_b v_B, so the momentum of ν = Z y is [M_b, 0] Z y.
        let a = &dq.mb * z.rows(0, 6);
        nu += &z * (linalg::pinv(&a) * (&href.momentum.h - &dq.momentum));
    }
    st.set_nu(model, &nu);
    Ok(st)
}

/// Reference quantities for one outer tick of a floating-base run.
struct FloatingReference {
    momentum: MomentumReference,
    com: Vector3<f64>,
}

fn floating_reference(traj: &config::ComTrajectory, mass: f64, t: f64) -> FloatingReference {
    let (p, v, a) = traj.at(t);
    let mut momentum = MomentumReference::zero();
    momentum.h.rows_mut(0, 3).copy_from(&(v * mass));
    momentum.hdot.rows_mut(0, 3).copy_from(&(a * mass));
    momentum.integral_offset.rows_mut(0, 3).copy_from(&(v * mass));
    FloatingReference { momentum, com: p }
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    model: &'a RobotModel,
    gains: Gains,
    specs: Vec<ContactSpec>,
    stabilization: Option<Stabilization>,
    joint_traj: config::JointTrajectory,
    com_traj: Option<config::ComTrajectory>,
    istate: ControllerState,
}

/// Outer-loop output: the command plus what the log needs.
struct OuterTick {
    command: DVector<f64>,
    jref: JointReference,
    floating: Option<FloatingReference>,
}

impl Runner<'_> {
    fn outer(&mut self, t: f64, meas: &RobotState) -> Result<OuterTick> {
        let jref = self.joint_traj.at(t);
        let dq = compute_dynamics(self.model, meas)?;
        let fq = FrictionQuantities::new(self.model, &dq.ms, &meas.sdot)?;
        let Some(com_traj) = &self.com_traj else {
            let command = match self.cfg.controller {
                ControllerKind::Ef => ef_fixed_control(&dq, &fq, &jref, meas, &self.gains.joint)?,
                ControllerKind::Baseline => baseline_fixed_control(
                    &dq,
                    joint_inertia(&dq, &fq, self.cfg.baseline_inertia),
                    &jref,
                    meas,
                    &self.gains.joint,
                )?,
            };
            return Ok(OuterTick {
                command,
                jref,
                floating: None,
            });
        };
        let fref = floating_reference(com_traj, dq.mass, t);
        let gains = self.gains.momentum.as_ref().expect("validated floating gains");
        let cones = friction_cone_constraints(&self.specs, &dq.contact_frames);
        let out = match self.cfg.controller {
            ControllerKind::Ef => {
                ef_momentum_controller(&dq, &fq, meas, &fref.momentum, &self.istate, gains, &cones, &jref)?
            }
            ControllerKind::Baseline => baseline_momentum_controller(
                &dq,
                &fq,
                meas,
                &fref.momentum,
                &self.istate,
                gains,
                &cones,
                &jref,
                self.cfg.baseline_inertia,
            )?,
        };
        let mut at_desired = meas.clone();
        at_desired.s = jref.s.clone();
        let jg_desired = compute_dynamics(self.model, &at_desired)?.jg;
        self.istate = momentum_integral_update(
            &self.istate,
            &dq.jg,
            &jg_desired,
            &fref.momentum,
            &meas.sdot,
            &jref.sdot,
            self.cfg.dt_outer,
        );
        Ok(OuterTick {
            command: out.command,
            jref,
            floating: Some(fref),
        })
    }

    /// Command applied by continuous control at a stage state.
    fn continuous_input(
        &self,
        t: f64,
        st: &RobotState,
        dq: &DynamicsQuantities,
        fq: &FrictionQuantities,
    ) -> Result<DVector<f64>> {
        let jref = self.joint_traj.at(t);
        match self.cfg.controller {
            ControllerKind::Ef => ef_fixed_control(dq, fq, &jref, st, &self.gains.joint),
            ControllerKind::Baseline => {
                let tau = baseline_fixed_control(
                    dq,
                    joint_inertia(dq, fq, self.cfg.baseline_inertia),
                    &jref,
                    st,
                    &self.gains.joint,
                )?;
                Ok(tau + &fq.kf_bar * &st.sdot)
            }
        }
    }

    /// Log row at an outer tick. `tau_m` is the torque applied from this tick.
    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        t: f64,
        state: &RobotState,
        meas: &RobotState,
        tick: &OuterTick,
        tau_m: &DVector<f64>,
        dq: &DynamicsQuantities,
        fq: &FrictionQuantities,
    ) -> Result<Vec<f64>> {
        let mut r = vec![t];
        for v in [&state.s, &tick.jref.s, &state.sdot, &meas.sdot, &tick.command, tau_m] {
            r.extend(v.iter());
        }
        let s_err = (&state.s - &tick.jref.s).norm();
        let (mut com_err, mut h_err) = (0.0, 0.0);
        let mut tail = Vec::new();
        if let Some(fref) = &tick.floating {
            let u = inner_loop::measure_u(self.model, tau_m)?;
            let (_, f) = plant_response(dq, fq, &u, self.stabilization.as_ref())?;
            r.extend(f.iter());
            r.extend(dq.momentum.iter());
            r.extend(fref.momentum.h.iter());
            r.extend(self.istate.momentum_integral.iter());
            r.extend(dq.com.iter());
            r.extend(fref.com.iter());
            com_err = (dq.com - fref.com).norm();
            h_err = (dq.momentum.rows(0, 3) - fref.momentum.h.rows(0, 3)).norm();
            let stab = self.stabilization.as_ref().expect("floating runs are stabilized");
            let cones = friction_cone_constraints(&self.specs, &dq.contact_frames);
            tail.push(stab.position_error(&dq.contact_frames).norm());
            tail.push(cones.min_margin(&f));
        }
        r.extend([s_err, com_err, h_err]);
        r.extend(tail);
        r.push(friction::condition_number(&dq.ms)?);
        r.push(friction::condition_number(&fq.ms_bar)?);
        Ok(r)
    }
}

/// Load the configured model and run the scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunLog> {
    let model = load_model(&cfg.model)?;
    run_scenario_with_model(cfg, &model)
}

/// Run a scenario on an already loaded model.
pub fn run_scenario_with_model(cfg: &ScenarioConfig, model: &RobotModel) -> Result<RunLog> {
    let mode = cfg.validate(model)?;
    let (n_outer, n_inner, n_physics) = cfg.schedule()?;
    let gains = gains(cfg, model)?;
    let n = model.dof();
    let s0 = cfg
        .initial
        .s
        .as_ref()
        .map_or_else(|| DVector::zeros(n), |s| DVector::from_row_slice(s));
    let joint_traj = config::JointTrajectory::new(cfg, model, &s0);
    let mut state = initial_state(cfg, model, &joint_traj.at(0.0))?;
    let dq0 = compute_dynamics(model, &state)?;
    let stabilization = (model.num_contacts() > 0).then(|| Stabilization {
        alpha: cfg.stabilization_alpha,
        anchors: dq0.contact_frames.clone(),
    });
    let com_traj = (mode == Mode::FloatingBase).then(|| config::ComTrajectory::new(cfg, dq0.com));
    let mut runner = Runner {
        cfg,
        model,
        gains,
        specs: model.contacts().iter().map(|c| c.spec.clone()).collect(),
        stabilization,
        joint_traj,
        com_traj,
        istate: ControllerState {
            momentum_integral: DVector::zeros(6),
            integral_bound: cfg.integral_bound,
        },
    };
    let mut sensor = Sensor::new(cfg.noise.clone(), model.is_floating());
    let mut inner = InnerLoopState::new(n);
    inner.bound = cfg.inner_integral_bound;
    let mut log = RunLog::new(log_columns(model));
    let gamma_t = model.gamma().transpose();
    let gamma_inv = model.gamma_inv().clone();
    let mut tau_m: Option<DVector<f64>> = None;
    let mut command = DVector::zeros(n);

    for k in 0..n_outer {
        let t_outer = k as f64 * cfg.dt_outer;
        if cfg.continuous_control {
            let dq = compute_dynamics(model, &state).map_err(|e| e.at(t_outer))?;
            let fq = FrictionQuantities::new(model, &dq.ms, &state.sdot)?;
            let u = runner.continuous_input(t_outer, &state, &dq, &fq).map_err(|e| e.at(t_outer))?;
            let tick = OuterTick {
                command: u.clone(),
                jref: runner.joint_traj.at(t_outer),
                floating: None,
            };
            let row = runner.row(t_outer, &state, &state, &tick, &(&gamma_t * &u), &dq, &fq)?;
            log.push(row);
            let steps = n_inner * n_physics;
            for p in 0..steps {
                let t = t_outer + p as f64 * cfg.dt_physics;
                state = rk4_step(model, &state, t, cfg.dt_physics, None, |tt, st, dq, fq| {
                    runner.continuous_input(tt, st, dq, fq)
                })
                .map_err(|e| e.at(t))?;
                watchdog(model, &state, t + cfg.dt_physics, cfg.watchdog)?;
            }
            continue;
        }
        for j in 0..n_inner {
            let t = t_outer + j as f64 * cfg.dt_inner;
            let meas = sensor.measure(&state, cfg.dt_inner);
            let tick = if j == 0 {
                let tick = runner.outer(t, &meas).map_err(|e| e.at(t))?;
                command = tick.command.clone();
                Some(tick)
            } else {
                None
            };
            let dq = compute_dynamics(model, &state).map_err(|e| e.at(t))?;
            let fq = FrictionQuantities::new(model, &dq.ms, &state.sdot)?;
            let (next_tau_m, next_inner) = match cfg.controller {
                ControllerKind::Baseline => {
                    let tau_measured = match &tau_m {
                        None => command.clone(),
                        Some(held) => {
                            let u = inner_loop::measure_u(model, held)?;
                            let (nudot, _) = plant_response(&dq, &fq, &u, runner.stabilization.as_ref())
                                .map_err(|e| e.at(t))?;
                            let sddot = nudot.rows(model.base_dof(), n).into_owned();
                            inner_loop::joint_torque(model, &u, &state.sdot, &sddot)?
                        }
                    };
                    let theta_dot = &gamma_inv * &meas.sdot;
                    inner_loop::baseline_motor_torque(
                        model,
                        &command,
                        &tau_measured,
                        &theta_dot,
                        &inner,
                        &runner.gains.ki_inner,
                        cfg.dt_inner,
                    )?
                }
                ControllerKind::Ef => {
                    let u_measured = match &tau_m {
                        None => command.clone(),
                        Some(held) => inner_loop::measure_u(model, held)?,
                    };
                    inner_loop::ef_motor_torque(model, &command, &u_measured, &inner, &runner.gains.ki_inner, cfg.dt_inner)?
                }
            };
            inner = next_inner;
            if let Some(tick) = &tick {
                let row = runner.row(t_outer, &state, &meas, tick, &next_tau_m, &dq, &fq).map_err(|e| e.at(t))?;
                log.push(row);
            }
            let u = inner_loop::measure_u(model, &next_tau_m)?;
            tau_m = Some(next_tau_m);
            for p in 0..n_physics {
                let tp = t + p as f64 * cfg.dt_physics;
                state = rk4_step(model, &state, tp, cfg.dt_physics, runner.stabilization.as_ref(), |_, _, _, _| {
                    Ok(u.clone())
                })
                .map_err(|e| e.at(tp))?;
                watchdog(model, &state, tp + cfg.dt_physics, cfg.watchdog)?;
            }
        }
    }
    Ok(log)
}

/// Realized cone margins above `−CONE_TOLERANCE · m g` count as satisfied.
/// Cones are enforced on the commanded wrench at each outer tick; between
/// ticks the held command realizes a slightly different wrench.
pub const CONE_TOLERANCE: f64 = 1e-2;

/// The velocity noise is a stand-in for an unknown estimation pipeline.
pub const NOISE_MODEL_LABEL: &str = "surrogate: first-order low-pass + white Gaussian";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub controller: ControllerKind,
    pub mode: Mode,
    pub dof: usize,
    pub duration: f64,
    pub dt_outer: f64,
    pub dt_inner: f64,
    pub dt_physics: f64,
    pub noise: NoiseModel,
    /// Always [`NOISE_MODEL_LABEL`].
    pub noise_model: String,
    pub metrics: RunMetrics,
    /// Whether any realized wrench left the cones beyond [`CONE_TOLERANCE`];
    /// absent for fixed-base runs.
    pub cone_violation: Option<bool>,
}

impl RunSummary {
    pub fn new(cfg: &ScenarioConfig, model: &RobotModel, log: &RunLog) -> Self {
        let metrics = log.metrics();
        let weight = model.total_mass() * model.gravity();
        Self {
            model: model.description().name.clone().unwrap_or_else(|| cfg.model.display().to_string()),
            controller: cfg.controller,
            mode: if model.is_floating() { Mode::FloatingBase } else { Mode::FixedBase },
            dof: model.dof(),
            duration: cfg.duration,
            dt_outer: cfg.dt_outer,
            dt_inner: cfg.dt_inner,
            dt_physics: cfg.dt_physics,
            noise: cfg.noise.clone(),
            noise_model: NOISE_MODEL_LABEL.to_string(),
            cone_violation: metrics.min_cone_margin.map(|m| m < -CONE_TOLERANCE * weight),
            metrics,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub config_index: usize,
    pub cond_ms: f64,
    pub cond_ms_bar: f64,
    /// `cond(M_s) / cond(M̄_s)`.
    pub ratio: f64,
}

/// Condition numbers of `M_s` and `M̄_s` at `samples` joint configurations
/// drawn uniformly from `[−half_range, half_range]ⁿ` (ChaCha8, `seed`).
/// The base pose does not affect `M_s` and stays at the identity.
pub fn condition_report(model: &RobotModel, samples: usize, seed: u64, half_range: f64) -> Result<Vec<ConditionRow>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|config_index| {
            let s = DVector::from_fn(model.dof(), |_, _| rng.random_range(-half_range..=half_range));
            let st = RobotState::at_rest(model, s);
            let dq = compute_dynamics(model, &st)?;
            let fq = FrictionQuantities::new(model, &dq.ms, &st.sdot)?;
            let cond_ms = friction::condition_number(&dq.ms)?;
            let cond_ms_bar = friction::condition_number(&fq.ms_bar)?;
            Ok(ConditionRow {
                config_index,
                cond_ms,
                cond_ms_bar,
                ratio: cond_ms / cond_ms_bar,
            })
        })
        .collect()
}

/// Minimum, median and maximum of a sample.
pub fn min_median_max(x: &[f64]) -> Option<(f64, f64, f64)> {
    if x.is_empty() {
        return None;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
    Some((v[0], median, v[k - 1]))
}

/// Scalar tracking error a sweep reports: `‖s̃‖` for fixed-base runs and
/// `‖H̃_lin‖` for floating-base runs.
pub fn primary_error_column(model: &RobotModel) -> &'static str {
    if model.is_floating() {
        "h_lin_err_norm"
    } else {
        "s_err_norm"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub controller: ControllerKind,
    pub seed: u64,
    pub rms_err: f64,
    pub max_err: f64,
}

/// Runs both controllers at every `σ_v`. The `i`-th noise level uses seed
/// `noise.seed + i` for both controllers. Rows come back in input order,
/// baseline before EF. `threads = None` lets rayon pick.
pub fn sweep_noise(
    cfg: &ScenarioConfig,
    model: &RobotModel,
    sigmas: &[f64],
    threads: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::Config(format!("noise levels must be >= 0, got {s}")));
    }
    let jobs: Vec<ScenarioConfig> = sigmas
        .iter()
        .enumerate()
        .flat_map(|(i, &sigma)| {
            [ControllerKind::Baseline, ControllerKind::Ef].map(|controller| {
                let mut c = cfg.clone();
                c.controller = controller;
                c.noise.sigma_v = sigma;
                c.noise.seed = cfg.noise.seed.wrapping_add(i as u64);
                c
            })
        })
        .collect();
    let column = primary_error_column(model);
    let run = |c: &ScenarioConfig| -> Result<SweepRow> {
        let log = run_scenario_with_model(c, model)?;
        let stat = log::Stat::of(&log.column(column).unwrap_or_default());
        Ok(SweepRow {
            sigma: c.noise.sigma_v,
            controller: c.controller,
            seed: c.noise.seed,
            rms_err: stat.rms,
            max_err: stat.max,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(run).collect())
}
