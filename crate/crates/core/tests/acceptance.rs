//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Built with `harness = false`; exits nonzero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use frictorq::control_fixed::{baseline_fixed_control, ef_fixed_control, sensitivity_norm, JointGains, JointReference};
use frictorq::control_floating::{
    baseline_momentum_controller, ef_momentum_controller, friction_cone_constraints, momentum_rate, wrench_map_d,
    ConeConstraints, ControlOutput, ControllerState, JointInertia, MomentumGains, MomentumReference,
};
use frictorq::dynamics::{compute_dynamics, forward_dynamics_constrained, solve_constrained, DynamicsQuantities, RobotState};
use frictorq::friction::{friction_matrix, FrictionQuantities};
use frictorq::inner_loop::{self, InnerLoopState};
use frictorq::linalg;
use frictorq::model::{load_model, ContactSpec, RobotModel};
use frictorq::qp::{self, QpProblem};
use frictorq::sim::{self, rk4_step, run_scenario, run_scenario_with_model, ControllerKind, ScenarioConfig};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Verdict = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn config(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(configs_dir().join(name)).expect("shipped config")
}

fn model_json(name: &str) -> Value {
    let text = std::fs::read_to_string(models_dir().join(format!("{name}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn diag_of(v: &Value) -> Vec<f64> {
    let rows = v.as_array().unwrap();
    (0..rows.len()).map(|i| rows[i][i].as_f64().unwrap()).collect()
}

fn specs(model: &RobotModel) -> Vec<ContactSpec> {
    model.contacts().iter().map(|c| c.spec.clone()).collect()
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a * a.transpose() + DMatrix::identity(n, n) * 0.05) * scale
}

// ---------------------------------------------------------------------------
// 1. Closed-loop fidelity, fixed base.

/// Two-link planar pendulum `M(q₂)` from the raw fixture parameters.
struct TwoLink {
    m1: f64,
    c1: f64,
    i1: f64,
    l1: f64,
    m2: f64,
    c2: f64,
    i2: f64,
    reflected: [f64; 2],
    kf_bar: [f64; 2],
}

impl TwoLink {
    fn from_fixture() -> Self {
        let j = model_json("pendulum2");
        let link = |k: usize| &j["links"][k];
        let act = &j["actuation"];
        let (gamma, im, kv, kc) = (diag_of(&act["gamma"]), diag_of(&act["im"]), diag_of(&act["kv"]), diag_of(&act["kc"]));
        assert!(kc.iter().all(|&k| k == 0.0), "fixture must be viscous-only");
        Self {
            m1: link(1)["mass"].as_f64().unwrap(),
            c1: -link(1)["com"][2].as_f64().unwrap(),
            i1: link(1)["inertia"][1][1].as_f64().unwrap(),
            l1: -j["joints"][1]["origin"]["xyz"][2].as_f64().unwrap(),
            m2: link(2)["mass"].as_f64().unwrap(),
            c2: -link(2)["com"][2].as_f64().unwrap(),
            i2: link(2)["inertia"][1][1].as_f64().unwrap(),
            reflected: [im[0] / (gamma[0] * gamma[0]), im[1] / (gamma[1] * gamma[1])],
            kf_bar: [kv[0] / (gamma[0] * gamma[0]), kv[1] / (gamma[1] * gamma[1])],
        }
    }

    fn ms_bar(&self, q2: f64) -> Matrix2<f64> {
        let c = q2.cos();
        let m22 = self.i2 + self.m2 * self.c2 * self.c2;
        let m12 = m22 + self.m2 * self.l1 * self.c2 * c;
        let m11 = self.i1 + self.m1 * self.c1 * self.c1 + self.i2 + self.m2 * (self.l1 * self.l1 + self.c2 * self.c2 + 2.0 * self.l1 * self.c2 * c);
        Matrix2::new(m11 + self.reflected[0], m12, m12, m22 + self.reflected[1])
    }
}

fn criterion_1() -> Verdict {
    let (kp, kd) = (100.0, 10.0);
    let (amp, omega) = (15f64.to_radians(), std::f64::consts::PI);
    let s_off = [0.1, -0.15];
    let v_off = [0.3, -0.2];

    let mut cfg = config("pendulum_tracking.json");
    cfg.continuous_control = true;
    cfg.initial.s_offset = Some(s_off.to_vec());
    cfg.initial.sdot_offset = Some(v_off.to_vec());
    ensure(cfg.noise.sigma_v == 0.0 && cfg.duration == 10.0 && cfg.dt_physics == 1e-4, || "unexpected config".into())?;
    let log = run_scenario(&cfg).map_err(|e| e.to_string())?;

    // Error ODE M̄(s) ë + (K_d + K̄_f) ė + K_p e = 0 along s = s^d(t) + e.
    let p = TwoLink::from_fixture();
    let damping = Matrix2::new(kd + p.kf_bar[0], 0.0, 0.0, kd + p.kf_bar[1]);
    let reference = |t: f64| (Vector2::repeat(amp * (omega * t).sin()), Vector2::repeat(amp * omega * (omega * t).cos()));
    let f = |t: f64, e: &Vector2<f64>, ed: &Vector2<f64>| {
        let s = reference(t).0 + e;
        let acc = p.ms_bar(s[1]).try_inverse().unwrap() * (-(damping * ed) - e * kp);
        (*ed, acc)
    };
    let h = 2.5e-5;
    let mut t = 0.0;
    let (mut e, mut ed) = (Vector2::from(s_off), Vector2::from(v_off));
    let times = log.column("t").unwrap();
    let s_log = log.vector_column("s");
    let v_log = log.vector_column("sdot");
    let (mut num, mut den) = (0.0, 0.0);
    for (k, &tk) in times.iter().enumerate() {
        while t < tk - 1e-12 {
            let (k1e, k1v) = f(t, &e, &ed);
            let (k2e, k2v) = f(t + h / 2.0, &(e + k1e * (h / 2.0)), &(ed + k1v * (h / 2.0)));
            let (k3e, k3v) = f(t + h / 2.0, &(e + k2e * (h / 2.0)), &(ed + k2v * (h / 2.0)));
            let (k4e, k4v) = f(t + h, &(e + k3e * h), &(ed + k3v * h));
            e += (k1e + k2e * 2.0 + k3e * 2.0 + k4e) * (h / 6.0);
            ed += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
            t += h;
        }
        let (sd, vd) = reference(tk);
        for i in 0..2 {
            let sim_e = s_log[k][i] - sd[i];
            let sim_ed = v_log[k][i] - vd[i];
            num += (sim_e - e[i]).powi(2) + (sim_ed - ed[i]).powi(2);
            den += e[i].powi(2) + ed[i].powi(2);
        }
    }
    let rel = (num / den).sqrt();
    ensure(times.len() == 1000, || format!("{} samples", times.len()))?;
    ensure(rel <= 1e-3, || format!("relative L2 error {rel:.3e} > 1e-3"))?;
    Ok(format!("relative L2 error {rel:.2e} over 10 s"))
}

// ---------------------------------------------------------------------------
// 2. Sensitivity optimum.

fn criterion_2() -> Verdict {
    let model = fixture("arm4")
        .with_actuation(|a| a.kc = frictorq::model::diag_rows(&[0.02, 0.01, 0.02, 0.01]))
        .unwrap();
    let n = model.dof();
    let mut rng = rng(102);
    let mut smallest = f64::INFINITY;
    let mut trial = 0;
    while trial < 1000 {
        let st = random_state(&model, &mut rng);
        let dq = compute_dynamics(&model, &st).unwrap();
        let fq = FrictionQuantities::new(&model, &dq.ms, &st.sdot).unwrap();
        let at_opt = sensitivity_norm(&fq.kf_bar, &fq.kf_bar).map_err(|e| e.to_string())?;
        ensure(at_opt == 0.0, || format!("sensitivity at K̄_f is {at_opt:e}"))?;
        let k = if trial % 2 == 0 {
            random_spd(&mut rng, n, 2.0)
        } else {
            // Near the optimum: small symmetric perturbation of K̄_f.
            let p = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1e-3..1e-3));
            &fq.kf_bar + (&p + p.transpose()) * 0.5
        };
        if !linalg::is_spd(&k) || k == fq.kf_bar {
            continue;
        }
        let value = sensitivity_norm(&k, &fq.kf_bar).map_err(|e| e.to_string())?;
        let oracle: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (k[(i, j)] - fq.kf_bar[(i, j)]).powi(2)).sum();
        ensure(value > 0.0, || format!("trial {trial}: sensitivity {value:e} not positive"))?;
        ensure((value - oracle).abs() <= 1e-12 * oracle, || format!("trial {trial}: {value:e} vs oracle {oracle:e}"))?;
        smallest = smallest.min(value);
        trial += 1;
    }
    Ok(format!("0 at K = K̄_f; 1000 other SPD K, smallest {smallest:.2e}"))
}

// ---------------------------------------------------------------------------
// 3/4. Momentum identities.

struct MomentumCase {
    st: RobotState,
    dq: DynamicsQuantities,
    fq: FrictionQuantities,
    reference: MomentumReference,
    istate: ControllerState,
    jref: JointReference,
    cones: ConeConstraints,
}

fn momentum_gains(n: usize) -> MomentumGains {
    MomentumGains {
        kp: DMatrix::from_diagonal(&DVector::from_row_slice(&[20.0, 20.0, 20.0, 5.0, 5.0, 5.0])),
        ki: DMatrix::from_diagonal(&DVector::from_row_slice(&[100.0, 100.0, 100.0, 10.0, 10.0, 10.0])),
        ki_inner: DMatrix::identity(n, n) * 10.0,
        postural: JointGains::uniform(n, 50.0, 5.0),
    }
}

/// Constraint-consistent state near upright stance, where the sole cones
/// can carry the weight.
fn stance_state(model: &RobotModel, rng: &mut ChaCha8Rng) -> RobotState {
    let mut st = RobotState::at_rest(model, biped_posture(model) + uniform(rng, model.dof(), 0.2));
    st.base_position = nalgebra::Vector3::from_iterator(uniform(rng, 3, 0.5).iter().copied());
    st.base_orientation = random_rotation(rng, 0.1);
    let dq = compute_dynamics(model, &st).unwrap();
    let z = linalg::nullspace_basis(&dq.jacobian());
    let nu = &z * uniform(rng, z.ncols(), 0.3);
    st.set_nu(model, &nu);
    st
}

fn momentum_case(model: &RobotModel, rng: &mut ChaCha8Rng) -> MomentumCase {
    let n = model.dof();
    let st = stance_state(model, rng);
    let dq = compute_dynamics(model, &st).unwrap();
    let fq = FrictionQuantities::new(model, &dq.ms, &st.sdot).unwrap();
    let cones = friction_cone_constraints(&specs(model), &dq.contact_frames);
    MomentumCase {
        reference: MomentumReference {
            h: uniform(rng, 6, 0.5),
            hdot: uniform(rng, 6, 1.0),
            integral_offset: DVector::zeros(6),
        },
        istate: ControllerState {
            momentum_integral: uniform(rng, 6, 0.02),
            integral_bound: Some(50.0),
        },
        jref: JointReference {
            s: biped_posture(model) + uniform(rng, n, 0.1),
            sdot: uniform(rng, n, 0.3),
            sddot: uniform(rng, n, 0.3),
        },
        st,
        dq,
        fq,
        cones,
    }
}

/// 200 states at which both controllers' QPs are feasible.
fn feasible_cases(seed: u64) -> (RobotModel, Vec<(MomentumCase, ControlOutput, ControlOutput)>, usize) {
    let model = fixture("biped");
    let g = momentum_gains(model.dof());
    let mut rng = rng(seed);
    let mut out = Vec::new();
    let mut rejected = 0;
    while out.len() < 200 {
        let c = momentum_case(&model, &mut rng);
        let ef = ef_momentum_controller(&c.dq, &c.fq, &c.st, &c.reference, &c.istate, &g, &c.cones, &c.jref);
        let base = baseline_momentum_controller(&c.dq, &c.fq, &c.st, &c.reference, &c.istate, &g, &c.cones, &c.jref, JointInertia::Reflected);
        match (ef, base) {
            (Ok(ef), Ok(base)) => out.push((c, ef, base)),
            _ => rejected += 1,
        }
        assert!(rejected < 2000, "too few feasible states");
    }
    (model, out, rejected)
}

fn criterion_3() -> Verdict {
    let (model, cases, rejected) = feasible_cases(103);
    let g = momentum_gains(model.dof());
    let mut worst: f64 = 0.0;
    for (c, ef, _) in &cases {
        let f = &ef.f_star + &ef.d * (&c.fq.kf_bar * &c.st.sdot);
        // Ḣ = J_bᵀ f − m g e₃, assembled here from the contact Jacobian.
        let mut hdot = c.dq.jb.transpose() * &f;
        hdot[2] -= c.dq.mass * c.dq.gravity;
        let h_err = &c.dq.momentum - &c.reference.h;
        let hdot_err = &hdot - &c.reference.hdot;
        let fb = (&g.kp + &ef.t) * &h_err;
        let integral = &g.ki * &c.istate.momentum_integral;
        let residual = &hdot_err + &fb + &integral;
        let scale = hdot.amax().max(hdot_err.amax()).max(fb.amax()).max(integral.amax()).max(1.0);
        worst = worst.max(residual.amax() / scale);
    }
    ensure(worst <= 1e-8, || format!("worst relative residual {worst:.3e}"))?;
    Ok(format!("200 states ({rejected} QP-infeasible draws skipped), worst relative residual {worst:.2e}"))
}

fn criterion_4() -> Verdict {
    let (_, cases, _) = feasible_cases(103);
    let mut rng = rng(104);
    let mut worst: f64 = 0.0;
    for (c, _, base) in &cases {
        let mut hdot = c.dq.jb.transpose() * &base.f_star;
        hdot[2] -= c.dq.mass * c.dq.gravity;
        worst = worst.max((&hdot - &base.hdot_star).amax() / base.hdot_star.amax().max(1.0));
        // Any other redundancy choice gives the same rate.
        let f_other = &base.f_particular + &base.n_b * uniform(&mut rng, base.f_particular.len(), 50.0);
        let mut hdot = c.dq.jb.transpose() * &f_other;
        hdot[2] -= c.dq.mass * c.dq.gravity;
        worst = worst.max((&hdot - &base.hdot_star).amax() / base.hdot_star.amax().max(1.0));
    }
    ensure(worst <= 1e-8, || format!("worst relative residual {worst:.3e}"))?;
    Ok(format!("200 states, QP and random f₀, worst relative residual {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 5. Reductions.

fn criterion_5() -> Verdict {
    let mut rng = rng(105);
    let mut worst_fixed: f64 = 0.0;
    for name in ["pendulum2", "arm4"] {
        let model = fixture(name);
        let n = model.dof();
        for _ in 0..100 {
            let st = random_state(&model, &mut rng);
            let dq = compute_dynamics(&model, &st).unwrap();
            let fq = FrictionQuantities::new(&model, &dq.ms, &st.sdot).unwrap().with_kf_bar(DMatrix::zeros(n, n));
            let reference = JointReference {
                s: uniform(&mut rng, n, 1.0),
                sdot: uniform(&mut rng, n, 1.0),
                sddot: uniform(&mut rng, n, 1.0),
            };
            let gains = JointGains::uniform(n, 100.0, 10.0);
            let ef = ef_fixed_control(&dq, &fq, &reference, &st, &gains).unwrap();
            let base = baseline_fixed_control(&dq, &fq.ms_bar, &reference, &st, &gains).unwrap();
            worst_fixed = worst_fixed.max((ef - base).amax());
        }
    }
    let model = fixture("biped");
    let n = model.dof();
    let g = momentum_gains(n);
    let mut worst_float: f64 = 0.0;
    let mut compared = 0;
    for _ in 0..100 {
        let c = momentum_case(&model, &mut rng);
        let fq0 = c.fq.clone().with_kf_bar(DMatrix::zeros(n, n));
        let ef = ef_momentum_controller(&c.dq, &fq0, &c.st, &c.reference, &c.istate, &g, &c.cones, &c.jref);
        let base = baseline_momentum_controller(&c.dq, &fq0, &c.st, &c.reference, &c.istate, &g, &c.cones, &c.jref, JointInertia::Reflected);
        match (ef, base) {
            (Ok(ef), Ok(base)) => {
                worst_float = worst_float
                    .max((&ef.command - &base.command).amax())
                    .max((&ef.f_star - &base.f_star).amax())
                    .max((&ef.hdot_star - &base.hdot_star).amax());
                compared += 1;
            }
            (Err(_), Err(_)) => {}
            (a, b) => return Err(format!("feasibility differs: ef {:?} baseline {:?}", a.err(), b.err())),
        }
    }
    ensure(compared >= 50, || format!("only {compared} feasible floating cases"))?;
    ensure(worst_fixed <= 1e-10 && worst_float <= 1e-10, || {
        format!("max difference fixed {worst_fixed:.3e}, floating {worst_float:.3e}")
    })?;
    Ok(format!("max |EF − baseline| fixed {worst_fixed:.1e}, floating {worst_float:.1e} ({compared} states)"))
}

// ---------------------------------------------------------------------------
// 6. Conditioning.

fn svd_condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    sv.max() / sv.min()
}

fn criterion_6() -> Verdict {
    let mut details = Vec::new();
    for name in ["pendulum2", "arm4", "biped"] {
        let model = fixture(name);
        let j = model_json(name);
        let gamma = diag_of(&j["actuation"]["gamma"]);
        let im = diag_of(&j["actuation"]["im"]);
        ensure(gamma.iter().all(|g| (1.0 / g - 100.0).abs() < 1e-9), || format!("{name}: gear ratios are not 100"))?;
        let reflected = DMatrix::from_diagonal(&DVector::from_iterator(gamma.len(), im.iter().zip(&gamma).map(|(i, g)| i / (g * g))));
        let mut rng = rng(106);
        let mut ratios = Vec::new();
        for _ in 0..100 {
            let s = uniform(&mut rng, model.dof(), 1.0);
            let dq = compute_dynamics(&model, &RobotState::at_rest(&model, s)).unwrap();
            let (c, c_bar) = (svd_condition(&dq.ms), svd_condition(&(&dq.ms + &reflected)));
            ensure(c_bar < c, || format!("{name}: cond(M̄_s) {c_bar:.3e} ≥ cond(M_s) {c:.3e}"))?;
            ratios.push(c / c_bar);
        }
        let report = sim::condition_report(&model, 100, 6, 1.0).map_err(|e| e.to_string())?;
        ensure(report.iter().all(|r| r.cond_ms_bar < r.cond_ms), || format!("{name}: report has a non-reducing row"))?;
        let (lo, med, _) = sim::min_median_max(&ratios).unwrap();
        if name == "biped" {
            let (_, report_med, _) = sim::min_median_max(&report.iter().map(|r| r.ratio).collect::<Vec<_>>()).unwrap();
            ensure(med >= 5.0 && report_med >= 5.0, || format!("biped median reduction {med:.2} / {report_med:.2} < 5"))?;
        }
        details.push(format!("{name} median {med:.0} (min {lo:.0})"));
    }
    Ok(format!("cond(M_s)/cond(M̄_s) at 100 configs: {}", details.join(", ")))
}

// ---------------------------------------------------------------------------
// 7. Noise robustness.

fn criterion_7() -> Verdict {
    let cfg = config("arm4_noise.json");
    let model = load_model(&cfg.model).unwrap();
    let rows = sim::sweep_noise(&cfg, &model, &[0.0, 0.05, 0.1, 0.2], None).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for pair in rows.chunks(2) {
        let (b, e) = (&pair[0], &pair[1]);
        ensure(b.controller == ControllerKind::Baseline && e.controller == ControllerKind::Ef, || "row order".into())?;
        ensure(b.seed == e.seed, || format!("seeds not paired at σ {}", b.sigma))?;
        if b.sigma > 0.0 {
            ensure(e.rms_err <= b.rms_err, || {
                format!("σ {}: EF rms {:.3e} > baseline {:.3e}", b.sigma, e.rms_err, b.rms_err)
            })?;
        }
        parts.push(format!("σ {}: {:.2e} vs {:.2e}", b.sigma, e.rms_err, b.rms_err));
    }
    Ok(format!("EF vs baseline rms ‖s̃‖ (rad): {}", parts.join("; ")))
}

// ---------------------------------------------------------------------------
// 8. Balancing.

fn criterion_8() -> Verdict {
    let cfg = config("biped_balance.json");
    let model = load_model(&cfg.model).unwrap();
    let weight = model.total_mass() * model.gravity();
    let mut rms = Vec::new();
    let mut parts = Vec::new();
    for controller in [ControllerKind::Baseline, ControllerKind::Ef] {
        let mut c = cfg.clone();
        c.controller = controller;
        let log = run_scenario_with_model(&c, &model).map_err(|e| format!("{}: {e}", controller.name()))?;
        ensure(log.len() == 1000, || format!("{}: {} samples", controller.name(), log.len()))?;
        let margin = log.column("cone_margin").unwrap().into_iter().fold(f64::INFINITY, f64::min);
        ensure(margin >= -sim::CONE_TOLERANCE * weight, || {
            format!("{}: cone violated by {:.3} N", controller.name(), -margin)
        })?;
        let drift = log.column("constraint_residual").unwrap().into_iter().fold(0.0, f64::max);
        ensure(drift <= 1e-5, || format!("{}: contact drift {drift:.2e} m", controller.name()))?;
        // Linear momentum error from the raw columns.
        let (h, hd) = (log.vector_column("h"), log.vector_column("hd"));
        let sq: f64 = h.iter().zip(&hd).map(|(a, b)| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>()).sum();
        let r = (sq / h.len() as f64).sqrt();
        rms.push(r);
        parts.push(format!("{} rms {r:.2e} kg·m/s, min margin {margin:.3} N", controller.name()));
    }
    ensure(rms[1] <= rms[0], || format!("EF rms {:.3e} > baseline {:.3e}", rms[1], rms[0]))?;
    Ok(parts.join("; "))
}

// ---------------------------------------------------------------------------
// 9. Oracle equivalence.

fn criterion_9() -> Verdict {
    let model = fixture("biped");
    let mut rng = rng(109);
    let mut worst_kkt: f64 = 0.0;
    for _ in 0..100 {
        let st = random_feasible_state(&model, &mut rng);
        let u = uniform(&mut rng, model.dof(), 20.0);
        let (nudot, f) = forward_dynamics_constrained(&model, &st, &u, None).map_err(|e| e.to_string())?;
        let dq = compute_dynamics(&model, &st).unwrap();
        let fq = FrictionQuantities::new(&model, &dq.ms, &st.sdot).unwrap();
        let (nudot_o, f_o) = kkt_oracle(&dq, &fq, &u);
        worst_kkt = worst_kkt.max(rel_err_v(&nudot, &nudot_o)).max(rel_err_v(&f, &f_o));
    }

    // Inactive constraints: the QP returns the unconstrained minimizer.
    let mut worst_qp: f64 = 0.0;
    for _ in 0..100 {
        let n = 8;
        let hessian = random_spd(&mut rng, n, 1.0);
        let gradient = uniform(&mut rng, n, 5.0);
        let x_ls = -hessian.clone().try_inverse().unwrap() * &gradient;
        let a = DMatrix::from_fn(12, n, |_, _| rng.random_range(-1.0..1.0));
        let bounds = &a * &x_ls + DVector::from_fn(12, |_, _| rng.random_range(0.1..1.0));
        let sol = qp::solve(&QpProblem { hessian, gradient, constraints: a, bounds }, qp::DEFAULT_MAX_ITERATIONS).map_err(|e| e.to_string())?;
        worst_qp = worst_qp.max(rel_err_v(&sol.x, &x_ls));
    }

    // Contact redundancy QP with slack cones against dense least squares.
    let g = momentum_gains(model.dof());
    for _ in 0..30 {
        let c = momentum_case(&model, &mut rng);
        let open = ConeConstraints { a: DMatrix::zeros(0, 12), b: DVector::zeros(0) };
        let out = baseline_momentum_controller(&c.dq, &c.fq, &c.st, &c.reference, &c.istate, &g, &open, &c.jref, JointInertia::Rigid)
            .map_err(|e| e.to_string())?;
        let (map, offset) = dense_torque_map(&c.dq, &c.dq.ms, &out.u0);
        let gn = &map * &out.n_b;
        let f_ls = &out.f_particular - &out.n_b * linalg::pinv(&gn) * (&offset + &map * &out.f_particular);
        let slack = ConeConstraints {
            b: &c.cones.a * &f_ls + DVector::from_element(c.cones.b.len(), 1.0),
            a: c.cones.a.clone(),
        };
        let with_rows = baseline_momentum_controller(&c.dq, &c.fq, &c.st, &c.reference, &c.istate, &g, &slack, &c.jref, JointInertia::Rigid)
            .map_err(|e| e.to_string())?;
        worst_qp = worst_qp.max(rel_err_v(&with_rows.f_star, &f_ls));
    }
    ensure(worst_kkt <= 1e-8, || format!("KKT mismatch {worst_kkt:.3e}"))?;
    ensure(worst_qp <= 1e-8, || format!("QP mismatch {worst_qp:.3e}"))?;
    Ok(format!("KKT {worst_kkt:.1e} over 100 pairs, QP vs least squares {worst_qp:.1e}"))
}

// ---------------------------------------------------------------------------
// 10. Invariants and determinism.

fn criterion_10() -> Verdict {
    let mut checks = 0;
    let biped = fixture("biped");
    let n = biped.dof();
    let g = momentum_gains(n);
    let mut rng = rng(110);

    // Projectors, symmetry, positivity, splitting identity, wrench map.
    for _ in 0..50 {
        let c = momentum_case(&biped, &mut rng);
        let open = ConeConstraints { a: DMatrix::zeros(0, 12), b: DVector::zeros(0) };
        let ef = ef_momentum_controller(&c.dq, &c.fq, &c.st, &c.reference, &c.istate, &g, &open, &c.jref).map_err(|e| e.to_string())?;
        let base = baseline_momentum_controller(&c.dq, &c.fq, &c.st, &c.reference, &c.istate, &g, &open, &c.jref, JointInertia::Reflected)
            .map_err(|e| e.to_string())?;
        for out in [&ef, &base] {
            ensure((c.dq.jb.transpose() * &out.n_b).amax() < 1e-9, || "J_bᵀN_b ≠ 0".into())?;
            ensure((&out.n_b * &out.n_b - &out.n_b).amax() < 1e-9, || "N_b not idempotent".into())?;
            // Λ̄ carries units of inverse inertia; compare against its own size.
            let lam = (&out.lambda * &out.n_lambda).amax() / out.lambda.amax().max(1.0);
            ensure(lam < 1e-9, || format!("Λ̄N̄_Λ relative {lam:.2e}"))?;
            ensure((&out.n_lambda * &out.n_lambda - &out.n_lambda).amax() < 1e-9, || "N̄_Λ not idempotent".into())?;
        }
        let m = c.dq.mass_matrix_bar(&c.fq);
        ensure(linalg::symmetry_residual(&m) <= 1e-12 * m.amax() && linalg::is_spd(&m), || "M̄ not SPD".into())?;
        ensure(linalg::symmetry_residual(&c.fq.kf_bar) <= 1e-12 * c.fq.kf_bar.amax(), || "K̄_f not symmetric".into())?;
        let tol = 1e-12 * ef.t.amax().max(1.0);
        ensure(linalg::symmetry_residual(&ef.t) <= tol && linalg::min_eigenvalue(&ef.t) >= -tol, || "T not PSD".into())?;
        let p = &c.dq.jb * (&c.dq.jg * &c.st.sdot);
        let split = -(ef.d.transpose() * &p) + (&c.st.sdot + ef.d.transpose() * &p);
        ensure((split - &c.st.sdot).amax() <= 1e-9 * c.st.sdot.amax().max(1.0), || "splitting identity".into())?;
        let wm = wrench_map_d(&c.dq, &c.fq).map_err(|e| e.to_string())?;
        ensure(rel_err_v(&wm.f_m(&ef.command), &ef.f_star) < 1e-7, || "f_m(u*) ≠ f_m*".into())?;
        // H = M_b v_B = J̄_G ṡ under the contact constraint.
        ensure(rel_err_v(&(&c.dq.jg * &c.st.sdot), &c.dq.momentum) < 1e-8, || "H ≠ J̄_G ṡ".into())?;
        checks += 9;
    }

    // Momentum rate against a finite difference of the integrated momentum.
    for _ in 0..5 {
        let st = random_feasible_state(&biped, &mut rng);
        let u = uniform(&mut rng, n, 5.0);
        let dq = compute_dynamics(&biped, &st).unwrap();
        let fq = FrictionQuantities::new(&biped, &dq.ms, &st.sdot).unwrap();
        let (_, f) = solve_constrained(&dq, &fq, &u, None).unwrap();
        let h = 1e-5;
        let momentum = |dt: f64| {
            let next = rk4_step(&biped, &st, 0.0, dt, None, |_, _, _, _| Ok(u.clone())).unwrap();
            compute_dynamics(&biped, &next).unwrap().momentum
        };
        let fd = (momentum(h) - momentum(-h)) / (2.0 * h);
        ensure(rel_err_v(&fd, &momentum_rate(&dq, &f)) < 1e-6, || "momentum rate vs finite difference".into())?;
        checks += 1;
    }

    // Friction: dissipativity, evenness, viscous limit.
    let arm = fixture("arm4").with_actuation(|a| a.kc = frictorq::model::diag_rows(&[0.02, 0.01, 0.02, 0.01])).unwrap();
    let viscous = arm.gamma_inv().transpose() * arm.viscous() * arm.gamma_inv();
    let no_coulomb = arm.with_actuation(|a| a.kc = frictorq::model::diag_rows(&[0.0; 4])).unwrap();
    for _ in 0..200 {
        let sdot = uniform(&mut rng, 4, 3.0);
        let ms = DMatrix::identity(4, 4);
        let kf_bar = FrictionQuantities::new(&arm, &ms, &sdot).unwrap().kf_bar;
        ensure(sdot.dot(&(&kf_bar * &sdot)) >= 0.0, || "friction power negative".into())?;
        ensure(friction_matrix(&arm, &sdot) == friction_matrix(&arm, &(-&sdot)), || "friction not even".into())?;
        let kv_bar = FrictionQuantities::new(&no_coulomb, &ms, &sdot).unwrap().kf_bar;
        ensure((kv_bar - &viscous).amax() <= 1e-12 * viscous.amax(), || "viscous limit".into())?;
        checks += 3;
    }

    // Baseline inner loop closed form.
    let ki = DMatrix::from_diagonal_element(4, 4, 30.0);
    for _ in 0..20 {
        let st = random_state(&arm, &mut rng);
        let tau_star = uniform(&mut rng, 4, 3.0);
        let mut il = InnerLoopState::new(4);
        il.integral = uniform(&mut rng, 4, 0.1);
        let theta_dot = arm.gamma_inv() * &st.sdot;
        let (tau_m, _) = inner_loop::baseline_motor_torque(&arm, &tau_star, &tau_star, &theta_dot, &il, &ki, 1e-3).unwrap();
        let u = inner_loop::measure_u(&arm, &tau_m).unwrap();
        let dq = compute_dynamics(&arm, &st).unwrap();
        let fq = FrictionQuantities::new(&arm, &dq.ms, &st.sdot).unwrap();
        let (sddot, _) = solve_constrained(&dq, &fq, &u, None).unwrap();
        let tau = inner_loop::joint_torque(&arm, &u, &st.sdot, &sddot).unwrap();
        let expected = &tau_star - arm.gamma_inv().transpose() * (arm.motor_inertia() * (arm.gamma_inv() * &sddot)) - &ki * &il.integral;
        ensure(rel_err_v(&tau, &expected) < 1e-8, || "inner loop closed form".into())?;
        checks += 1;
    }

    // Model file round trip and total mass.
    for name in ["pendulum2", "arm4", "biped"] {
        let model = fixture(name);
        let dir = std::env::temp_dir().join(format!("frictorq-acceptance-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("{name}.json"));
        model.save(&path).map_err(|e| e.to_string())?;
        let back = load_model(&path).map_err(|e| e.to_string())?;
        std::fs::remove_dir_all(&dir).ok();
        ensure(back.description() == model.description(), || format!("{name}: round trip changed the model"))?;
        let sum: f64 = model_json(name)["links"].as_array().unwrap().iter().map(|l| l["mass"].as_f64().unwrap()).sum();
        ensure(model.total_mass() == sum, || format!("{name}: total mass"))?;
        checks += 2;
    }

    // Determinism.
    let mut cfg = config("arm4_noise.json");
    cfg.duration = 0.5;
    let a = run_scenario(&cfg).map_err(|e| e.to_string())?.to_csv();
    let b = run_scenario(&cfg).map_err(|e| e.to_string())?.to_csv();
    ensure(a == b, || "identical config and seed gave different CSV".into())?;
    checks += 1;

    Ok(format!("{checks} invariant checks, bit-identical rerun"))
}

fn main() {
    let criteria: [(&str, f64, fn() -> Verdict); 10] = [
        ("closed-loop fidelity (fixed base)", 5.0, criterion_1),
        ("sensitivity optimum", 1.0, criterion_2),
        ("EF momentum identity", 10.0, criterion_3),
        ("baseline momentum identity", f64::INFINITY, criterion_4),
        ("reduction to baseline", f64::INFINITY, criterion_5),
        ("conditioning", f64::INFINITY, criterion_6),
        ("noise robustness", 60.0, criterion_7),
        ("balancing", 120.0, criterion_8),
        ("oracle equivalence", f64::INFINITY, criterion_9),
        ("invariants and determinism", f64::INFINITY, criterion_10),
    ];
    // Optional criterion numbers on the command line select a subset.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, budget, check)) in criteria.into_iter().enumerate() {
        if !only.is_empty() && !only.contains(&(k + 1)) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let verdict = match verdict {
            Ok(detail) if secs > budget => Err(format!("{detail}; took {secs:.1} s, budget {budget} s")),
            v => v,
        };
        match verdict {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1} s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.1} s]", k + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
