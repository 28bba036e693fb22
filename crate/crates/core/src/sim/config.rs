//! Scenario description, read from JSON. See `docs/scenario-format.md`.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::control_floating::JointInertia;
use crate::error::{Error, Result};
use crate::model::RobotModel;
use crate::sim::noise::NoiseModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Baseline,
    Ef,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Ef => "ef",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FixedBase,
    FloatingBase,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::FixedBase => "fixed_base",
            Self::FloatingBase => "floating_base",
        }
    }
}

/// Gain matrix given as a scalar (times identity), a diagonal, or rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl GainSpec {
    pub fn matrix(&self, n: usize, what: &str) -> Result<DMatrix<f64>> {
        let m = match self {
            Self::Scalar(k) => DMatrix::from_diagonal_element(n, n, *k),
            Self::Diagonal(d) if d.len() == n => DMatrix::from_diagonal(&DVector::from_row_slice(d)),
            Self::Full(rows) if rows.len() == n && rows.iter().all(|r| r.len() == n) => {
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
            _ => return Err(Error::Config(format!("gain '{what}' must be a scalar or have dimension {n}"))),
        };
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!("gain '{what}' has non-finite entries")));
        }
        Ok(m)
    }
}

fn default_ki_inner() -> GainSpec {
    GainSpec::Scalar(10.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsConfig {
    /// Joint (fixed base) or postural (floating base) stiffness `K_p^s`.
    pub kp: GainSpec,
    /// Joint or postural damping `K_d^s`.
    pub kd: GainSpec,
    /// Inner-loop integral gain `K_I`.
    #[serde(default = "default_ki_inner")]
    pub ki_inner: GainSpec,
    /// Momentum gains `K_p`, `K_i` (floating base only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_kp: Option<GainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_ki: Option<GainSpec>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJointSinusoid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitude_deg: Option<f64>,
    frequency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    joints: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<Vec<f64>>,
}

/// `s^d = center + A sin(2π f t)` on the selected joints (all by default).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJointSinusoid", into = "RawJointSinusoid")]
pub struct JointSinusoid {
    /// Amplitude (rad).
    pub amplitude: f64,
    pub frequency: f64,
    pub joints: Option<Vec<String>>,
    /// Defaults to the initial joint configuration.
    pub center: Option<Vec<f64>>,
}

impl TryFrom<RawJointSinusoid> for JointSinusoid {
    type Error = String;

    fn try_from(raw: RawJointSinusoid) -> std::result::Result<Self, String> {
        let amplitude = match (raw.amplitude, raw.amplitude_deg) {
            (Some(a), None) => a,
            (None, Some(d)) => d.to_radians(),
            _ => return Err("joint_sinusoid needs exactly one of amplitude, amplitude_deg".into()),
        };
        Ok(Self {
            amplitude,
            frequency: raw.frequency,
            joints: raw.joints,
            center: raw.center,
        })
    }
}

impl From<JointSinusoid> for RawJointSinusoid {
    fn from(j: JointSinusoid) -> Self {
        Self {
            amplitude: Some(j.amplitude),
            amplitude_deg: None,
            frequency: j.frequency,
            joints: j.joints,
            center: j.center,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComSinusoid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitude_cm: Option<f64>,
    frequency: f64,
    axis: [f64; 3],
}

/// `p_c^d = p_c(0) + A sin(2π f t) axis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawComSinusoid", into = "RawComSinusoid")]
pub struct ComSinusoid {
    /// Amplitude (m).
    pub amplitude: f64,
    pub frequency: f64,
    pub axis: [f64; 3],
}

impl TryFrom<RawComSinusoid> for ComSinusoid {
    type Error = String;

    fn try_from(raw: RawComSinusoid) -> std::result::Result<Self, String> {
        let amplitude = match (raw.amplitude, raw.amplitude_cm) {
            (Some(a), None) => a,
            (None, Some(c)) => c / 100.0,
            _ => return Err("com_sinusoid needs exactly one of amplitude, amplitude_cm".into()),
        };
        let n = Vector3::from(raw.axis).norm();
        if !(n > 0.0) {
            return Err("com_sinusoid axis must be nonzero".into());
        }
        Ok(Self {
            amplitude,
            frequency: raw.frequency,
            axis: raw.axis.map(|x| x / n),
        })
    }
}

impl From<ComSinusoid> for RawComSinusoid {
    fn from(c: ComSinusoid) -> Self {
        Self {
            amplitude: Some(c.amplitude),
            amplitude_cm: None,
            frequency: c.frequency,
            axis: c.axis,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceConfig {
    /// Hold the initial configuration (and CoM for floating base).
    Hold,
    JointSinusoid(JointSinusoid),
    ComSinusoid(ComSinusoid),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Initial joint positions; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<f64>>,
    /// Added to the reference at t = 0 to start with a tracking error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_offset: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdot_offset: Option<Vec<f64>>,
}

fn default_dt_inner() -> f64 {
    1e-3
}
fn default_dt_outer() -> f64 {
    1e-2
}
fn default_dt_physics() -> f64 {
    1e-4
}
fn default_bound() -> Option<f64> {
    Some(50.0)
}
fn default_alpha() -> f64 {
    crate::dynamics::Stabilization::DEFAULT_ALPHA
}
fn default_watchdog() -> f64 {
    1e3
}
fn default_baseline_inertia() -> JointInertia {
    JointInertia::Reflected
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Model file; relative paths are resolved against the config file.
    pub model: PathBuf,
    pub controller: ControllerKind,
    /// Checked against the model when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub gains: GainsConfig,
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default = "default_dt_inner")]
    pub dt_inner: f64,
    #[serde(default = "default_dt_outer")]
    pub dt_outer: f64,
    #[serde(default = "default_dt_physics")]
    pub dt_physics: f64,
    pub duration: f64,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Anti-windup bound on the momentum integral; `null` disables it.
    #[serde(default = "default_bound")]
    pub integral_bound: Option<f64>,
    /// Anti-windup bound on the inner-loop integral; `null` disables it.
    #[serde(default = "default_bound")]
    pub inner_integral_bound: Option<f64>,
    /// Evaluate the controller inside every integrator stage with exact
    /// measurements and no inner loop (fixed base only).
    #[serde(default)]
    pub continuous_control: bool,
    /// Joint mass matrix used by the baseline torque computation.
    #[serde(default = "default_baseline_inertia")]
    pub baseline_inertia: JointInertia,
    #[serde(default = "default_alpha")]
    pub stabilization_alpha: f64,
    /// Divergence watchdog threshold on `‖ν‖`.
    #[serde(default = "default_watchdog")]
    pub watchdog: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Read a config file and resolve its model path.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        if cfg.model.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.model = dir.join(&cfg.model);
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Outer ticks, inner ticks per outer tick, physics steps per inner tick.
    pub fn schedule(&self) -> Result<(usize, usize, usize)> {
        let ratio = |coarse: f64, fine: f64, what: &str| -> Result<usize> {
            let r = coarse / fine;
            let k = r.round();
            if !(fine > 0.0) || k < 1.0 || (r - k).abs() > 1e-9 * k {
                return Err(Error::Config(format!("{what} must be a positive integer ratio, got {r}")));
            }
            Ok(k as usize)
        };
        let inner = ratio(self.dt_outer, self.dt_inner, "dt_outer / dt_inner")?;
        let physics = ratio(self.dt_inner, self.dt_physics, "dt_inner / dt_physics")?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("duration must be >= 0, got {}", self.duration)));
        }
        let outer = (self.duration / self.dt_outer + 1e-9).floor() as usize;
        Ok((outer, inner, physics))
    }

    pub fn validate(&self, model: &RobotModel) -> Result<Mode> {
        self.schedule()?;
        self.noise.validate()?;
        let mode = if model.is_floating() { Mode::FloatingBase } else { Mode::FixedBase };
        if let Some(m) = self.mode {
            if m != mode {
                return Err(Error::Config(format!(
                    "mode {} does not match the model ({})",
                    m.name(),
                    mode.name()
                )));
            }
        }
        if mode == Mode::FloatingBase {
            if model.num_contacts() == 0 {
                return Err(Error::Config("floating-base scenarios need at least one contact".into()));
            }
            if self.continuous_control {
                return Err(Error::Config("continuous_control is only supported for fixed-base runs".into()));
            }
            if self.gains.momentum_kp.is_none() || self.gains.momentum_ki.is_none() {
                return Err(Error::Config("floating-base scenarios need momentum_kp and momentum_ki".into()));
            }
        } else if matches!(self.reference, ReferenceConfig::ComSinusoid(_)) {
            return Err(Error::Config("com_sinusoid needs a floating-base model".into()));
        }
        let n = model.dof();
        for (name, v) in [
            ("initial.s", &self.initial.s),
            ("initial.s_offset", &self.initial.s_offset),
            ("initial.sdot_offset", &self.initial.sdot_offset),
        ] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(Error::Config(format!("{name} must have {n} entries, got {}", v.len())));
                }
            }
        }
        if let ReferenceConfig::JointSinusoid(js) = &self.reference {
            if let Some(names) = &js.joints {
                for name in names {
                    if model.joint_index(name).is_none() {
                        return Err(Error::Config(format!("unknown joint '{name}' in joint_sinusoid")));
                    }
                }
            }
            if let Some(c) = &js.center {
                if c.len() != n {
                    return Err(Error::Config(format!("joint_sinusoid.center must have {n} entries")));
                }
            }
        }
        if !(self.stabilization_alpha >= 0.0) || !(self.watchdog > 0.0) {
            return Err(Error::Config("stabilization_alpha must be >= 0 and watchdog > 0".into()));
        }
        Ok(mode)
    }
}

/// Joint reference generator for a config.
#[derive(Clone, Debug)]
pub struct JointTrajectory {
    pub center: DVector<f64>,
    pub amplitude: DVector<f64>,
    pub omega: f64,
}

impl JointTrajectory {
    pub fn new(cfg: &ScenarioConfig, model: &RobotModel, s0: &DVector<f64>) -> Self {
        let n = model.dof();
        match &cfg.reference {
            ReferenceConfig::JointSinusoid(js) => {
                let mut amplitude = DVector::zeros(n);
                match &js.joints {
                    Some(names) => {
                        for name in names {
                            amplitude[model.joint_index(name).expect("validated joint")] = js.amplitude;
                        }
                    }
                    None => amplitude.fill(js.amplitude),
                }
                Self {
                    center: js.center.as_ref().map_or_else(|| s0.clone(), |c| DVector::from_row_slice(c)),
                    amplitude,
                    omega: TAU * js.frequency,
                }
            }
            _ => Self {
                center: s0.clone(),
                amplitude: DVector::zeros(n),
                omega: 0.0,
            },
        }
    }

    pub fn at(&self, t: f64) -> crate::control_fixed::JointReference {
        let (s, c) = (self.omega * t).sin_cos();
        crate::control_fixed::JointReference {
            s: &self.center + &self.amplitude * s,
            sdot: &self.amplitude * (self.omega * c),
            sddot: &self.amplitude * (-self.omega * self.omega * s),
        }
    }
}

/// CoM reference `(p, ṗ, p̈)`.
#[derive(Clone, Debug)]
pub struct ComTrajectory {
    pub center: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub amplitude: f64,
    pub omega: f64,
}

impl ComTrajectory {
    pub fn new(cfg: &ScenarioConfig, com0: Vector3<f64>) -> Self {
        match &cfg.reference {
            ReferenceConfig::ComSinusoid(c) => Self {
                center: com0,
                direction: Vector3::from(c.axis),
                amplitude: c.amplitude,
                omega: TAU * c.frequency,
            },
            _ => Self {
                center: com0,
                direction: Vector3::z(),
                amplitude: 0.0,
                omega: 0.0,
            },
        }
    }

    pub fn at(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let (s, c) = (self.omega * t).sin_cos();
        let a = self.amplitude;
        (
            self.center + self.direction * (a * s),
            self.direction * (a * self.omega * c),
            self.direction * (-a * self.omega * self.omega * s),
        )
    }
}
