//! Velocity sensor surrogate: first-order low-pass plus white Gaussian noise.
//!
//! Noise streams come from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`; standard normals use `rand_distr::StandardNormal`.
//! Per sample the joint velocities are drawn first (index order), then the
//! six base-velocity components for floating-base models.

use nalgebra::{DVector, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::RobotState;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Velocity noise standard deviation (rad/s, and m/s for the base).
    #[serde(default)]
    pub sigma_v: f64,
    /// Low-pass time constant (s); zero disables filtering.
    #[serde(default)]
    pub tau_f: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseModel {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_v >= 0.0 && self.sigma_v.is_finite()) {
            return Err(Error::Config(format!("sigma_v must be >= 0, got {}", self.sigma_v)));
        }
        if !(self.tau_f >= 0.0 && self.tau_f.is_finite()) {
            return Err(Error::Config(format!("tau_f must be >= 0, got {}", self.tau_f)));
        }
        Ok(())
    }

    pub fn is_exact(&self) -> bool {
        self.sigma_v == 0.0 && self.tau_f == 0.0
    }
}

/// Stateful sensor: RNG stream and filter memory.
#[derive(Clone, Debug)]
pub struct Sensor {
    noise: NoiseModel,
    rng: ChaCha8Rng,
    floating: bool,
    filtered: Option<(DVector<f64>, Vector6<f64>)>,
}

impl Sensor {
    /// `floating` adds noise to the base velocity as well.
    pub fn new(noise: NoiseModel, floating: bool) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(noise.seed),
            floating,
            noise,
            filtered: None,
        }
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Measurement of `state` after `dt` seconds since the previous call.
    /// Positions are exact. The filter starts at the first sample.
    pub fn measure(&mut self, state: &RobotState, dt: f64) -> RobotState {
        let (sdot, base) = match self.filtered.take() {
            Some((mut y, mut yb)) if self.noise.tau_f > 0.0 => {
                let a = 1.0 - (-dt / self.noise.tau_f).exp();
                y += (&state.sdot - &y) * a;
                yb += (state.base_velocity - yb) * a;
                (y, yb)
            }
            _ => (state.sdot.clone(), state.base_velocity),
        };
        self.filtered = Some((sdot.clone(), base));
        let mut out = state.clone();
        out.sdot = sdot;
        out.base_velocity = base;
        let sigma = self.noise.sigma_v;
        if sigma > 0.0 {
            for v in out.sdot.iter_mut() {
                *v += sigma * self.rng.sample::<f64, _>(StandardNormal);
            }
            if self.floating {
                for v in out.base_velocity.iter_mut() {
                    *v += sigma * self.rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        out
    }
}
