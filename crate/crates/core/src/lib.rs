//! Whole-body torque control that exploits joint friction, for fixed-base
//! and floating-base articulated robots, together with the classical
//! friction-compensating baseline and a deterministic plant simulator.

pub mod control_fixed;
pub mod control_floating;
pub mod dynamics;
pub mod error;
pub mod friction;
pub mod inner_loop;
pub mod linalg;
pub mod model;
pub mod qp;
pub mod sim;

pub use error::{Error, Result};
