//! Planar compliant pushing: quasi-static pusher–slider mechanics, a
//! complementarity-constrained MPC that moves an impedance set-point, and an
//! energy-tank passivity filter, plus the simulation harness tying them together.

pub mod compliant;
pub mod error;
pub mod limit_surface;
pub mod planar;
pub mod pusher_slider;

pub use error::{PushError, Result};
pub mod harness;
pub mod ocp;
pub mod passivity;
pub mod plant;
