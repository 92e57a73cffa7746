//! Closed-loop simulation of a cascaded extrusion process.
//!
//! The process is modelled as two scalar first-order subsystems:
//!
//! ```text
//! nozzle (actuation):  dx1/dt = a1*x1 + b1*u1 + eta1
//! strand (printing):   dx2/dt = a2*x2 + a21*x1 + b2*u2 + eta2
//! ```
//!
//! The nozzle velocity is driven by a sliding-mode law on the tracking error,
//! the strand velocity by a law that cancels the nozzle coupling and combines a
//! sliding-mode term with linear-quadratic optimal feedback.
//!
//! Modules:
//! - [`plant`]: parameters, bounds, reference and disturbance signals, uncertainty sampling
//! - [`control`]: control laws, Riccati solution, gain conditions
//! - [`scenario`]: the JSON scenario document and its resolution into runtime objects
//! - [`sim`]: fixed-step closed-loop integration, trajectories and metrics
//! - [`sweep`]: parameter grids, Monte-Carlo batches and result surfaces
//! - [`stats`]: small statistics helpers used by the trend checks

pub mod control;
pub mod error;
pub mod plant;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};

/// Formats a double with 17 significant digits, the precision used in every CSV export.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
