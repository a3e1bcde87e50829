//! Closed-loop simulation and event-based predictive motion control for a
//! four wheel-leg motor-driven robot with an adjustable support polygon.
//!
//! The crate is organized around the closed loop:
//!
//! * [`model`] / [`plant`] — continuous-time chassis, wheel, and tire
//!   dynamics with a deterministic fixed-step integrator.
//! * [`reference`] — reference trajectories and their curvature geometry.
//! * [`behavior`] — the event trigger, obstacle classification, and the
//!   track-width adjustment schedule.
//! * [`mpc`] — the behavior-switched receding-horizon torque controller.
//! * [`sim`] — the controller/plant loop, logging, and metrics.
//! * [`scenario`] — declarative scenario files and shipped presets.

pub mod behavior;
pub mod error;
pub mod model;
pub mod mpc;
pub mod params;
pub mod plant;
pub mod reference;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use params::RobotParams;
