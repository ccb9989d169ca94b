//! Closed-loop simulation under zero-order hold.

mod dynamics;
mod run;
mod trajectory;

pub use dynamics::{Dynamics, LinearSystem, OmniRobotTeam, SingleIntegrator, BODY_RADIUS, WHEEL_RADIUS};
pub use run::{integrate_step, simulate, Integrator, SimConfig, SimError};
pub use trajectory::{Trajectory, TrajectoryError};
