//! Explicit fixed-step Runge–Kutta integration, on and off the autodiff tape.

mod convergence;
mod export;
mod solve;
mod tableau;

pub use convergence::{convergence_order_estimate, REFERENCE_STEPS};
pub(crate) use export::csv_err;
pub use export::write_trajectory_csv;
pub use solve::{
    flow_values, integrate, integrate_values, rk_step, rk_step_values, SolverConfig, TapeField, TapeTrajectory,
    Trajectory,
};
pub use tableau::{ButcherTableau, Method};
