//! Tests of whether a trained model behaves like a continuous flow: accuracy under
//! solver substitution, crossings of planar trajectories, and comparison with the
//! ground-truth field.

mod consistency;
mod crossings;
mod field;

pub use consistency::{
    is_finer, scaled_steps, solver_grid_eval, ConsistencyReport, GridCell, Verdict, CONSISTENCY_HEADER,
    DEFAULT_DROP_THRESHOLD, DEFAULT_FACTORS,
};
pub use crossings::{detect_crossings, orientation, planar_paths, segments_cross, Crossing, CrossingReport, Point};
pub use field::{angle_between, compare_to_true_field, FieldComparison, FieldSample, PhaseGrid};
