//! Radial reference solutions, the damped-Newton grid solver and the shifted-data sandwich.

mod newton;
mod problem;
mod radial;
mod sandwich;

pub use newton::{fitted_order, grid_solve, grid_solve_in, solve_nodal, solve_nodal_from, SolveOptions, SolveReport};
pub use problem::{CompiledData, DataSource, DirichletProblem, NodalProblem};
pub use radial::{
    isotropic_value, radial_phi_pp, radial_solve, radial_solve_steps, RadialCurvature, RadialProfile, CONDITIONING_WARN,
};
pub use sandwich::{approximation_sandwich, sandwich_constant, SandwichReport, SandwichRow};
