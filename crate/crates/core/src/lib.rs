//! Numerical laboratory for the Moser–Trudinger type problem
//! -Δu = λ u e^{u²} with Dirichlet data.

pub mod asymptotics_reporter;
pub mod error;
pub mod fem_solver;
pub mod geometry_green;
pub mod jet;
pub mod kirchhoff_routh;
pub mod liouville_core;
pub mod mesh;
pub mod pohozaev;
pub mod ode;
pub mod quad;
pub mod radial_hierarchy;
pub mod radial_solver;

pub use error::{Error, Result};
