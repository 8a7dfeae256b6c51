//! Discrete fractional g-Laplacians with nonstandard growth, obstacle
//! problems, and nonlocal capacities on uniform lattices.

pub mod capacity;
pub mod cli;
pub mod config;
pub mod error;
pub mod expr;
pub mod field;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod operator;
pub mod quad;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
pub use field::Field;
pub use grid::{build_grid, Domain, Grid, Shape};
pub use kernel::{BoundedShape, Coef, KernelSpec};
pub use operator::LgOperator;
