//! Lagrangian angles of symmetric matrices, the subequations they cut out, partial
//! Legendre transforms in time, and discrete solvers built on top of them.

pub mod angles;
mod banded;
pub mod dsl;
pub mod error;
pub mod grid;
mod hull;
pub mod solvers;
pub mod stencil;
pub mod subeq;
pub mod transform;

pub use angles::{AngleMethod, AngleResult, SymMatrix};
pub use error::{Error, Result};
pub use grid::{Grid, SpaceGrid};
pub use subeq::{Membership, Phase, Status};
pub use transform::SampledFamily;
