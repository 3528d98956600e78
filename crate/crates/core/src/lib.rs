//! Symplectic isotopies, their metaplectic lifts, and Weyl calculus on
//! uniform grids.

pub mod cli;
pub mod error;
pub mod isotopy;
pub mod linalg;
pub mod metaplectic;
pub mod propagator;
pub mod symplectic;
pub mod weyl;

pub use error::{Error, Result};
