//! Shallow-water flood modelling on uniform, static non-uniform and
//! multiwavelet-adaptive quadtree grids.

mod error;
mod real;

pub mod field;
pub mod metrics;
pub mod mra;
pub mod quadgrid;
pub mod raster_io;
pub mod scenarios;
pub mod solver;

pub use error::{Error, Result};
pub use real::Real;
