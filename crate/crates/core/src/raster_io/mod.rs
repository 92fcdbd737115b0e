//! Everything that enters or leaves the engine as a file: ESRI ASCII rasters,
//! inflow hydrographs and `key = value` scenario configurations.

mod config;
mod hydrograph;
mod raster;

pub use config::{
    read_config, BoundaryKind, Boundaries, DemSampling, GridMode, InflowSpec, InitialCondition,
    Manning, ScenarioConfig, SolverKind, Wavelet, DEFAULT_EPSILON, DEFAULT_GRAVITY, DEFAULT_H_DRY,
    DEFAULT_WET_THRESHOLD,
};
pub use hydrograph::{read_hydrograph, write_hydrograph, Hydrograph};
pub use raster::{read_ascii_grid, write_ascii_grid, Raster};
