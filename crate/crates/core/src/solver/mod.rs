//! Flux kernels and time stepping.

mod adaptive;
mod mesh;
mod physics;
mod run;
mod sim;

pub use adaptive::AdaptiveSim;
pub use mesh::{dir_index, FacePair, Mesh, MeshFace};
pub use physics::{
    acc_face_discharge, corrected_fluxes, friction_divisor, hll_flux, physical_flux, pressure_correction, revise_face_states,
    velocity, Consts, FaceState, Revised,
};
pub use run::{load_dem, prepare, run_simulation, Engine, RunSummary};
pub use sim::{CellRegion, Encoder, Inflow, Scheme, Sim};
