//! Quadtree topology: Morton addressing, flag trees with 2:1 grading,
//! leaf grids with cross-level neighbour queries, faces and resampling.

mod faces;
mod flags;
mod grid;
mod morton;
mod sample;

pub use faces::{enumerate_faces, enumerate_subfaces, Axis, Face, FaceKind, Side, SubFace};
pub use flags::{FlagTree, LeafId};
pub use grid::{Neighbours, QuadGrid};
pub use morton::{demorton, morton, morton_checked};
pub use sample::sample_to_raster;
