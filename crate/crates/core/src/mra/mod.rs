//! Multiresolution analysis: filter banks, recursive encoding into detail
//! trees, significance flagging and static non-uniform grid generation.

mod filters;
mod static_grid;
mod tree;

pub use filters::{normalize_detail, DetailTriple, FilterBank};
pub use static_grid::{
    analysed_topography, assemble_grid, format_nug, generate_static_grid, parse_nug, read_nug, topography_flags, write_nug,
    NonUniformGrid,
};
pub use tree::{build_detail_tree, flag_significant, flag_significant_with_norms, significance, DetailTree};
