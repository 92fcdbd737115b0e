use std::collections::BTreeMap;

use super::grid::{Neighbours, QuadGrid};
use crate::error::{Error, Result};
use crate::field::Face as Dir;

/// Orientation of a face by its normal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    /// East/west faces.
    X,
    /// North/south faces.
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Leaf(usize),
    Boundary,
}

impl Side {
    pub fn leaf(self) -> Option<usize> {
        match self {
            Side::Leaf(k) => Some(k),
            Side::Boundary => None,
        }
    }
}

/// A boundary segment bounded on each side by a single leaf (or the domain
/// edge). `lower` is the west/south side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubFace {
    pub axis: Axis,
    pub lower: Side,
    pub upper: Side,
    /// Level of the finer adjacent leaf; the segment has that leaf's side length.
    pub level: u32,
    pub length: f64,
    pub centre: (f64, f64),
    /// Segment centre relative to each side's face centre, in units of that
    /// side's face length (0 on the finer side, ±1/4 on a one-level-coarser side).
    pub lower_offset: f64,
    pub upper_offset: f64,
}

impl SubFace {
    /// The face of `lower` (or `upper`) this segment lies on.
    pub fn lower_dir(&self) -> Dir {
        match self.axis {
            Axis::X => Dir::East,
            Axis::Y => Dir::North,
        }
    }

    pub fn upper_dir(&self) -> Dir {
        self.lower_dir().opposite()
    }

    pub fn is_boundary(&self) -> bool {
        self.lower == Side::Boundary || self.upper == Side::Boundary
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceKind {
    Homogeneous,
    NonHomogeneous,
    Boundary,
}

/// A whole face of the coarser adjacent leaf with its sub-faces.
#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub axis: Axis,
    pub kind: FaceKind,
    pub subfaces: Vec<SubFace>,
}

impl Face {
    pub fn length(&self) -> f64 {
        self.subfaces.iter().map(|s| s.length).sum()
    }
}

fn tangential(axis: Axis, p: (f64, f64)) -> f64 {
    match axis {
        Axis::X => p.1,
        Axis::Y => p.0,
    }
}

/// Every leaf-boundary segment exactly once, in deterministic order.
pub fn enumerate_subfaces(grid: &QuadGrid) -> Vec<SubFace> {
    let mut out = Vec::new();
    let leaves = grid.leaves();
    for k in 0..grid.len() {
        let size = grid.leaf_size(k);
        let (cx, cy) = grid.leaf_centre(k);
        for dir in Dir::ALL {
            let axis = if dir.is_x_normal() { Axis::X } else { Axis::Y };
            let (dx, dy) = dir.step();
            let centre = (cx + 0.5 * size * dx as f64, cy + 0.5 * size * dy as f64);
            let upward = matches!(dir, Dir::East | Dir::North);
            let (me, other_offset, other) = match grid.neighbours(k, dir) {
                Neighbours::Boundary => (Side::Leaf(k), 0.0, Side::Boundary),
                Neighbours::Leaves(v) => {
                    if v.len() != 1 {
                        continue;
                    }
                    let nb = v[0];
                    let (ln, lk) = (leaves[nb].level, leaves[k].level);
                    if ln > lk || (ln == lk && !upward) {
                        continue;
                    }
                    let nb_size = grid.leaf_size(nb);
                    let nb_c = grid.leaf_centre(nb);
                    let off = (tangential(axis, centre) - tangential(axis, nb_c)) / nb_size;
                    (Side::Leaf(k), off, Side::Leaf(nb))
                }
            };
            let (lower, upper, lower_offset, upper_offset) =
                if upward { (me, other, 0.0, other_offset) } else { (other, me, other_offset, 0.0) };
            out.push(SubFace { axis, lower, upper, level: leaves[k].level, length: size, centre, lower_offset, upper_offset });
        }
    }
    out
}

/// Faces grouped per coarse side. With `require_graded`, a level jump above
/// one across any face is a structural error.
pub fn enumerate_faces(grid: &QuadGrid, require_graded: bool) -> Result<Vec<Face>> {
    let leaves = grid.leaves();
    let mut out = Vec::new();
    let mut groups: BTreeMap<(usize, Axis, bool), Vec<SubFace>> = BTreeMap::new();
    for s in enumerate_subfaces(grid) {
        match (s.lower, s.upper) {
            (Side::Leaf(a), Side::Leaf(b)) => {
                let (la, lb) = (leaves[a].level, leaves[b].level);
                if require_graded && la.abs_diff(lb) > 1 {
                    return Err(Error::Structure(format!(
                        "ungraded face between {:?} and {:?}",
                        leaves[a], leaves[b]
                    )));
                }
                if la == lb {
                    out.push(Face { axis: s.axis, kind: FaceKind::Homogeneous, subfaces: vec![s] });
                } else {
                    let (coarse, coarse_is_lower) = if la < lb { (a, true) } else { (b, false) };
                    groups.entry((coarse, s.axis, coarse_is_lower)).or_default().push(s);
                }
            }
            _ => out.push(Face { axis: s.axis, kind: FaceKind::Boundary, subfaces: vec![s] }),
        }
    }
    for (_, mut subs) in groups {
        subs.sort_by(|a, b| tangential(a.axis, a.centre).total_cmp(&tangential(b.axis, b.centre)));
        out.push(Face { axis: subs[0].axis, kind: FaceKind::NonHomogeneous, subfaces: subs });
    }
    Ok(out)
}
