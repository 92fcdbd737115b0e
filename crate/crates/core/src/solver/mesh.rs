//! Solver-side view of a leaf grid: geometry, sub-faces with boundary
//! conditions and per-cell face lists.

use crate::error::Result;
use crate::field::{Face as Dir, PlanarCoeffs};
use crate::mra::NonUniformGrid;
use crate::quadgrid::{enumerate_faces, Axis, FaceKind, LeafId, QuadGrid, Side};
use crate::raster_io::{Boundaries, BoundaryKind};
use crate::real::Real;

/// One sub-face. `lower`/`upper` are the west/south and east/north leaves.
#[derive(Clone, Copy, Debug)]
pub struct MeshFace<T> {
    pub axis: Axis,
    pub lower: Option<u32>,
    pub upper: Option<u32>,
    /// Boundary condition on a domain-edge face.
    pub boundary: Option<BoundaryKind>,
    pub len: T,
    pub lower_off: T,
    pub upper_off: T,
    /// Distance between the adjacent centres along the normal.
    pub dist: T,
    /// Index into [`Mesh::pairs`] when the face belongs to an encoded pair.
    pub pair: Option<u32>,
}

/// A coarse leaf side facing two finer leaves, resolved with the
/// encoded coarse-scale counterpart of the fine siblings.
#[derive(Clone, Copy, Debug)]
pub struct FacePair {
    pub coarse: u32,
    pub coarse_is_lower: bool,
    /// Same-level node on the fine side, parent of the fine leaves.
    pub node: LeafId,
    pub faces: [u32; 2],
}

#[derive(Clone, Debug)]
pub struct Mesh<T> {
    pub grid: QuadGrid,
    pub z: Vec<PlanarCoeffs<T>>,
    pub size: Vec<T>,
    pub area: Vec<T>,
    pub faces: Vec<MeshFace<T>>,
    pub pairs: Vec<FacePair>,
    dir_start: Vec<u32>,
    dir_faces: Vec<u32>,
}

/// Index of a direction in `[N, E, S, W]`.
#[inline]
pub fn dir_index(d: Dir) -> usize {
    match d {
        Dir::North => 0,
        Dir::East => 1,
        Dir::South => 2,
        Dir::West => 3,
    }
}

impl<T: Real> Mesh<T> {
    /// Builds the mesh of a graded grid. With `encoded_pairs`, every
    /// non-homogeneous face is registered as a [`FacePair`].
    pub fn new(g: &NonUniformGrid<T>, bc: &Boundaries, encoded_pairs: bool) -> Result<Self> {
        let grid = g.grid.clone();
        let faces_q = enumerate_faces(&grid, true)?;
        let n = grid.len();
        let size: Vec<T> = (0..n).map(|k| T::lit(grid.leaf_size(k))).collect();
        let area = size.iter().map(|&s| s * s).collect();
        let leaves = grid.leaves().to_vec();
        let mut faces = Vec::new();
        let mut pairs = Vec::new();
        for f in &faces_q {
            let first = faces.len() as u32;
            for s in &f.subfaces {
                let lower = s.lower.leaf().map(|k| k as u32);
                let upper = s.upper.leaf().map(|k| k as u32);
                let boundary = match (s.lower, s.upper) {
                    (Side::Boundary, _) => Some(match s.axis {
                        Axis::X => bc.west,
                        Axis::Y => bc.south,
                    }),
                    (_, Side::Boundary) => Some(match s.axis {
                        Axis::X => bc.east,
                        Axis::Y => bc.north,
                    }),
                    _ => None,
                };
                let half = |side: Side| side.leaf().map_or(0.0, |k| 0.5 * grid.leaf_size(k));
                let dist = match (s.lower, s.upper) {
                    (Side::Leaf(_), Side::Leaf(_)) => half(s.lower) + half(s.upper),
                    _ => 2.0 * half(s.lower).max(half(s.upper)),
                };
                faces.push(MeshFace {
                    axis: s.axis,
                    lower,
                    upper,
                    boundary,
                    len: T::lit(s.length),
                    lower_off: T::lit(s.lower_offset),
                    upper_off: T::lit(s.upper_offset),
                    dist: T::lit(dist),
                    pair: None,
                });
            }
            if encoded_pairs && f.kind == FaceKind::NonHomogeneous {
                let s0 = &f.subfaces[0];
                let (la, lb) = (s0.lower.leaf().unwrap(), s0.upper.leaf().unwrap());
                let coarse_is_lower = leaves[la].level < leaves[lb].level;
                let (coarse, fine) = if coarse_is_lower { (la, lb) } else { (lb, la) };
                let p = pairs.len() as u32;
                pairs.push(FacePair {
                    coarse: coarse as u32,
                    coarse_is_lower,
                    node: leaves[fine].parent().expect("finer leaf has a parent"),
                    faces: [first, first + 1],
                });
                faces[first as usize].pair = Some(p);
                faces[first as usize + 1].pair = Some(p);
            }
        }
        // per-cell face lists, each direction sorted along the side
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); 4 * n];
        for (fi, f) in faces.iter().enumerate() {
            let (dl, du) = match f.axis {
                Axis::X => (Dir::East, Dir::West),
                Axis::Y => (Dir::North, Dir::South),
            };
            if let Some(k) = f.lower {
                lists[4 * k as usize + dir_index(dl)].push(fi as u32);
            }
            if let Some(k) = f.upper {
                lists[4 * k as usize + dir_index(du)].push(fi as u32);
            }
        }
        let mut dir_start = Vec::with_capacity(4 * n + 1);
        let mut dir_faces = Vec::new();
        for l in lists {
            dir_start.push(dir_faces.len() as u32);
            dir_faces.extend(l);
        }
        dir_start.push(dir_faces.len() as u32);
        Ok(Mesh { grid, z: g.z.clone(), size, area, faces, pairs, dir_start, dir_faces })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.size.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.size.is_empty()
    }

    /// Faces on side `d` of cell `k`.
    #[inline]
    pub fn faces_of(&self, k: usize, d: Dir) -> &[u32] {
        let s = 4 * k + dir_index(d);
        &self.dir_faces[self.dir_start[s] as usize..self.dir_start[s + 1] as usize]
    }
}
