use std::collections::HashMap;
use std::fmt::Write as _;

use super::flags::{FlagTree, LeafId};
use crate::error::{Error, Result};
use crate::field::Face;

/// Leaves across one side of a leaf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Neighbours {
    /// The side lies on the domain edge.
    Boundary,
    /// Leaf indices, ordered by increasing coordinate along the side.
    Leaves(Vec<usize>),
}

/// A set of quadtree leaves tiling an `M x N` block of level-0 cells.
///
/// Lookup is a hash keyed by `(level, morton)`; containing leaves are found
/// by probing the same level and then each ancestor level.
#[derive(Clone, Debug)]
pub struct QuadGrid {
    pub max_level: u32,
    pub m: u32,
    pub n: u32,
    /// Side of a level-L cell, in metres.
    pub cellsize: f64,
    pub x0: f64,
    pub y0: f64,
    leaves: Vec<LeafId>,
    index: HashMap<(u32, u64), usize>,
}

impl QuadGrid {
    pub fn from_leaves(max_level: u32, m: u32, n: u32, cellsize: f64, x0: f64, y0: f64, leaves: Vec<LeafId>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Structure(format!("coarsest grid must be at least 1x1, got {m}x{n}")));
        }
        let mut index = HashMap::with_capacity(leaves.len());
        let mut area: u128 = 0;
        for (k, leaf) in leaves.iter().enumerate() {
            if leaf.level > max_level || leaf.i >= m << leaf.level || leaf.j >= n << leaf.level {
                return Err(Error::Structure(format!("leaf {leaf:?} outside the {m}x{n} level-{max_level} domain")));
            }
            if index.insert((leaf.level, leaf.morton()), k).is_some() {
                return Err(Error::Structure(format!("duplicate leaf {leaf:?}")));
            }
            area += 1u128 << (2 * (max_level - leaf.level));
        }
        let full = (m as u128 * n as u128) << (2 * max_level);
        if area != full {
            return Err(Error::Structure(format!("leaves cover {area} fine cells, domain has {full}")));
        }
        let g = QuadGrid { max_level, m, n, cellsize, x0, y0, leaves, index };
        for leaf in &g.leaves {
            let mut p = leaf.parent();
            while let Some(a) = p {
                if g.find(a).is_some() {
                    return Err(Error::Structure(format!("leaf {leaf:?} overlaps leaf {a:?}")));
                }
                p = a.parent();
            }
        }
        Ok(g)
    }

    pub fn from_flags(flags: &FlagTree, cellsize: f64, x0: f64, y0: f64) -> Self {
        Self::from_leaves(flags.max_level, flags.m, flags.n, cellsize, x0, y0, flags.leaves())
            .expect("flag trees always tile their domain")
    }

    pub fn uniform(max_level: u32, m: u32, n: u32, cellsize: f64, x0: f64, y0: f64) -> Self {
        Self::from_flags(&FlagTree::full(max_level, m, n), cellsize, x0, y0)
    }

    #[inline]
    pub fn leaves(&self) -> &[LeafId] {
        &self.leaves
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Fine-cell extent of the domain.
    pub fn fine_dims(&self) -> (u32, u32) {
        (self.m << self.max_level, self.n << self.max_level)
    }

    #[inline]
    pub fn find(&self, id: LeafId) -> Option<usize> {
        self.index.get(&(id.level, id.morton())).copied()
    }

    /// The leaf containing node `(level, i, j)`, if it is that node or coarser.
    pub fn containing(&self, node: LeafId) -> Option<usize> {
        (0..=node.level).rev().find_map(|l| self.find(node.ancestor(l)))
    }

    /// Leaf containing the point, `None` outside the domain.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        let (nx, ny) = self.fine_dims();
        let fi = ((x - self.x0) / self.cellsize).floor();
        let fj = ((y - self.y0) / self.cellsize).floor();
        if !(fi >= 0.0 && fj >= 0.0 && fi < nx as f64 && fj < ny as f64) {
            return None;
        }
        self.containing(LeafId::new(self.max_level, fi as u32, fj as u32))
    }

    pub fn leaf_size(&self, k: usize) -> f64 {
        self.cellsize * self.leaves[k].span(self.max_level) as f64
    }

    pub fn leaf_centre(&self, k: usize) -> (f64, f64) {
        let l = self.leaves[k];
        let s = self.leaf_size(k);
        (self.x0 + (l.i as f64 + 0.5) * s, self.y0 + (l.j as f64 + 0.5) * s)
    }

    pub fn neighbours_of(&self, leaf: LeafId, face: Face) -> Result<Neighbours> {
        let k = self.find(leaf).ok_or_else(|| Error::Structure(format!("{leaf:?} is not a leaf of this grid")))?;
        Ok(self.neighbours(k, face))
    }

    pub fn neighbours(&self, k: usize, face: Face) -> Neighbours {
        let leaf = self.leaves[k];
        let (di, dj) = face.step();
        let (ni, nj) = (leaf.i as i64 + di, leaf.j as i64 + dj);
        let (nx, ny) = ((self.m << leaf.level) as i64, (self.n << leaf.level) as i64);
        if ni < 0 || nj < 0 || ni >= nx || nj >= ny {
            return Neighbours::Boundary;
        }
        let nb = LeafId::new(leaf.level, ni as u32, nj as u32);
        if let Some(c) = self.containing(nb) {
            return Neighbours::Leaves(vec![c]);
        }
        let mut out = Vec::new();
        self.collect_touching(nb, face.opposite(), &mut out);
        Neighbours::Leaves(out)
    }

    /// Leaves inside internal node `node` that touch its `side`.
    fn collect_touching(&self, node: LeafId, side: Face, out: &mut Vec<usize>) {
        if node.level >= self.max_level {
            return;
        }
        let c = node.children();
        let pair = match side {
            Face::West => [c[0], c[2]],
            Face::East => [c[1], c[3]],
            Face::South => [c[0], c[1]],
            Face::North => [c[2], c[3]],
        };
        for ch in pair {
            match self.find(ch) {
                Some(k) => out.push(k),
                None => self.collect_touching(ch, side, out),
            }
        }
    }

    /// Largest level difference between edge-adjacent leaves.
    pub fn max_level_jump(&self) -> u32 {
        let mut worst = 0;
        for (k, leaf) in self.leaves.iter().enumerate() {
            for face in [Face::East, Face::North] {
                if let Neighbours::Leaves(nbs) = self.neighbours(k, face) {
                    for nb in nbs {
                        worst = worst.max(leaf.level.abs_diff(self.leaves[nb].level));
                    }
                }
            }
        }
        worst
    }

    pub fn is_graded(&self) -> bool {
        self.max_level_jump() <= 1
    }

    pub fn flag_tree(&self) -> FlagTree {
        FlagTree::from_leaves(self.max_level, self.m, self.n, &self.leaves)
    }

    /// Leaf counts per level `0..=L`.
    pub fn level_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.max_level as usize + 1];
        for l in &self.leaves {
            c[l.level as usize] += 1;
        }
        c
    }

    /// Leaf count and percentage per level.
    pub fn stats_report(&self) -> String {
        let counts = self.level_counts();
        let total = self.len();
        let uniform = (self.m as usize * self.n as usize) << (2 * self.max_level);
        let mut s = String::new();
        writeln!(s, "leaves: {total} (uniform level-{}: {uniform}, {:.1}%)", self.max_level, 100.0 * total as f64 / uniform as f64).unwrap();
        for (level, c) in counts.iter().enumerate() {
            let r = self.cellsize * (1u64 << (self.max_level as usize - level)) as f64;
            writeln!(s, "level {level} ({r} m): {c} leaves, {:.1}%", 100.0 * *c as f64 / total as f64).unwrap();
        }
        s
    }
}
