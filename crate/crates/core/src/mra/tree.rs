use rayon::prelude::*;

use super::filters::{normalize_detail, DetailTriple, FilterBank};
use crate::error::{Error, Result};
use crate::field::PlanarCoeffs;
use crate::quadgrid::{FlagTree, LeafId};
use crate::raster_io::Wavelet;
use crate::real::Real;

/// Coefficients of one field at every level plus the details of every
/// internal node, from recursive encoding of a full level-L field.
#[derive(Clone, Debug)]
pub struct DetailTree<T> {
    pub max_level: u32,
    pub m: u32,
    pub n: u32,
    pub kind: Wavelet,
    coeffs: Vec<Vec<PlanarCoeffs<T>>>,
    details: Vec<Vec<DetailTriple<T>>>,
}

#[inline]
fn node_index(m: u32, node: LeafId) -> usize {
    (node.j * (m << node.level) + node.i) as usize
}

impl<T: Real> DetailTree<T> {
    #[inline]
    pub fn dims(&self, level: u32) -> (u32, u32) {
        (self.m << level, self.n << level)
    }

    #[inline]
    pub fn coeff(&self, node: LeafId) -> PlanarCoeffs<T> {
        self.coeffs[node.level as usize][node_index(self.m, node)]
    }

    #[inline]
    pub fn detail(&self, node: LeafId) -> DetailTriple<T> {
        self.details[node.level as usize][node_index(self.m, node)]
    }

    pub fn level_coeffs(&self, level: u32) -> &[PlanarCoeffs<T>] {
        &self.coeffs[level as usize]
    }

    pub fn level_details(&self, level: u32) -> &[DetailTriple<T>] {
        &self.details[level as usize]
    }

    /// Largest absolute average coefficient on the level-L grid.
    pub fn fine_norm(&self) -> T {
        self.coeffs[self.max_level as usize].iter().fold(T::zero(), |m, c| m.max(c.c0.abs()))
    }

    /// Coefficients at every level obtained by decoding from level 0 with
    /// the stored details. Equal to the encoded pyramid up to rounding; leaf
    /// topography is always taken from here so that every consumer agrees bit for bit.
    pub fn decoded_pyramid(&self, fb: &FilterBank<T>) -> Vec<Vec<PlanarCoeffs<T>>> {
        let mut out = vec![self.coeffs[0].clone()];
        for level in 0..self.max_level {
            let (nx, ny) = self.dims(level);
            let (fnx, fny) = self.dims(level + 1);
            let mut fine = vec![PlanarCoeffs::zero(); (fnx * fny) as usize];
            let parents = &out[level as usize];
            let decoded: Vec<[PlanarCoeffs<T>; 4]> = (0..(nx * ny) as usize)
                .into_par_iter()
                .map(|k| fb.decode(&parents[k], &self.details[level as usize][k]))
                .collect();
            for (k, ch) in decoded.into_iter().enumerate() {
                let node = LeafId::new(level, k as u32 % nx, k as u32 / nx);
                for (c, id) in ch.into_iter().zip(node.children()) {
                    fine[node_index(self.m, id)] = c;
                }
            }
            out.push(fine);
        }
        out
    }
}

/// Recursively encodes a full level-L field (row-major, south row first).
pub fn build_detail_tree<T: Real>(
    fine: &[PlanarCoeffs<T>],
    m: u32,
    n: u32,
    max_level: u32,
    fb: &FilterBank<T>,
) -> Result<DetailTree<T>> {
    let expected = ((m << max_level) as usize) * ((n << max_level) as usize);
    if m == 0 || n == 0 || fine.len() != expected {
        return Err(Error::Structure(format!(
            "field of {} values is not a full {m}x{n} level-{max_level} domain ({expected} values)",
            fine.len()
        )));
    }
    let mut coeffs = vec![Vec::new(); max_level as usize + 1];
    let mut details = vec![Vec::new(); max_level as usize];
    coeffs[max_level as usize] = fine.to_vec();
    for level in (0..max_level).rev() {
        let (nx, ny) = (m << level, n << level);
        let src = &coeffs[level as usize + 1];
        let (c, d): (Vec<_>, Vec<_>) = (0..(nx * ny) as usize)
            .into_par_iter()
            .map(|k| {
                let node = LeafId::new(level, k as u32 % nx, k as u32 / nx);
                let ch = node.children().map(|id| src[node_index(m, id)]);
                fb.encode(&ch)
            })
            .unzip();
        coeffs[level as usize] = c;
        details[level as usize] = d;
    }
    Ok(DetailTree { max_level, m, n, kind: fb.kind, coeffs, details })
}

/// Largest normalised detail over `trees` at every internal node, levels `0..L`.
pub fn significance<T: Real>(trees: &[(&DetailTree<T>, T)]) -> Vec<Vec<T>> {
    let first = trees[0].0;
    (0..first.max_level)
        .map(|level| {
            let len = first.details[level as usize].len();
            (0..len)
                .map(|k| {
                    trees
                        .iter()
                        .map(|(t, norm)| normalize_detail(&t.details[level as usize][k], *norm))
                        .fold(T::zero(), |a, b| a.max(b))
                })
                .collect()
        })
        .collect()
}

/// Flags nodes whose normalised detail in any field reaches `eps`, each
/// field normalised by its own level-L maximum, with ancestor closure.
pub fn flag_significant<T: Real>(trees: &[&DetailTree<T>], eps: T) -> FlagTree {
    let with_norms: Vec<(&DetailTree<T>, T)> = trees.iter().map(|t| (*t, t.fine_norm())).collect();
    flag_significant_with_norms(&with_norms, eps)
}

pub fn flag_significant_with_norms<T: Real>(trees: &[(&DetailTree<T>, T)], eps: T) -> FlagTree {
    let t0 = trees[0].0;
    let mut flags = FlagTree::new(t0.max_level, t0.m, t0.n);
    for (level, sig) in significance(trees).into_iter().enumerate() {
        for (f, s) in flags.level_flags_mut(level as u32).iter_mut().zip(sig) {
            *f = s >= eps;
        }
    }
    flags.close_ancestors();
    flags
}
