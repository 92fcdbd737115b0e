//! Dynamically adaptive MWDG2 / HWFV1: encode the flow up the tree every
//! few steps, keep significant nodes plus a one-ring buffer, grade, decode.

use std::sync::Arc;

use super::mesh::Mesh;
use super::physics::Consts;
use super::sim::{Encoder, Scheme, Sim};
use crate::error::{Error, Result};
use crate::field::{FlowCoeffs, PlanarCoeffs, ProjectedDem};
use crate::mra::{normalize_detail, topography_flags, DetailTriple, FilterBank, NonUniformGrid};
use crate::quadgrid::{FlagTree, LeafId, QuadGrid};
use crate::raster_io::{Boundaries, Wavelet};
use crate::real::Real;

#[derive(Clone, Debug)]
pub struct AdaptiveSim<T> {
    pub sim: Sim<T>,
    pub kind: Wavelet,
    pub eps: T,
    pub boundaries: Boundaries,
    /// Adapt after every `adapt_every` steps.
    pub adapt_every: u32,
    /// `(t, leaf count)` after every adapt.
    pub element_log: Vec<(f64, usize)>,
    fb: FilterBank<T>,
    /// Ungraded topography significance; never thresholded away.
    topo_flags: FlagTree,
    pyramid: Arc<Vec<Vec<PlanarCoeffs<T>>>>,
    manning: Vec<Vec<T>>,
}

#[inline]
fn idx(m: u32, node: LeafId) -> usize {
    (node.j * (m << node.level) + node.i) as usize
}

/// Encoded state at a node that is a leaf or has only leaves below it.
#[derive(Clone, Copy, Debug)]
struct Node<T> {
    u: FlowCoeffs<T>,
    eta: PlanarCoeffs<T>,
}

impl<T: Real> AdaptiveSim<T> {
    /// Starts from a level-L state `fine` (row-major, south first) and adapts once.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dem: &ProjectedDem<T>,
        kind: Wavelet,
        eps: T,
        consts: Consts<T>,
        courant: T,
        boundaries: Boundaries,
        fine: Vec<FlowCoeffs<T>>,
        manning_fine: Vec<T>,
    ) -> Result<Self> {
        let fb = FilterBank::new(kind);
        let (tree, topo_flags) = topography_flags(dem, eps, &fb, false)?;
        let pyramid = Arc::new(tree.decoded_pyramid(&fb));
        let (l, m, n) = (dem.max_level, dem.m as u32, dem.n as u32);
        if fine.len() != dem.coeffs.len() || manning_fine.len() != dem.coeffs.len() {
            return Err(Error::Structure(format!("initial state has {} elements, DEM has {}", fine.len(), dem.coeffs.len())));
        }
        let mut manning = vec![manning_fine];
        for level in (0..l).rev() {
            let child = &manning[0];
            let (cx, _) = (m << (level + 1), n << (level + 1));
            let (px, py) = (m << level, n << level);
            let mut p = Vec::with_capacity((px * py) as usize);
            for j in 0..py {
                for i in 0..px {
                    let at = |a: u32, b: u32| child[(b * cx + a) as usize];
                    p.push((at(2 * i, 2 * j) + at(2 * i + 1, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j + 1)) * T::lit(0.25));
                }
            }
            manning.insert(0, p);
        }
        let grid = QuadGrid::uniform(l, m, n, dem.cellsize, dem.x0, dem.y0);
        let z = Self::leaf_topography(&grid, &pyramid, kind);
        let mesh = Mesh::new(&NonUniformGrid { grid, z }, &boundaries, true)?;
        let scheme = match kind {
            Wavelet::Mw => Scheme::Dg2,
            Wavelet::Hw => Scheme::Fv1,
        };
        let mut sim = Sim::new(mesh, scheme, consts, courant);
        let nx = m << l;
        let order: Vec<usize> = sim.mesh.grid.leaves().iter().map(|lf| (lf.j * nx + lf.i) as usize).collect();
        sim.set_flow(order.iter().map(|&k| fine[k]).collect());
        sim.manning = order.iter().map(|&k| manning[l as usize][k]).collect();
        sim.encoder = Some(Encoder { fb: fb.clone(), z_pyramid: pyramid.clone() });
        let mut a = AdaptiveSim {
            sim,
            kind,
            eps,
            boundaries,
            adapt_every: 1,
            element_log: Vec::new(),
            fb,
            topo_flags,
            pyramid,
            manning,
        };
        a.adapt()?;
        Ok(a)
    }

    fn leaf_topography(grid: &QuadGrid, pyramid: &[Vec<PlanarCoeffs<T>>], kind: Wavelet) -> Vec<PlanarCoeffs<T>> {
        grid.leaves()
            .iter()
            .map(|l| {
                let z = pyramid[l.level as usize][idx(grid.m, *l)];
                match kind {
                    Wavelet::Mw => z,
                    Wavelet::Hw => z.flattened(),
                }
            })
            .collect()
    }

    fn z_at(&self, node: LeafId) -> PlanarCoeffs<T> {
        let z = self.pyramid[node.level as usize][idx(self.sim.mesh.grid.m, node)];
        match self.kind {
            Wavelet::Mw => z,
            Wavelet::Hw => z.flattened(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.sim.mesh.len()
    }

    /// One solver step of length `dt`, then an adapt when the cadence says so.
    pub fn step(&mut self, dt: T) -> Result<()> {
        self.sim.step(dt)?;
        if self.adapt_every <= 1 || self.sim.steps % self.adapt_every as u64 == 0 {
            self.adapt()?;
        }
        Ok(())
    }

    /// Encodes the current leaves to level 0, thresholds, buffers, grades and
    /// transfers the flow onto the new leaf set.
    pub fn adapt(&mut self) -> Result<()> {
        let grid = &self.sim.mesh.grid;
        let (l, m, n) = (grid.max_level, grid.m, grid.n);
        let h_dry = self.sim.consts.h_dry;
        // encoded pyramid over nodes at or above the current leaves
        let mut nodes: Vec<Vec<Option<Node<T>>>> = (0..=l).map(|lv| vec![None; ((m << lv) * (n << lv)) as usize]).collect();
        for (k, leaf) in grid.leaves().iter().enumerate() {
            let u = self.sim.u[k];
            nodes[leaf.level as usize][idx(m, *leaf)] = Some(Node { u, eta: u.h + self.sim.zs[k] });
        }
        let (mut n_eta, mut n_qx, mut n_qy) = (T::zero(), T::zero(), T::zero());
        for u in &self.sim.u {
            n_qx = n_qx.max(u.qx.c0.abs());
            n_qy = n_qy.max(u.qy.c0.abs());
        }
        for (u, z) in self.sim.u.iter().zip(&self.sim.zs) {
            if u.h.c0 > h_dry {
                n_eta = n_eta.max((u.h.c0 + z.c0).abs());
            }
        }
        let mut flow = FlagTree::new(l, m, n);
        for lv in (0..l).rev() {
            let (px, py) = (m << lv, n << lv);
            for j in 0..py {
                for i in 0..px {
                    let node = LeafId::new(lv, i, j);
                    let p = idx(m, node);
                    if nodes[lv as usize][p].is_some() {
                        continue;
                    }
                    let ch = node.children();
                    let cs: Option<Vec<Node<T>>> = ch.iter().map(|c| nodes[lv as usize + 1][idx(m, *c)]).collect();
                    let Some(cs) = cs else { continue };
                    let enc = |f: &dyn Fn(&Node<T>) -> PlanarCoeffs<T>| self.fb.encode(&[f(&cs[0]), f(&cs[1]), f(&cs[2]), f(&cs[3])]);
                    let (h, _) = enc(&|c| c.u.h);
                    let (qx, dqx) = enc(&|c| c.u.qx);
                    let (qy, dqy) = enc(&|c| c.u.qy);
                    let (eta, deta) = enc(&|c| c.eta);
                    let mut s = normalize_detail(&dqx, n_qx).max(normalize_detail(&dqy, n_qy));
                    if h.c0 > h_dry {
                        s = s.max(normalize_detail(&deta, n_eta));
                    }
                    if s >= self.eps {
                        flow.set(node);
                    }
                    nodes[lv as usize][p] = Some(Node { u: FlowCoeffs { h, qx, qy }, eta });
                }
            }
        }
        flow.close_ancestors();
        let mut flags = flow.clone();
        flags.add_ring(&flow);
        flags.union_with(&self.topo_flags);
        flags.close_ancestors();
        flags.grade();
        let leaves = flags.leaves();
        let t = self.sim.t;
        if leaves.len() == grid.len() && leaves.iter().all(|lf| grid.find(*lf).is_some()) {
            self.element_log.push((t, leaves.len()));
            return Ok(());
        }
        let new_u = self.transfer(&leaves, &nodes);
        let manning = leaves.iter().map(|lf| self.manning[lf.level as usize][idx(m, *lf)]).collect();
        let grid = QuadGrid::from_leaves(l, m, n, grid.cellsize, grid.x0, grid.y0, leaves)?;
        let z = Self::leaf_topography(&grid, &self.pyramid, self.kind);
        let mesh = Mesh::new(&NonUniformGrid { grid, z }, &self.boundaries, true)?;
        self.sim.replace_mesh(mesh, new_u, manning);
        self.element_log.push((t, self.sim.mesh.len()));
        Ok(())
    }

    /// Flow on the new leaves: encoded values where the node exists in the
    /// encoded pyramid, otherwise a zero-detail decode from the old leaf above it.
    fn transfer(&self, leaves: &[LeafId], nodes: &[Vec<Option<Node<T>>>]) -> Vec<FlowCoeffs<T>> {
        let grid = &self.sim.mesh.grid;
        let m = grid.m;
        let c = &self.sim.consts;
        let planar = self.sim.scheme.is_planar();
        let mut out = Vec::with_capacity(leaves.len());
        let mut i = 0;
        while i < leaves.len() {
            let leaf = leaves[i];
            if let Some(node) = nodes[leaf.level as usize][idx(m, leaf)] {
                out.push(node.u);
                i += 1;
                continue;
            }
            // refined: every new leaf under the same old leaf is handled together
            let old = grid.containing(leaf).expect("refined leaf lies under an old leaf");
            let old_id = grid.leaves()[old];
            let mut end = i;
            while end < leaves.len() && old_id.contains(&leaves[end]) {
                end += 1;
            }
            let group = &leaves[i..end];
            let src = nodes[old_id.level as usize][idx(m, old_id)].expect("old leaf is encoded");
            let via_eta: Vec<FlowCoeffs<T>> = group
                .iter()
                .map(|lf| {
                    let d = self.descend(old_id, src, *lf);
                    FlowCoeffs { h: d.eta - self.z_at(*lf), ..d.u }
                })
                .collect();
            let s3 = T::sqrt3();
            let ok = src.u.h.c0 > c.h_dry
                && via_eta.iter().all(|u| u.h.c0 - s3 * u.h.c1x.abs().max(u.h.c1y.abs()) >= T::zero());
            if ok {
                out.extend(via_eta);
            } else {
                out.extend(group.iter().map(|lf| self.descend_limited(old_id, src.u, *lf, planar)));
            }
            i = end;
        }
        out
    }

    fn descend(&self, from: LeafId, mut state: Node<T>, to: LeafId) -> Node<T> {
        let zero = DetailTriple::zero();
        for lv in from.level + 1..=to.level {
            let slot = to.ancestor(lv).child_slot();
            state = Node {
                u: FlowCoeffs {
                    h: self.fb.decode(&state.u.h, &zero)[slot],
                    qx: self.fb.decode(&state.u.qx, &zero)[slot],
                    qy: self.fb.decode(&state.u.qy, &zero)[slot],
                },
                eta: self.fb.decode(&state.eta, &zero)[slot],
            };
        }
        state
    }

    fn descend_limited(&self, from: LeafId, mut u: FlowCoeffs<T>, to: LeafId, planar: bool) -> FlowCoeffs<T> {
        let zero = DetailTriple::zero();
        let s3 = T::sqrt3();
        for lv in from.level + 1..=to.level {
            let slot = to.ancestor(lv).child_slot();
            u = FlowCoeffs {
                h: self.fb.decode(&u.h, &zero)[slot],
                qx: self.fb.decode(&u.qx, &zero)[slot],
                qy: self.fb.decode(&u.qy, &zero)[slot],
            };
            if planar {
                let lo = u.h.c0 - s3 * u.h.c1x.abs().max(u.h.c1y.abs());
                if lo < T::zero() && u.h.c0 > T::zero() {
                    let theta = u.h.c0 / (u.h.c0 - lo);
                    u.h.c1x *= theta;
                    u.h.c1y *= theta;
                }
            }
        }
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::project_raster;
    use crate::raster_io::{DemSampling, Raster};

    fn dem(l: u32, f: impl Fn(f64, f64) -> f64) -> ProjectedDem<f64> {
        let n = 1usize << l;
        let mut r = Raster::filled(n + 1, n + 1, 1.0, 0.0);
        for j in 0..=n {
            for i in 0..=n {
                r.set_sw(i, j, f(i as f64, j as f64));
            }
        }
        project_raster(&r, DemSampling::Vertex, l).unwrap()
    }

    fn bumps(x: f64, y: f64) -> f64 {
        0.4 * (-((x - 5.0).powi(2) + (y - 9.0).powi(2)) / 4.0).exp() + 0.02 * x
    }

    fn start(d: &ProjectedDem<f64>, kind: Wavelet, eps: f64, h: impl Fn(usize, usize, &PlanarCoeffs<f64>) -> PlanarCoeffs<f64>) -> AdaptiveSim<f64> {
        let fine = (0..d.ny)
            .flat_map(|j| (0..d.nx).map(move |i| (i, j)))
            .map(|(i, j)| FlowCoeffs::still(h(i, j, &d.coeffs[d.index(i, j)])))
            .collect();
        AdaptiveSim::new(d, kind, eps, Consts::default(), 0.3, Boundaries::default(), fine, vec![0.0; d.coeffs.len()]).unwrap()
    }

    fn run(a: &mut AdaptiveSim<f64>, steps: usize) {
        for _ in 0..steps {
            let dt = a.sim.compute_dt().unwrap();
            a.step(dt).unwrap();
            assert!(a.sim.mesh.grid.is_graded());
        }
    }

    #[test]
    fn flat_quiescent_collapses() {
        let d = dem(4, |_, _| 1.0);
        let a = start(&d, Wavelet::Mw, 1e-3, |_, _, _| PlanarCoeffs::constant(0.5));
        assert_eq!(a.leaf_count(), 1);
    }

    #[test]
    fn lake_at_rest_is_stationary() {
        let d = dem(5, |x, y| 0.4 * (-((x - 8.0).powi(2) + (y - 20.0).powi(2)) / 6.0).exp());
        for kind in [Wavelet::Mw, Wavelet::Hw] {
            let mut a = start(&d, kind, 1e-3, |_, _, z| PlanarCoeffs::new(2.0 - z.c0, -z.c1x, -z.c1y));
            let n0 = a.leaf_count();
            assert!(n0 < 1024 && !a.sim.mesh.pairs.is_empty(), "{n0}");
            run(&mut a, 50);
            assert_eq!(a.leaf_count(), n0);
            for (u, z) in a.sim.u.iter().zip(&a.sim.zs) {
                assert!((u.h.c0 + z.c0 - 2.0).abs() < 1e-12, "{kind:?} {:e} {:e} n={}", u.h.c0 + z.c0 - 2.0, u.qx.c0, n0);
                assert!(u.qx.c0.abs() < 1e-12 && u.qy.c0.abs() < 1e-12, "{kind:?}");
            }
        }
    }

    #[test]
    fn dam_break_conserves_mass_and_stays_graded() {
        let d = dem(4, bumps);
        for kind in [Wavelet::Mw, Wavelet::Hw] {
            let mut a = start(&d, kind, 1e-3, |i, _, z| PlanarCoeffs::constant(if i < 5 { 1.5 - z.c0 } else { 0.2 }));
            let v0 = a.sim.volume();
            run(&mut a, 80);
            let rel = ((a.sim.volume() - v0) / v0).abs();
            assert!(rel < 1e-12, "{kind:?} {rel:e}");
            assert!(a.element_log.iter().all(|&(_, n)| n > 0 && n <= 256));
        }
    }

    #[test]
    fn zero_epsilon_keeps_full_grid() {
        let d = dem(3, bumps);
        let a = start(&d, Wavelet::Mw, 0.0, |i, _, _| PlanarCoeffs::constant(if i < 3 { 1.0 } else { 0.5 }));
        assert_eq!(a.leaf_count(), 64);
    }

    #[test]
    fn topography_is_exact_on_every_leaf() {
        let d = dem(4, bumps);
        let mut a = start(&d, Wavelet::Mw, 1e-3, |i, _, _| PlanarCoeffs::constant(if i < 5 { 1.0 } else { 0.5 }));
        run(&mut a, 20);
        let fb = FilterBank::new(Wavelet::Mw);
        let tree = crate::mra::build_detail_tree(&d.coeffs, 1, 1, 4, &fb).unwrap();
        let pyr = tree.decoded_pyramid(&fb);
        for (k, lf) in a.sim.mesh.grid.leaves().iter().enumerate() {
            assert_eq!(a.sim.zs[k], pyr[lf.level as usize][idx(1, *lf)]);
        }
    }
}
