//! DG2 / FV1 / ACC updates on a mesh of leaves. A uniform grid is the mesh
//! whose leaves all sit at level L.

use std::sync::Arc;

use rayon::prelude::*;

use super::mesh::{FacePair, Mesh, MeshFace};
use super::physics::{
    acc_face_discharge, corrected_fluxes, friction_divisor, hll, physical_flux, pressure_correction, revise_face_states, velocity,
    Consts, FaceState,
};
use crate::error::{Error, Result};
use crate::field::{Face as Dir, FacePoint, FlowCoeffs, PlanarCoeffs};
use crate::mra::FilterBank;
use crate::quadgrid::{Axis, LeafId};
use crate::raster_io::{BoundaryKind, Hydrograph, SolverKind};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Dg2,
    Fv1,
    Acc,
}

impl Scheme {
    pub fn of(kind: SolverKind) -> Scheme {
        match kind {
            SolverKind::Dg2 | SolverKind::Mwdg2 => Scheme::Dg2,
            SolverKind::Fv1 | SolverKind::Hwfv1 => Scheme::Fv1,
            SolverKind::Acc => Scheme::Acc,
        }
    }

    pub fn is_planar(self) -> bool {
        self == Scheme::Dg2
    }
}

/// Inclusive rectangle of level-L cells, `i` west→east, `j` south→north.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellRegion {
    pub i0: usize,
    pub j0: usize,
    pub i1: usize,
    pub j1: usize,
}

#[derive(Clone, Debug)]
pub struct Inflow<T> {
    pub hydrograph: Hydrograph,
    pub region: CellRegion,
    /// `(leaf, share of the inflow volume)`.
    cells: Vec<(u32, T)>,
}

/// Coarse-scale encoding of fine siblings at non-homogeneous faces.
#[derive(Clone, Debug)]
pub struct Encoder<T> {
    pub fb: FilterBank<T>,
    /// Exactly decoded topography at every level.
    pub z_pyramid: Arc<Vec<Vec<PlanarCoeffs<T>>>>,
}

#[derive(Clone, Copy, Debug)]
struct PairFlux<T> {
    coarse: [T; 3],
    fhat: [T; 3],
    h_star_fine: T,
}

/// Simulation state on one mesh.
#[derive(Clone, Debug)]
pub struct Sim<T> {
    pub mesh: Mesh<T>,
    pub scheme: Scheme,
    pub u: Vec<FlowCoeffs<T>>,
    /// Topography as the scheme sees it (averages only for FV1/ACC).
    pub zs: Vec<PlanarCoeffs<T>>,
    pub manning: Vec<T>,
    pub consts: Consts<T>,
    pub courant: T,
    pub t: f64,
    pub steps: u64,
    /// ACC face discharges from the previous step, per mesh face.
    pub acc_q: Vec<T>,
    pub inflows: Vec<Inflow<T>>,
    pub encoder: Option<Encoder<T>>,
    /// Total volume injected by inflows so far.
    pub injected: f64,
    /// Wet-cell mask of the level-L grid used to place inflows (`None`: all).
    pub active: Option<Arc<Vec<bool>>>,
}

const PAR_MIN: usize = 256;

/// Elements whose shallowest face-centre depth is below this (m) are treated
/// as wet/dry fronts: no discharge slopes, face discharges from the average
/// velocity. Elements whose average depth is below it hold no discharge.
pub const WET_DRY_DEPTH: f64 = 1e-3;

#[inline]
fn min_face_depth<T: Real>(h: &PlanarCoeffs<T>) -> T {
    h.c0 - T::sqrt3() * h.c1x.abs().max(h.c1y.abs())
}

#[inline]
fn is_front<T: Real>(u: &FlowCoeffs<T>, c: &Consts<T>) -> bool {
    u.h.c0 > c.h_dry && min_face_depth(&u.h) < T::lit(WET_DRY_DEPTH)
}

#[inline]
fn rotate<T: Real>(axis: Axis, h: T, qx: T, qy: T) -> (T, T, T) {
    match axis {
        Axis::X => (h, qx, qy),
        Axis::Y => (h, qy, qx),
    }
}

#[inline]
fn unrotate<T: Real>(axis: Axis, f: [T; 3]) -> [T; 3] {
    match axis {
        Axis::X => f,
        Axis::Y => [f[0], f[2], f[1]],
    }
}

#[inline]
fn dirs(axis: Axis) -> (Dir, Dir) {
    match axis {
        Axis::X => (Dir::East, Dir::West),
        Axis::Y => (Dir::North, Dir::South),
    }
}

impl<T: Real> Sim<T> {
    pub fn new(mesh: Mesh<T>, scheme: Scheme, consts: Consts<T>, courant: T) -> Self {
        let n = mesh.len();
        let zs = if scheme.is_planar() { mesh.z.clone() } else { mesh.z.iter().map(PlanarCoeffs::flattened).collect() };
        let nf = mesh.faces.len();
        Sim {
            mesh,
            scheme,
            u: vec![FlowCoeffs::zero(); n],
            zs,
            manning: vec![T::zero(); n],
            consts,
            courant,
            t: 0.0,
            steps: 0,
            acc_q: vec![T::zero(); nf],
            inflows: Vec::new(),
            encoder: None,
            injected: 0.0,
            active: None,
        }
    }

    /// Sets depth coefficients with zero discharge; slopes are dropped for FV1/ACC.
    pub fn set_depth(&mut self, h: Vec<PlanarCoeffs<T>>) {
        self.u = h.into_iter().map(FlowCoeffs::still).collect();
        self.enforce_basis();
    }

    /// Sets full flow coefficients (slopes dropped for FV1/ACC).
    pub fn set_flow(&mut self, u: Vec<FlowCoeffs<T>>) {
        self.u = u;
        self.enforce_basis();
    }

    fn enforce_basis(&mut self) {
        if !self.scheme.is_planar() {
            self.u.iter_mut().for_each(|c| *c = c.flattened());
        }
    }

    /// Replaces the mesh (same leaf order as `u`), keeping the time and counters.
    pub fn replace_mesh(&mut self, mesh: Mesh<T>, u: Vec<FlowCoeffs<T>>, manning: Vec<T>) {
        self.zs = if self.scheme.is_planar() { mesh.z.clone() } else { mesh.z.iter().map(PlanarCoeffs::flattened).collect() };
        self.acc_q = vec![T::zero(); mesh.faces.len()];
        self.mesh = mesh;
        self.u = u;
        self.manning = manning;
        self.enforce_basis();
        let inflows = std::mem::take(&mut self.inflows);
        for f in inflows {
            self.add_inflow(f.hydrograph, f.region).expect("region was valid on the previous mesh");
        }
    }

    /// Registers an inflow over a rectangle of level-L cells.
    pub fn add_inflow(&mut self, hydrograph: Hydrograph, region: CellRegion) -> Result<()> {
        let g = &self.mesh.grid;
        let (fnx, fny) = g.fine_dims();
        if region.i0 > region.i1 || region.j0 > region.j1 || region.i1 >= fnx as usize || region.j1 >= fny as usize {
            return Err(Error::config(format!("inflow region {region:?} lies outside the {fnx}x{fny} grid")));
        }
        let mut cells = Vec::new();
        let mut total = 0usize;
        for (k, leaf) in g.leaves().iter().enumerate() {
            let s = leaf.span(g.max_level) as usize;
            let (a0, b0) = (leaf.i as usize * s, leaf.j as usize * s);
            let (ia, ib) = (a0.max(region.i0), (a0 + s - 1).min(region.i1));
            let (ja, jb) = (b0.max(region.j0), (b0 + s - 1).min(region.j1));
            if ia > ib || ja > jb {
                continue;
            }
            let mut count = 0usize;
            for j in ja..=jb {
                for i in ia..=ib {
                    if self.active.as_ref().is_none_or(|m| m[j * fnx as usize + i]) {
                        count += 1;
                    }
                }
            }
            if count > 0 {
                cells.push((k as u32, count));
                total += count;
            }
        }
        if total == 0 {
            return Err(Error::config(format!("inflow region {region:?} covers no active cells")));
        }
        let cells = cells.into_iter().map(|(k, c)| (k, T::lit(c as f64 / total as f64))).collect();
        self.inflows.push(Inflow { hydrograph, region, cells });
        Ok(())
    }

    /// Water volume `Σ h̄ · area`.
    pub fn volume(&self) -> f64 {
        self.u.iter().zip(&self.mesh.area).map(|(c, a)| (c.h.c0 * *a).as_f64()).sum()
    }

    pub fn max_depth(&self) -> T {
        self.u.iter().fold(T::zero(), |m, c| m.max(c.h.c0))
    }

    /// CFL step, `None` when no element is wet.
    pub fn compute_dt(&self) -> Option<T> {
        let c = &self.consts;
        match self.scheme {
            Scheme::Dg2 | Scheme::Fv1 => {
                let inf = T::infinity();
                let m = (0..self.mesh.len())
                    .into_par_iter()
                    .with_min_len(PAR_MIN)
                    .map(|k| {
                        let u = &self.u[k];
                        let h = u.h.c0;
                        if h <= c.h_dry {
                            return inf;
                        }
                        let a = (c.g * h).sqrt();
                        let (vx, vy) = (u.qx.c0 / h, u.qy.c0 / h);
                        self.mesh.size[k] / (vx.abs() + a).max(vy.abs() + a)
                    })
                    .reduce(|| inf, |a, b| a.min(b));
                (m < inf).then(|| self.courant * m)
            }
            Scheme::Acc => {
                let hmax = self.max_depth();
                if hmax <= c.h_dry {
                    return None;
                }
                let rmin = (0..self.mesh.len())
                    .filter(|&k| self.u[k].h.c0 > c.h_dry)
                    .map(|k| self.mesh.size[k])
                    .fold(T::infinity(), |a, b| a.min(b));
                Some(self.courant * rmin / (c.g * hmax).sqrt())
            }
        }
    }

    /// Advances by `dt`: friction, the scheme's update, then inflow sources.
    pub fn step(&mut self, dt: T) -> Result<()> {
        match self.scheme {
            Scheme::Dg2 => self.step_dg2(dt),
            Scheme::Fv1 => self.step_fv1(dt),
            Scheme::Acc => self.step_acc(dt),
        }
        self.apply_sources(dt);
        self.t += dt.as_f64();
        self.steps += 1;
        self.check_finite()
    }

    fn check_finite(&self) -> Result<()> {
        match self.u.iter().position(|c| !c.is_finite()) {
            Some(k) => Err(Error::Numerical { t: self.t, element: format!("{:?}", self.mesh.grid.leaves()[k]) }),
            None => Ok(()),
        }
    }

    fn apply_sources(&mut self, dt: T) {
        let t0 = self.t;
        let t1 = t0 + dt.as_f64();
        for f in &self.inflows {
            let v = f.hydrograph.volume_between(t0, t1);
            if v == 0.0 {
                continue;
            }
            self.injected += v;
            let v = T::lit(v);
            for &(k, share) in &f.cells {
                let k = k as usize;
                self.u[k].h.c0 += v * share / self.mesh.area[k];
            }
        }
    }

    fn apply_friction(&mut self, dt: T) {
        let c = self.consts;
        let manning = &self.manning;
        self.u.par_iter_mut().with_min_len(PAR_MIN).enumerate().for_each(|(k, u)| {
            let d = friction_divisor(u.h.c0, u.qx.c0, u.qy.c0, manning[k], dt, &c);
            if d != T::one() {
                u.qx.c0 /= d;
                u.qy.c0 /= d;
            }
        });
    }

    // ---- DG2 / FV1 ----

    fn side_state(&self, u: &[FlowCoeffs<T>], k: usize, dir: Dir, offset: T, axis: Axis) -> (FaceState<T>, T) {
        let c = &u[k];
        let p = FacePoint { face: dir, offset };
        let hf = c.h.at_face_point(p);
        let (qx, qy) = if self.scheme.is_planar() && is_front(c, &self.consts) {
            let r = hf.max(T::zero()) / c.h.c0;
            (c.qx.c0 * r, c.qy.c0 * r)
        } else {
            (c.qx.at_face_point(p), c.qy.at_face_point(p))
        };
        let (h, qn, qt) = rotate(axis, hf, qx, qy);
        let z = self.zs[k].at_face_point(p);
        (FaceState { h, qn, qt, z }, c.h.face_limit(dir))
    }

    /// Flow coefficients of a quadtree node, encoding leaves below it when it is not a leaf.
    fn node_flow(&self, u: &[FlowCoeffs<T>], fb: &FilterBank<T>, node: LeafId) -> FlowCoeffs<T> {
        if let Some(k) = self.mesh.grid.find(node) {
            return u[k];
        }
        let ch = node.children().map(|c| self.node_flow(u, fb, c));
        FlowCoeffs {
            h: fb.restrict(&ch.map(|c| c.h)),
            qx: fb.restrict(&ch.map(|c| c.qx)),
            qy: fb.restrict(&ch.map(|c| c.qy)),
        }
    }

    fn pair_flux(&self, u: &[FlowCoeffs<T>], p: &FacePair) -> PairFlux<T> {
        let enc = self.encoder.as_ref().expect("pairs require an encoder");
        let axis = self.mesh.faces[p.faces[0] as usize].axis;
        let (dl, du) = dirs(axis);
        let (cdir, ndir) = if p.coarse_is_lower { (dl, du) } else { (du, dl) };
        let c = &self.consts;
        let (sc, href_c) = self.side_state(u, p.coarse as usize, cdir, T::zero(), axis);
        let node = self.node_flow(u, &enc.fb, p.node);
        let m = self.mesh.grid.m;
        let zp = enc.z_pyramid[p.node.level as usize][(p.node.j * (m << p.node.level) + p.node.i) as usize];
        let zp = if self.scheme.is_planar() { zp } else { zp.flattened() };
        let node = if self.scheme.is_planar() { node } else { node.flattened() };
        let (h, qn, qt) = rotate(axis, node.h.face_limit(ndir), node.qx.face_limit(ndir), node.qy.face_limit(ndir));
        let sn = FaceState { h, qn, qt, z: zp.face_limit(ndir) };
        let (l, r) = if p.coarse_is_lower { (sc, sn) } else { (sn, sc) };
        let rev = revise_face_states(&l, &r, c);
        let fhat = hll(rev.left, rev.right, c);
        let (hs_c, hs_n) = if p.coarse_is_lower { (rev.left[0], rev.right[0]) } else { (rev.right[0], rev.left[0]) };
        let mut coarse = fhat;
        coarse[1] += pressure_correction(href_c, hs_c, c);
        PairFlux { coarse: unrotate(axis, coarse), fhat, h_star_fine: hs_n }
    }

    /// Outside state on a domain edge. Open edges copy the face depth and the
    /// cell's average discharge, so discharge slopes cannot feed back through the edge.
    fn boundary_ghost(u: &[FlowCoeffs<T>], k: usize, s: &FaceState<T>, kind: BoundaryKind, axis: Axis) -> FaceState<T> {
        match kind {
            BoundaryKind::Reflective => FaceState { qn: -s.qn, ..*s },
            BoundaryKind::Open => {
                let (_, qn, qt) = rotate(axis, s.h, u[k].qx.c0, u[k].qy.c0);
                FaceState { qn, qt, ..*s }
            }
        }
    }

    fn face_flux(&self, u: &[FlowCoeffs<T>], f: &MeshFace<T>, pairs: &[PairFlux<T>]) -> ([T; 3], [T; 3]) {
        let c = &self.consts;
        let (dl, du) = dirs(f.axis);
        if let Some(p) = f.pair {
            let pf = &pairs[p as usize];
            let pair = &self.mesh.pairs[p as usize];
            let (fine, fdir) = if pair.coarse_is_lower { (f.upper.unwrap(), du) } else { (f.lower.unwrap(), dl) };
            let href = u[fine as usize].h.face_limit(fdir);
            let mut ff = pf.fhat;
            ff[1] += pressure_correction(href, pf.h_star_fine, c);
            let ff = unrotate(f.axis, ff);
            return if pair.coarse_is_lower { (pf.coarse, ff) } else { (ff, pf.coarse) };
        }
        let (fl, fu) = match (f.lower, f.upper) {
            (Some(a), Some(b)) => {
                let (sa, ha) = self.side_state(u, a as usize, dl, f.lower_off, f.axis);
                let (sb, hb) = self.side_state(u, b as usize, du, f.upper_off, f.axis);
                corrected_fluxes(&sa, &sb, ha, hb, c)
            }
            (None, Some(b)) => {
                let (sb, hb) = self.side_state(u, b as usize, du, f.upper_off, f.axis);
                let g = Self::boundary_ghost(u, b as usize, &sb, f.boundary.unwrap(), f.axis);
                corrected_fluxes(&g, &sb, g.h, hb, c)
            }
            (Some(a), None) => {
                let (sa, ha) = self.side_state(u, a as usize, dl, f.lower_off, f.axis);
                let g = Self::boundary_ghost(u, a as usize, &sa, f.boundary.unwrap(), f.axis);
                corrected_fluxes(&sa, &g, ha, g.h, c)
            }
            (None, None) => unreachable!("face without cells"),
        };
        (unrotate(f.axis, fl), unrotate(f.axis, fu))
    }

    fn all_face_fluxes(&self, u: &[FlowCoeffs<T>]) -> Vec<([T; 3], [T; 3])> {
        let pairs: Vec<PairFlux<T>> = self.mesh.pairs.par_iter().map(|p| self.pair_flux(u, p)).collect();
        self.mesh.faces.par_iter().with_min_len(PAR_MIN).map(|f| self.face_flux(u, f, &pairs)).collect()
    }

    /// Side-averaged flux `Σ F·len / Δ` on side `d` of cell `k`.
    #[inline]
    fn side_flux(&self, fluxes: &[([T; 3], [T; 3])], k: usize, d: Dir) -> [T; 3] {
        let lower = matches!(d, Dir::East | Dir::North);
        let mut s = [T::zero(); 3];
        for &fi in self.mesh.faces_of(k, d) {
            let (fl, fu) = &fluxes[fi as usize];
            let f = if lower { fl } else { fu };
            let len = self.mesh.faces[fi as usize].len;
            for q in 0..3 {
                s[q] += f[q] * len;
            }
        }
        let inv = self.mesh.size[k];
        s.map(|v| v / inv)
    }

    fn operator(&self, u: &[FlowCoeffs<T>], fluxes: &[([T; 3], [T; 3])], k: usize) -> FlowCoeffs<T> {
        let c = &self.consts;
        let dx = self.mesh.size[k];
        let e = self.side_flux(fluxes, k, Dir::East);
        let w = self.side_flux(fluxes, k, Dir::West);
        let n = self.side_flux(fluxes, k, Dir::North);
        let s = self.side_flux(fluxes, k, Dir::South);
        let cell = &u[k];
        let z = &self.zs[k];
        let s3 = T::sqrt3();
        let two_s3 = T::lit(2.0) * s3;
        let h0 = cell.h.c0;
        let sx = two_s3 * z.c1x / dx;
        let sy = two_s3 * z.c1y / dx;
        let src0 = [T::zero(), -c.g * h0 * sx, -c.g * h0 * sy];
        let mut l0 = [T::zero(); 3];
        for q in 0..3 {
            l0[q] = -(e[q] - w[q]) / dx - (n[q] - s[q]) / dx + src0[q];
        }
        if !self.scheme.is_planar() || is_front(cell, c) {
            return FlowCoeffs {
                h: PlanarCoeffs::constant(l0[0]),
                qx: PlanarCoeffs::constant(l0[1]),
                qy: PlanarCoeffs::constant(l0[2]),
            };
        }
        // slope modes: face terms plus two-point Gauss quadrature of the volume flux
        let at = |sgn: T, x_dir: bool| {
            let (h1, qx1, qy1) = if x_dir { (cell.h.c1x, cell.qx.c1x, cell.qy.c1x) } else { (cell.h.c1y, cell.qx.c1y, cell.qy.c1y) };
            let (h, qx, qy) = (h0 + sgn * h1, cell.qx.c0 + sgn * qx1, cell.qy.c0 + sgn * qy1);
            if x_dir {
                physical_flux([h.max(T::zero()), qx, qy], c)
            } else {
                let g = physical_flux([h.max(T::zero()), qy, qx], c);
                [g[0], g[2], g[1]]
            }
        };
        let (fp, fm) = (at(T::one(), true), at(-T::one(), true));
        let (gp, gm) = (at(T::one(), false), at(-T::one(), false));
        let k3 = s3 / dx;
        let mut l1x = [T::zero(); 3];
        let mut l1y = [T::zero(); 3];
        for q in 0..3 {
            l1x[q] = -k3 * (e[q] + w[q]) + k3 * (fp[q] + fm[q]);
            l1y[q] = -k3 * (n[q] + s[q]) + k3 * (gp[q] + gm[q]);
        }
        l1x[1] -= c.g * sx * cell.h.c1x;
        l1y[2] -= c.g * sy * cell.h.c1y;
        FlowCoeffs {
            h: PlanarCoeffs::new(l0[0], l1x[0], l1y[0]),
            qx: PlanarCoeffs::new(l0[1], l1x[1], l1y[1]),
            qy: PlanarCoeffs::new(l0[2], l1x[2], l1y[2]),
        }
    }

    /// Scales the fluxes leaving each cell so that one step of length `dt`
    /// cannot draw more water than the cell holds; exact in the mass balance
    /// because both sides of a face see the same scaled value.
    fn drain(&self, u: &[FlowCoeffs<T>], fluxes: &mut [([T; 3], [T; 3])], dt: T) {
        let mesh = &self.mesh;
        let factor: Vec<T> = (0..mesh.len())
            .into_par_iter()
            .with_min_len(PAR_MIN)
            .map(|k| {
                let mut out = T::zero();
                for d in Dir::ALL {
                    let lower = matches!(d, Dir::East | Dir::North);
                    for &fi in mesh.faces_of(k, d) {
                        let (fl, fu) = &fluxes[fi as usize];
                        let m = if lower { fl[0] } else { -fu[0] };
                        out += m.max(T::zero()) * mesh.faces[fi as usize].len;
                    }
                }
                let out = out * dt;
                let avail = u[k].h.c0.max(T::zero()) * mesh.area[k];
                if out > avail {
                    avail / out
                } else {
                    T::one()
                }
            })
            .collect();
        fluxes.par_iter_mut().with_min_len(PAR_MIN).zip(mesh.faces.par_iter()).for_each(|((fl, fu), f)| {
            let donor = if fl[0] > T::zero() { f.lower } else { f.upper };
            if let Some(d) = donor {
                let s = factor[d as usize];
                if s < T::one() {
                    // momentum travels with the mass it belongs to
                    for q in 0..3 {
                        fl[q] *= s;
                        fu[q] *= s;
                    }
                }
            }
        });
    }

    fn rhs(&self, u: &[FlowCoeffs<T>], dt: T) -> Vec<FlowCoeffs<T>> {
        let mut fluxes = self.all_face_fluxes(u);
        self.drain(u, &mut fluxes, dt);
        (0..self.mesh.len()).into_par_iter().with_min_len(PAR_MIN).map(|k| self.operator(u, &fluxes, k)).collect()
    }

    /// Depth positivity: clamps averages, dries thin cells and scales depth
    /// slopes so that every face limit is non-negative.
    fn limit(u: &mut FlowCoeffs<T>, c: &Consts<T>, planar: bool) {
        if u.h.c0 < T::zero() {
            u.h.c0 = T::zero();
        }
        if u.h.c0 <= c.h_dry {
            *u = FlowCoeffs::still(PlanarCoeffs::constant(u.h.c0));
            return;
        }
        if planar {
            let m = min_face_depth(&u.h);
            if m < T::zero() {
                let theta = u.h.c0 / (u.h.c0 - m);
                u.h.c1x *= theta;
                u.h.c1y *= theta;
            }
            if u.h.c0 < T::lit(WET_DRY_DEPTH) {
                // films this thin carry no momentum
                u.qx = PlanarCoeffs::zero();
                u.qy = PlanarCoeffs::zero();
            } else if is_front(u, c) {
                u.qx = u.qx.flattened();
                u.qy = u.qy.flattened();
            }
        }
    }

    /// Drops the discharge slopes of wet elements that border a dry or front
    /// element, so the planar solution is first order next to wet/dry fronts.
    fn flatten_front_ring(&self, u: &mut [FlowCoeffs<T>]) {
        let c = &self.consts;
        let shallow = |v: &FlowCoeffs<T>| v.h.c0 <= c.h_dry || is_front(v, c);
        let mut mark = vec![false; u.len()];
        for f in &self.mesh.faces {
            if let (Some(a), Some(b)) = (f.lower, f.upper) {
                let (a, b) = (a as usize, b as usize);
                let (sa, sb) = (shallow(&u[a]), shallow(&u[b]));
                mark[a] |= sb;
                mark[b] |= sa;
            }
        }
        u.par_iter_mut().with_min_len(PAR_MIN).zip(mark).for_each(|(v, m)| {
            if m {
                v.qx = v.qx.flattened();
                v.qy = v.qy.flattened();
            }
        });
    }

    fn step_fv1(&mut self, dt: T) {
        self.apply_friction(dt);
        let l = self.rhs(&self.u, dt);
        let c = self.consts;
        self.u.par_iter_mut().with_min_len(PAR_MIN).zip(l).for_each(|(u, d)| {
            *u = *u + d * dt;
            Self::limit(u, &c, false);
        });
    }

    fn step_dg2(&mut self, dt: T) {
        self.apply_friction(dt);
        let c = self.consts;
        let l = self.rhs(&self.u, dt);
        let mut u1: Vec<FlowCoeffs<T>> = self.u.iter().zip(l).map(|(u, d)| *u + d * dt).collect();
        u1.par_iter_mut().with_min_len(PAR_MIN).for_each(|u| Self::limit(u, &c, true));
        self.flatten_front_ring(&mut u1);
        let l1 = self.rhs(&u1, dt);
        let half = T::lit(0.5);
        let mut u = std::mem::take(&mut self.u);
        u.par_iter_mut().with_min_len(PAR_MIN).zip(u1).zip(l1).for_each(|((u, u1), d)| {
            *u = (*u + u1 + d * dt) * half;
            Self::limit(u, &c, true);
        });
        self.flatten_front_ring(&mut u);
        self.u = u;
    }

    // ---- ACC ----

    fn step_acc(&mut self, dt: T) {
        let c = self.consts;
        let mesh = &self.mesh;
        let u = &self.u;
        let z = &self.zs;
        let zp = &mesh.z;
        let man = &self.manning;
        let prev = &self.acc_q;
        let s3 = T::sqrt3();
        let two = T::lit(2.0);
        let mut q: Vec<T> = mesh
            .faces
            .par_iter()
            .with_min_len(PAR_MIN)
            .zip(prev.par_iter())
            .map(|(f, &qp)| match (f.lower, f.upper) {
                (Some(a), Some(b)) => {
                    let (a, b) = (a as usize, b as usize);
                    let n = (man[a] + man[b]) / two;
                    acc_face_discharge(u[a].h.c0 + z[a].c0, u[b].h.c0 + z[b].c0, z[a].c0, z[b].c0, qp, f.dist, n, dt, &c)
                }
                (own, other) => {
                    if f.boundary == Some(BoundaryKind::Reflective) {
                        return T::zero();
                    }
                    let interior_is_lower = own.is_some();
                    let k = own.or(other).unwrap() as usize;
                    // open edge: the surface keeps the local bed slope across the boundary
                    let slope_coef = match f.axis {
                        Axis::X => zp[k].c1x,
                        Axis::Y => zp[k].c1y,
                    };
                    let rise = two * s3 * slope_coef / mesh.size[k] * f.dist;
                    let (eta, zz) = (u[k].h.c0 + z[k].c0, z[k].c0);
                    let qn = if interior_is_lower {
                        acc_face_discharge(eta, eta + rise, zz, zz + rise, qp, f.dist, man[k], dt, &c).max(T::zero())
                    } else {
                        acc_face_discharge(eta - rise, eta, zz - rise, zz, qp, f.dist, man[k], dt, &c).min(T::zero())
                    };
                    qn
                }
            })
            .collect();
        // scale outflows so no cell gives more than it holds
        let factor: Vec<T> = (0..mesh.len())
            .into_par_iter()
            .with_min_len(PAR_MIN)
            .map(|k| {
                let mut out = T::zero();
                for d in Dir::ALL {
                    let lower = matches!(d, Dir::East | Dir::North);
                    for &fi in mesh.faces_of(k, d) {
                        let qf = q[fi as usize];
                        let leaving = if lower { qf.max(T::zero()) } else { (-qf).max(T::zero()) };
                        out += leaving * mesh.faces[fi as usize].len;
                    }
                }
                let out = out * dt;
                let avail = u[k].h.c0 * mesh.area[k];
                if out > avail {
                    avail / out
                } else {
                    T::one()
                }
            })
            .collect();
        q.par_iter_mut().with_min_len(PAR_MIN).zip(mesh.faces.par_iter()).for_each(|(qf, f)| {
            let donor = if *qf > T::zero() { f.lower } else { f.upper };
            if let Some(d) = donor {
                *qf *= factor[d as usize];
            }
        });
        let new_u: Vec<FlowCoeffs<T>> = (0..mesh.len())
            .into_par_iter()
            .with_min_len(PAR_MIN)
            .map(|k| {
                let side = |d: Dir| {
                    mesh.faces_of(k, d).iter().fold(T::zero(), |s, &fi| s + q[fi as usize] * mesh.faces[fi as usize].len)
                };
                let (e, w, n, s) = (side(Dir::East), side(Dir::West), side(Dir::North), side(Dir::South));
                let dx = mesh.size[k];
                let mut h = u[k].h.c0 + dt * ((w - e) + (s - n)) / mesh.area[k];
                if h < T::zero() {
                    h = T::zero();
                }
                let two_dx = two * dx;
                FlowCoeffs {
                    h: PlanarCoeffs::constant(h),
                    qx: PlanarCoeffs::constant(if h > c.h_dry { (e + w) / two_dx } else { T::zero() }),
                    qy: PlanarCoeffs::constant(if h > c.h_dry { (n + s) / two_dx } else { T::zero() }),
                }
            })
            .collect();
        self.u = new_u;
        self.acc_q = q;
    }

    // ---- sampling ----

    /// `(h, η, u, v)` at a point, `None` outside the domain.
    pub fn probe(&self, x: f64, y: f64) -> Option<(f64, f64, f64, f64)> {
        let g = &self.mesh.grid;
        let k = g.locate(x, y)?;
        let c = &self.u[k];
        let (h, qx, qy, z) = if self.scheme.is_planar() {
            let (cx, cy) = g.leaf_centre(k);
            let size = g.leaf_size(k);
            let xi = T::lit(2.0 * (x - cx) / size);
            let eta = T::lit(2.0 * (y - cy) / size);
            (c.h.at_local(xi, eta).max(T::zero()), c.qx.at_local(xi, eta), c.qy.at_local(xi, eta), self.zs[k].at_local(xi, eta))
        } else {
            (c.h.c0, c.qx.c0, c.qy.c0, self.zs[k].c0)
        };
        let (vu, vv) = (velocity(h, qx, &self.consts), velocity(h, qy, &self.consts));
        Some((h.as_f64(), (h + z).as_f64(), vu.as_f64(), vv.as_f64()))
    }

    pub fn depth_field(&self) -> Vec<PlanarCoeffs<T>> {
        self.u.iter().map(|c| self.shown(c.h)).collect()
    }

    pub fn qx_field(&self) -> Vec<PlanarCoeffs<T>> {
        self.u.iter().map(|c| self.shown(c.qx)).collect()
    }

    pub fn qy_field(&self) -> Vec<PlanarCoeffs<T>> {
        self.u.iter().map(|c| self.shown(c.qy)).collect()
    }

    fn shown(&self, c: PlanarCoeffs<T>) -> PlanarCoeffs<T> {
        if self.scheme.is_planar() {
            c
        } else {
            c.flattened()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mra::NonUniformGrid;
    use crate::quadgrid::{FlagTree, QuadGrid};
    use crate::raster_io::Boundaries;

    fn bumpy(l: u32, m: u32, n: u32) -> Vec<PlanarCoeffs<f64>> {
        let (nx, ny) = (m << l, n << l);
        let z = |x: f64, y: f64| 0.3 * (x * 0.7).sin() + 0.2 * (y * 1.3).cos() + 0.05 * x;
        let mut out = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = (i as f64, j as f64);
                out.push(crate::field::project_vertices(z(x, y + 1.0), z(x + 1.0, y + 1.0), z(x, y), z(x + 1.0, y)).unwrap());
            }
        }
        out
    }

    fn lake(scheme: Scheme, grid: NonUniformGrid<f64>, eta: f64) -> Sim<f64> {
        let mesh = Mesh::new(&grid, &Boundaries::default(), false).unwrap();
        let z = if scheme.is_planar() { grid.z.clone() } else { grid.z.iter().map(|c| c.flattened()).collect() };
        let mut s = Sim::new(mesh, scheme, Consts::default(), 0.3);
        s.set_depth(z.iter().map(|c| PlanarCoeffs::new(eta - c.c0, -c.c1x, -c.c1y)).collect());
        s
    }

    fn run(s: &mut Sim<f64>, steps: usize) {
        for _ in 0..steps {
            let dt = s.compute_dt().unwrap();
            s.step(dt).unwrap();
        }
    }

    #[test]
    fn lake_at_rest_all_schemes() {
        for scheme in [Scheme::Dg2, Scheme::Fv1, Scheme::Acc] {
            let g = NonUniformGrid::uniform(3, 1, 1, 1.0, 0.0, 0.0, &bumpy(3, 1, 1));
            let mut s = lake(scheme, g, 2.0);
            run(&mut s, 40);
            for (c, z) in s.u.iter().zip(&s.zs) {
                assert!((c.h.c0 + z.c0 - 2.0).abs() < 1e-10, "{scheme:?}");
                assert!(c.qx.c0.abs() < 1e-10 && c.qy.c0.abs() < 1e-10, "{scheme:?} {c:?}");
            }
        }
    }

    #[test]
    fn lake_at_rest_on_graded_grid() {
        let mut t = FlagTree::new(3, 1, 1);
        t.set_with_ancestors(LeafId::new(2, 1, 1));
        let t = t.graded();
        let grid = QuadGrid::from_flags(&t, 1.0, 0.0, 0.0);
        let fine = bumpy(3, 1, 1);
        let tree = crate::mra::build_detail_tree(&fine, 1, 1, 3, &FilterBank::new(crate::raster_io::Wavelet::Mw)).unwrap();
        let z = grid.leaves().iter().map(|l| tree.coeff(*l)).collect();
        let g = NonUniformGrid { grid, z };
        for scheme in [Scheme::Dg2, Scheme::Fv1] {
            let mut s = lake(scheme, g.clone(), 2.0);
            run(&mut s, 30);
            for c in &s.u {
                assert!(c.qx.c0.abs() < 1e-10 && c.qy.c0.abs() < 1e-10, "{scheme:?}");
            }
        }
    }

    #[test]
    fn closed_box_conserves_mass() {
        for scheme in [Scheme::Dg2, Scheme::Fv1, Scheme::Acc] {
            let g = NonUniformGrid::uniform(3, 1, 1, 1.0, 0.0, 0.0, &bumpy(3, 1, 1));
            let mesh = Mesh::new(&g, &Boundaries::default(), false).unwrap();
            let mut s = Sim::new(mesh, scheme, Consts::default(), 0.3);
            let h = s.mesh.grid.leaves().iter().map(|l| PlanarCoeffs::constant(if l.i < 3 { 1.5 } else { 0.0 })).collect();
            s.set_depth(h);
            let v0 = s.volume();
            run(&mut s, 60);
            let rel = ((s.volume() - v0) / v0).abs();
            assert!(rel < 1e-12, "{scheme:?} {rel:e}");
            assert!(s.u.iter().all(|c| c.h.c0 >= 0.0));
        }
    }

    #[test]
    fn inflow_volume_is_exact() {
        let g = NonUniformGrid::uniform(2, 2, 1, 1.0, 0.0, 0.0, &vec![PlanarCoeffs::zero(); 32]);
        let mesh = Mesh::new(&g, &Boundaries::default(), false).unwrap();
        let mut s = Sim::new(mesh, Scheme::Fv1, Consts::default(), 0.5);
        let hyd = Hydrograph::new(vec![(0.0, 0.0), (10.0, 2.0)]).unwrap();
        s.add_inflow(hyd, CellRegion { i0: 0, j0: 0, i1: 1, j1: 1 }).unwrap();
        while s.t < 10.0 {
            let dt = s.compute_dt().unwrap_or(0.5f64).min(10.0 - s.t);
            s.step(dt).unwrap();
        }
        assert!((s.volume() - 10.0).abs() < 1e-9);
        assert!((s.injected - 10.0).abs() < 1e-12);
        assert!(s.add_inflow(Hydrograph::new(vec![(0.0, 1.0)]).unwrap(), CellRegion { i0: 0, j0: 0, i1: 8, j1: 0 }).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let g = NonUniformGrid::uniform(1, 1, 1, 1.0, 0.0, 0.0, &vec![PlanarCoeffs::zero(); 4]);
        let mesh = Mesh::new(&g, &Boundaries::default(), false).unwrap();
        let mut s = Sim::new(mesh, Scheme::Fv1, Consts::default(), 0.5);
        s.set_depth(vec![PlanarCoeffs::constant(1.0); 4]);
        s.u[0].qx.c0 = f64::NAN;
        assert!(matches!(s.step(0.01), Err(Error::Numerical { .. })));
    }

    #[test]
    fn probe_reads_surface() {
        let g = NonUniformGrid::uniform(1, 1, 1, 2.0, 0.0, 0.0, &vec![PlanarCoeffs::constant(1.0); 4]);
        let mesh = Mesh::new(&g, &Boundaries::default(), false).unwrap();
        let mut s = Sim::new(mesh, Scheme::Dg2, Consts::default(), 0.3);
        s.set_depth(vec![PlanarCoeffs::constant(0.5); 4]);
        let (h, eta, u, v) = s.probe(1.0, 3.0).unwrap();
        assert_eq!((h, eta, u, v), (0.5, 1.5, 0.0, 0.0));
        assert!(s.probe(-1.0, 0.0).is_none());
    }
}
