//! Scaled local Legendre basis `[1, 2√3(x-xc)/R, 2√3(y-yc)/R]`, planar
//! coefficient algebra and the vertex-based projection of rasters onto
//! elements.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::raster_io::{DemSampling, Raster};
use crate::real::Real;

/// Average and x/y slope coefficients of one scalar field on one element.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlanarCoeffs<T> {
    pub c0: T,
    pub c1x: T,
    pub c1y: T,
}

impl<T: Real> PlanarCoeffs<T> {
    #[inline]
    pub fn new(c0: T, c1x: T, c1y: T) -> Self {
        PlanarCoeffs { c0, c1x, c1y }
    }

    #[inline]
    pub fn constant(c0: T) -> Self {
        PlanarCoeffs { c0, c1x: T::zero(), c1y: T::zero() }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::constant(T::zero())
    }

    #[inline]
    pub fn as_array(&self) -> [T; 3] {
        [self.c0, self.c1x, self.c1y]
    }

    #[inline]
    pub fn from_array(a: [T; 3]) -> Self {
        PlanarCoeffs { c0: a[0], c1x: a[1], c1y: a[2] }
    }

    /// Drops the slopes (piecewise-constant restriction).
    #[inline]
    pub fn flattened(&self) -> Self {
        Self::constant(self.c0)
    }

    pub fn is_finite(&self) -> bool {
        self.c0.is_finite() && self.c1x.is_finite() && self.c1y.is_finite()
    }

    /// Value at local coordinates `(xi, eta)` in `[-1, 1]²`.
    #[inline]
    pub fn at_local(&self, xi: T, eta: T) -> T {
        let s3 = T::sqrt3();
        self.c0 + s3 * xi * self.c1x + s3 * eta * self.c1y
    }

    /// Limit at the centre of `face`.
    #[inline]
    pub fn face_limit(&self, face: Face) -> T {
        let s3 = T::sqrt3();
        match face {
            Face::East => self.c0 + s3 * self.c1x,
            Face::West => self.c0 - s3 * self.c1x,
            Face::North => self.c0 + s3 * self.c1y,
            Face::South => self.c0 - s3 * self.c1y,
        }
    }

    /// Value at a point on a face; `offset` runs over `[-1/2, 1/2]` of the face
    /// length, increasing with x (N/S faces) or y (E/W faces).
    #[inline]
    pub fn at_face_point(&self, p: FacePoint<T>) -> T {
        let two = T::lit(2.0);
        match p.face {
            Face::East => self.at_local(T::one(), two * p.offset),
            Face::West => self.at_local(-T::one(), two * p.offset),
            Face::North => self.at_local(two * p.offset, T::one()),
            Face::South => self.at_local(two * p.offset, -T::one()),
        }
    }
}

impl<T: Real> Add for PlanarCoeffs<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        PlanarCoeffs { c0: self.c0 + o.c0, c1x: self.c1x + o.c1x, c1y: self.c1y + o.c1y }
    }
}

impl<T: Real> AddAssign for PlanarCoeffs<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for PlanarCoeffs<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        PlanarCoeffs { c0: self.c0 - o.c0, c1x: self.c1x - o.c1x, c1y: self.c1y - o.c1y }
    }
}

impl<T: Real> Neg for PlanarCoeffs<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        PlanarCoeffs { c0: -self.c0, c1x: -self.c1x, c1y: -self.c1y }
    }
}

impl<T: Real> Mul<T> for PlanarCoeffs<T> {
    type Output = Self;
    #[inline]
    fn mul(self, a: T) -> Self {
        PlanarCoeffs { c0: self.c0 * a, c1x: self.c1x * a, c1y: self.c1y * a }
    }
}

/// Planar coefficients of depth and unit discharges on one element.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlowCoeffs<T> {
    pub h: PlanarCoeffs<T>,
    pub qx: PlanarCoeffs<T>,
    pub qy: PlanarCoeffs<T>,
}

impl<T: Real> FlowCoeffs<T> {
    pub fn still(h: PlanarCoeffs<T>) -> Self {
        FlowCoeffs { h, qx: PlanarCoeffs::zero(), qy: PlanarCoeffs::zero() }
    }

    pub fn zero() -> Self {
        Self::still(PlanarCoeffs::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.h.is_finite() && self.qx.is_finite() && self.qy.is_finite()
    }

    pub fn flattened(&self) -> Self {
        FlowCoeffs { h: self.h.flattened(), qx: self.qx.flattened(), qy: self.qy.flattened() }
    }

    /// Average velocities, zero where the average depth is at or below `h_dry`.
    pub fn velocity(&self, h_dry: T) -> (T, T) {
        if self.h.c0 > h_dry {
            (self.qx.c0 / self.h.c0, self.qy.c0 / self.h.c0)
        } else {
            (T::zero(), T::zero())
        }
    }

    pub fn fields(&self) -> [PlanarCoeffs<T>; 3] {
        [self.h, self.qx, self.qy]
    }

    pub fn from_fields(f: [PlanarCoeffs<T>; 3]) -> Self {
        FlowCoeffs { h: f[0], qx: f[1], qy: f[2] }
    }
}

impl<T: Real> Add for FlowCoeffs<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        FlowCoeffs { h: self.h + o.h, qx: self.qx + o.qx, qy: self.qy + o.qy }
    }
}

impl<T: Real> Mul<T> for FlowCoeffs<T> {
    type Output = Self;
    #[inline]
    fn mul(self, a: T) -> Self {
        FlowCoeffs { h: self.h * a, qx: self.qx * a, qy: self.qy * a }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Face {
    North,
    East,
    South,
    West,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::North, Face::East, Face::South, Face::West];

    pub fn opposite(self) -> Face {
        match self {
            Face::North => Face::South,
            Face::East => Face::West,
            Face::South => Face::North,
            Face::West => Face::East,
        }
    }

    /// Integer step `(di, dj)` towards the neighbour across this face.
    pub fn step(self) -> (i64, i64) {
        match self {
            Face::North => (0, 1),
            Face::East => (1, 0),
            Face::South => (0, -1),
            Face::West => (-1, 0),
        }
    }

    pub fn is_x_normal(self) -> bool {
        matches!(self, Face::East | Face::West)
    }
}

/// A point on an element face, `offset` in face-length units from its centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FacePoint<T> {
    pub face: Face,
    pub offset: T,
}

impl<T: Real> FacePoint<T> {
    pub fn centre(face: Face) -> Self {
        FacePoint { face, offset: T::zero() }
    }
}

/// Planar coefficients from the four corner samples of an element.
pub fn project_vertices<T: Real>(z_nw: T, z_ne: T, z_sw: T, z_se: T) -> Result<PlanarCoeffs<T>> {
    if !(z_nw.is_finite() && z_ne.is_finite() && z_sw.is_finite() && z_se.is_finite()) {
        return Err(Error::Domain("vertex values must be finite".into()));
    }
    Ok(project_vertices_unchecked(z_nw, z_ne, z_sw, z_se))
}

#[inline]
pub(crate) fn project_vertices_unchecked<T: Real>(z_nw: T, z_ne: T, z_sw: T, z_se: T) -> PlanarCoeffs<T> {
    let four = T::lit(4.0);
    let four_s3 = four * T::sqrt3();
    PlanarCoeffs {
        c0: (z_ne + z_nw + z_se + z_sw) / four,
        c1x: (z_ne - z_nw + z_se - z_sw) / four_s3,
        c1y: (z_ne - z_se + z_nw - z_sw) / four_s3,
    }
}

/// Evaluates the planar expansion of an element centred at `centre` with side
/// `size` at the physical point `point`.
pub fn evaluate<T: Real>(c: &PlanarCoeffs<T>, centre: (T, T), size: T, point: (T, T)) -> Result<T> {
    if !(size > T::zero()) {
        return Err(Error::Domain(format!("element size must be positive, got {size}")));
    }
    let two = T::lit(2.0);
    Ok(c.at_local(two * (point.0 - centre.0) / size, two * (point.1 - centre.1) / size))
}

/// Limit of the expansion at `p` (the face centre when `offset` is zero).
pub fn face_limit<T: Real>(c: &PlanarCoeffs<T>, p: FacePoint<T>) -> T {
    c.at_face_point(p)
}

/// A DEM projected onto the level-L element grid.
///
/// Element `(i, j)` is addressed from the south-west corner. The grid is
/// padded north/east to a multiple of `2^L`; padded elements and elements
/// touching a nodata sample are inactive.
#[derive(Clone, Debug)]
pub struct ProjectedDem<T> {
    pub max_level: u32,
    pub m: usize,
    pub n: usize,
    pub nx: usize,
    pub ny: usize,
    /// Element counts before padding.
    pub active_nx: usize,
    pub active_ny: usize,
    pub cellsize: f64,
    /// South-west corner of the element grid.
    pub x0: f64,
    pub y0: f64,
    pub coeffs: Vec<PlanarCoeffs<T>>,
    pub active: Vec<bool>,
    /// Vertex elevations after padding and wall substitution, `(nx+1) x (ny+1)`, south-west first.
    pub vertices: Vec<f64>,
}

/// Elevation given to nodata samples above the highest finite sample.
pub const WALL_FREEBOARD: f64 = 100.0;

/// Corner samples with the DEM's georeferencing, rows south-first.
#[derive(Clone, Debug)]
pub(crate) struct VertexGrid {
    pub nvx: usize,
    pub nvy: usize,
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
    pub x0: f64,
    pub y0: f64,
}

pub(crate) fn vertex_grid(dem: &Raster, sampling: DemSampling) -> Result<VertexGrid> {
    dem.validate()?;
    let cs = dem.cellsize;
    match sampling {
        DemSampling::Vertex => {
            if dem.ncols < 2 || dem.nrows < 2 {
                return Err(Error::config(format!(
                    "a vertex-sampled DEM needs at least 2x2 samples, got {}x{}",
                    dem.ncols, dem.nrows
                )));
            }
            let (nvx, nvy) = (dem.ncols, dem.nrows);
            let mut values = vec![0.0; nvx * nvy];
            let mut missing = vec![false; nvx * nvy];
            for j in 0..nvy {
                for i in 0..nvx {
                    let v = dem.get_sw(i, j);
                    values[j * nvx + i] = v;
                    missing[j * nvx + i] = dem.is_nodata(v);
                }
            }
            Ok(VertexGrid { nvx, nvy, values, missing, x0: dem.xll + 0.5 * cs, y0: dem.yll + 0.5 * cs })
        }
        DemSampling::Centred => {
            // corners are the mean of the (up to four) finite cells that share them
            let (nvx, nvy) = (dem.ncols + 1, dem.nrows + 1);
            let mut values = vec![0.0; nvx * nvy];
            let mut missing = vec![false; nvx * nvy];
            for j in 0..nvy {
                for i in 0..nvx {
                    let mut sum = 0.0;
                    let mut cnt = 0;
                    for (ci, cj) in [(i.wrapping_sub(1), j.wrapping_sub(1)), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j), (i, j)] {
                        if ci < dem.ncols && cj < dem.nrows {
                            let v = dem.get_sw(ci, cj);
                            if !dem.is_nodata(v) {
                                sum += v;
                                cnt += 1;
                            }
                        }
                    }
                    if cnt == 0 {
                        missing[j * nvx + i] = true;
                        values[j * nvx + i] = dem.nodata;
                    } else {
                        values[j * nvx + i] = sum / cnt as f64;
                    }
                }
            }
            Ok(VertexGrid { nvx, nvy, values, missing, x0: dem.xll, y0: dem.yll })
        }
    }
}

/// Projects `dem` onto the padded level-`max_level` grid.
pub fn project_raster<T: Real>(dem: &Raster, sampling: DemSampling, max_level: u32) -> Result<ProjectedDem<T>> {
    if max_level > 20 {
        return Err(Error::config(format!("max_level {max_level} is too large")));
    }
    let vg = vertex_grid(dem, sampling)?;
    let block = 1usize << max_level;
    let (active_nx, active_ny) = (vg.nvx - 1, vg.nvy - 1);
    let m = active_nx.div_ceil(block);
    let n = active_ny.div_ceil(block);
    let (nx, ny) = (m * block, n * block);

    let max_finite = vg
        .values
        .iter()
        .zip(&vg.missing)
        .filter(|(_, &miss)| !miss)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_finite.is_finite() {
        return Err(Error::config("DEM contains no finite samples"));
    }
    let wall = max_finite + WALL_FREEBOARD;

    // pad by replicating the last column/row
    let (pvx, pvy) = (nx + 1, ny + 1);
    let mut vertices = vec![0.0; pvx * pvy];
    let mut missing = vec![false; pvx * pvy];
    for j in 0..pvy {
        let sj = j.min(vg.nvy - 1);
        for i in 0..pvx {
            let si = i.min(vg.nvx - 1);
            let k = sj * vg.nvx + si;
            missing[j * pvx + i] = vg.missing[k];
            vertices[j * pvx + i] = if vg.missing[k] { wall } else { vg.values[k] };
        }
    }

    let mut coeffs = Vec::with_capacity(nx * ny);
    let mut active = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v = |di: usize, dj: usize| vertices[(j + dj) * pvx + i + di];
            let c = project_vertices_unchecked(T::lit(v(0, 1)), T::lit(v(1, 1)), T::lit(v(0, 0)), T::lit(v(1, 0)));
            coeffs.push(c);
            let miss = [(0, 0), (1, 0), (0, 1), (1, 1)].iter().any(|&(di, dj)| missing[(j + dj) * pvx + i + di]);
            active.push(i < active_nx && j < active_ny && !miss);
        }
    }
    Ok(ProjectedDem {
        max_level,
        m,
        n,
        nx,
        ny,
        active_nx,
        active_ny,
        cellsize: dem.cellsize,
        x0: vg.x0,
        y0: vg.y0,
        coeffs,
        active,
        vertices,
    })
}

impl<T: Real> ProjectedDem<T> {
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn vertex(&self, i: usize, j: usize) -> f64 {
        self.vertices[j * (self.nx + 1) + i]
    }

    /// Element centre in world coordinates.
    pub fn centre(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + (i as f64 + 0.5) * self.cellsize, self.y0 + (j as f64 + 0.5) * self.cellsize)
    }

    /// Piecewise-constant restriction of the topography.
    pub fn flattened(&self) -> Vec<PlanarCoeffs<T>> {
        self.coeffs.iter().map(PlanarCoeffs::flattened).collect()
    }

    /// Projects a vertex-valued function over the same grid, rows south-first.
    pub fn project_vertex_values(&self, f: impl Fn(usize, usize) -> f64) -> Vec<PlanarCoeffs<T>> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push(project_vertices_unchecked(
                    T::lit(f(i, j + 1)),
                    T::lit(f(i + 1, j + 1)),
                    T::lit(f(i, j)),
                    T::lit(f(i + 1, j)),
                ));
            }
        }
        out
    }

    /// Depth coefficients for a constant free surface `eta`.
    ///
    /// Elements whose four corners are submerged get `eta - z` exactly so the
    /// surface is flat to rounding; others are projected from clipped corner
    /// depths.
    pub fn depth_for_surface(&self, eta: f64) -> Vec<PlanarCoeffs<T>> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        let eta_t = T::lit(eta);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let corners = [self.vertex(i, j + 1), self.vertex(i + 1, j + 1), self.vertex(i, j), self.vertex(i + 1, j)];
                let z = self.coeffs[self.index(i, j)];
                if corners.iter().all(|&v| v <= eta) {
                    out.push(PlanarCoeffs::new(eta_t - z.c0, -z.c1x, -z.c1y));
                } else {
                    let d = corners.map(|v| T::lit((eta - v).max(0.0)));
                    out.push(project_vertices_unchecked(d[0], d[1], d[2], d[3]));
                }
            }
        }
        out
    }
}
