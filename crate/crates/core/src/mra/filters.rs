//! Two-scale filter banks.
//!
//! Coefficients are element means of the scaled Legendre modes, so the
//! stacked analysis matrix `T` (parent modes then the three detail groups,
//! one column block per child) satisfies `T Tᵀ = I/4` and synthesis is `4 Tᵀ`.

use crate::field::PlanarCoeffs;
use crate::raster_io::Wavelet;
use crate::real::Real;

/// Horizontal, vertical and diagonal detail vectors of one parent node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DetailTriple<T> {
    pub dh: PlanarCoeffs<T>,
    pub dv: PlanarCoeffs<T>,
    pub dd: PlanarCoeffs<T>,
}

impl<T: Real> DetailTriple<T> {
    pub fn zero() -> Self {
        DetailTriple { dh: PlanarCoeffs::zero(), dv: PlanarCoeffs::zero(), dd: PlanarCoeffs::zero() }
    }

    /// Largest absolute entry over the three vectors.
    pub fn max_abs(&self) -> T {
        [self.dh, self.dv, self.dd]
            .iter()
            .flat_map(|c| c.as_array())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.dh.is_finite() && self.dv.is_finite() && self.dd.is_finite()
    }
}

/// Filter slot `f` reads child `SLOT_CHILD[f]` (children stored SW, SE, NW, NE;
/// slots ordered SW, NW, SE, NE).
const SLOT_CHILD: [usize; 4] = [0, 2, 1, 3];
/// `(sx, sy)` of each slot.
const SLOT_SIGN: [(f64, f64); 4] = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)];

#[derive(Clone, Debug)]
pub struct FilterBank<T> {
    pub kind: Wavelet,
    /// Modes per element: 3 (planar) or 1 (constant).
    modes: usize,
    /// Row-major `(4·modes) x (4·modes)` analysis matrix.
    t: Vec<T>,
}

/// One-dimensional order-2 filters `[left child, right child]`, rows are
/// output modes, columns child modes.
fn one_d() -> ([[[f64; 2]; 2]; 2], [[[f64; 2]; 2]; 2]) {
    let r = 3f64.sqrt() / 2.0;
    let h = [[[0.5, 0.0], [-0.5 * r, 0.25]], [[0.5, 0.0], [0.5 * r, 0.25]]];
    let g = [[[0.25, 0.5 * r], [0.0, 0.5]], [[-0.25, 0.5 * r], [0.0, -0.5]]];
    (h, g)
}

/// Planar modes as tensor indices: c0 -> (0,0), c1x -> (1,0), c1y -> (0,1).
const MODES: [(usize, usize); 3] = [(0, 0), (1, 0), (0, 1)];

fn tensor_row(fx: &[[[f64; 2]; 2]; 2], fy: &[[[f64; 2]; 2]; 2], mx: usize, my: usize) -> [f64; 12] {
    let mut row = [0.0; 12];
    for (slot, &(sx, sy)) in SLOT_SIGN.iter().enumerate() {
        let xs = usize::from(sx > 0.0);
        let ys = usize::from(sy > 0.0);
        for (col, &(a, b)) in MODES.iter().enumerate() {
            row[slot * 3 + col] = fx[xs][mx][a] * fy[ys][my][b];
        }
    }
    row
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mw_matrix() -> Vec<f64> {
    let (h, g) = one_d();
    let mut rows: Vec<[f64; 12]> = MODES.iter().map(|&(mx, my)| tensor_row(&h, &h, mx, my)).collect();
    // detail groups: g(x)h(y), h(x)g(y), g(x)g(y)
    for (fx, fy) in [(&g, &h), (&h, &g), (&g, &g)] {
        for &(mx, my) in &MODES {
            let mut v = tensor_row(fx, fy, mx, my);
            for _ in 0..2 {
                for r in &rows {
                    let p = dot(&v, r) / dot(r, r);
                    v.iter_mut().zip(r).for_each(|(x, y)| *x -= p * y);
                }
            }
            let norm = dot(&v, &v).sqrt();
            assert!(norm > 1e-6, "degenerate detail candidate");
            v.iter_mut().for_each(|x| *x *= 0.5 / norm);
            rows.push(v);
        }
    }
    rows.into_iter().flatten().collect()
}

fn hw_matrix() -> Vec<f64> {
    let mut t = Vec::with_capacity(16);
    for f in [|_: f64, _: f64| 1.0, |sx: f64, _: f64| sx, |_: f64, sy: f64| sy, |sx: f64, sy: f64| sx * sy] {
        t.extend(SLOT_SIGN.iter().map(|&(sx, sy)| 0.25 * f(sx, sy)));
    }
    t
}

impl<T: Real> FilterBank<T> {
    pub fn new(kind: Wavelet) -> Self {
        let (modes, t) = match kind {
            Wavelet::Mw => (3, mw_matrix()),
            Wavelet::Hw => (1, hw_matrix()),
        };
        FilterBank { kind, modes, t: t.into_iter().map(T::lit).collect() }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// The analysis matrix as `f64`, for inspection.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let n = 4 * self.modes;
        (0..n).map(|r| (0..n).map(|c| self.t[r * n + c].as_f64()).collect()).collect()
    }

    fn load(&self, c: &PlanarCoeffs<T>, out: &mut [T]) {
        let a = c.as_array();
        out.copy_from_slice(&a[..self.modes]);
    }

    fn store(&self, v: &[T]) -> PlanarCoeffs<T> {
        if self.modes == 3 {
            PlanarCoeffs::new(v[0], v[1], v[2])
        } else {
            PlanarCoeffs::constant(v[0])
        }
    }

    /// Fine-to-coarse analysis of four children (stored SW, SE, NW, NE).
    pub fn encode(&self, children: &[PlanarCoeffs<T>; 4]) -> (PlanarCoeffs<T>, DetailTriple<T>) {
        let nm = self.modes;
        let n = 4 * nm;
        let mut x = [T::zero(); 12];
        for (slot, &child) in SLOT_CHILD.iter().enumerate() {
            self.load(&children[child], &mut x[slot * nm..(slot + 1) * nm]);
        }
        let mut y = [T::zero(); 12];
        for (r, yr) in y.iter_mut().enumerate().take(n) {
            let row = &self.t[r * n..(r + 1) * n];
            *yr = row.iter().zip(&x[..n]).fold(T::zero(), |s, (&a, &b)| s + a * b);
        }
        let parent = self.store(&y[..nm]);
        let d = DetailTriple { dh: self.store(&y[nm..2 * nm]), dv: self.store(&y[2 * nm..3 * nm]), dd: self.store(&y[3 * nm..]) };
        (parent, d)
    }

    /// Coarse-to-fine synthesis; the exact inverse of [`encode`](Self::encode).
    pub fn decode(&self, parent: &PlanarCoeffs<T>, d: &DetailTriple<T>) -> [PlanarCoeffs<T>; 4] {
        let nm = self.modes;
        let n = 4 * nm;
        let mut y = [T::zero(); 12];
        self.load(parent, &mut y[..nm]);
        self.load(&d.dh, &mut y[nm..2 * nm]);
        self.load(&d.dv, &mut y[2 * nm..3 * nm]);
        self.load(&d.dd, &mut y[3 * nm..n]);
        let four = T::lit(4.0);
        let mut x = [T::zero(); 12];
        for (c, xc) in x.iter_mut().enumerate().take(n) {
            *xc = four * (0..n).fold(T::zero(), |s, r| s + self.t[r * n + c] * y[r]);
        }
        let mut out = [PlanarCoeffs::zero(); 4];
        for (slot, &child) in SLOT_CHILD.iter().enumerate() {
            out[child] = self.store(&x[slot * nm..(slot + 1) * nm]);
        }
        out
    }

    /// Parent coefficients only (no details).
    pub fn restrict(&self, children: &[PlanarCoeffs<T>; 4]) -> PlanarCoeffs<T> {
        self.encode(children).0
    }
}

/// Dimensionless detail magnitude: largest entry over `|global_norm|` clamped below by 1.
pub fn normalize_detail<T: Real>(d: &DetailTriple<T>, global_norm: T) -> T {
    d.max_abs() / global_norm.abs().max(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::project_vertices;
    use proptest::prelude::*;

    fn mw() -> FilterBank<f64> {
        FilterBank::new(Wavelet::Mw)
    }

    fn hw() -> FilterBank<f64> {
        FilterBank::new(Wavelet::Hw)
    }

    fn rel_err(a: &[PlanarCoeffs<f64>], b: &[PlanarCoeffs<f64>]) -> f64 {
        let scale = a.iter().flat_map(|c| c.as_array()).fold(1e-300f64, |m, v| m.max(v.abs()));
        a.iter().zip(b).flat_map(|(x, y)| (0..3).map(move |k| (x.as_array()[k] - y.as_array()[k]).abs())).fold(0.0, f64::max) / scale
    }

    #[test]
    fn analysis_matrix_is_orthogonal() {
        for fb in [mw(), hw()] {
            let t = fb.matrix();
            let n = t.len();
            for a in 0..n {
                for b in 0..n {
                    let d = dot(&t[a], &t[b]);
                    let want = if a == b { 0.25 } else { 0.0 };
                    assert!((d - want).abs() < 1e-15, "{:?} rows {a},{b}: {d}", fb.kind);
                }
            }
        }
    }

    #[test]
    fn low_pass_matches_closed_form() {
        let t = mw().matrix();
        let r = 3f64.sqrt();
        // slot 2 is the south-east child: sx = +1, sy = -1
        let hh2 = [[t[0][6], t[0][7], t[0][8]], [t[1][6], t[1][7], t[1][8]], [t[2][6], t[2][7], t[2][8]]];
        let want = [[0.25, 0.0, 0.0], [r / 8.0, 0.125, 0.0], [-r / 8.0, 0.0, 0.125]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((hh2[a][b] - want[a][b]).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn constant_children() {
        let c = [PlanarCoeffs::constant(2.25); 4];
        for fb in [mw(), hw()] {
            let (p, d) = fb.encode(&c);
            assert!((p.c0 - 2.25).abs() < 1e-15 && p.c1x.abs() < 1e-15 && p.c1y.abs() < 1e-15);
            assert!(d.max_abs() < 1e-15);
        }
    }

    #[test]
    fn planar_block_has_no_details() {
        // z = 0.3 x - 1.1 y + 2 on a 2x2 block of unit cells
        let z = |x: f64, y: f64| 0.3 * x - 1.1 * y + 2.0;
        let child = |i: f64, j: f64| project_vertices(z(i, j + 1.0), z(i + 1.0, j + 1.0), z(i, j), z(i + 1.0, j)).unwrap();
        let children = [child(0.0, 0.0), child(1.0, 0.0), child(0.0, 1.0), child(1.0, 1.0)];
        let (p, d) = mw().encode(&children);
        assert!(d.max_abs() < 1e-13);
        let whole = project_vertices(z(0.0, 2.0), z(2.0, 2.0), z(0.0, 0.0), z(2.0, 0.0)).unwrap();
        assert!(rel_err(&[p], &[whole]) < 1e-14);
    }

    #[test]
    fn haar_single_child_impulse() {
        let fb = hw();
        let s = 3.0;
        let mut c = [PlanarCoeffs::zero(); 4];
        c[0] = PlanarCoeffs::constant(s);
        let (p, d) = fb.encode(&c);
        assert_eq!(p.c0, s / 4.0);
        // south-west child: sx = sy = -1
        assert_eq!((d.dh.c0, d.dv.c0, d.dd.c0), (-s / 4.0, -s / 4.0, s / 4.0));
    }

    #[test]
    fn zero_detail_decode_tiles_parent_plane() {
        let p = PlanarCoeffs::new(1.5, -0.7, 0.4);
        let ch = mw().decode(&p, &DetailTriple::zero());
        // child k centre in parent local coordinates
        let centres = [(-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)];
        for (c, &(cx, cy)) in ch.iter().zip(&centres) {
            for &(u, v) in &[(-1.0, -1.0), (1.0, 0.3), (0.0, 0.0), (-0.2, 1.0)] {
                let fine = c.at_local(u, v);
                let coarse = p.at_local(cx + 0.5 * u, cy + 0.5 * v);
                assert!((fine - coarse).abs() < 1e-14);
            }
        }
        let hch = hw().decode(&p, &DetailTriple::zero());
        assert!(hch.iter().all(|c| *c == PlanarCoeffs::constant(1.5)));
    }

    #[test]
    fn normalisation_clamps_denominator() {
        let mut d = DetailTriple::zero();
        assert_eq!(normalize_detail(&d, 3.0), 0.0);
        d.dv.c1x = -0.002;
        assert_eq!(normalize_detail(&d, 0.5), 0.002);
        d.dv.c1x = 0.2;
        assert!((normalize_detail(&d, 100.0f64) - 0.002).abs() < 1e-18);
    }

    fn coeffs() -> impl Strategy<Value = PlanarCoeffs<f64>> {
        proptest::array::uniform3(-1e3f64..1e3).prop_map(PlanarCoeffs::from_array)
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(c in proptest::array::uniform4(coeffs())) {
            let fb = mw();
            let (p, d) = fb.encode(&c);
            prop_assert!(rel_err(&c, &fb.decode(&p, &d)) <= 1e-13);
            prop_assert!((p.c0 - (c[0].c0 + c[1].c0 + c[2].c0 + c[3].c0) / 4.0).abs() <= 1e-12);
        }

        #[test]
        fn encode_inverts_decode(p in coeffs(), a in coeffs(), b in coeffs(), c in coeffs()) {
            let fb = mw();
            let d = DetailTriple { dh: a, dv: b, dd: c };
            let (p2, d2) = fb.encode(&fb.decode(&p, &d));
            prop_assert!(rel_err(&[p, a, b, c], &[p2, d2.dh, d2.dv, d2.dd]) <= 1e-13);
        }

        #[test]
        fn haar_round_trip(v in proptest::array::uniform4(-1e3f64..1e3)) {
            let fb = hw();
            let c = v.map(PlanarCoeffs::constant);
            let (p, d) = fb.encode(&c);
            prop_assert!(rel_err(&c, &fb.decode(&p, &d)) <= 1e-13);
        }

        #[test]
        fn haar_details_scale_linearly(v in proptest::array::uniform4(-10.0f64..10.0), s in -5.0f64..5.0f64) {
            let fb = hw();
            let (_, d1) = fb.encode(&v.map(PlanarCoeffs::constant));
            let (_, d2) = fb.encode(&v.map(|x| PlanarCoeffs::constant(s * x)));
            prop_assert!((d2.max_abs() - s.abs() * d1.max_abs()).abs() < 1e-12);
        }
    }
}
