use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::filters::FilterBank;
use super::tree::{build_detail_tree, flag_significant, DetailTree};
use crate::error::{Error, Result};
use crate::field::{PlanarCoeffs, ProjectedDem};
use crate::quadgrid::{FlagTree, LeafId, QuadGrid};
use crate::raster_io::Wavelet;
use crate::real::Real;

/// Leaf grid with per-leaf topography coefficients.
#[derive(Clone, Debug)]
pub struct NonUniformGrid<T> {
    pub grid: QuadGrid,
    pub z: Vec<PlanarCoeffs<T>>,
}

impl<T: Real> NonUniformGrid<T> {
    /// Every leaf at level L with the given fine field.
    pub fn uniform(max_level: u32, m: u32, n: u32, cellsize: f64, x0: f64, y0: f64, fine: &[PlanarCoeffs<T>]) -> Self {
        let grid = QuadGrid::uniform(max_level, m, n, cellsize, x0, y0);
        let nx = (m << max_level) as usize;
        let z = grid.leaves().iter().map(|l| fine[l.j as usize * nx + l.i as usize]).collect();
        NonUniformGrid { grid, z }
    }
}

/// Leaves and topography from flags, decoding with the stored details
/// wherever a node is flagged.
pub fn assemble_grid<T: Real>(
    tree: &DetailTree<T>,
    flags: &FlagTree,
    fb: &FilterBank<T>,
    cellsize: f64,
    x0: f64,
    y0: f64,
) -> NonUniformGrid<T> {
    let mut leaves = Vec::new();
    let mut z = Vec::new();
    let mut stack = Vec::new();
    for j in 0..tree.n {
        for i in 0..tree.m {
            let root = LeafId::new(0, i, j);
            stack.push((root, tree.coeff(root)));
            while let Some((node, c)) = stack.pop() {
                if flags.get(node) {
                    let ch = fb.decode(&c, &tree.detail(node));
                    for (id, cc) in node.children().into_iter().zip(ch).rev() {
                        stack.push((id, cc));
                    }
                } else {
                    leaves.push(node);
                    z.push(c);
                }
            }
        }
    }
    let grid = QuadGrid::from_leaves(tree.max_level, tree.m, tree.n, cellsize, x0, y0, leaves)
        .expect("flag-tree leaves tile the domain");
    NonUniformGrid { grid, z }
}

/// Topography field a wavelet analyses: planar for MW, averages only for HW.
pub fn analysed_topography<T: Real>(dem: &ProjectedDem<T>, kind: Wavelet) -> Vec<PlanarCoeffs<T>> {
    match kind {
        Wavelet::Mw => dem.coeffs.clone(),
        Wavelet::Hw => dem.flattened(),
    }
}

/// Topography detail tree and its significance flags (graded or not).
pub fn topography_flags<T: Real>(
    dem: &ProjectedDem<T>,
    eps: T,
    fb: &FilterBank<T>,
    graded: bool,
) -> Result<(DetailTree<T>, FlagTree)> {
    if eps < T::zero() || !eps.is_finite() {
        return Err(Error::config(format!("epsilon must be finite and non-negative, got {eps}")));
    }
    let tree = build_detail_tree(&analysed_topography(dem, fb.kind), dem.m as u32, dem.n as u32, dem.max_level, fb)?;
    let mut flags = flag_significant(&[&tree], eps);
    if graded {
        flags.grade();
    }
    Ok((tree, flags))
}

/// Project → analyse → flag → (grade) → assemble.
pub fn generate_static_grid<T: Real>(dem: &ProjectedDem<T>, eps: T, kind: Wavelet, graded: bool) -> Result<NonUniformGrid<T>> {
    let fb = FilterBank::new(kind);
    let (tree, flags) = topography_flags(dem, eps, &fb, graded)?;
    Ok(assemble_grid(&tree, &flags, &fb, dem.cellsize, dem.x0, dem.y0))
}

pub fn format_nug<T: Real>(g: &NonUniformGrid<T>) -> String {
    let q = &g.grid;
    let mut s = String::new();
    writeln!(s, "L {}", q.max_level).unwrap();
    writeln!(s, "M {}", q.m).unwrap();
    writeln!(s, "N {}", q.n).unwrap();
    writeln!(s, "cellsize {:?}", q.cellsize).unwrap();
    writeln!(s, "xll {:?}", q.x0).unwrap();
    writeln!(s, "yll {:?}", q.y0).unwrap();
    for (leaf, z) in q.leaves().iter().zip(&g.z) {
        writeln!(s, "{} {} {} {:.15e} {:.15e} {:.15e}", leaf.level, leaf.i, leaf.j, z.c0.as_f64(), z.c1x.as_f64(), z.c1y.as_f64())
            .unwrap();
    }
    s
}

pub fn write_nug<T: Real>(g: &NonUniformGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_nug(g)).map_err(|e| Error::io(path, e))
}

pub fn parse_nug<T: Real>(text: &str, name: &str) -> Result<NonUniformGrid<T>> {
    let perr = |line: usize, msg: String| Error::Parse { path: name.into(), line, msg };
    let mut header = [0f64; 6];
    let keys = ["l", "m", "n", "cellsize", "xll", "yll"];
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    for (slot, key) in keys.iter().enumerate() {
        let (no, line) = lines.next().ok_or_else(|| perr(0, format!("missing header line `{key}`")))?;
        let mut it = line.split_whitespace();
        let k = it.next().unwrap_or_default().to_ascii_lowercase();
        if k != *key {
            return Err(perr(no + 1, format!("expected `{key}`, found `{k}`")));
        }
        header[slot] = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| perr(no + 1, format!("bad value for `{key}`")))?;
    }
    let [l, m, n, cellsize, x0, y0] = header;
    let mut leaves = Vec::new();
    let mut z = Vec::new();
    for (no, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(perr(no + 1, format!("expected 6 fields, found {}", f.len())));
        }
        let u = |s: &str| s.parse::<u32>().map_err(|_| perr(no + 1, format!("bad index `{s}`")));
        let r = |s: &str| s.parse::<f64>().map_err(|_| perr(no + 1, format!("bad number `{s}`")));
        leaves.push(LeafId::new(u(f[0])?, u(f[1])?, u(f[2])?));
        z.push(PlanarCoeffs::new(T::lit(r(f[3])?), T::lit(r(f[4])?), T::lit(r(f[5])?)));
    }
    let grid = QuadGrid::from_leaves(l as u32, m as u32, n as u32, cellsize, x0, y0, leaves)?;
    Ok(NonUniformGrid { grid, z })
}

pub fn read_nug<T: Real>(path: impl AsRef<Path>) -> Result<NonUniformGrid<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_nug(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::project_raster;
    use crate::raster_io::{DemSampling, Raster};

    fn dem_from(f: impl Fn(f64, f64) -> f64, nv: usize) -> Raster {
        let mut r = Raster::filled(nv, nv, 1.0, 0.0);
        for j in 0..nv {
            for i in 0..nv {
                r.set_sw(i, j, f(i as f64, j as f64));
            }
        }
        r
    }

    #[test]
    fn flat_dem_collapses() {
        let p = project_raster::<f64>(&Raster::filled(17, 9, 1.0, 5.0), DemSampling::Vertex, 3).unwrap();
        let g = generate_static_grid(&p, 1e-3, Wavelet::Mw, true).unwrap();
        assert_eq!(g.grid.len(), 2);
        assert!(g.z.iter().all(|c| (c.c0 - 5.0).abs() < 1e-13));
    }

    #[test]
    fn zero_eps_refines_fully_and_reproduces_fine_field() {
        let dem = dem_from(|x, y| (x * 0.7).sin() + (y * 0.3).cos() * x, 17);
        let p = project_raster::<f64>(&dem, DemSampling::Vertex, 4).unwrap();
        let g = generate_static_grid(&p, 0.0, Wavelet::Mw, true).unwrap();
        assert_eq!(g.grid.len(), 256);
        for (leaf, z) in g.grid.leaves().iter().zip(&g.z) {
            let want = p.coeffs[p.index(leaf.i as usize, leaf.j as usize)];
            for k in 0..3 {
                assert!((z.as_array()[k] - want.as_array()[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spike_refines_locally_and_conserves_mean() {
        let dem = dem_from(|x, y| if (x, y) == (5.0, 11.0) { 3.0 } else { 0.0 }, 17);
        let p = project_raster::<f64>(&dem, DemSampling::Vertex, 4).unwrap();
        for graded in [false, true] {
            let g = generate_static_grid(&p, 1e-3, Wavelet::Mw, graded).unwrap();
            assert!(g.grid.len() > 1 && g.grid.len() < 256);
            assert_eq!(g.grid.is_graded(), graded || g.grid.is_graded());
            if graded {
                assert!(g.grid.is_graded());
            }
            let mean: f64 = g.grid.leaves().iter().zip(&g.z).map(|(l, z)| z.c0 * 4f64.powi((4 - l.level) as i32)).sum::<f64>() / 256.0;
            let fine_mean: f64 = p.coeffs.iter().map(|c| c.c0).sum::<f64>() / 256.0;
            assert!((mean - fine_mean).abs() <= 1e-12 * fine_mean.abs().max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn planar_dem_collapses_with_mw_not_hw() {
        let dem = dem_from(|x, y| 0.5 * x - 0.25 * y, 9);
        let p = project_raster::<f64>(&dem, DemSampling::Vertex, 3).unwrap();
        assert_eq!(generate_static_grid(&p, 1e-3, Wavelet::Mw, true).unwrap().grid.len(), 1);
        assert!(generate_static_grid(&p, 1e-3, Wavelet::Hw, true).unwrap().grid.len() > 1);
    }

    #[test]
    fn negative_eps_is_rejected() {
        let p = project_raster::<f64>(&Raster::filled(3, 3, 1.0, 0.0), DemSampling::Vertex, 1).unwrap();
        assert!(generate_static_grid(&p, -1.0, Wavelet::Mw, true).is_err());
    }

    #[test]
    fn nug_round_trip() {
        let dem = dem_from(|x, y| (x - 4.0).abs() + 0.1 * y * y, 9);
        let p = project_raster::<f64>(&dem, DemSampling::Vertex, 3).unwrap();
        let g = generate_static_grid(&p, 1e-2, Wavelet::Mw, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.nug");
        write_nug(&g, &path).unwrap();
        let back: NonUniformGrid<f64> = read_nug(&path).unwrap();
        assert_eq!(back.grid.leaves(), g.grid.leaves());
        for (a, b) in back.z.iter().zip(&g.z) {
            for k in 0..3 {
                assert!((a.as_array()[k] - b.as_array()[k]).abs() <= 1e-14 * b.as_array()[k].abs().max(1.0));
            }
        }
        assert!(matches!(parse_nug::<f64>("L 1\nM 1\n", "x"), Err(Error::Parse { .. })));
        assert!(matches!(parse_nug::<f64>("L 1\nM 1\nN 1\ncellsize 1\nxll 0\nyll 0\n0 0 0 1 0 0\n1 0 0 1 0 0\n", "x"), Err(Error::Structure(_))));
    }
}
