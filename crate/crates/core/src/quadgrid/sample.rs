use super::grid::QuadGrid;
use crate::field::PlanarCoeffs;
use crate::raster_io::Raster;
use crate::real::Real;

/// Evaluates a leaf field at every level-L cell centre.
///
/// The raster covers the south-west `ncols x nrows` fine cells; cells where
/// `active` (row-major, south first, full fine extent) is false get nodata.
pub fn sample_to_raster<T: Real>(
    grid: &QuadGrid,
    field: &[PlanarCoeffs<T>],
    ncols: usize,
    nrows: usize,
    active: Option<&[bool]>,
) -> Raster {
    let (fnx, _) = grid.fine_dims();
    let fnx = fnx as usize;
    let nodata = -9999.0;
    let mut r = Raster {
        ncols,
        nrows,
        xll: grid.x0,
        yll: grid.y0,
        cellsize: grid.cellsize,
        nodata,
        values: vec![nodata; ncols * nrows],
    };
    for (k, leaf) in grid.leaves().iter().enumerate() {
        let s = leaf.span(grid.max_level) as usize;
        let (i0, j0) = (leaf.i as usize * s, leaf.j as usize * s);
        let c = &field[k];
        let flat = c.c1x == T::zero() && c.c1y == T::zero();
        for b in j0..(j0 + s).min(nrows) {
            for a in i0..(i0 + s).min(ncols) {
                if active.is_some_and(|m| !m[b * fnx + a]) {
                    continue;
                }
                let v = if flat {
                    c.c0
                } else {
                    let xi = (2.0 * (a - i0) as f64 + 1.0) / s as f64 - 1.0;
                    let eta = (2.0 * (b - j0) as f64 + 1.0) / s as f64 - 1.0;
                    c.at_local(T::lit(xi), T::lit(eta))
                };
                r.set_sw(a, b, v.as_f64());
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadgrid::FlagTree;

    #[test]
    fn constant_field() {
        let g = QuadGrid::from_flags(&FlagTree::new(2, 1, 1), 1.0, 0.0, 0.0);
        let r = sample_to_raster(&g, &[PlanarCoeffs::constant(3.5f64)], 4, 4, None);
        assert!(r.values.iter().all(|&v| v == 3.5));
    }

    #[test]
    fn single_leaf_plane() {
        // z = 0.1 x over a 4x4 block of unit cells; coarse leaf c1x = 0.1*4/(2√3)
        let g = QuadGrid::from_flags(&FlagTree::new(2, 1, 1), 1.0, 0.0, 0.0);
        let c = PlanarCoeffs::new(0.2f64, 0.4 / (2.0 * 3f64.sqrt()), 0.0);
        let r = sample_to_raster(&g, &[c], 4, 4, None);
        for j in 0..4 {
            for i in 0..4 {
                assert!((r.get_sw(i, j) - 0.1 * (i as f64 + 0.5)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn refined_grid_gives_averages_and_crops() {
        let g = QuadGrid::uniform(1, 1, 1, 2.0, 10.0, 20.0);
        let field: Vec<PlanarCoeffs<f64>> = (0..4).map(|k| PlanarCoeffs::new(k as f64, 0.0, 0.0)).collect();
        let mut active = vec![true; 4];
        active[3] = false;
        let r = sample_to_raster(&g, &field, 2, 2, Some(&active));
        let vals: Vec<f64> = g.leaves().iter().map(|l| r.get_sw(l.i as usize, l.j as usize)).collect();
        assert_eq!(vals, vec![0.0, 1.0, 2.0, -9999.0]);
        assert_eq!((r.xll, r.yll, r.cellsize), (10.0, 20.0, 2.0));
        let cropped = sample_to_raster(&g, &field, 1, 2, None);
        assert_eq!(cropped.ncols, 1);
    }
}
