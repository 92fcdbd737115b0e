//! Config-driven runs: build the grid, set initial state, step to `end_time`,
//! write rasters, gauge series and stats.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use super::adaptive::AdaptiveSim;
use super::mesh::Mesh;
use super::physics::Consts;
use super::sim::{CellRegion, Scheme, Sim};
use crate::error::{Error, Result};
use crate::field::{project_raster, FlowCoeffs, PlanarCoeffs, ProjectedDem};
use crate::mra::{build_detail_tree, generate_static_grid, read_nug, write_nug, FilterBank, NonUniformGrid};
use crate::quadgrid::{sample_to_raster, QuadGrid};
use crate::raster_io::{
    read_ascii_grid, read_hydrograph, write_ascii_grid, GridMode, InitialCondition, Manning, Raster, ScenarioConfig, SolverKind,
    Wavelet,
};

/// What a finished (or failed) run reports.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub solver: SolverKind,
    pub steps: u64,
    pub t_end: f64,
    /// Seconds spent in the time loop, I/O excluded.
    pub wall_time: f64,
    pub initial_volume: f64,
    pub final_volume: f64,
    pub injected_volume: f64,
    pub leaf_count: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    pub outputs: usize,
    pub output_dir: PathBuf,
}

impl RunSummary {
    /// `|V_end − V_0 − V_in| / max(V_0 + V_in, tiny)`.
    pub fn mass_error(&self) -> f64 {
        let expect = self.initial_volume + self.injected_volume;
        (self.final_volume - expect).abs() / expect.abs().max(f64::MIN_POSITIVE)
    }
}

/// A configured simulation ready to step: fixed-grid or adaptive.
pub enum Engine {
    Fixed(Sim<f64>),
    Adaptive(Box<AdaptiveSim<f64>>),
}

impl Engine {
    pub fn sim(&self) -> &Sim<f64> {
        match self {
            Engine::Fixed(s) => s,
            Engine::Adaptive(a) => &a.sim,
        }
    }

    pub fn sim_mut(&mut self) -> &mut Sim<f64> {
        match self {
            Engine::Fixed(s) => s,
            Engine::Adaptive(a) => &mut a.sim,
        }
    }

    /// One step of length `dt`, followed by re-adaptation for adaptive engines.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        match self {
            Engine::Fixed(s) => s.step(dt),
            Engine::Adaptive(a) => a.step(dt),
        }
    }

    /// One CFL-limited step; returns the step length. A fully dry domain
    /// advances by `fallback`.
    pub fn step_cfl(&mut self, fallback: f64) -> Result<f64> {
        let dt = self.sim().compute_dt().unwrap_or(fallback);
        self.step(dt)?;
        Ok(dt)
    }
}

/// Validates `cfg`, reads its inputs and sets up the initial state without
/// writing anything.
pub fn prepare(cfg: &ScenarioConfig) -> Result<Engine> {
    cfg.validate()?;
    let dem = load_dem(cfg)?;
    build_engine(cfg, &dem)
}

/// Reads the DEM and projects it at the configured level.
pub fn load_dem(cfg: &ScenarioConfig) -> Result<ProjectedDem<f64>> {
    let dem = read_ascii_grid(&cfg.dem_path)?;
    project_raster(&dem, cfg.dem_sampling, cfg.max_level())
}

fn clamp_sample(r: &Raster, i: usize, j: usize) -> f64 {
    r.get_sw(i.min(r.ncols - 1), j.min(r.nrows - 1))
}

fn fine_manning(cfg: &ScenarioConfig, dem: &ProjectedDem<f64>) -> Result<Vec<f64>> {
    match &cfg.manning {
        Manning::Uniform(n) => Ok(vec![*n; dem.nx * dem.ny]),
        Manning::Raster(path) => {
            let r = read_ascii_grid(path)?;
            let mut out = Vec::with_capacity(dem.nx * dem.ny);
            for j in 0..dem.ny {
                for i in 0..dem.nx {
                    let v = clamp_sample(&r, i, j);
                    if r.is_nodata(v) {
                        out.push(0.0);
                    } else if v < 0.0 || !v.is_finite() {
                        return Err(Error::config(format!("{}: negative Manning coefficient {v}", path.display())));
                    } else {
                        out.push(v);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Level-L depth coefficients of the initial condition (inactive elements dry).
///
/// A depth raster with one value per element is taken as piecewise constant;
/// one with the DEM's vertex layout is projected like the topography.
pub(crate) fn fine_depth(cfg: &ScenarioConfig, dem: &ProjectedDem<f64>) -> Result<Vec<PlanarCoeffs<f64>>> {
    let h = match &cfg.initial {
        InitialCondition::Dry => vec![PlanarCoeffs::zero(); dem.nx * dem.ny],
        InitialCondition::Depth(d) => vec![PlanarCoeffs::constant(*d); dem.nx * dem.ny],
        InitialCondition::Surface(eta) => dem.depth_for_surface(*eta),
        InitialCondition::DepthRaster(path) => {
            let r = read_ascii_grid(path)?;
            if (r.ncols, r.nrows) == (dem.active_nx, dem.active_ny) {
                // one value per element: piecewise-constant depth
                let mut h = Vec::with_capacity(dem.nx * dem.ny);
                for j in 0..dem.ny {
                    for i in 0..dem.nx {
                        let v = clamp_sample(&r, i, j);
                        h.push(PlanarCoeffs::constant(if r.is_nodata(v) { 0.0 } else { v.max(0.0) }));
                    }
                }
                return finish_depth(h, dem);
            }
            dem.project_vertex_values(|i, j| {
                let v = clamp_sample(&r, i, j);
                if r.is_nodata(v) {
                    0.0
                } else {
                    v.max(0.0)
                }
            })
        }
    };
    finish_depth(h, dem)
}

fn finish_depth(mut h: Vec<PlanarCoeffs<f64>>, dem: &ProjectedDem<f64>) -> Result<Vec<PlanarCoeffs<f64>>> {
    for (c, &a) in h.iter_mut().zip(&dem.active) {
        if !a {
            *c = PlanarCoeffs::zero();
        }
    }
    Ok(h)
}

fn leaf_values(grid: &QuadGrid, fine: &[PlanarCoeffs<f64>], fb: &FilterBank<f64>) -> Result<Vec<PlanarCoeffs<f64>>> {
    let nx = grid.m << grid.max_level;
    if grid.leaves().iter().all(|l| l.level == grid.max_level) {
        return Ok(grid.leaves().iter().map(|l| fine[(l.j * nx + l.i) as usize]).collect());
    }
    let tree = build_detail_tree(fine, grid.m, grid.n, grid.max_level, fb)?;
    Ok(grid.leaves().iter().map(|l| tree.coeff(*l)).collect())
}

fn static_grid(cfg: &ScenarioConfig, dem: &ProjectedDem<f64>) -> Result<NonUniformGrid<f64>> {
    match cfg.grid_mode {
        GridMode::Uniform => {
            Ok(NonUniformGrid::uniform(dem.max_level, dem.m as u32, dem.n as u32, dem.cellsize, dem.x0, dem.y0, &dem.coeffs))
        }
        GridMode::NonUniform => match &cfg.grid_file {
            Some(path) => {
                let g: NonUniformGrid<f64> = read_nug(path)?;
                let q = &g.grid;
                if (q.max_level, q.m as usize, q.n as usize) != (dem.max_level, dem.m, dem.n) {
                    return Err(Error::config(format!(
                        "{}: grid is L={} {}x{} but the DEM projects to L={} {}x{}",
                        path.display(),
                        q.max_level,
                        q.m,
                        q.n,
                        dem.max_level,
                        dem.m,
                        dem.n
                    )));
                }
                Ok(g)
            }
            None => generate_static_grid(dem, cfg.epsilon, cfg.wavelet, cfg.graded),
        },
    }
}

fn build_engine(cfg: &ScenarioConfig, dem: &ProjectedDem<f64>) -> Result<Engine> {
    let consts = Consts::new(cfg.g, cfg.h_dry);
    let courant = cfg.courant();
    let manning = fine_manning(cfg, dem)?;
    let h = fine_depth(cfg, dem)?;
    let active = Arc::new(dem.active.clone());
    let mut engine = if cfg.solver.is_adaptive() {
        let kind = if cfg.solver == SolverKind::Mwdg2 { Wavelet::Mw } else { Wavelet::Hw };
        let fine = h.into_iter().map(FlowCoeffs::still).collect();
        let mut a = AdaptiveSim::new(dem, kind, cfg.epsilon, consts, courant, cfg.boundaries, fine, manning)?;
        a.adapt_every = cfg.adapt_every as u32;
        Engine::Adaptive(Box::new(a))
    } else {
        let g = static_grid(cfg, dem)?;
        let fb = FilterBank::new(Wavelet::Mw);
        let mut leaf_h = leaf_values(&g.grid, &h, &fb)?;
        if let InitialCondition::Surface(eta) = cfg.initial {
            // submerged leaves get the exact flat surface over their own topography
            let s3 = 3f64.sqrt();
            for (lh, z) in leaf_h.iter_mut().zip(&g.z) {
                if z.c0 + s3 * (z.c1x.abs() + z.c1y.abs()) <= eta {
                    *lh = PlanarCoeffs::new(eta - z.c0, -z.c1x, -z.c1y);
                }
            }
        }
        let fm: Vec<PlanarCoeffs<f64>> = manning.iter().map(|&n| PlanarCoeffs::constant(n)).collect();
        let leaf_n = leaf_values(&g.grid, &fm, &fb)?.iter().map(|c| c.c0).collect();
        let mesh = Mesh::new(&g, &cfg.boundaries, false)?;
        let mut s = Sim::new(mesh, Scheme::of(cfg.solver), consts, courant);
        s.set_depth(leaf_h);
        s.manning = leaf_n;
        Engine::Fixed(s)
    };
    let sim = engine.sim_mut();
    sim.active = Some(active);
    for f in &cfg.inflows {
        let hyd = read_hydrograph(&f.hydrograph)?;
        sim.add_inflow(hyd, CellRegion { i0: f.i0, j0: f.j0, i1: f.i1, j1: f.j1 })?;
    }
    Ok(engine)
}

struct Writer<'a> {
    dir: &'a Path,
    dem: &'a ProjectedDem<f64>,
    gauges: Vec<(fs::File, PathBuf)>,
}

impl Writer<'_> {
    fn fields(&self, sim: &Sim<f64>, index: usize) -> Result<()> {
        let g = &sim.mesh.grid;
        let (nc, nr) = (self.dem.active_nx, self.dem.active_ny);
        let mask = Some(self.dem.active.as_slice());
        let mut h = sample_to_raster(g, &sim.depth_field(), nc, nr, mask);
        for v in h.values.iter_mut() {
            if *v != h.nodata && *v < 0.0 {
                *v = 0.0;
            }
        }
        write_ascii_grid(&h, self.dir.join(format!("h_{index:04}.asc")))?;
        write_ascii_grid(&sample_to_raster(g, &sim.qx_field(), nc, nr, mask), self.dir.join(format!("qx_{index:04}.asc")))?;
        write_ascii_grid(&sample_to_raster(g, &sim.qy_field(), nc, nr, mask), self.dir.join(format!("qy_{index:04}.asc")))?;
        Ok(())
    }

    fn gauges(&mut self, sim: &Sim<f64>, points: &[(f64, f64)]) -> Result<()> {
        for ((file, path), &(x, y)) in self.gauges.iter_mut().zip(points) {
            let (h, eta, u, v) = sim.probe(x, y).unwrap_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN));
            writeln!(file, "{},{},{},{},{}", sim.t, h, eta, u, v).map_err(|e| Error::io(&*path, e))?;
        }
        Ok(())
    }
}

/// Runs the configured scenario, writing outputs under `cfg.output_dir`.
///
/// A numerical blow-up still writes `stats.txt` (with the failure time)
/// before the error is returned.
pub fn run_simulation(cfg: &ScenarioConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dem = load_dem(cfg)?;
    let mut engine = build_engine(cfg, &dem)?;
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, &(x, y)) in cfg.gauges.iter().enumerate() {
        if engine.sim().probe(x, y).is_none() {
            return Err(Error::config(format!("gauge {k} at ({x}, {y}) lies outside the domain")));
        }
    }
    let mut w = Writer { dir, dem: &dem, gauges: Vec::new() };
    for k in 0..cfg.gauges.len() {
        let path = dir.join(format!("gauge_{k}.csv"));
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(f, "t,h,eta,u,v").map_err(|e| Error::io(&path, e))?;
        w.gauges.push((f, path));
    }
    let adaptive = matches!(engine, Engine::Adaptive(_));
    if let Engine::Fixed(s) = &engine {
        if cfg.grid_mode == GridMode::NonUniform {
            write_nug(&NonUniformGrid { grid: s.mesh.grid.clone(), z: s.mesh.z.clone() }, dir.join("grid.nug"))?;
        }
    }

    let v0 = engine.sim().volume();
    let mut out_index = 0usize;
    let snapshot = |engine: &Engine, index: usize, w: &Writer| -> Result<()> {
        w.fields(engine.sim(), index)?;
        if let Engine::Adaptive(a) = engine {
            let s = &a.sim;
            write_nug(&NonUniformGrid { grid: s.mesh.grid.clone(), z: s.mesh.z.clone() }, dir.join(format!("grid_{index:04}.nug")))?;
        }
        Ok(())
    };
    snapshot(&engine, out_index, &w)?;
    w.gauges(engine.sim(), &cfg.gauges)?;
    out_index += 1;

    let mut wall = 0.0;
    let (mut dt_min, mut dt_max) = (f64::INFINITY, 0.0f64);
    let mut failure = None;
    let end = cfg.end_time;
    while engine.sim().t < end {
        let t = engine.sim().t;
        let target = (out_index as f64 * cfg.output_interval).min(end);
        let remaining = target - t;
        let started = Instant::now();
        let dt_cfl = engine.sim().compute_dt();
        let (dt, land) = match dt_cfl {
            Some(dt) if dt < remaining * (1.0 - 1e-12) => (dt, false),
            _ => (remaining, true),
        };
        let res = engine.step(dt);
        wall += started.elapsed().as_secs_f64();
        if let Err(e) = res {
            failure = Some(e);
            break;
        }
        if land {
            engine.sim_mut().t = target;
        }
        dt_min = dt_min.min(dt);
        dt_max = dt_max.max(dt);
        w.gauges(engine.sim(), &cfg.gauges)?;
        if land {
            snapshot(&engine, out_index, &w)?;
            out_index += 1;
        }
    }
    for (f, path) in &mut w.gauges {
        f.flush().map_err(|e| Error::io(&*path, e))?;
    }
    let sim = engine.sim();
    let summary = RunSummary {
        solver: cfg.solver,
        steps: sim.steps,
        t_end: sim.t,
        wall_time: wall,
        initial_volume: v0,
        final_volume: sim.volume(),
        injected_volume: sim.injected,
        leaf_count: sim.mesh.len(),
        dt_min: if dt_min.is_finite() { dt_min } else { 0.0 },
        dt_max,
        outputs: out_index,
        output_dir: dir.to_path_buf(),
    };
    if let Engine::Adaptive(a) = &engine {
        let mut s = String::from("t,leaf_count\n");
        for (t, n) in &a.element_log {
            let _ = writeln!(s, "{t},{n}");
        }
        let p = dir.join("elements.csv");
        fs::write(&p, s).map_err(|e| Error::io(&p, e))?;
    }
    let mut stats = String::new();
    let _ = writeln!(stats, "solver = {}", cfg.solver);
    let _ = writeln!(stats, "status = {}", match &failure {
        None => "completed".to_string(),
        Some(e) => format!("failed: {e}"),
    });
    let _ = writeln!(stats, "steps = {}", summary.steps);
    let _ = writeln!(stats, "t_end = {}", summary.t_end);
    let _ = writeln!(stats, "dt_min = {}", summary.dt_min);
    let _ = writeln!(stats, "dt_max = {}", summary.dt_max);
    let _ = writeln!(stats, "dt_mean = {}", if summary.steps > 0 { summary.t_end / summary.steps as f64 } else { 0.0 });
    let _ = writeln!(stats, "leaves = {}", summary.leaf_count);
    let _ = writeln!(stats, "initial_volume = {}", summary.initial_volume);
    let _ = writeln!(stats, "injected_volume = {}", summary.injected_volume);
    let _ = writeln!(stats, "final_volume = {}", summary.final_volume);
    let _ = writeln!(stats, "mass_error = {:e}", summary.mass_error());
    if !adaptive {
        stats.push_str(&sim.mesh.grid.stats_report());
        if !stats.ends_with('\n') {
            stats.push('\n');
        }
    }
    let _ = writeln!(stats, "wall_time_s = {:.6}", summary.wall_time);
    let p = dir.join("stats.txt");
    fs::write(&p, stats).map_err(|e| Error::io(&p, e))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}
