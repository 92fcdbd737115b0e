//! Desk-scale synthetic scenarios: a sloping valley with depressions, a 1D
//! dam break with its exact solution, and a lake at rest over rough ground.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster_io::{
    write_ascii_grid, write_hydrograph, BoundaryKind, Boundaries, Hydrograph, InflowSpec, InitialCondition, Manning, Raster,
    ScenarioConfig, SolverKind,
};

/// DEM, configuration and inflow hydrographs of a scenario. Paths in
/// `config` are file names relative to the directory the scenario is emitted to.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub dem: Raster,
    pub config: ScenarioConfig,
    pub hydrographs: Vec<(String, Hydrograph)>,
    /// Element-valued initial depth, written as `initial_depth.asc` when present.
    pub initial_depth: Option<Raster>,
}

pub const SCENARIO_NAMES: [&str; 3] = ["valley", "dambreak", "lake"];

/// Scenario by name with its default size.
pub fn by_name(name: &str) -> Result<Scenario> {
    match name {
        "valley" => Ok(make_valley(128, 32, 3)),
        "dambreak" => make_dambreak_1d(400),
        "lake" => Ok(make_lake_at_rest(32, 7)),
        _ => Err(Error::config(format!("unknown scenario `{name}` (expected one of {})", SCENARIO_NAMES.join(", ")))),
    }
}

/// Writes DEM, hydrographs and `scenario.cfg` into `dir`; returns the config path.
pub fn emit(s: &Scenario, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_ascii_grid(&s.dem, dir.join(&s.config.dem_path))?;
    for (name, h) in &s.hydrographs {
        write_hydrograph(h, dir.join(name))?;
    }
    if let Some(r) = &s.initial_depth {
        write_ascii_grid(r, dir.join("initial_depth.asc"))?;
    }
    let path = dir.join("scenario.cfg");
    let text = format!("# scenario: {}\n{}", s.name, s.config.to_config_string());
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Cell size of the valley DEM in metres.
pub const VALLEY_CELLSIZE: f64 = 10.0;
/// Down-valley bed slope.
pub const VALLEY_SLOPE: f64 = 0.005;
pub const VALLEY_MANNING: f64 = 0.04;
/// Height of the valley sides above the thalweg.
pub const VALLEY_RISE: f64 = 1.0;

/// Valley bed: down-valley slope, parabolic cross-section and three
/// sinusoidal depressions along the thalweg. `x`, `y` in metres.
pub fn valley_elevation(x: f64, y: f64, length: f64, width: f64) -> f64 {
    let half = 0.5 * width;
    let across = (y - half) / half;
    let mut z = VALLEY_SLOPE * (length - x) + VALLEY_RISE * across * across;
    let w = 0.12 * length;
    for c in valley_depressions(length) {
        let s = x - (c - 0.5 * w);
        if (0.0..=w).contains(&s) {
            z -= 0.4 * (PI * s / w).sin().powi(2) * (1.0 - across * across).max(0.0);
        }
    }
    z
}

/// Thalweg positions (m) of the depression centres.
pub fn valley_depressions(length: f64) -> [f64; 3] {
    [0.3 * length, 0.55 * length, 0.8 * length]
}

/// Sloping valley of `length x width` elements (10 m) fed by a triangular
/// inflow hydrograph at its upstream (west) end, open downstream.
pub fn make_valley(length: usize, width: usize, max_level: u32) -> Scenario {
    let cs = VALLEY_CELLSIZE;
    let (lx, ly) = (length as f64 * cs, width as f64 * cs);
    let mut dem = Raster::filled(length + 1, width + 1, cs, 0.0);
    for j in 0..=width {
        for i in 0..=length {
            dem.set_sw(i, j, valley_elevation(i as f64 * cs, j as f64 * cs, lx, ly));
        }
    }
    // shift the geo-reference so element (0, 0) spans [0, cs]²
    dem.xll = -0.5 * cs;
    dem.yll = -0.5 * cs;
    let t_peak = 0.3125 * lx;
    let q_peak = 0.125 * ly;
    let hyd = Hydrograph::new(vec![(0.0, 0.0), (t_peak, q_peak), (2.0 * t_peak, 0.0)]).expect("increasing times");
    let mid = width / 2;
    let mut cfg = ScenarioConfig::new("dem.asc", SolverKind::Dg2, 10.0 * t_peak);
    cfg.max_level = Some(max_level);
    // fine output spacing also keeps the dry-domain first step short
    cfg.output_interval = 0.1 * t_peak;
    cfg.manning = Manning::Uniform(VALLEY_MANNING);
    cfg.boundaries = Boundaries { east: BoundaryKind::Open, ..Boundaries::default() };
    cfg.inflows = vec![InflowSpec { hydrograph: "inflow.csv".into(), i0: 0, j0: mid - 1, i1: 1, j1: mid }];
    cfg.gauges = valley_depressions(lx).iter().map(|&x| (x, 0.5 * ly)).collect();
    Scenario { name: "valley".into(), dem, config: cfg, hydrographs: vec![("inflow.csv".into(), hyd)], initial_depth: None }
}

/// Domain length of the 1D dam break (m) and its dam position.
pub const DAMBREAK_LENGTH: f64 = 100.0;
pub const DAMBREAK_DEPTHS: (f64, f64) = (1.0, 0.5);

/// Flat frictionless channel, 1 m upstream and 0.5 m downstream of a dam at
/// mid-length; reflective side walls, open ends.
pub fn make_dambreak_1d(cells: usize) -> Result<Scenario> {
    if cells < 100 {
        return Err(Error::config(format!("the dam break needs at least 100 cells, got {cells}")));
    }
    let rows = 4;
    let cs = DAMBREAK_LENGTH / cells as f64;
    let mut dem = Raster::filled(cells + 1, rows + 1, cs, 0.0);
    dem.xll = -0.5 * cs;
    dem.yll = -0.5 * cs;
    let mut h0 = Raster::filled(cells, rows, cs, 0.0);
    for j in 0..rows {
        for i in 0..cells {
            h0.set_sw(i, j, if i < cells / 2 { DAMBREAK_DEPTHS.0 } else { DAMBREAK_DEPTHS.1 });
        }
    }
    let mut cfg = ScenarioConfig::new("dem.asc", SolverKind::Dg2, 10.0);
    cfg.output_interval = 5.0;
    cfg.boundaries = Boundaries { east: BoundaryKind::Open, west: BoundaryKind::Open, ..Boundaries::default() };
    cfg.initial = InitialCondition::DepthRaster("initial_depth.asc".into());
    let y = 0.5 * rows as f64 * cs;
    cfg.gauges = vec![(0.4 * DAMBREAK_LENGTH, y), (0.6 * DAMBREAK_LENGTH, y)];
    Ok(Scenario { name: "dambreak".into(), dem, config: cfg, hydrographs: vec![], initial_depth: Some(h0) })
}

/// Exact depth and velocity of the frictionless flat-bed dam break with
/// `h_left ≥ h_right > 0`, dam at `x = 0`, at time `t > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stoker {
    pub h_left: f64,
    pub h_right: f64,
    pub g: f64,
    /// Depth between rarefaction and shock.
    pub h_star: f64,
    pub u_star: f64,
    pub shock_speed: f64,
}

impl Stoker {
    pub fn new(h_left: f64, h_right: f64, g: f64) -> Result<Self> {
        if !(h_left >= h_right && h_right > 0.0 && g > 0.0) {
            return Err(Error::Domain(format!("Stoker needs h_left >= h_right > 0, got {h_left}, {h_right}")));
        }
        let cl = (g * h_left).sqrt();
        // u* from the left rarefaction minus u* from the right shock
        let f = |hs: f64| 2.0 * (cl - (g * hs).sqrt()) - (hs - h_right) * (0.5 * g * (hs + h_right) / (hs * h_right)).sqrt();
        let (mut lo, mut hi) = (h_right, h_left);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h_star = 0.5 * (lo + hi);
        let u_star = 2.0 * (cl - (g * h_star).sqrt());
        let shock_speed = if h_star > h_right { h_star * u_star / (h_star - h_right) } else { (g * h_right).sqrt() };
        Ok(Stoker { h_left, h_right, g, h_star, u_star, shock_speed })
    }

    /// `(h, u)` at `x` (m from the dam) and `t` (s).
    pub fn state(&self, x: f64, t: f64) -> (f64, f64) {
        if t <= 0.0 {
            return if x < 0.0 { (self.h_left, 0.0) } else { (self.h_right, 0.0) };
        }
        let xi = x / t;
        let cl = (self.g * self.h_left).sqrt();
        let cs = (self.g * self.h_star).sqrt();
        if xi <= -cl {
            (self.h_left, 0.0)
        } else if xi <= self.u_star - cs {
            let c = (2.0 * cl - xi) / 3.0;
            (c * c / self.g, 2.0 * (cl - c))
        } else if xi < self.shock_speed {
            (self.h_star, self.u_star)
        } else {
            (self.h_right, 0.0)
        }
    }
}

/// Square basin of `size x size` 1 m elements with a smooth random bed plus
/// vertex roughness, filled to half a metre above its highest point.
pub fn make_lake_at_rest(size: usize, seed: u64) -> Scenario {
    let dem = lake_bed(size, seed);
    let top = dem.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lake_scenario("lake", dem, top + 0.5)
}

/// As [`make_lake_at_rest`] but with the surface below the highest ground,
/// leaving dry islands.
pub fn make_island_lake(size: usize, seed: u64) -> Scenario {
    let dem = lake_bed(size, seed);
    let (lo, hi) = dem.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    lake_scenario("island", dem, lo + 0.6 * (hi - lo))
}

fn lake_bed(size: usize, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let bumps: Vec<(f64, f64, f64, f64)> =
        (0..5).map(|_| (rng.gen_range(0.0..s), rng.gen_range(0.0..s), rng.gen_range(-1.0..1.5), rng.gen_range(0.08..0.3) * s)).collect();
    let mut dem = Raster::filled(size + 1, size + 1, 1.0, 0.0);
    for j in 0..=size {
        for i in 0..=size {
            let (x, y) = (i as f64, j as f64);
            let smooth: f64 = bumps.iter().map(|&(bx, by, a, r)| a * (-((x - bx).powi(2) + (y - by).powi(2)) / (r * r)).exp()).sum();
            dem.set_sw(i, j, smooth + rng.gen_range(-0.05..0.05));
        }
    }
    dem.xll = -0.5;
    dem.yll = -0.5;
    dem
}

fn lake_scenario(name: &str, dem: Raster, eta: f64) -> Scenario {
    let size = dem.ncols - 1;
    let mut cfg = ScenarioConfig::new("dem.asc", SolverKind::Dg2, 20.0);
    cfg.output_interval = 10.0;
    cfg.initial = InitialCondition::Surface(eta);
    cfg.gauges = vec![(0.25 * size as f64, 0.5 * size as f64)];
    Scenario { name: name.into(), dem, config: cfg, hydrographs: vec![], initial_depth: None }
}
