use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Dg2,
    Fv1,
    Acc,
    Mwdg2,
    Hwfv1,
}

impl SolverKind {
    /// Courant number used when the configuration does not override it.
    pub fn default_courant(self) -> f64 {
        match self {
            SolverKind::Dg2 | SolverKind::Mwdg2 => 0.33,
            SolverKind::Fv1 | SolverKind::Hwfv1 => 0.5,
            SolverKind::Acc => 0.7,
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, SolverKind::Mwdg2 | SolverKind::Hwfv1)
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Dg2 => "dg2",
            SolverKind::Fv1 => "fv1",
            SolverKind::Acc => "acc",
            SolverKind::Mwdg2 => "mwdg2",
            SolverKind::Hwfv1 => "hwfv1",
        }
    }
}

impl FromStr for SolverKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dg2" => Ok(SolverKind::Dg2),
            "fv1" => Ok(SolverKind::Fv1),
            "acc" => Ok(SolverKind::Acc),
            "mwdg2" => Ok(SolverKind::Mwdg2),
            "hwfv1" => Ok(SolverKind::Hwfv1),
            _ => Err(format!("unknown solver `{s}` (expected dg2, fv1, acc, mwdg2 or hwfv1)")),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridMode {
    Uniform,
    NonUniform,
}

/// Wavelet family for the multiresolution analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Wavelet {
    /// Multiwavelets on the planar (average + two slopes) basis.
    Mw,
    /// Haar wavelets on the constant basis.
    Hw,
}

impl FromStr for Wavelet {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mw" => Ok(Wavelet::Mw),
            "hw" => Ok(Wavelet::Hw),
            _ => Err(format!("unknown wavelet `{s}` (expected mw or hw)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    Reflective,
    Open,
}

impl FromStr for BoundaryKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "reflective" | "wall" | "closed" => Ok(BoundaryKind::Reflective),
            "open" | "transmissive" => Ok(BoundaryKind::Open),
            _ => Err(format!("unknown boundary `{s}` (expected reflective or open)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Boundaries {
    pub north: BoundaryKind,
    pub east: BoundaryKind,
    pub south: BoundaryKind,
    pub west: BoundaryKind,
}

impl Boundaries {
    pub fn all(kind: BoundaryKind) -> Self {
        Boundaries { north: kind, east: kind, south: kind, west: kind }
    }
}

impl Default for Boundaries {
    fn default() -> Self {
        Boundaries::all(BoundaryKind::Reflective)
    }
}

/// How DEM samples relate to computational elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DemSampling {
    /// Samples sit on element corners: (n+1)x(m+1) samples cover n x m elements.
    Vertex,
    /// Samples are cell averages; corner values are rebuilt by averaging neighbours.
    Centred,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Manning {
    Uniform(f64),
    Raster(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Dry,
    /// Constant depth over every element.
    Depth(f64),
    /// Constant free-surface elevation; depth is `max(0, eta - z)`.
    Surface(f64),
    /// Depth raster: one value per element, or one per DEM vertex.
    DepthRaster(PathBuf),
}

/// Inflow hydrograph applied uniformly over a rectangle of fine cells.
///
/// Indices are fine-grid columns `i` (west to east) and rows `j` (south to
/// north), both inclusive.
#[derive(Clone, Debug, PartialEq)]
pub struct InflowSpec {
    pub hydrograph: PathBuf,
    pub i0: usize,
    pub j0: usize,
    pub i1: usize,
    pub j1: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub dem_path: PathBuf,
    pub dem_sampling: DemSampling,
    pub epsilon: f64,
    pub max_level: Option<u32>,
    pub solver: SolverKind,
    pub grid_mode: GridMode,
    pub grid_file: Option<PathBuf>,
    pub wavelet: Wavelet,
    pub graded: bool,
    pub end_time: f64,
    pub output_interval: f64,
    pub manning: Manning,
    pub g: f64,
    pub h_dry: f64,
    pub wet_threshold: f64,
    pub courant: Option<f64>,
    pub boundaries: Boundaries,
    pub inflows: Vec<InflowSpec>,
    pub gauges: Vec<(f64, f64)>,
    pub output_dir: PathBuf,
    pub initial: InitialCondition,
    pub adapt_every: usize,
}

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_GRAVITY: f64 = 9.80665;
pub const DEFAULT_H_DRY: f64 = 1e-6;
pub const DEFAULT_WET_THRESHOLD: f64 = 0.01;

impl ScenarioConfig {
    /// A configuration with every default applied.
    pub fn new(dem_path: impl Into<PathBuf>, solver: SolverKind, end_time: f64) -> Self {
        ScenarioConfig {
            dem_path: dem_path.into(),
            dem_sampling: DemSampling::Vertex,
            epsilon: DEFAULT_EPSILON,
            max_level: None,
            solver,
            grid_mode: GridMode::Uniform,
            grid_file: None,
            wavelet: Wavelet::Mw,
            graded: true,
            end_time,
            output_interval: end_time,
            manning: Manning::Uniform(0.0),
            g: DEFAULT_GRAVITY,
            h_dry: DEFAULT_H_DRY,
            wet_threshold: DEFAULT_WET_THRESHOLD,
            courant: None,
            boundaries: Boundaries::default(),
            inflows: Vec::new(),
            gauges: Vec::new(),
            output_dir: PathBuf::from("out"),
            initial: InitialCondition::Dry,
            adapt_every: 1,
        }
    }

    pub fn courant(&self) -> f64 {
        self.courant.unwrap_or_else(|| self.solver.default_courant())
    }

    pub fn max_level(&self) -> u32 {
        self.max_level.unwrap_or(0)
    }

    /// Checks cross-field rules, returning every violation at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.epsilon >= 0.0) {
            errs.push(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.end_time >= 0.0) {
            errs.push(format!("end_time must be >= 0, got {}", self.end_time));
        }
        if !(self.output_interval > 0.0) {
            errs.push(format!("output_interval must be > 0, got {}", self.output_interval));
        }
        if !(self.g > 0.0) {
            errs.push("g must be positive".into());
        }
        if !(self.h_dry > 0.0) {
            errs.push("h_dry must be positive".into());
        }
        if !(self.wet_threshold >= 0.0) {
            errs.push("wet_threshold must be >= 0".into());
        }
        if let Some(c) = self.courant {
            if !(c > 0.0 && c <= 1.0) {
                errs.push(format!("courant must lie in (0, 1], got {c}"));
            }
        }
        if let Manning::Uniform(n) = self.manning {
            if !(n >= 0.0) {
                errs.push(format!("manning must be >= 0, got {n}"));
            }
        }
        let needs_level = self.solver.is_adaptive() || self.grid_mode == GridMode::NonUniform;
        if needs_level && self.max_level.is_none() && self.grid_file.is_none() {
            errs.push(format!("solver {} on a non-uniform grid requires max_level", self.solver));
        }
        if self.grid_mode == GridMode::NonUniform && self.solver.is_adaptive() {
            errs.push("grid_mode = nonuniform applies to dg2, fv1 and acc only".into());
        }
        if self.adapt_every == 0 {
            errs.push("adapt_every must be >= 1".into());
        }
        for inflow in &self.inflows {
            if inflow.i0 > inflow.i1 || inflow.j0 > inflow.j1 {
                errs.push(format!("inflow region {} {} {} {} is empty", inflow.i0, inflow.j0, inflow.i1, inflow.j1));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Serialises to the `key = value` format accepted by [`read_config`].
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let p = |p: &Path| p.display().to_string();
        let _ = writeln!(s, "dem_path = {}", p(&self.dem_path));
        let _ = writeln!(
            s,
            "dem_sampling = {}",
            match self.dem_sampling {
                DemSampling::Vertex => "vertex",
                DemSampling::Centred => "centred",
            }
        );
        let _ = writeln!(s, "solver = {}", self.solver);
        let _ = writeln!(
            s,
            "grid_mode = {}",
            match self.grid_mode {
                GridMode::Uniform => "uniform",
                GridMode::NonUniform => "nonuniform",
            }
        );
        if let Some(g) = &self.grid_file {
            let _ = writeln!(s, "grid_file = {}", p(g));
        }
        let _ = writeln!(s, "epsilon = {:?}", self.epsilon);
        if let Some(l) = self.max_level {
            let _ = writeln!(s, "max_level = {l}");
        }
        let _ = writeln!(s, "wavelet = {}", if self.wavelet == Wavelet::Mw { "mw" } else { "hw" });
        let _ = writeln!(s, "graded = {}", self.graded);
        let _ = writeln!(s, "end_time = {:?}", self.end_time);
        let _ = writeln!(s, "output_interval = {:?}", self.output_interval);
        match &self.manning {
            Manning::Uniform(n) => {
                let _ = writeln!(s, "manning = {n:?}");
            }
            Manning::Raster(path) => {
                let _ = writeln!(s, "manning = {}", p(path));
            }
        }
        let _ = writeln!(s, "g = {:?}", self.g);
        let _ = writeln!(s, "h_dry = {:?}", self.h_dry);
        let _ = writeln!(s, "wet_threshold = {:?}", self.wet_threshold);
        if let Some(c) = self.courant {
            let _ = writeln!(s, "courant = {c:?}");
        }
        let b = |k: BoundaryKind| if k == BoundaryKind::Open { "open" } else { "reflective" };
        let _ = writeln!(s, "boundary_north = {}", b(self.boundaries.north));
        let _ = writeln!(s, "boundary_east = {}", b(self.boundaries.east));
        let _ = writeln!(s, "boundary_south = {}", b(self.boundaries.south));
        let _ = writeln!(s, "boundary_west = {}", b(self.boundaries.west));
        for f in &self.inflows {
            let _ = writeln!(s, "inflow = {} @ {} {} {} {}", p(&f.hydrograph), f.i0, f.j0, f.i1, f.j1);
        }
        for (x, y) in &self.gauges {
            let _ = writeln!(s, "gauge = {x:?} {y:?}");
        }
        let _ = writeln!(s, "output_dir = {}", p(&self.output_dir));
        match &self.initial {
            InitialCondition::Dry => {}
            InitialCondition::Depth(h) => {
                let _ = writeln!(s, "initial_depth = {h:?}");
            }
            InitialCondition::Surface(eta) => {
                let _ = writeln!(s, "initial_surface = {eta:?}");
            }
            InitialCondition::DepthRaster(path) => {
                let _ = writeln!(s, "initial_depth = {}", p(path));
            }
        }
        let _ = writeln!(s, "adapt_every = {}", self.adapt_every);
        s
    }
}

/// Reads a `key = value` scenario file. Relative paths resolve against the
/// file's directory.
pub fn read_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base)
}

pub(crate) fn parse_config(text: &str, base: &Path) -> Result<ScenarioConfig> {
    let mut errs: Vec<String> = Vec::new();
    let mut cfg = ScenarioConfig::new(PathBuf::new(), SolverKind::Dg2, 0.0);
    let mut have_dem = false;
    let mut have_end = false;
    let mut have_interval = false;
    let resolve = |v: &str| {
        let p = PathBuf::from(v);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };

    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errs.push(format!("line {}: expected `key = value`, found `{line}`", no + 1));
            continue;
        };
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        let at = |msg: String| format!("line {}: {msg}", no + 1);
        macro_rules! num {
            () => {
                match value.parse::<f64>() {
                    Ok(v) if v.is_finite() => Some(v),
                    _ => {
                        errs.push(at(format!("`{key}` needs a finite number, found `{value}`")));
                        None
                    }
                }
            };
        }
        macro_rules! parsed {
            ($t:ty) => {
                match value.parse::<$t>() {
                    Ok(v) => Some(v),
                    Err(e) => {
                        errs.push(at(format!("`{key}`: {e}")));
                        None
                    }
                }
            };
        }
        match key.as_str() {
            "dem_path" => {
                cfg.dem_path = resolve(value);
                have_dem = true;
            }
            "dem_sampling" => match value.to_ascii_lowercase().as_str() {
                "vertex" => cfg.dem_sampling = DemSampling::Vertex,
                "centred" | "centered" => cfg.dem_sampling = DemSampling::Centred,
                _ => errs.push(at(format!("dem_sampling must be vertex or centred, found `{value}`"))),
            },
            "epsilon" => {
                if let Some(v) = num!() {
                    cfg.epsilon = v;
                }
            }
            "max_level" => match value.parse::<u32>() {
                Ok(l) if l <= 20 => cfg.max_level = Some(l),
                _ => errs.push(at(format!("max_level must be an integer in 0..=20, found `{value}`"))),
            },
            "solver" => {
                if let Some(s) = parsed!(SolverKind) {
                    cfg.solver = s;
                }
            }
            "grid_mode" => match value.to_ascii_lowercase().as_str() {
                "uniform" => cfg.grid_mode = GridMode::Uniform,
                "nonuniform" | "non-uniform" => cfg.grid_mode = GridMode::NonUniform,
                _ => errs.push(at(format!("grid_mode must be uniform or nonuniform, found `{value}`"))),
            },
            "grid_file" => cfg.grid_file = Some(resolve(value)),
            "wavelet" => {
                if let Some(w) = parsed!(Wavelet) {
                    cfg.wavelet = w;
                }
            }
            "graded" => match value {
                "true" | "yes" | "1" => cfg.graded = true,
                "false" | "no" | "0" => cfg.graded = false,
                _ => errs.push(at(format!("graded must be true or false, found `{value}`"))),
            },
            "end_time" => {
                if let Some(v) = num!() {
                    cfg.end_time = v;
                    have_end = true;
                }
            }
            "output_interval" => {
                if let Some(v) = num!() {
                    cfg.output_interval = v;
                    have_interval = true;
                }
            }
            "manning" => match value.parse::<f64>() {
                Ok(v) => cfg.manning = Manning::Uniform(v),
                Err(_) => cfg.manning = Manning::Raster(resolve(value)),
            },
            "g" => {
                if let Some(v) = num!() {
                    cfg.g = v;
                }
            }
            "h_dry" => {
                if let Some(v) = num!() {
                    cfg.h_dry = v;
                }
            }
            "wet_threshold" => {
                if let Some(v) = num!() {
                    cfg.wet_threshold = v;
                }
            }
            "courant" => {
                if let Some(v) = num!() {
                    cfg.courant = Some(v);
                }
            }
            "boundary" | "boundaries" => {
                if let Some(b) = parsed!(BoundaryKind) {
                    cfg.boundaries = Boundaries::all(b);
                }
            }
            "boundary_north" | "boundary_east" | "boundary_south" | "boundary_west" => {
                if let Some(b) = parsed!(BoundaryKind) {
                    match &key[9..] {
                        "north" => cfg.boundaries.north = b,
                        "east" => cfg.boundaries.east = b,
                        "south" => cfg.boundaries.south = b,
                        _ => cfg.boundaries.west = b,
                    }
                }
            }
            "inflow" => match parse_inflow(value) {
                Some((file, [i0, j0, i1, j1])) => {
                    cfg.inflows.push(InflowSpec { hydrograph: resolve(file), i0, j0, i1, j1 })
                }
                None => errs.push(at(format!("inflow must look like `file.csv @ i0 j0 i1 j1`, found `{value}`"))),
            },
            "gauge" => {
                let xy: Vec<f64> = value.split_whitespace().filter_map(|t| t.parse().ok()).collect();
                if xy.len() == 2 && value.split_whitespace().count() == 2 {
                    cfg.gauges.push((xy[0], xy[1]));
                } else {
                    errs.push(at(format!("gauge must be `x y`, found `{value}`")));
                }
            }
            "output_dir" => cfg.output_dir = resolve(value),
            "initial_depth" => match value.parse::<f64>() {
                Ok(v) if v >= 0.0 => cfg.initial = InitialCondition::Depth(v),
                Ok(v) => errs.push(at(format!("initial_depth must be >= 0, found {v}"))),
                Err(_) => cfg.initial = InitialCondition::DepthRaster(resolve(value)),
            },
            "initial_surface" => {
                if let Some(v) = num!() {
                    cfg.initial = InitialCondition::Surface(v);
                }
            }
            "adapt_every" => {
                if let Some(k) = parsed!(usize) {
                    cfg.adapt_every = k;
                }
            }
            _ => errs.push(at(format!("unknown key `{key}`"))),
        }
    }

    if !have_dem {
        errs.push("missing required key `dem_path`".into());
    }
    if !have_end {
        errs.push("missing required key `end_time`".into());
    }
    if !have_interval {
        cfg.output_interval = if cfg.end_time > 0.0 { cfg.end_time } else { 1.0 };
    }
    if let Err(Error::Config(more)) = cfg.validate() {
        errs.extend(more);
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

fn parse_inflow(value: &str) -> Option<(&str, [usize; 4])> {
    let (file, region) = value.split_once('@')?;
    let idx: Vec<usize> = region.split_whitespace().map(|t| t.parse().ok()).collect::<Option<_>>()?;
    let file = file.trim();
    if file.is_empty() || idx.len() != 4 {
        return None;
    }
    Some((file, [idx[0], idx[1], idx[2], idx[3]]))
}
