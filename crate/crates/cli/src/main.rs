use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mwflood::field::project_raster;
use mwflood::metrics::compare_runs;
use mwflood::mra::{generate_static_grid, read_nug, write_nug};
use mwflood::raster_io::{read_ascii_grid, read_config, DemSampling, GridMode, SolverKind, Wavelet, DEFAULT_EPSILON};
use mwflood::scenarios::{by_name, emit, SCENARIO_NAMES};
use mwflood::solver::run_simulation;
use mwflood::Error;

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (",
    env!("CARGO_PKG_NAME"),
    ", ",
    env!("CARGO_PKG_DESCRIPTION"),
    ")"
);

/// Exit codes: 0 ok, 2 configuration or input errors, 3 I/O, 4 numerical blow-up.
#[derive(Parser, Debug)]
#[command(name = "mwflood", version = VERSION, about = "Shallow-water flood modelling on uniform and quadtree grids")]
struct Cli {
    /// Worker threads for the data-parallel loops (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build or inspect static non-uniform grids.
    #[command(subcommand)]
    Grid(GridCommand),
    /// Run a scenario.
    Run(RunArgs),
    /// Compare a run directory against a reference run.
    Compare(CompareArgs),
    /// Built-in synthetic scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Subcommand, Debug)]
enum GridCommand {
    /// Multiresolution analysis of a DEM into a `.nug` grid.
    Generate(GenerateArgs),
    /// Per-level leaf counts of a `.nug` grid.
    Stats {
        #[arg(long)]
        grid: PathBuf,
    },
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    dem: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_level: u32,
    #[arg(long, default_value = "mw")]
    wavelet: String,
    /// Enforce the 2:1 rule (required by the solvers).
    #[arg(long)]
    graded: bool,
    /// `vertex` or `centred` DEM samples.
    #[arg(long, default_value = "vertex")]
    sampling: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    solver: Option<String>,
    /// `uniform` or a `.nug` file.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_level: Option<u32>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    test: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    wet_threshold: f64,
    /// Where to write the CSV report (default: `<test>/report.csv`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum ScenarioCommand {
    /// Write DEM, hydrographs and config of a scenario.
    Emit {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// List scenario names.
    List,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        Error::Numerical { .. } => 4,
        _ => 2,
    }
}

fn usage(msg: String) -> Error {
    Error::Config(vec![msg])
}

fn generate(a: GenerateArgs) -> mwflood::Result<()> {
    let wavelet: Wavelet = a.wavelet.parse().map_err(usage)?;
    let sampling = match a.sampling.to_ascii_lowercase().as_str() {
        "vertex" => DemSampling::Vertex,
        "centred" | "centered" => DemSampling::Centred,
        s => return Err(usage(format!("unknown sampling `{s}` (expected vertex or centred)"))),
    };
    let eps = a.epsilon.unwrap_or(DEFAULT_EPSILON);
    let dem = read_ascii_grid(&a.dem)?;
    let p = project_raster::<f64>(&dem, sampling, a.max_level)?;
    let g = generate_static_grid(&p, eps, wavelet, a.graded)?;
    write_nug(&g, &a.out)?;
    println!("epsilon = {eps:e}");
    println!("leaves = {}", g.grid.len());
    print!("{}", g.grid.stats_report());
    Ok(())
}

fn run(a: RunArgs) -> mwflood::Result<()> {
    let mut cfg = read_config(&a.config)?;
    if let Some(s) = &a.solver {
        cfg.solver = s.parse::<SolverKind>().map_err(usage)?;
    }
    match a.grid.as_deref() {
        None => {}
        Some("uniform") => {
            cfg.grid_mode = GridMode::Uniform;
            cfg.grid_file = None;
        }
        Some(path) => {
            cfg.grid_mode = GridMode::NonUniform;
            cfg.grid_file = Some(PathBuf::from(path));
        }
    }
    if let Some(o) = a.out {
        cfg.output_dir = o;
    }
    if let Some(e) = a.epsilon {
        cfg.epsilon = e;
    }
    if a.max_level.is_some() {
        cfg.max_level = a.max_level;
    }
    let s = run_simulation(&cfg)?;
    println!(
        "{}: {} steps to t = {} s, {} leaves, wall {:.3} s, mass error {:e}",
        cfg.solver,
        s.steps,
        s.t_end,
        s.leaf_count,
        s.wall_time,
        s.mass_error()
    );
    println!("outputs in {}", s.output_dir.display());
    Ok(())
}

fn compare(a: CompareArgs) -> mwflood::Result<()> {
    let report = compare_runs(&a.test, &a.reference, a.wet_threshold)?;
    let path = a.report.unwrap_or_else(|| a.test.join("report.csv"));
    std::fs::write(&path, report.to_csv()).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    print!("{}", report.to_text());
    Ok(())
}

fn dispatch(cli: Cli) -> mwflood::Result<()> {
    match cli.command {
        Command::Grid(GridCommand::Generate(a)) => generate(a),
        Command::Grid(GridCommand::Stats { grid }) => {
            let g = read_nug::<f64>(&grid)?;
            println!("leaves = {}", g.grid.len());
            print!("{}", g.grid.stats_report());
            Ok(())
        }
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Scenario(ScenarioCommand::Emit { name, out }) => {
            let p = emit(&by_name(&name)?, &out)?;
            println!("{}", p.display());
            Ok(())
        }
        Command::Scenario(ScenarioCommand::List) => {
            for n in SCENARIO_NAMES {
                println!("{n}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global() {
            eprintln!("mwflood: cannot set up {k} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mwflood: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
