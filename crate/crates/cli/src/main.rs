//! gridswing: build transmission-grid models, run fault simulations,
//! spectral analyses and inertia-placement sweeps.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::pick;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: files, formats, arguments. Exit code 2.
    Input(String),
    /// Failure during computation or output. Exit code 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "gridswing", version, about)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse grid CSVs, optionally distribute loads and dispatch, and
    /// write the canonical grid directory.
    Build(BuildArgs),
    /// Simulate one or more simultaneous generator faults and report
    /// per-bus RoCoF and the disturbance magnitude M_b.
    Fault(FaultArgs),
    /// Compute the grid Laplacian's slow modes and optional timescales.
    Spectral(SpectralArgs),
    /// Sweep fault scenarios over inertia-placement levels.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    buses: Option<PathBuf>,
    #[arg(long)]
    lines: Option<PathBuf>,
    #[arg(long)]
    generators: Option<PathBuf>,
    /// towns.csv (country,lat,lon,population); requires --national-loads
    /// and --bus-countries.
    #[arg(long)]
    towns: Option<PathBuf>,
    /// national_loads.csv (country,load_MW).
    #[arg(long)]
    national_loads: Option<PathBuf>,
    /// bus-to-country map CSV (bus_id,country).
    #[arg(long)]
    bus_countries: Option<PathBuf>,
    /// Load frequency sensitivity alpha (default 1.5).
    #[arg(long)]
    alpha: Option<f64>,
    /// Generator damping ratio gamma = d/m in 1/s (default 0.5).
    #[arg(long)]
    gamma: Option<f64>,
    /// Town-to-bus assignment radius, km (default 50).
    #[arg(long)]
    d_max_km: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FaultArgs {
    /// Canonical grid directory (from `gridswing build`).
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Faulted generator bus id; repeat for simultaneous faults.
    #[arg(long)]
    bus: Vec<u64>,
    /// Lost power per faulted bus, W (p.u. for per-unit grids); repeat to
    /// match --bus.
    #[arg(long)]
    delta_p: Vec<f64>,
    #[arg(long)]
    t_sim: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    n_sim: Option<usize>,
    /// Integrator step bound, s.
    #[arg(long)]
    h: Option<f64>,
    /// nonlinear | linearized.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectralArgs {
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Number of slow modes to retain.
    #[arg(long)]
    modes: Option<usize>,
    /// Homogeneous inertia for the timescale report.
    #[arg(long)]
    m: Option<f64>,
    /// Homogeneous damping for the timescale report.
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    grid: Option<PathBuf>,
    /// uniform | fiedler | non_fiedler.
    #[arg(long)]
    procedure: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated M_sys targets.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<f64>,
    /// Interpret --levels as fractions of the grid's current M_sys.
    #[arg(long)]
    levels_relative: bool,
    /// Fault scenario CSV: fault_bus,delta_p.
    #[arg(long)]
    faults: Option<PathBuf>,
    /// Floor on u2^2 for the non_fiedler weights.
    #[arg(long)]
    epsilon_floor: Option<f64>,
    /// nonlinear | linearized.
    #[arg(long)]
    kind: Option<String>,
    /// Worker threads for the fault batch.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Build(a) => commands::run_build(config::BuildSection {
            buses: pick(a.buses, file.build.buses),
            lines: pick(a.lines, file.build.lines),
            generators: pick(a.generators, file.build.generators),
            towns: pick(a.towns, file.build.towns),
            national_loads: pick(a.national_loads, file.build.national_loads),
            bus_countries: pick(a.bus_countries, file.build.bus_countries),
            alpha: pick(a.alpha, file.build.alpha),
            gamma: pick(a.gamma, file.build.gamma),
            d_max_km: pick(a.d_max_km, file.build.d_max_km),
            out: pick(a.out, file.build.out),
        }),
        Command::Fault(a) => commands::run_fault(config::FaultSection {
            grid: pick(a.grid, file.fault.grid),
            bus: pick(
                if a.bus.is_empty() { None } else { Some(a.bus) },
                file.fault.bus,
            ),
            delta_p: pick(
                if a.delta_p.is_empty() {
                    None
                } else {
                    Some(a.delta_p)
                },
                file.fault.delta_p,
            ),
            t_sim: pick(a.t_sim, file.fault.t_sim),
            dt: pick(a.dt, file.fault.dt),
            n_sim: pick(a.n_sim, file.fault.n_sim),
            h: pick(a.h, file.fault.h),
            kind: pick(a.kind, file.fault.kind),
            out: pick(a.out, file.fault.out),
        }),
        Command::Spectral(a) => commands::run_spectral(config::SpectralSection {
            grid: pick(a.grid, file.spectral.grid),
            modes: pick(a.modes, file.spectral.modes),
            m: pick(a.m, file.spectral.m),
            d: pick(a.d, file.spectral.d),
            dt: pick(a.dt, file.spectral.dt),
            out: pick(a.out, file.spectral.out),
        }),
        Command::Sweep(a) => commands::run_sweep(config::SweepSection {
            grid: pick(a.grid, file.sweep.grid),
            procedure: pick(a.procedure, file.sweep.procedure),
            seed: pick(a.seed, file.sweep.seed),
            levels: pick(
                if a.levels.is_empty() {
                    None
                } else {
                    Some(a.levels)
                },
                file.sweep.levels,
            ),
            levels_relative: pick(
                if a.levels_relative { Some(true) } else { None },
                file.sweep.levels_relative,
            ),
            faults: pick(a.faults, file.sweep.faults),
            epsilon_floor: pick(a.epsilon_floor, file.sweep.epsilon_floor),
            kind: pick(a.kind, file.sweep.kind),
            workers: pick(a.workers, file.sweep.workers),
            out: pick(a.out, file.sweep.out),
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Input(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}
