//! Subcommand implementations: build, fault, spectral, sweep.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use gridswing::dispatch;
use gridswing::dynamics::{
    self, DynamicsKind, FaultScenario, RocofReport,
};
use gridswing::grid::{self, GridModel};
use gridswing::ingest::{
    self, AssemblyConfig, DampingConfig, DampingRule, LoadDistributionConfig, TownRecord,
};
use gridswing::io as gio;
use gridswing::placement::{self, PlacementProcedure, ProcedureKind};
use gridswing::spectral::{build_laplacian, mode_timescale_report, slow_modes, HomogeneousParams};

use crate::config::{self, BuildSection, FaultSection, SpectralSection, SweepSection};
use crate::CliError;

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn classify(e: gridswing::Error) -> CliError {
    use gridswing::Error as E;
    match e {
        E::Parse { .. }
        | E::InvalidArgument(_)
        | E::UnknownBus(_)
        | E::NoDefaultReactance(_)
        | E::EmptyGrid
        | E::FaultPrecondition(_)
        | E::MissingTechnology(_)
        | E::UnbalancedInjections { .. }
        | E::Csv(_) => CliError::Input(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("create {}: {e}", dir.display())))
}

/// Writes manifest.json listing every artifact with its SHA-256 digest.
fn write_manifest(out_dir: &Path, files: &[PathBuf]) -> Result<(), CliError> {
    let mut entries = BTreeMap::new();
    for path in files {
        let data = std::fs::read(path)
            .map_err(|e| CliError::Runtime(format!("read {}: {e}", path.display())))?;
        let digest = Sha256::digest(&data);
        let name = path
            .strip_prefix(out_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        entries.insert(name, format!("{digest:x}"));
    }
    let doc = serde_json::json!({ "files": entries });
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Runtime(format!("manifest serialization: {e}")))?;
    std::fs::write(out_dir.join("manifest.json"), text)
        .map_err(|e| CliError::Runtime(format!("write manifest: {e}")))?;
    Ok(())
}

fn read_grid(dir: &Path) -> Result<GridModel, CliError> {
    gio::read_grid_dir(dir).map_err(classify)
}

fn parse_kind(s: Option<&str>) -> Result<DynamicsKind, CliError> {
    match s.unwrap_or("nonlinear") {
        "nonlinear" => Ok(DynamicsKind::Nonlinear),
        "linearized" => Ok(DynamicsKind::Linearized),
        other => Err(CliError::Input(format!(
            "kind must be nonlinear or linearized, got {other:?}"
        ))),
    }
}

// ---------------------------------------------------------------- build

fn read_towns(path: &Path) -> Result<Vec<TownRecord>, CliError> {
    let mut out = Vec::new();
    let mut reader = csv::Reader::from_path(path).map_err(input)?;
    for rec in reader.records() {
        let rec = rec.map_err(input)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| {
            rec.get(i).ok_or_else(|| {
                CliError::Input(format!("{}:{line}: short record", path.display()))
            })
        };
        let bad = |field: &str| {
            CliError::Input(format!("{}:{line}: invalid {field}", path.display()))
        };
        out.push(TownRecord {
            country: get(0)?.trim().to_string(),
            position: (
                get(1)?.trim().parse().map_err(|_| bad("lat"))?,
                get(2)?.trim().parse().map_err(|_| bad("lon"))?,
            ),
            population: get(3)?.trim().parse().map_err(|_| bad("population"))?,
        });
    }
    Ok(out)
}

fn read_national_loads(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let mut out = BTreeMap::new();
    let mut reader = csv::Reader::from_path(path).map_err(input)?;
    for rec in reader.records() {
        let rec = rec.map_err(input)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let country = rec
            .get(0)
            .ok_or_else(|| CliError::Input(format!("{}:{line}: short record", path.display())))?
            .trim()
            .to_string();
        let mw: f64 = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::Input(format!("{}:{line}: invalid load_MW", path.display())))?;
        out.insert(country, mw * 1e6);
    }
    Ok(out)
}

fn read_bus_countries(path: &Path) -> Result<HashMap<u64, String>, CliError> {
    let mut out = HashMap::new();
    let mut reader = csv::Reader::from_path(path).map_err(input)?;
    for rec in reader.records() {
        let rec = rec.map_err(input)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id: u64 = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::Input(format!("{}:{line}: invalid bus_id", path.display())))?;
        let country = rec
            .get(1)
            .ok_or_else(|| CliError::Input(format!("{}:{line}: short record", path.display())))?
            .trim()
            .to_string();
        out.insert(id, country);
    }
    Ok(out)
}

pub fn run_build(cfg: BuildSection) -> Result<(), CliError> {
    let buses = config::require(cfg.buses.clone(), "build.buses")?;
    let lines = config::require(cfg.lines.clone(), "build.lines")?;
    let generators = config::require(cfg.generators.clone(), "build.generators")?;
    let out_dir = config::require(cfg.out.clone(), "build.out")?;

    let loaded = ingest::load_grid_files(&buses, &lines, &generators).map_err(classify)?;

    let demographic = [&cfg.towns, &cfg.national_loads, &cfg.bus_countries];
    let provided = demographic.iter().filter(|p| p.is_some()).count();
    let assembly = match provided {
        0 => None,
        3 => {
            let towns = read_towns(cfg.towns.as_ref().unwrap())?;
            let national = read_national_loads(cfg.national_loads.as_ref().unwrap())?;
            let countries = read_bus_countries(cfg.bus_countries.as_ref().unwrap())?;
            let assembly_cfg = AssemblyConfig {
                load_cfg: LoadDistributionConfig {
                    d_max_km: cfg.d_max_km.unwrap_or(50.0),
                    ..LoadDistributionConfig::default()
                },
                damping_cfg: DampingConfig {
                    load_alpha: cfg.alpha.unwrap_or(1.5),
                    generator_rule: DampingRule::Ratio(cfg.gamma.unwrap_or(0.5)),
                },
                ..AssemblyConfig::default()
            };
            Some(
                ingest::assemble_grid(&loaded, &towns, &national, &countries, &assembly_cfg)
                    .map_err(classify)?,
            )
        }
        _ => {
            return Err(CliError::Input(
                "towns, national_loads and bus_countries must be given together".into(),
            ))
        }
    };
    let grid = assembly
        .as_ref()
        .map(|a| a.grid.clone())
        .unwrap_or_else(|| loaded.grid.clone());

    let report = grid::validate(&grid);
    println!(
        "grid: {} buses, {} lines, {} violations",
        grid.n(),
        grid.lines.len(),
        report.violations.len()
    );
    for v in &report.violations {
        println!("  {} {}: {}", v.rule, v.element, v.message);
    }
    if provided == 3 && !report.is_empty() {
        return Err(CliError::Input(format!(
            "assembled grid fails validation with {} violations",
            report.violations.len()
        )));
    }

    ensure_out_dir(&out_dir)?;
    gio::write_grid_dir(&out_dir, &grid).map_err(classify)?;
    let mut files = vec![
        out_dir.join("grid_buses.csv"),
        out_dir.join("grid_lines.csv"),
        out_dir.join("grid_meta.csv"),
        out_dir.join("resolved_config.toml"),
    ];
    if let Some(a) = &assembly {
        let problem = dispatch::DispatchProblem {
            grid: &loaded.grid,
            loads: a.loads.clone(),
            generators: loaded.generators.clone(),
            line_limits: None,
        };
        let path = out_dir.join("dispatch.csv");
        let w = std::fs::File::create(&path)
            .map_err(|e| CliError::Runtime(format!("write dispatch: {e}")))?;
        gio::write_dispatch_csv(w, &problem, &a.dispatch).map_err(classify)?;
        files.push(path);
    }
    config::echo_resolved(&out_dir, "build", &cfg)?;
    write_manifest(&out_dir, &files)?;
    Ok(())
}

// ---------------------------------------------------------------- fault

pub fn run_fault(cfg: FaultSection) -> Result<(), CliError> {
    let grid_dir = config::require(cfg.grid.clone(), "fault.grid")?;
    let buses = config::require(cfg.bus.clone(), "fault.bus")?;
    let dps = config::require(cfg.delta_p.clone(), "fault.delta_p")?;
    let out_dir = config::require(cfg.out.clone(), "fault.out")?;
    if buses.len() != dps.len() {
        return Err(CliError::Input(format!(
            "{} fault buses but {} delta_p values",
            buses.len(),
            dps.len()
        )));
    }
    let kind = parse_kind(cfg.kind.as_deref())?;
    let (t_sim, dt) = (cfg.t_sim.unwrap_or(5.0), cfg.dt.unwrap_or(0.5));
    let n_sim = cfg.n_sim.unwrap_or((t_sim / dt).round() as usize);
    let h = cfg.h.unwrap_or(0.01);

    let grid = read_grid(&grid_dir)?;
    let scenarios: Vec<FaultScenario> = buses
        .iter()
        .zip(&dps)
        .map(|(&b, &dp)| FaultScenario::new(b, dp).with_timing(t_sim, dt, n_sim, h))
        .collect::<gridswing::Result<_>>()
        .map_err(classify)?;

    let theta0 = dynamics::steady_state(&grid).map_err(classify)?;
    let traj =
        dynamics::simulate_multi_fault(&grid, &theta0, &scenarios, kind).map_err(classify)?;
    let rocof = dynamics::rocof_series(&traj, dt).map_err(classify)?;
    let m_b = dynamics::disturbance_magnitude(&rocof);
    let report = RocofReport { rocof, dt, m_b };
    let frames = dynamics::snapshot_frames(&traj, dt).map_err(classify)?;

    ensure_out_dir(&out_dir)?;
    let traj_path = out_dir.join("trajectory.csv");
    let w = std::fs::File::create(&traj_path)
        .map_err(|e| CliError::Runtime(format!("write trajectory: {e}")))?;
    gio::write_trajectory_csv(w, &grid, &traj).map_err(classify)?;
    let rocof_path = out_dir.join("rocof.csv");
    let w = std::fs::File::create(&rocof_path)
        .map_err(|e| CliError::Runtime(format!("write rocof: {e}")))?;
    gio::write_rocof_csv(w, &grid, &report).map_err(classify)?;
    gio::write_frames(&out_dir.join("frames"), &grid, &frames).map_err(classify)?;

    let summary = serde_json::json!({
        "fault_buses": buses,
        "delta_p": dps,
        "t_sim": t_sim,
        "dt": dt,
        "n_sim": n_sim,
        "kind": match kind { DynamicsKind::Nonlinear => "nonlinear", DynamicsKind::Linearized => "linearized" },
        "m_b": m_b,
    });
    let summary_path = out_dir.join("summary.json");
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).unwrap(),
    )
    .map_err(|e| CliError::Runtime(format!("write summary: {e}")))?;
    println!("M_b = {m_b}");

    config::echo_resolved(&out_dir, "fault", &cfg)?;
    let mut files = vec![
        traj_path,
        rocof_path,
        summary_path,
        out_dir.join("resolved_config.toml"),
    ];
    for frame in &frames {
        files.push(out_dir.join(format!("frames/frame_{:03}.geojson", frame.index)));
    }
    write_manifest(&out_dir, &files)?;
    Ok(())
}

// -------------------------------------------------------------- spectral

pub fn run_spectral(cfg: SpectralSection) -> Result<(), CliError> {
    let grid_dir = config::require(cfg.grid.clone(), "spectral.grid")?;
    let out_dir = config::require(cfg.out.clone(), "spectral.out")?;
    let grid = read_grid(&grid_dir)?;
    let k = cfg.modes.unwrap_or(10).min(grid.n());
    let laplacian = build_laplacian(&grid).map_err(classify)?;
    let modes = slow_modes(&laplacian, k).map_err(classify)?;

    ensure_out_dir(&out_dir)?;
    let modes_path = out_dir.join("modes.csv");
    let w = std::fs::File::create(&modes_path)
        .map_err(|e| CliError::Runtime(format!("write modes: {e}")))?;
    gio::write_modes_csv(w, &grid, &modes).map_err(classify)?;
    let mut files = vec![modes_path, out_dir.join("resolved_config.toml")];

    if let (Some(m), Some(d)) = (cfg.m, cfg.d) {
        let params = HomogeneousParams::new(m, d).map_err(classify)?;
        let dt = cfg.dt.unwrap_or(0.5);
        let phases = mode_timescale_report(&modes, &params, dt).map_err(classify)?;
        let path = out_dir.join("timescales.csv");
        let mut text = String::from("alpha,lambda,f_alpha_dt\n");
        for (idx, phase) in phases.iter().enumerate() {
            let alpha = idx + 2; // report starts at the first oscillatory mode
            text.push_str(&format!(
                "{alpha},{},{phase}\n",
                modes.eigenvalues[alpha - 1]
            ));
        }
        std::fs::write(&path, text)
            .map_err(|e| CliError::Runtime(format!("write timescales: {e}")))?;
        files.push(path);
    }

    config::echo_resolved(&out_dir, "spectral", &cfg)?;
    write_manifest(&out_dir, &files)?;
    Ok(())
}

// ----------------------------------------------------------------- sweep

fn read_faults(path: &Path, t_sim: f64, dt: f64, n_sim: usize, h: f64) -> Result<Vec<FaultScenario>, CliError> {
    let mut out = Vec::new();
    let mut reader = csv::Reader::from_path(path).map_err(input)?;
    for rec in reader.records() {
        let rec = rec.map_err(input)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bus: u64 = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| {
                CliError::Input(format!("{}:{line}: invalid fault_bus", path.display()))
            })?;
        let dp: f64 = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| {
                CliError::Input(format!("{}:{line}: invalid delta_p", path.display()))
            })?;
        out.push(
            FaultScenario::new(bus, dp)
                .with_timing(t_sim, dt, n_sim, h)
                .map_err(classify)?,
        );
    }
    if out.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no fault scenarios",
            path.display()
        )));
    }
    Ok(out)
}

pub fn run_sweep(cfg: SweepSection) -> Result<(), CliError> {
    let grid_dir = config::require(cfg.grid.clone(), "sweep.grid")?;
    let faults_path = config::require(cfg.faults.clone(), "sweep.faults")?;
    let levels = config::require(cfg.levels.clone(), "sweep.levels")?;
    let out_dir = config::require(cfg.out.clone(), "sweep.out")?;
    let kind = parse_kind(cfg.kind.as_deref())?;
    let procedure_kind: ProcedureKind = cfg
        .procedure
        .as_deref()
        .unwrap_or("uniform")
        .parse()
        .map_err(CliError::Input)?;

    if let Some(workers) = cfg.workers {
        // Ignore the error if a pool already exists (e.g. repeated calls
        // in tests); the first configuration wins.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }

    let grid = read_grid(&grid_dir)?;
    let abs_levels: Vec<f64> = if cfg.levels_relative.unwrap_or(false) {
        let m0 = grid.system_inertia();
        levels.iter().map(|f| f * m0).collect()
    } else {
        levels
    };
    let faults = read_faults(&faults_path, 5.0, 0.5, 10, 0.01)?;

    let mut procedure = PlacementProcedure::new(procedure_kind, cfg.seed.unwrap_or(0));
    if let Some(eps) = cfg.epsilon_floor {
        procedure.epsilon_floor = eps;
    }

    let result = placement::sweep_inertia(&grid, &procedure, &abs_levels, &faults, kind)
        .map_err(classify)?;

    ensure_out_dir(&out_dir)?;
    let sweep_path = out_dir.join("sweep.csv");
    let w = std::fs::File::create(&sweep_path)
        .map_err(|e| CliError::Runtime(format!("write sweep: {e}")))?;
    gio::write_sweep_csv(w, &result.rows).map_err(classify)?;
    println!("{} sweep rows written", result.rows.len());

    config::echo_resolved(&out_dir, "sweep", &cfg)?;
    write_manifest(
        &out_dir,
        &[sweep_path, out_dir.join("resolved_config.toml")],
    )?;
    Ok(())
}
