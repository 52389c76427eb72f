//! File ingestion and parameter derivation: grid CSV parsing, demographic
//! load distribution and inertia/damping derivation.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dispatch::{economic_dispatch, DispatchProblem};
use crate::error::{Error, Result};
use crate::grid::{line_susceptance, Bus, BusKind, GridModel, Line};

/// Conventional generator technologies with their default marginal cost
/// ($/MWh) and inertia constant (s).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technology {
    Hydro,
    Nuclear,
    Lignite,
    HardCoal,
    Gas,
    Other,
}

impl Technology {
    pub fn default_cost_per_mwh(self) -> f64 {
        match self {
            Technology::Hydro => 80.0,
            Technology::Nuclear => 16.0,
            Technology::Lignite => 16.0,
            Technology::HardCoal => 35.0,
            Technology::Gas => 100.0,
            Technology::Other => 7.0,
        }
    }

    pub fn default_inertia_constant_s(self) -> f64 {
        match self {
            Technology::Hydro => 4.0,
            Technology::Nuclear => 6.0,
            Technology::Lignite => 6.0,
            Technology::HardCoal => 6.0,
            Technology::Gas => 6.0,
            Technology::Other => 3.0,
        }
    }
}

impl std::str::FromStr for Technology {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hydro" => Ok(Technology::Hydro),
            "nuclear" => Ok(Technology::Nuclear),
            "lignite" => Ok(Technology::Lignite),
            "hard_coal" | "hardcoal" | "coal" => Ok(Technology::HardCoal),
            "gas" => Ok(Technology::Gas),
            "other" => Ok(Technology::Other),
            other => Err(format!("unknown technology {other:?}")),
        }
    }
}

/// A conventional generator with rated power, inertia constant and
/// marginal cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub bus_id: u64,
    pub technology: Technology,
    pub rated_power_w: f64,
    pub inertia_constant_s: f64,
    pub cost_per_mwh: f64,
}

impl GeneratorRecord {
    /// Record with the technology's default inertia constant and cost.
    pub fn new(bus_id: u64, technology: Technology, rated_power_w: f64) -> Self {
        Self {
            bus_id,
            technology,
            rated_power_w,
            inertia_constant_s: technology.default_inertia_constant_s(),
            cost_per_mwh: technology.default_cost_per_mwh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TownRecord {
    pub country: String,
    /// (latitude, longitude) degrees, or planar coordinates for abstract grids.
    pub position: (f64, f64),
    pub population: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingTownPolicy {
    /// Towns with no bus in range are dropped (counted in the result).
    WarnDrop,
    Error,
}

#[derive(Debug, Clone)]
pub struct LoadDistributionConfig {
    pub d_max_km: f64,
    pub weight_220: f64,
    pub weight_380: f64,
    pub missing_town_policy: MissingTownPolicy,
}

impl Default for LoadDistributionConfig {
    fn default() -> Self {
        Self {
            d_max_km: 50.0,
            weight_220: 1.0,
            weight_380: 3.0,
            missing_town_policy: MissingTownPolicy::WarnDrop,
        }
    }
}

/// Generator damping rule: either a fixed ratio gamma = d/m or explicit
/// per-technology damping coefficients (W s/rad).
#[derive(Debug, Clone)]
pub enum DampingRule {
    Ratio(f64),
    PerTechnology(std::collections::BTreeMap<Technology, f64>),
}

#[derive(Debug, Clone)]
pub struct DampingConfig {
    /// Load frequency sensitivity alpha, dimensionless, in (0, 5).
    pub load_alpha: f64,
    pub generator_rule: DampingRule,
}

impl Default for DampingConfig {
    fn default() -> Self {
        Self {
            load_alpha: 1.5,
            generator_rule: DampingRule::Ratio(0.5),
        }
    }
}

fn parse_err(file: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn field<'a>(
    record: &'a csv::StringRecord,
    idx: usize,
    name: &str,
    file: &Path,
    line: u64,
) -> Result<&'a str> {
    record
        .get(idx)
        .ok_or_else(|| parse_err(file, line, format!("missing field {name}")))
}

fn parse_f64(s: &str, name: &str, file: &Path, line: u64) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(file, line, format!("field {name}: invalid number {s:?}")))
}

fn parse_u64(s: &str, name: &str, file: &Path, line: u64) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(file, line, format!("field {name}: invalid integer {s:?}")))
}

/// A parsed grid plus the generator records that go with it. Setpoints and
/// dynamical parameters are not assigned yet; see [`assemble_grid`].
#[derive(Debug, Clone)]
pub struct LoadedGrid {
    pub grid: GridModel,
    pub generators: Vec<GeneratorRecord>,
}

/// Parses buses.csv, lines.csv and generators.csv, computes missing line
/// susceptances from length and voltage, and reduces to the largest
/// connected component.
pub fn load_grid_files(
    bus_file: &Path,
    line_file: &Path,
    generator_file: &Path,
) -> Result<LoadedGrid> {
    // buses.csv: id,kind,voltage_kv,lat,lon
    let mut buses = Vec::new();
    let mut reader = csv::Reader::from_path(bus_file)?;
    for rec in reader.records() {
        let rec = rec?;
        let lineno = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = parse_u64(field(&rec, 0, "id", bus_file, lineno)?, "id", bus_file, lineno)?;
        let kind = match field(&rec, 1, "kind", bus_file, lineno)?.trim() {
            "generator" => BusKind::Generator,
            "load" => BusKind::Load,
            other => {
                return Err(parse_err(
                    bus_file,
                    lineno,
                    format!("field kind: expected generator|load, got {other:?}"),
                ))
            }
        };
        let voltage_kv = parse_f64(
            field(&rec, 2, "voltage_kv", bus_file, lineno)?,
            "voltage_kv",
            bus_file,
            lineno,
        )?;
        let lat = parse_f64(field(&rec, 3, "lat", bus_file, lineno)?, "lat", bus_file, lineno)?;
        let lon = parse_f64(field(&rec, 4, "lon", bus_file, lineno)?, "lon", bus_file, lineno)?;
        buses.push(Bus {
            id,
            kind,
            voltage_kv,
            position: Some((lat, lon)),
            power_setpoint_w: 0.0,
            inertia: 0.0,
            // Placeholder until damping derivation runs in assemble_grid.
            damping: 1.0,
        });
    }

    // lines.csv: from,to,length_km,voltage_kv[,susceptance_S]
    let mut lines = Vec::new();
    let mut reader = csv::Reader::from_path(line_file)?;
    for rec in reader.records() {
        let rec = rec?;
        let lineno = rec.position().map(|p| p.line()).unwrap_or(0);
        let from = parse_u64(field(&rec, 0, "from", line_file, lineno)?, "from", line_file, lineno)?;
        let to = parse_u64(field(&rec, 1, "to", line_file, lineno)?, "to", line_file, lineno)?;
        let length_km = parse_f64(
            field(&rec, 2, "length_km", line_file, lineno)?,
            "length_km",
            line_file,
            lineno,
        )?;
        let voltage_kv = parse_f64(
            field(&rec, 3, "voltage_kv", line_file, lineno)?,
            "voltage_kv",
            line_file,
            lineno,
        )?;
        let susceptance_s = match rec.get(4).map(str::trim).filter(|s| !s.is_empty()) {
            Some(s) => parse_f64(s, "susceptance_S", line_file, lineno)?,
            None => line_susceptance(length_km, voltage_kv).map_err(|e| {
                parse_err(line_file, lineno, format!("{e}"))
            })?,
        };
        lines.push(Line {
            from,
            to,
            susceptance_s,
            length_km,
        });
    }

    // generators.csv: bus_id,technology,rated_power_MW[,H_s][,cost_per_MWh]
    let mut generators = Vec::new();
    let mut reader = csv::Reader::from_path(generator_file)?;
    for rec in reader.records() {
        let rec = rec?;
        let lineno = rec.position().map(|p| p.line()).unwrap_or(0);
        let bus_id = parse_u64(
            field(&rec, 0, "bus_id", generator_file, lineno)?,
            "bus_id",
            generator_file,
            lineno,
        )?;
        let technology: Technology = field(&rec, 1, "technology", generator_file, lineno)?
            .parse()
            .map_err(|e: String| parse_err(generator_file, lineno, format!("field technology: {e}")))?;
        let rated_mw = parse_f64(
            field(&rec, 2, "rated_power_MW", generator_file, lineno)?,
            "rated_power_MW",
            generator_file,
            lineno,
        )?;
        if rated_mw <= 0.0 {
            return Err(parse_err(
                generator_file,
                lineno,
                format!("rated_power_MW = {rated_mw} must be > 0"),
            ));
        }
        let mut record = GeneratorRecord::new(bus_id, technology, rated_mw * 1e6);
        if let Some(h) = rec.get(3).map(str::trim).filter(|s| !s.is_empty()) {
            record.inertia_constant_s = parse_f64(h, "H_s", generator_file, lineno)?;
        }
        if let Some(c) = rec.get(4).map(str::trim).filter(|s| !s.is_empty()) {
            record.cost_per_mwh = parse_f64(c, "cost_per_MWh", generator_file, lineno)?;
        }
        generators.push(record);
    }

    let mut grid = GridModel::new(buses, lines, 50.0, false);
    grid.merge_parallel_lines();
    let grid = grid.largest_connected_component()?;
    let ids: std::collections::HashSet<u64> = grid.buses.iter().map(|b| b.id).collect();
    let generators = generators
        .into_iter()
        .filter(|g| ids.contains(&g.bus_id))
        .collect();
    Ok(LoadedGrid { grid, generators })
}

const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance between (lat, lon) pairs in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().asin()
}

#[derive(Debug, Clone)]
pub struct LoadDistribution {
    /// Per-bus load, W, indexed like the grid's buses; sums to the
    /// national load.
    pub per_bus: Vec<f64>,
    pub dropped_towns: usize,
}

fn bus_weight(voltage_kv: f64, cfg: &LoadDistributionConfig) -> f64 {
    if voltage_kv == 220.0 {
        cfg.weight_220
    } else if voltage_kv == 380.0 {
        cfg.weight_380
    } else {
        1.0
    }
}

/// Distributes one country's load demographically over its load buses:
/// (i) each town's population is split over buses within d_max
/// proportionally to the voltage weight, (ii) per-bus effective population
/// is accumulated, (iii) the national load is split proportionally to it.
pub fn distribute_national_load(
    grid: &GridModel,
    towns: &[TownRecord],
    national_load_w: f64,
    cfg: &LoadDistributionConfig,
    country_of: &HashMap<u64, String>,
    country: &str,
) -> Result<LoadDistribution> {
    if national_load_w < 0.0 {
        return Err(Error::InvalidArgument("national load must be >= 0".into()));
    }
    let candidates: Vec<usize> = grid
        .buses
        .iter()
        .enumerate()
        .filter(|(_, b)| {
            b.kind == BusKind::Load
                && b.position.is_some()
                && country_of.get(&b.id).map(String::as_str) == Some(country)
        })
        .map(|(i, _)| i)
        .collect();

    let distance = |a: (f64, f64), b: (f64, f64)| -> f64 {
        if grid.per_unit {
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        } else {
            haversine_km(a, b)
        }
    };

    let mut effective_pop = vec![0.0; grid.n()];
    let mut dropped = 0usize;
    for town in towns.iter().filter(|t| t.country == country) {
        let in_range: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&i| {
                distance(town.position, grid.buses[i].position.unwrap()) <= cfg.d_max_km
            })
            .collect();
        if in_range.is_empty() {
            match cfg.missing_town_policy {
                MissingTownPolicy::WarnDrop => {
                    dropped += 1;
                    continue;
                }
                MissingTownPolicy::Error => {
                    return Err(Error::InvalidArgument(format!(
                        "town at {:?} has no load bus within {} km",
                        town.position, cfg.d_max_km
                    )))
                }
            }
        }
        let weight_sum: f64 = in_range
            .iter()
            .map(|&i| bus_weight(grid.buses[i].voltage_kv, cfg))
            .sum();
        for &i in &in_range {
            let w = bus_weight(grid.buses[i].voltage_kv, cfg);
            effective_pop[i] += town.population as f64 * w / weight_sum;
        }
    }

    let pop_total: f64 = effective_pop.iter().sum();
    if national_load_w > 0.0 && pop_total <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "country {country:?} has load but no town reaches any of its load buses"
        )));
    }

    let per_bus: Vec<f64> = effective_pop
        .iter()
        .map(|&p| {
            if pop_total > 0.0 {
                national_load_w * p / pop_total
            } else {
                0.0
            }
        })
        .collect();
    Ok(LoadDistribution {
        per_bus,
        dropped_towns: dropped,
    })
}

/// Inertia coefficient m_i = 2 H_i P_rated / omega0.
pub fn derive_inertia(record: &GeneratorRecord, omega0: f64) -> f64 {
    2.0 * record.inertia_constant_s * record.rated_power_w / omega0
}

/// Load damping d_i = alpha P_load / omega0 (frequency-dependent loads).
pub fn derive_load_damping(p_load_w: f64, alpha: f64, omega0: f64) -> Result<f64> {
    if !(0.0..5.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} outside (0, 5)"
        )));
    }
    if p_load_w < 0.0 {
        return Err(Error::InvalidArgument(
            "load magnitude must be >= 0".into(),
        ));
    }
    Ok(alpha * p_load_w / omega0)
}

/// Generator damping per the configured rule: d = gamma m, or a direct
/// per-technology value.
pub fn derive_generator_damping(
    record: &GeneratorRecord,
    cfg: &DampingConfig,
    omega0: f64,
) -> Result<f64> {
    match &cfg.generator_rule {
        DampingRule::Ratio(gamma) => Ok(gamma * derive_inertia(record, omega0)),
        DampingRule::PerTechnology(table) => table
            .get(&record.technology)
            .copied()
            .ok_or_else(|| Error::MissingTechnology(format!("{:?}", record.technology))),
    }
}

/// Configuration of the full assembly pipeline (Appendix-style build:
/// loads, dispatch, inertia, damping).
#[derive(Debug, Clone, Default)]
pub struct AssemblyConfig {
    pub load_cfg: LoadDistributionConfig,
    pub damping_cfg: DampingConfig,
    /// Damping floor for buses with neither load nor generation, W s/rad.
    pub damping_floor: f64,
}

/// Output of [`assemble_grid`]: the operating grid plus the intermediate
/// load vector and dispatch solution it was built from.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub grid: GridModel,
    /// Per-bus load magnitude, W, indexed like the grid's buses.
    pub loads: Vec<f64>,
    pub dispatch: crate::dispatch::DispatchResult,
}

/// Wires ingestion into an operating point: distributes national loads,
/// runs the economic dispatch, assigns setpoints, inertia and damping.
pub fn assemble_grid(
    loaded: &LoadedGrid,
    towns: &[TownRecord],
    national_loads_w: &std::collections::BTreeMap<String, f64>,
    country_of: &HashMap<u64, String>,
    cfg: &AssemblyConfig,
) -> Result<Assembly> {
    let grid = &loaded.grid;
    let mut loads = vec![0.0; grid.n()];
    for (country, &load_w) in national_loads_w {
        let dist = distribute_national_load(
            grid,
            towns,
            load_w,
            &cfg.load_cfg,
            country_of,
            country,
        )?;
        for (acc, x) in loads.iter_mut().zip(&dist.per_bus) {
            *acc += x;
        }
    }

    let problem = DispatchProblem {
        grid,
        loads: loads.clone(),
        generators: loaded.generators.clone(),
        line_limits: None,
    };
    let dispatch = economic_dispatch(&problem)?;

    let omega0 = grid.omega0();
    let mut out = grid.clone();
    let mut gen_power: HashMap<u64, f64> = HashMap::new();
    let mut gen_inertia: HashMap<u64, f64> = HashMap::new();
    let mut gen_damping: HashMap<u64, f64> = HashMap::new();
    for (record, &p) in loaded.generators.iter().zip(&dispatch.outputs) {
        *gen_power.entry(record.bus_id).or_default() += p;
        *gen_inertia.entry(record.bus_id).or_default() += derive_inertia(record, omega0);
        *gen_damping.entry(record.bus_id).or_default() +=
            derive_generator_damping(record, &cfg.damping_cfg, omega0)?;
    }

    let floor = if cfg.damping_floor > 0.0 {
        cfg.damping_floor
    } else {
        1.0
    };
    for (i, bus) in out.buses.iter_mut().enumerate() {
        match bus.kind {
            BusKind::Generator => {
                bus.power_setpoint_w = gen_power.get(&bus.id).copied().unwrap_or(0.0);
                bus.inertia = gen_inertia.get(&bus.id).copied().unwrap_or(0.0);
                bus.damping = gen_damping.get(&bus.id).copied().unwrap_or(floor).max(floor);
            }
            BusKind::Load => {
                bus.power_setpoint_w = -loads[i];
                bus.inertia = 0.0;
                bus.damping = derive_load_damping(loads[i], cfg.damping_cfg.load_alpha, omega0)?
                    .max(floor);
            }
        }
    }

    // Residual imbalance is assigned to the slack generator.
    let imbalance = out.total_injection_w();
    let slack = crate::dispatch::default_slack(&out);
    out.buses[slack].power_setpoint_w -= imbalance;
    Ok(Assembly {
        grid: out,
        loads,
        dispatch,
    })
}
