//! Result serialization: CSV writers for dispatch, modes, trajectories,
//! RoCoF and sweeps, GeoJSON snapshot frames, and the canonical on-disk
//! grid representation.

use std::io::Write;
use std::path::Path;

use serde_json::json;

use crate::dispatch::{DispatchProblem, DispatchResult};
use crate::dynamics::{Frame, RocofReport, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{Bus, BusKind, GridModel, Line};
use crate::placement::SweepRow;
use crate::spectral::SpectralModes;

/// Modes CSV: one eigenvalue header row, then bus_id plus one column per
/// retained mode.
pub fn write_modes_csv<W: Write>(mut w: W, grid: &GridModel, modes: &SpectralModes) -> Result<()> {
    write!(w, "eigenvalue")?;
    for lambda in &modes.eigenvalues {
        write!(w, ",{lambda}")?;
    }
    writeln!(w)?;
    write!(w, "bus_id")?;
    for alpha in 1..=modes.k() {
        write!(w, ",u{alpha}")?;
    }
    writeln!(w)?;
    for (i, bus) in grid.buses.iter().enumerate() {
        write!(w, "{}", bus.id)?;
        for alpha in 0..modes.k() {
            write!(w, ",{}", modes.vectors[(i, alpha)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Dispatch CSV: bus_id,P_MW,theta_rad. P is the net injection at the bus.
pub fn write_dispatch_csv<W: Write>(
    mut w: W,
    problem: &DispatchProblem,
    result: &DispatchResult,
) -> Result<()> {
    let grid = problem.grid;
    writeln!(w, "bus_id,P_MW,theta_rad")?;
    let mut injections = vec![0.0; grid.n()];
    for (record, &p) in problem.generators.iter().zip(&result.outputs) {
        let i = grid
            .index_of(record.bus_id)
            .ok_or(Error::UnknownBus(record.bus_id))?;
        injections[i] += p;
    }
    for (i, &load) in problem.loads.iter().enumerate() {
        injections[i] -= load;
    }
    for (i, bus) in grid.buses.iter().enumerate() {
        writeln!(w, "{},{},{}", bus.id, injections[i] / 1e6, result.angles[i])?;
    }
    Ok(())
}

/// Trajectory CSV in long format: t,bus_id,theta_rad,omega_rad_s.
pub fn write_trajectory_csv<W: Write>(mut w: W, grid: &GridModel, traj: &Trajectory) -> Result<()> {
    writeln!(w, "t,bus_id,theta_rad,omega_rad_s")?;
    for (k, &t) in traj.times.iter().enumerate() {
        for (i, bus) in grid.buses.iter().enumerate() {
            writeln!(w, "{t},{},{},{}", bus.id, traj.theta[k][i], traj.omega[k][i])?;
        }
    }
    Ok(())
}

/// RoCoF CSV: k,bus_id,rocof_hz_s rows plus a trailing summary line with
/// the disturbance magnitude M_b in the last column.
pub fn write_rocof_csv<W: Write>(mut w: W, grid: &GridModel, report: &RocofReport) -> Result<()> {
    writeln!(w, "k,bus_id,rocof_hz_s")?;
    for (k, row) in report.rocof.iter().enumerate() {
        for (i, bus) in grid.buses.iter().enumerate() {
            writeln!(w, "{k},{},{}", bus.id, row[i])?;
        }
    }
    writeln!(w, "M_b,,{}", report.m_b)?;
    Ok(())
}

/// Sweep CSV: procedure,seed,M_sys_GWs2,fault_bus,u2b_sq,M_b.
pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "procedure,seed,M_sys_GWs2,fault_bus,u2b_sq,M_b")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.procedure,
            r.seed,
            r.m_sys / 1e9,
            r.fault_bus,
            r.u2b_sq,
            r.m_b
        )?;
    }
    Ok(())
}

/// One snapshot frame as a GeoJSON FeatureCollection: a Point feature per
/// bus with its RoCoF over the frame's interval. Buses without a position
/// are skipped.
pub fn frame_geojson(grid: &GridModel, frame: &Frame) -> serde_json::Value {
    let features: Vec<serde_json::Value> = grid
        .buses
        .iter()
        .enumerate()
        .filter_map(|(i, bus)| {
            bus.position.map(|(lat, lon)| {
                json!({
                    "type": "Feature",
                    "geometry": {
                        "type": "Point",
                        // GeoJSON is lon-first.
                        "coordinates": [lon, lat],
                    },
                    "properties": {
                        "bus_id": bus.id,
                        "rocof_hz_s": frame.rocof_hz_s[i],
                    },
                })
            })
        })
        .collect();
    json!({
        "type": "FeatureCollection",
        "properties": {
            "frame": frame.index,
            "t_start": frame.t_start,
            "t_end": frame.t_end,
        },
        "features": features,
    })
}

/// Writes frame_000.geojson, frame_001.geojson, ... into `dir`.
pub fn write_frames(dir: &Path, grid: &GridModel, frames: &[Frame]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for frame in frames {
        let path = dir.join(format!("frame_{:03}.geojson", frame.index));
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, &frame_geojson(grid, frame))
            .map_err(|e| Error::InvalidArgument(format!("geojson serialization: {e}")))?;
    }
    Ok(())
}

fn kind_str(kind: BusKind) -> &'static str {
    match kind {
        BusKind::Generator => "generator",
        BusKind::Load => "load",
    }
}

/// Writes the canonical grid representation (grid_buses.csv,
/// grid_lines.csv, grid_meta.csv) into `dir`.
pub fn write_grid_dir(dir: &Path, grid: &GridModel) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = std::fs::File::create(dir.join("grid_buses.csv"))?;
    writeln!(
        w,
        "id,kind,voltage_kv,lat,lon,power_setpoint_W,inertia,damping"
    )?;
    for b in &grid.buses {
        let (lat, lon) = match b.position {
            Some((lat, lon)) => (lat.to_string(), lon.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{lat},{lon},{},{},{}",
            b.id,
            kind_str(b.kind),
            b.voltage_kv,
            b.power_setpoint_w,
            b.inertia,
            b.damping
        )?;
    }

    let mut w = std::fs::File::create(dir.join("grid_lines.csv"))?;
    writeln!(w, "from,to,length_km,susceptance_S")?;
    for l in &grid.lines {
        writeln!(w, "{},{},{},{}", l.from, l.to, l.length_km, l.susceptance_s)?;
    }

    let mut w = std::fs::File::create(dir.join("grid_meta.csv"))?;
    writeln!(w, "key,value")?;
    writeln!(w, "base_frequency_hz,{}", grid.base_frequency_hz)?;
    writeln!(w, "per_unit,{}", grid.per_unit)?;
    Ok(())
}

fn read_f64(s: &str, file: &Path, line: u64, name: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse {
        file: file.display().to_string(),
        line,
        msg: format!("field {name}: invalid number {s:?}"),
    })
}

/// Reads a grid previously written by [`write_grid_dir`].
pub fn read_grid_dir(dir: &Path) -> Result<GridModel> {
    let bus_path = dir.join("grid_buses.csv");
    let mut buses = Vec::new();
    let mut reader = csv::Reader::from_path(&bus_path)?;
    for rec in reader.records() {
        let rec = rec?;
        let lineno = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |idx: usize, name: &str| -> Result<&str> {
            rec.get(idx).ok_or_else(|| Error::Parse {
                file: bus_path.display().to_string(),
                line: lineno,
                msg: format!("missing field {name}"),
            })
        };
        let id: u64 = get(0, "id")?.trim().parse().map_err(|_| Error::Parse {
            file: bus_path.display().to_string(),
            line: lineno,
            msg: "invalid id".into(),
        })?;
        let kind = match get(1, "kind")?.trim() {
            "generator" => BusKind::Generator,
            "load" => BusKind::Load,
            other => {
                return Err(Error::Parse {
                    file: bus_path.display().to_string(),
                    line: lineno,
                    msg: format!("unknown kind {other:?}"),
                })
            }
        };
        let voltage_kv = read_f64(get(2, "voltage_kv")?, &bus_path, lineno, "voltage_kv")?;
        let lat = get(3, "lat")?.trim();
        let lon = get(4, "lon")?.trim();
        let position = if lat.is_empty() || lon.is_empty() {
            None
        } else {
            Some((
                read_f64(lat, &bus_path, lineno, "lat")?,
                read_f64(lon, &bus_path, lineno, "lon")?,
            ))
        };
        let power_setpoint_w = read_f64(
            get(5, "power_setpoint_W")?,
            &bus_path,
            lineno,
            "power_setpoint_W",
        )?;
        let inertia = read_f64(get(6, "inertia")?, &bus_path, lineno, "inertia")?;
        let damping = read_f64(get(7, "damping")?, &bus_path, lineno, "damping")?;
        buses.push(Bus {
            id,
            kind,
            voltage_kv,
            position,
            power_setpoint_w,
            inertia,
            damping,
        });
    }

    let line_path = dir.join("grid_lines.csv");
    let mut lines = Vec::new();
    let mut reader = csv::Reader::from_path(&line_path)?;
    for rec in reader.records() {
        let rec = rec?;
        let lineno = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |idx: usize, name: &str| -> Result<&str> {
            rec.get(idx).ok_or_else(|| Error::Parse {
                file: line_path.display().to_string(),
                line: lineno,
                msg: format!("missing field {name}"),
            })
        };
        lines.push(Line {
            from: get(0, "from")?.trim().parse().map_err(|_| Error::Parse {
                file: line_path.display().to_string(),
                line: lineno,
                msg: "invalid from".into(),
            })?,
            to: get(1, "to")?.trim().parse().map_err(|_| Error::Parse {
                file: line_path.display().to_string(),
                line: lineno,
                msg: "invalid to".into(),
            })?,
            length_km: read_f64(get(2, "length_km")?, &line_path, lineno, "length_km")?,
            susceptance_s: read_f64(
                get(3, "susceptance_S")?,
                &line_path,
                lineno,
                "susceptance_S",
            )?,
        });
    }

    let meta_path = dir.join("grid_meta.csv");
    let mut base_frequency_hz = 50.0;
    let mut per_unit = false;
    let mut reader = csv::Reader::from_path(&meta_path)?;
    for rec in reader.records() {
        let rec = rec?;
        match (rec.get(0).map(str::trim), rec.get(1).map(str::trim)) {
            (Some("base_frequency_hz"), Some(v)) => {
                base_frequency_hz = read_f64(v, &meta_path, 0, "base_frequency_hz")?;
            }
            (Some("per_unit"), Some(v)) => {
                per_unit = v == "true";
            }
            _ => {}
        }
    }

    Ok(GridModel::new(buses, lines, base_frequency_hz, per_unit))
}
