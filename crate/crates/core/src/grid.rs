//! Network data model: buses, lines, validation, connectivity reduction and
//! synthetic test-grid construction.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kilometric reactance of 220 kV lines, Ohm/km.
pub const X_PER_KM_220: f64 = 0.360;
/// Kilometric reactance of 380 kV lines, Ohm/km.
pub const X_PER_KM_380: f64 = 0.265;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Generator,
    Load,
}

/// A bus with its electrical and dynamical parameters.
///
/// `power_setpoint_w` is positive for generation and negative for load.
/// `voltage_kv` holds kilovolts for SI grids and the per-unit voltage
/// (normally 1.0) when the owning [`GridModel`] has `per_unit = true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u64,
    pub kind: BusKind,
    pub voltage_kv: f64,
    /// (latitude, longitude) in degrees, or abstract planar coordinates.
    pub position: Option<(f64, f64)>,
    pub power_setpoint_w: f64,
    /// Inertia coefficient m_i, W s^2/rad. Zero on load buses.
    pub inertia: f64,
    /// Damping coefficient d_i, W s/rad. Strictly positive on every bus.
    pub damping: f64,
}

/// A transmission line between two buses, characterized by its susceptance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: u64,
    pub to: u64,
    pub susceptance_s: f64,
    pub length_km: f64,
}

impl Line {
    fn key(&self) -> (u64, u64) {
        if self.from <= self.to {
            (self.from, self.to)
        } else {
            (self.to, self.from)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub base_frequency_hz: f64,
    /// Per-unit grids use voltages directly as Laplacian weights; SI grids
    /// convert `voltage_kv` to volts first.
    pub per_unit: bool,
}

/// Relative tolerance on the total power balance, applied to the total load.
pub const POWER_BALANCE_RTOL: f64 = 1e-6;

impl GridModel {
    pub fn new(buses: Vec<Bus>, lines: Vec<Line>, base_frequency_hz: f64, per_unit: bool) -> Self {
        Self {
            buses,
            lines,
            base_frequency_hz,
            per_unit,
        }
    }

    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.base_frequency_hz
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Voltage factor entering Laplacian weights: volts for SI grids,
    /// the stored per-unit value otherwise.
    pub fn voltage_scale(&self, idx: usize) -> f64 {
        let v = self.buses[idx].voltage_kv;
        if self.per_unit {
            v
        } else {
            v * 1e3
        }
    }

    /// Coupling weight B_ij V_i V_j of a line, indexed by bus positions.
    /// Returns `(i, j, weight)`.
    pub fn line_weights(&self) -> Result<Vec<(usize, usize, f64)>> {
        let index: HashMap<u64, usize> = self
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect();
        self.lines
            .iter()
            .map(|l| {
                let i = *index.get(&l.from).ok_or(Error::UnknownBus(l.from))?;
                let j = *index.get(&l.to).ok_or(Error::UnknownBus(l.to))?;
                let w = l.susceptance_s * self.voltage_scale(i) * self.voltage_scale(j);
                Ok((i, j, w))
            })
            .collect()
    }

    pub fn total_load_w(&self) -> f64 {
        self.buses
            .iter()
            .map(|b| (-b.power_setpoint_w).max(0.0))
            .sum()
    }

    pub fn total_injection_w(&self) -> f64 {
        self.buses.iter().map(|b| b.power_setpoint_w).sum()
    }

    /// Total system inertia M_sys = sum of m_i.
    pub fn system_inertia(&self) -> f64 {
        self.buses.iter().map(|b| b.inertia).sum()
    }

    pub fn generator_indices(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Generator)
            .map(|(i, _)| i)
            .collect()
    }

    /// Merge parallel lines between the same unordered bus pair by summing
    /// their susceptances. The first record's length is kept.
    pub fn merge_parallel_lines(&mut self) {
        let mut merged: BTreeMap<(u64, u64), Line> = BTreeMap::new();
        for line in self.lines.drain(..) {
            match merged.entry(line.key()) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(line);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    e.get_mut().susceptance_s += line.susceptance_s;
                }
            }
        }
        self.lines = merged.into_values().collect();
    }

    /// A copy with every bus given common inertia and damping (and generator
    /// dynamics). Used for validation against the homogeneous-parameter
    /// closed-form response.
    pub fn with_homogeneous_params(&self, m: f64, d: f64) -> GridModel {
        let mut g = self.clone();
        for b in &mut g.buses {
            b.kind = BusKind::Generator;
            b.inertia = m;
            b.damping = d;
        }
        g
    }

    fn adjacency(&self) -> HashMap<u64, Vec<u64>> {
        let mut adj: HashMap<u64, Vec<u64>> = self.buses.iter().map(|b| (b.id, vec![])).collect();
        for l in &self.lines {
            if l.from == l.to {
                continue;
            }
            if adj.contains_key(&l.from) && adj.contains_key(&l.to) {
                adj.get_mut(&l.from).unwrap().push(l.to);
                adj.get_mut(&l.to).unwrap().push(l.from);
            }
        }
        adj
    }

    fn components(&self) -> Vec<Vec<u64>> {
        let adj = self.adjacency();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut comps = Vec::new();
        for bus in &self.buses {
            if seen.contains(&bus.id) {
                continue;
            }
            let mut comp = vec![bus.id];
            seen.insert(bus.id);
            let mut stack = vec![bus.id];
            while let Some(u) = stack.pop() {
                for &v in &adj[&u] {
                    if seen.insert(v) {
                        comp.push(v);
                        stack.push(v);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Induced subgraph on the largest connected component. Ties are broken
    /// towards the component containing the smallest bus id.
    pub fn largest_connected_component(&self) -> Result<GridModel> {
        if self.buses.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut comps = self.components();
        comps.sort_by_key(|c| {
            (
                std::cmp::Reverse(c.len()),
                c.iter().copied().min().unwrap_or(u64::MAX),
            )
        });
        let keep: HashSet<u64> = comps[0].iter().copied().collect();
        let buses = self
            .buses
            .iter()
            .filter(|b| keep.contains(&b.id))
            .cloned()
            .collect();
        let lines = self
            .lines
            .iter()
            .filter(|l| l.from != l.to && keep.contains(&l.from) && keep.contains(&l.to))
            .cloned()
            .collect();
        Ok(GridModel::new(
            buses,
            lines,
            self.base_frequency_hz,
            self.per_unit,
        ))
    }
}

/// One broken invariant: rule identifier, offending element, message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub element: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every [`GridModel`] invariant and lists all violations,
/// deterministically ordered by rule id then element id.
pub fn validate(grid: &GridModel) -> ValidationReport {
    let mut v: Vec<Violation> = Vec::new();
    let ids: HashSet<u64> = grid.buses.iter().map(|b| b.id).collect();

    for bus in &grid.buses {
        match bus.kind {
            BusKind::Generator if bus.inertia <= 0.0 => v.push(Violation {
                rule: "R1-inertia-role".into(),
                element: format!("bus {}", bus.id),
                message: format!("generator bus has m = {} <= 0", bus.inertia),
            }),
            BusKind::Load if bus.inertia != 0.0 => v.push(Violation {
                rule: "R1-inertia-role".into(),
                element: format!("bus {}", bus.id),
                message: format!("load bus has m = {} != 0", bus.inertia),
            }),
            _ => {}
        }
        if bus.damping <= 0.0 {
            v.push(Violation {
                rule: "R2-damping".into(),
                element: format!("bus {}", bus.id),
                message: format!("d = {} must be > 0", bus.damping),
            });
        }
        if bus.voltage_kv <= 0.0 {
            v.push(Violation {
                rule: "R3-voltage".into(),
                element: format!("bus {}", bus.id),
                message: format!("voltage {} must be > 0", bus.voltage_kv),
            });
        }
    }

    let mut seen_pairs: HashSet<(u64, u64)> = HashSet::new();
    for (k, line) in grid.lines.iter().enumerate() {
        if line.from == line.to {
            v.push(Violation {
                rule: "R4-self-loop".into(),
                element: format!("line {k}"),
                message: format!("line connects bus {} to itself", line.from),
            });
        }
        if !ids.contains(&line.from) || !ids.contains(&line.to) {
            v.push(Violation {
                rule: "R5-unknown-bus".into(),
                element: format!("line {k}"),
                message: format!("endpoint {} or {} is not a bus", line.from, line.to),
            });
        }
        if line.susceptance_s <= 0.0 {
            v.push(Violation {
                rule: "R6-susceptance".into(),
                element: format!("line {k}"),
                message: format!("B = {} must be > 0", line.susceptance_s),
            });
        }
        if !seen_pairs.insert(line.key()) {
            v.push(Violation {
                rule: "R7-parallel-lines".into(),
                element: format!("line {k}"),
                message: format!(
                    "duplicate line between buses {} and {} (merge by susceptance addition)",
                    line.from, line.to
                ),
            });
        }
    }

    let imbalance = grid.total_injection_w();
    let tol = (POWER_BALANCE_RTOL * grid.total_load_w()).max(1e-9);
    if imbalance.abs() > tol {
        v.push(Violation {
            rule: "R8-power-imbalance".into(),
            element: "grid".into(),
            message: format!("sum of setpoints = {imbalance:.6e} W exceeds tolerance {tol:.3e}"),
        });
    }

    if !grid.buses.is_empty() && !grid.is_connected() {
        v.push(Violation {
            rule: "R9-connectivity".into(),
            element: "grid".into(),
            message: "grid is not a connected graph".into(),
        });
    }

    v.sort_by(|a, b| (&a.rule, &a.element).cmp(&(&b.rule, &b.element)));
    ValidationReport { violations: v }
}

/// Line susceptance from length and voltage level using the default
/// kilometric reactances (360 mOhm/km at 220 kV, 265 mOhm/km at 380 kV).
pub fn line_susceptance(length_km: f64, voltage_kv: f64) -> Result<f64> {
    if length_km <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "line length {length_km} km must be > 0"
        )));
    }
    let x_per_km = if voltage_kv == 220.0 {
        X_PER_KM_220
    } else if voltage_kv == 380.0 {
        X_PER_KM_380
    } else {
        return Err(Error::NoDefaultReactance(voltage_kv));
    };
    Ok(1.0 / (x_per_km * length_km))
}

/// Parameters of the synthetic two-cluster (barbell) grid.
#[derive(Debug, Clone)]
pub struct TwoClusterConfig {
    pub n_a: usize,
    pub n_b: usize,
    pub intra_susceptance: f64,
    pub bridge_susceptance: f64,
    pub seed: u64,
    /// Probability of an extra chord between non-adjacent cluster members,
    /// on top of the ring backbone.
    pub chord_probability: f64,
    /// Injection per generator bus, p.u.
    pub generation_per_bus: f64,
    pub generator_inertia: f64,
    pub damping: f64,
}

impl TwoClusterConfig {
    pub fn symmetric(n_per_cluster: usize, intra: f64, bridge: f64, seed: u64) -> Self {
        Self {
            n_a: n_per_cluster,
            n_b: n_per_cluster,
            intra_susceptance: intra,
            bridge_susceptance: bridge,
            seed,
            chord_probability: 0.35,
            generation_per_bus: 1.0,
            generator_inertia: 1.0,
            damping: 0.1,
        }
    }
}

/// Two densely connected clusters joined by a weak bridge, with alternating
/// generator/load roles and balanced injections. Deterministic for a fixed
/// seed. Cluster A holds bus ids `0..n_a`, cluster B `n_a..n_a+n_b`.
pub fn synth_clusters(cfg: &TwoClusterConfig) -> Result<GridModel> {
    if cfg.n_a < 3 || cfg.n_b < 3 {
        return Err(Error::InvalidArgument(
            "each cluster needs at least 3 buses".into(),
        ));
    }
    if cfg.bridge_susceptance >= cfg.intra_susceptance {
        return Err(Error::InvalidArgument(
            "bridge susceptance must be weaker than intra-cluster susceptance".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut buses = Vec::new();
    let mut lines = Vec::new();

    let mut add_cluster = |offset: usize, n: usize, center: (f64, f64), rng: &mut ChaCha8Rng| {
        for k in 0..n {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            buses.push(Bus {
                id: (offset + k) as u64,
                kind: if k % 2 == 0 {
                    BusKind::Generator
                } else {
                    BusKind::Load
                },
                voltage_kv: 1.0,
                position: Some((center.0 + angle.cos(), center.1 + angle.sin())),
                power_setpoint_w: 0.0,
                inertia: 0.0,
                damping: cfg.damping,
            });
        }
        // Ring backbone plus random chords.
        for k in 0..n {
            let a = (offset + k) as u64;
            let b = (offset + (k + 1) % n) as u64;
            lines.push(Line {
                from: a.min(b),
                to: a.max(b),
                susceptance_s: cfg.intra_susceptance,
                length_km: 1.0,
            });
        }
        for i in 0..n {
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue; // ring edge already present
                }
                if rng.gen::<f64>() < cfg.chord_probability {
                    lines.push(Line {
                        from: (offset + i) as u64,
                        to: (offset + j) as u64,
                        susceptance_s: cfg.intra_susceptance,
                        length_km: 1.0,
                    });
                }
            }
        }
    };

    add_cluster(0, cfg.n_a, (0.0, 0.0), &mut rng);
    add_cluster(cfg.n_a, cfg.n_b, (10.0, 0.0), &mut rng);

    lines.push(Line {
        from: 0,
        to: cfg.n_a as u64,
        susceptance_s: cfg.bridge_susceptance,
        length_km: 5.0,
    });

    // Balanced injections: generators feed in equally, loads absorb equally.
    let n_gen = buses.iter().filter(|b| b.kind == BusKind::Generator).count();
    let n_load = buses.len() - n_gen;
    if n_load == 0 {
        return Err(Error::InvalidArgument("no load buses in synthesis".into()));
    }
    let per_load = cfg.generation_per_bus * n_gen as f64 / n_load as f64;
    for b in &mut buses {
        match b.kind {
            BusKind::Generator => {
                b.power_setpoint_w = cfg.generation_per_bus;
                b.inertia = cfg.generator_inertia;
            }
            BusKind::Load => {
                b.power_setpoint_w = -per_load;
                b.inertia = 0.0;
            }
        }
    }

    let mut grid = GridModel::new(buses, lines, 50.0, true);
    grid.merge_parallel_lines();
    Ok(grid)
}

/// Symmetric two-cluster grid (equal cluster sizes).
pub fn synth_two_cluster(
    n_per_cluster: usize,
    intra_susceptance: f64,
    bridge_susceptance: f64,
    seed: u64,
) -> Result<GridModel> {
    synth_clusters(&TwoClusterConfig::symmetric(
        n_per_cluster,
        intra_susceptance,
        bridge_susceptance,
        seed,
    ))
}
