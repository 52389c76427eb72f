//! Inertia placement procedures (uniform / Fiedler / anti-Fiedler sampling)
//! and batch sweeps of the disturbance magnitude over inertia levels.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_fault, DynamicsKind, FaultScenario};
use crate::error::{Error, Result};
use crate::grid::GridModel;
use crate::spectral::{build_laplacian, slow_modes, SpectralModes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcedureKind {
    /// Every generator bus equally likely.
    Uniform,
    /// Weight proportional to the squared Fiedler component u2_i^2.
    Fiedler,
    /// Weight proportional to 1 / max(u2_i^2, epsilon).
    NonFiedler,
    /// Caller-supplied weights per generator bus.
    Custom,
}

impl std::fmt::Display for ProcedureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProcedureKind::Uniform => "uniform",
            ProcedureKind::Fiedler => "fiedler",
            ProcedureKind::NonFiedler => "non_fiedler",
            ProcedureKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ProcedureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(ProcedureKind::Uniform),
            "fiedler" => Ok(ProcedureKind::Fiedler),
            "non_fiedler" | "nonfiedler" | "anti_fiedler" => Ok(ProcedureKind::NonFiedler),
            "custom" => Ok(ProcedureKind::Custom),
            other => Err(format!("unknown procedure {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlacementProcedure {
    pub kind: ProcedureKind,
    /// Floor applied to u2_i^2 before inversion in the anti-Fiedler weights.
    pub epsilon_floor: f64,
    pub seed: u64,
    /// Weights per generator bus (same order as `grid.generator_indices()`),
    /// used when `kind` is `Custom`.
    pub custom_weights: Option<Vec<f64>>,
}

impl PlacementProcedure {
    pub fn new(kind: ProcedureKind, seed: u64) -> Self {
        Self {
            kind,
            epsilon_floor: 1e-9,
            seed,
            custom_weights: None,
        }
    }
}

/// Normalized sampling weights over the grid's generator buses, as
/// (grid index, probability) pairs.
pub fn sampling_weights(
    grid: &GridModel,
    modes: &SpectralModes,
    procedure: &PlacementProcedure,
) -> Result<Vec<(usize, f64)>> {
    let gens = grid.generator_indices();
    if gens.is_empty() {
        return Err(Error::InvalidArgument("grid has no generator buses".into()));
    }
    let raw: Vec<f64> = match procedure.kind {
        ProcedureKind::Uniform => vec![1.0; gens.len()],
        ProcedureKind::Fiedler => gens.iter().map(|&i| modes.fiedler_sq(i)).collect(),
        ProcedureKind::NonFiedler => gens
            .iter()
            .map(|&i| 1.0 / modes.fiedler_sq(i).max(procedure.epsilon_floor))
            .collect(),
        ProcedureKind::Custom => {
            let w = procedure.custom_weights.as_ref().ok_or_else(|| {
                Error::InvalidArgument("custom procedure requires custom_weights".into())
            })?;
            if w.len() != gens.len() {
                return Err(Error::InvalidArgument(format!(
                    "custom_weights has {} entries for {} generator buses",
                    w.len(),
                    gens.len()
                )));
            }
            if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::InvalidArgument(
                    "custom_weights must be finite and nonnegative".into(),
                ));
            }
            w.clone()
        }
    };
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument(
            "sampling weights vanish on every generator bus".into(),
        ));
    }
    Ok(gens
        .into_iter()
        .zip(raw)
        .map(|(i, w)| (i, w / total))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Remove,
    Add,
}

/// Fraction of a bus's original inertia added per draw when `direction`
/// is `Add`.
pub const ADDITION_INCREMENT_FRACTION: f64 = 0.1;

fn weighted_draw(rng: &mut ChaCha8Rng, entries: &[(usize, f64)]) -> Result<usize> {
    let dist = WeightedIndex::new(entries.iter().map(|&(_, w)| w))
        .map_err(|e| Error::InvalidArgument(format!("degenerate weights: {e}")))?;
    Ok(entries[dist.sample(rng)].0)
}

/// Moves the grid's total inertia M_sys to `target_msys` by repeated
/// weighted draws over generator buses.
///
/// Removal samples without replacement among buses still holding inertia
/// and zeroes each drawn bus; the last draw is only partially reduced so
/// the target is hit exactly. Addition samples with replacement and grows
/// each drawn bus by 10% of its original inertia (floored at 10% of the
/// mean original generator inertia); the final increment is truncated.
pub fn modify_inertia(
    grid: &GridModel,
    weights: &[(usize, f64)],
    target_msys: f64,
    direction: Direction,
    rng: &mut ChaCha8Rng,
) -> Result<GridModel> {
    let mut out = grid.clone();
    let mut m_sys = grid.system_inertia();
    if target_msys < 0.0 {
        return Err(Error::InvalidArgument("target M_sys must be >= 0".into()));
    }
    if (target_msys - m_sys).abs() <= 1e-12 * m_sys.max(1.0) {
        return Ok(out);
    }

    match direction {
        Direction::Remove => {
            if target_msys > m_sys {
                return Err(Error::InvalidArgument(format!(
                    "removal target {target_msys} exceeds current M_sys {m_sys}"
                )));
            }
            let mut pool: Vec<(usize, f64)> = weights
                .iter()
                .copied()
                .filter(|&(i, w)| w > 0.0 && out.buses[i].inertia > 0.0)
                .collect();
            while m_sys > target_msys * (1.0 + 1e-12) {
                if pool.is_empty() {
                    return Err(Error::Infeasible(format!(
                        "no sampleable inertia left at M_sys = {m_sys}, target {target_msys}"
                    )));
                }
                let i = weighted_draw(rng, &pool)?;
                pool.retain(|&(j, _)| j != i);
                let m_i = out.buses[i].inertia;
                let excess = m_sys - target_msys;
                if m_i <= excess {
                    out.buses[i].inertia = 0.0;
                    m_sys -= m_i;
                } else {
                    out.buses[i].inertia = m_i - excess;
                    m_sys = target_msys;
                }
            }
        }
        Direction::Add => {
            if target_msys < m_sys {
                return Err(Error::InvalidArgument(format!(
                    "addition target {target_msys} below current M_sys {m_sys}"
                )));
            }
            let gens = grid.generator_indices();
            let mean_m: f64 =
                gens.iter().map(|&i| grid.buses[i].inertia).sum::<f64>() / gens.len() as f64;
            let base_unit = ADDITION_INCREMENT_FRACTION * mean_m;
            if base_unit <= 0.0 {
                return Err(Error::Infeasible(
                    "cannot add inertia to a grid with zero total inertia".into(),
                ));
            }
            while m_sys < target_msys * (1.0 - 1e-12) {
                let i = weighted_draw(rng, weights)?;
                let step = (ADDITION_INCREMENT_FRACTION * grid.buses[i].inertia).max(base_unit);
                let inc = step.min(target_msys - m_sys);
                out.buses[i].inertia += inc;
                m_sys += inc;
            }
        }
    }
    Ok(out)
}

/// One paired draw: remove `unit` of inertia from a bus sampled by
/// `remove_weights`, add the same amount to a bus sampled by
/// `add_weights`. M_sys is exactly conserved. Repeated `n_pairs` times.
pub fn shift_inertia(
    grid: &GridModel,
    remove_weights: &[(usize, f64)],
    add_weights: &[(usize, f64)],
    unit: f64,
    n_pairs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GridModel> {
    if unit <= 0.0 {
        return Err(Error::InvalidArgument("shift unit must be > 0".into()));
    }
    let mut out = grid.clone();
    for _ in 0..n_pairs {
        let pool: Vec<(usize, f64)> = remove_weights
            .iter()
            .copied()
            .filter(|&(i, w)| w > 0.0 && out.buses[i].inertia > 0.0)
            .collect();
        if pool.is_empty() {
            return Err(Error::Infeasible(
                "no inertia left to shift from the removal distribution".into(),
            ));
        }
        let src = weighted_draw(rng, &pool)?;
        let moved = unit.min(out.buses[src].inertia);
        out.buses[src].inertia -= moved;
        let dst = weighted_draw(rng, add_weights)?;
        out.buses[dst].inertia += moved;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub procedure: String,
    pub seed: u64,
    /// System inertia at this level, W s^2 (SI grids) or p.u. s^2.
    pub m_sys: f64,
    pub fault_bus: u64,
    /// Squared Fiedler component of the faulted bus.
    pub u2b_sq: f64,
    pub m_b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub procedure: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

/// Runs every fault scenario at every inertia level.
///
/// Levels are visited in descending M_sys order starting from the input
/// grid; each level's grid is derived from the previous one with a single
/// continuing RNG stream, so the paths are nested (deeper removal extends
/// the shallower one). Faults at one level run in parallel; rows are
/// emitted in (level, fault) input order regardless of scheduling.
pub fn sweep_inertia(
    grid: &GridModel,
    procedure: &PlacementProcedure,
    levels: &[f64],
    faults: &[FaultScenario],
    kind: DynamicsKind,
) -> Result<SweepResult> {
    if faults.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one fault".into()));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sorted.dedup();
    if sorted.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one level".into()));
    }

    let laplacian = build_laplacian(grid)?;
    let modes = slow_modes(&laplacian, 2.min(grid.n()))?;
    let weights = sampling_weights(grid, &modes, procedure)?;
    let mut rng = ChaCha8Rng::seed_from_u64(procedure.seed);

    let mut rows = Vec::with_capacity(sorted.len() * faults.len());
    let mut current = grid.clone();
    for &target in &sorted {
        let direction = if target <= current.system_inertia() {
            Direction::Remove
        } else {
            Direction::Add
        };
        current = modify_inertia(&current, &weights, target, direction, &mut rng)?;
        let level_grid = current.clone();
        let m_sys = level_grid.system_inertia();
        let level_rows: Vec<Result<SweepRow>> = faults
            .par_iter()
            .map(|scenario| {
                let (_, report) = run_fault(&level_grid, scenario, kind).map_err(|e| {
                    Error::InvalidArgument(format!(
                        "level M_sys={m_sys:.6e}, fault bus {}: {e}",
                        scenario.fault_bus
                    ))
                })?;
                let b = level_grid
                    .index_of(scenario.fault_bus)
                    .ok_or(Error::UnknownBus(scenario.fault_bus))?;
                Ok(SweepRow {
                    procedure: procedure.kind.to_string(),
                    seed: procedure.seed,
                    m_sys,
                    fault_bus: scenario.fault_bus,
                    u2b_sq: modes.fiedler_sq(b),
                    m_b: report.m_b,
                })
            })
            .collect();
        for row in level_rows {
            rows.push(row?);
        }
    }
    Ok(SweepResult {
        procedure: procedure.kind.to_string(),
        seed: procedure.seed,
        rows,
    })
}
