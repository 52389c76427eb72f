//! Pre-fault operating point: DC power flow and economic dispatch (DC
//! optimal power flow with marginal costs).
//!
//! Without line limits (the default) the dispatch reduces to merit-order
//! loading and is computed exactly that way; with per-line limits a linear
//! program is solved instead.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{BusKind, GridModel};
use crate::ingest::GeneratorRecord;
use crate::spectral::build_laplacian;

/// Default slack choice: the generator bus with the largest power setpoint,
/// ties broken by lowest bus id. Falls back to the first bus.
pub fn default_slack(grid: &GridModel) -> usize {
    grid.buses
        .iter()
        .enumerate()
        .filter(|(_, b)| b.kind == BusKind::Generator)
        .max_by(|(_, a), (_, b)| {
            a.power_setpoint_w
                .total_cmp(&b.power_setpoint_w)
                .then(b.id.cmp(&a.id))
        })
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Solves L theta = P with the slack angle fixed at zero. Injections must
/// balance to within 1e-9 relative.
pub fn dc_power_flow(grid: &GridModel, injections: &[f64], slack: usize) -> Result<Vec<f64>> {
    let n = grid.n();
    if injections.len() != n {
        return Err(Error::InvalidArgument(
            "injection vector length does not match grid".into(),
        ));
    }
    let scale = injections.iter().map(|p| p.abs()).fold(0.0, f64::max);
    let sum: f64 = injections.iter().sum();
    if sum.abs() > 1e-9 * scale.max(1e-30) && scale > 0.0 {
        return Err(Error::UnbalancedInjections { sum });
    }
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }

    let lap = build_laplacian(grid)?.to_dense();
    let reduced: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let mut a = DMatrix::<f64>::zeros(n - 1, n - 1);
    let mut rhs = DVector::<f64>::zeros(n - 1);
    for (r, &i) in reduced.iter().enumerate() {
        rhs[r] = injections[i];
        for (c, &j) in reduced.iter().enumerate() {
            a[(r, c)] = lap[(i, j)];
        }
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidArgument("singular reduced Laplacian".into()))?;

    let mut theta = vec![0.0; n];
    for (r, &i) in reduced.iter().enumerate() {
        theta[i] = sol[r];
    }

    // Residual check over the full system.
    let mut residual: f64 = 0.0;
    for i in 0..n {
        let mut lt = 0.0;
        for j in 0..n {
            lt += lap[(i, j)] * theta[j];
        }
        residual = residual.max((lt - injections[i]).abs());
    }
    if residual > 1e-9 * scale {
        return Err(Error::InvalidArgument(format!(
            "DC solve residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(theta)
}

#[derive(Debug, Clone)]
pub struct DispatchProblem<'a> {
    pub grid: &'a GridModel,
    /// Per-bus load magnitude, W (>= 0), indexed like `grid.buses`.
    pub loads: Vec<f64>,
    pub generators: Vec<GeneratorRecord>,
    /// Optional per-line flow limits, W, indexed like `grid.lines`.
    pub line_limits: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DispatchResult {
    /// Per-generator output, W, same order as the problem's generators.
    pub outputs: Vec<f64>,
    /// Per-bus DC angles, rad.
    pub angles: Vec<f64>,
    /// Total cost, $/h.
    pub objective: f64,
    pub slack_bus: u64,
}

fn capacity_slack(problem: &DispatchProblem) -> Result<usize> {
    let g = problem
        .generators
        .iter()
        .max_by(|a, b| {
            a.rated_power_w
                .total_cmp(&b.rated_power_w)
                .then(b.bus_id.cmp(&a.bus_id))
        })
        .ok_or_else(|| Error::Infeasible("no generators".into()))?;
    problem
        .grid
        .index_of(g.bus_id)
        .ok_or(Error::UnknownBus(g.bus_id))
}

fn injections(problem: &DispatchProblem, outputs: &[f64]) -> Result<Vec<f64>> {
    let mut inj: Vec<f64> = problem.loads.iter().map(|l| -l).collect();
    for (g, &p) in problem.generators.iter().zip(outputs) {
        let idx = problem
            .grid
            .index_of(g.bus_id)
            .ok_or(Error::UnknownBus(g.bus_id))?;
        inj[idx] += p;
    }
    Ok(inj)
}

fn merit_order_fill(problem: &DispatchProblem) -> Vec<f64> {
    let mut order: Vec<usize> = (0..problem.generators.len()).collect();
    order.sort_by(|&a, &b| {
        let ga = &problem.generators[a];
        let gb = &problem.generators[b];
        ga.cost_per_mwh
            .total_cmp(&gb.cost_per_mwh)
            .then(ga.bus_id.cmp(&gb.bus_id))
    });
    let mut remaining: f64 = problem.loads.iter().sum();
    let mut outputs = vec![0.0; problem.generators.len()];
    for idx in order {
        if remaining <= 0.0 {
            break;
        }
        let take = remaining.min(problem.generators[idx].rated_power_w);
        outputs[idx] = take;
        remaining -= take;
    }
    outputs
}

fn lp_dispatch(problem: &DispatchProblem, limits: &[f64], slack: usize) -> Result<Vec<f64>> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};

    let grid = problem.grid;
    let n = grid.n();
    let base = problem.loads.iter().sum::<f64>().max(1.0);
    let mut lp = Problem::new(OptimizationDirection::Minimize);

    let p_vars: Vec<Variable> = problem
        .generators
        .iter()
        .map(|g| lp.add_var(g.cost_per_mwh, (0.0, g.rated_power_w / base)))
        .collect();
    let theta_vars: Vec<Option<Variable>> = (0..n)
        .map(|i| {
            if i == slack {
                None
            } else {
                Some(lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
            }
        })
        .collect();

    let weights = grid.line_weights()?;

    // Nodal balance: sum of generation - L theta = load.
    for i in 0..n {
        let mut terms: Vec<(Variable, f64)> = Vec::new();
        for (g, var) in problem.generators.iter().zip(&p_vars) {
            if grid.index_of(g.bus_id) == Some(i) {
                terms.push((*var, 1.0));
            }
        }
        let mut coeffs = vec![0.0; n];
        for &(a, b, w) in &weights {
            if a == i {
                coeffs[a] += w / base;
                coeffs[b] -= w / base;
            } else if b == i {
                coeffs[b] += w / base;
                coeffs[a] -= w / base;
            }
        }
        for (j, c) in coeffs.iter().enumerate() {
            if let Some(v) = theta_vars[j] {
                if *c != 0.0 {
                    terms.push((v, -*c));
                }
            }
        }
        lp.add_constraint(&terms, ComparisonOp::Eq, problem.loads[i] / base);
    }

    // Line flow limits: |w (theta_a - theta_b)| <= limit.
    for (line_idx, &(a, b, w)) in weights.iter().enumerate() {
        let lim = limits[line_idx] / base;
        let mut terms: Vec<(Variable, f64)> = Vec::new();
        if let Some(v) = theta_vars[a] {
            terms.push((v, w / base));
        }
        if let Some(v) = theta_vars[b] {
            terms.push((v, -w / base));
        }
        lp.add_constraint(&terms, ComparisonOp::Le, lim);
        let neg: Vec<(Variable, f64)> = terms.iter().map(|&(v, c)| (v, -c)).collect();
        lp.add_constraint(&neg, ComparisonOp::Le, lim);
    }

    let solution = lp
        .solve()
        .map_err(|e| Error::Infeasible(format!("line-limited dispatch: {e}")))?;
    Ok(p_vars.iter().map(|v| solution[*v] * base).collect())
}

/// Minimizes total marginal cost subject to power balance, generator
/// capacity bounds and (optionally) line flow limits.
pub fn economic_dispatch(problem: &DispatchProblem) -> Result<DispatchResult> {
    let total_load: f64 = problem.loads.iter().sum();
    let total_cap: f64 = problem.generators.iter().map(|g| g.rated_power_w).sum();
    if total_cap < total_load {
        return Err(Error::Infeasible(format!(
            "capacity {total_cap:.3e} W < load {total_load:.3e} W"
        )));
    }
    if problem.loads.iter().any(|&l| l < 0.0) {
        return Err(Error::InvalidArgument("negative load".into()));
    }

    let slack = capacity_slack(problem)?;
    let outputs = match &problem.line_limits {
        None => merit_order_fill(problem),
        Some(limits) => {
            if limits.len() != problem.grid.lines.len() {
                return Err(Error::InvalidArgument(
                    "line limit vector length does not match lines".into(),
                ));
            }
            lp_dispatch(problem, limits, slack)?
        }
    };

    let inj = injections(problem, &outputs)?;
    let angles = dc_power_flow(problem.grid, &inj, slack)?;
    let objective = problem
        .generators
        .iter()
        .zip(&outputs)
        .map(|(g, &p)| g.cost_per_mwh * p / 1e6)
        .sum();
    Ok(DispatchResult {
        outputs,
        angles,
        objective,
        slack_bus: problem.grid.buses[slack].id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, BusKind, GridModel, Line};
    use crate::ingest::{GeneratorRecord, Technology};
    use approx::assert_abs_diff_eq;

    fn bus(id: u64, kind: BusKind, p: f64) -> Bus {
        Bus {
            id,
            kind,
            voltage_kv: 1.0,
            position: None,
            power_setpoint_w: p,
            inertia: if kind == BusKind::Generator { 1.0 } else { 0.0 },
            damping: 0.1,
        }
    }

    fn line(a: u64, b: u64, s: f64) -> Line {
        Line {
            from: a,
            to: b,
            susceptance_s: s,
            length_km: 1.0,
        }
    }

    #[test]
    fn two_bus_dc_solution() {
        let g = GridModel::new(
            vec![
                bus(0, BusKind::Generator, 1.0),
                bus(1, BusKind::Load, -1.0),
            ],
            vec![line(0, 1, 1.0)],
            50.0,
            true,
        );
        // Slack at the load bus: theta = (1, 0).
        let theta = dc_power_flow(&g, &[1.0, -1.0], 1).unwrap();
        assert_abs_diff_eq!(theta[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(theta[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_injections_give_zero_angles() {
        let g = GridModel::new(
            vec![
                bus(0, BusKind::Generator, 0.0),
                bus(1, BusKind::Load, 0.0),
            ],
            vec![line(0, 1, 1.0)],
            50.0,
            true,
        );
        assert_eq!(dc_power_flow(&g, &[0.0, 0.0], 0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn symmetric_cycle_has_symmetric_angles() {
        let g = GridModel::new(
            vec![
                bus(0, BusKind::Generator, 1.0),
                bus(1, BusKind::Load, -0.5),
                bus(2, BusKind::Load, -0.5),
            ],
            vec![line(0, 1, 1.0), line(1, 2, 1.0), line(0, 2, 1.0)],
            50.0,
            true,
        );
        let theta = dc_power_flow(&g, &[1.0, -0.5, -0.5], 0).unwrap();
        assert_abs_diff_eq!(theta[1], theta[2], epsilon = 1e-12);
    }

    #[test]
    fn unbalanced_injections_are_rejected() {
        let g = GridModel::new(
            vec![
                bus(0, BusKind::Generator, 1.0),
                bus(1, BusKind::Load, -0.5),
            ],
            vec![line(0, 1, 1.0)],
            50.0,
            true,
        );
        assert!(matches!(
            dc_power_flow(&g, &[1.0, -0.5], 0),
            Err(Error::UnbalancedInjections { .. })
        ));
    }

    fn dispatch_fixture() -> (GridModel, Vec<GeneratorRecord>) {
        let grid = GridModel::new(
            vec![
                bus(0, BusKind::Generator, 0.0),
                bus(1, BusKind::Generator, 0.0),
                bus(2, BusKind::Load, 0.0),
            ],
            vec![line(0, 2, 1.0), line(1, 2, 1.0)],
            50.0,
            true,
        );
        let gens = vec![
            GeneratorRecord::new(0, Technology::Gas, 200e6),
            GeneratorRecord::new(1, Technology::Nuclear, 80e6),
        ];
        (grid, gens)
    }

    #[test]
    fn merit_order_prefers_cheap_nuclear() {
        let (grid, gens) = dispatch_fixture();
        let mut loads = vec![0.0; 3];
        loads[2] = 100e6;
        let problem = DispatchProblem {
            grid: &grid,
            loads,
            generators: gens,
            line_limits: None,
        };
        let result = economic_dispatch(&problem).unwrap();
        assert_eq!(result.outputs, vec![20e6, 80e6]);
        // 80 MW * 16 $/MWh + 20 MW * 100 $/MWh.
        assert_abs_diff_eq!(result.objective, 80.0 * 16.0 + 20.0 * 100.0, epsilon = 1e-9);
        let total: f64 = result.outputs.iter().sum();
        assert!((total - 100e6).abs() < 1e-6 * 100e6);
    }

    #[test]
    fn zero_load_means_zero_output() {
        let (grid, gens) = dispatch_fixture();
        let problem = DispatchProblem {
            grid: &grid,
            loads: vec![0.0; 3],
            generators: gens,
            line_limits: None,
        };
        let result = economic_dispatch(&problem).unwrap();
        assert_eq!(result.outputs, vec![0.0, 0.0]);
        assert_eq!(result.objective, 0.0);
    }

    #[test]
    fn equal_cost_tie_broken_by_lowest_bus_id() {
        let (grid, _) = dispatch_fixture();
        let gens = vec![
            GeneratorRecord::new(1, Technology::Nuclear, 100e6),
            GeneratorRecord::new(0, Technology::Lignite, 100e6), // same 16 $/MWh
        ];
        let mut loads = vec![0.0; 3];
        loads[2] = 50e6;
        let problem = DispatchProblem {
            grid: &grid,
            loads,
            generators: gens,
            line_limits: None,
        };
        let result = economic_dispatch(&problem).unwrap();
        assert_eq!(result.outputs, vec![0.0, 50e6]);
    }

    #[test]
    fn infeasible_when_capacity_below_load() {
        let (grid, gens) = dispatch_fixture();
        let mut loads = vec![0.0; 3];
        loads[2] = 500e6;
        let problem = DispatchProblem {
            grid: &grid,
            loads,
            generators: gens,
            line_limits: None,
        };
        assert!(matches!(
            economic_dispatch(&problem),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn line_limit_forces_expensive_generator() {
        // Cheap generator behind a limited line must be backed off.
        let (grid, gens) = dispatch_fixture();
        let mut loads = vec![0.0; 3];
        loads[2] = 100e6;
        let problem = DispatchProblem {
            grid: &grid,
            loads,
            generators: gens,
            // Line 1 (nuclear bus -> load) capped at 50 MW.
            line_limits: Some(vec![f64::INFINITY, 50e6]),
        };
        let result = economic_dispatch(&problem).unwrap();
        assert!((result.outputs[1] - 50e6).abs() < 1e-3 * 50e6, "{:?}", result.outputs);
        assert!((result.outputs[0] - 50e6).abs() < 1e-3 * 50e6);
    }

    #[test]
    fn dispatch_balances_generation_and_load() {
        let (grid, gens) = dispatch_fixture();
        for load in [10e6, 123.456e6, 279.9e6] {
            let mut loads = vec![0.0; 3];
            loads[2] = load;
            let problem = DispatchProblem {
                grid: &grid,
                loads,
                generators: gens.clone(),
                line_limits: None,
            };
            let result = economic_dispatch(&problem).unwrap();
            let total: f64 = result.outputs.iter().sum();
            assert!((total - load).abs() < 1e-6 * load);
        }
    }

    #[test]
    fn dc_linearization_reproduces_injections_to_first_order() {
        let grid = crate::grid::synth_two_cluster(6, 1.0, 0.1, 13).unwrap();
        let p: Vec<f64> = grid.buses.iter().map(|b| b.power_setpoint_w * 0.02).collect();
        let theta = dc_power_flow(&grid, &p, 0).unwrap();
        let max_spread = grid
            .line_weights()
            .unwrap()
            .iter()
            .map(|&(i, j, _)| (theta[i] - theta[j]).abs())
            .fold(0.0, f64::max);
        assert!(max_spread < 0.1, "fixture not in small-angle regime");
        let res = crate::dynamics::power_flow_residual(
            &{
                let mut g = grid.clone();
                for (b, &pi) in g.buses.iter_mut().zip(&p) {
                    b.power_setpoint_w = pi;
                }
                g
            },
            &theta,
        )
        .unwrap();
        let scale = p.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for r in res {
            assert!(r.abs() < 1e-3 * scale, "residual {r}");
        }
    }
}
