//! Foresight-free storage dispatch over a capacitated flow network.
//!
//! Each step solves a small QP trading off unserved demand against the loss of
//! stored-energy value, then advances every unit's energy. On a single node the
//! program reproduces the greedy time-to-go policy in [`greedy_single_node`].

mod greedy;
pub mod qp;

use std::ops::ControlFlow;

pub use greedy::greedy_single_node;
pub use qp::{solve_qp, QpInstance, QpSolution, Row, SolveStatus};

use crate::error::{Error, Result};
use crate::model::{DispatchParams, NetworkModel, StorageUnit, TimeSeries, FEASIBILITY_TOL};

/// Variable layout of the dispatch QP: unserved demand per node, then unit
/// powers, then edge flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QpLayout {
    pub nodes: usize,
    pub units: usize,
    pub edges: usize,
}

impl QpLayout {
    pub fn new(network: &NetworkModel, fleet: &[StorageUnit]) -> Self {
        QpLayout {
            nodes: network.node_count(),
            units: fleet.len(),
            edges: network.edges().len(),
        }
    }
    pub fn var_count(&self) -> usize {
        self.nodes + self.units + self.edges
    }
    pub fn unserved(&self, node: usize) -> usize {
        node
    }
    pub fn power(&self, unit: usize) -> usize {
        self.nodes + unit
    }
    pub fn flow(&self, edge: usize) -> usize {
        self.nodes + self.units + edge
    }
}

/// Power bounds for one step, with unity efficiency on the energy limits.
pub fn power_bounds(unit: &StorageUnit, dt_hours: f64) -> (f64, f64) {
    let lo = (-unit.p_max_gw).max((unit.e_gwh - unit.e_max_gwh) / dt_hours);
    let hi = unit.p_max_gw.min(unit.e_gwh / dt_hours);
    // rounding residue from earlier steps would leave a sliver of a range
    let snap = |v: f64| if v.abs() <= 1e-12 * unit.p_max_gw { 0.0 } else { v };
    (snap(lo.min(0.0)), snap(hi.max(0.0)))
}

/// Composes the per-step dispatch QP.
pub fn build_qp(
    shortfalls_gw: &[f64],
    fleet: &[StorageUnit],
    network: &NetworkModel,
    params: &DispatchParams,
    demands_gw: &[f64],
    dt_hours: f64,
) -> Result<QpInstance> {
    params.validate_for(fleet)?;
    let n = network.node_count();
    if shortfalls_gw.len() != n || demands_gw.len() != n {
        return Err(Error::Dimension(format!(
            "expected {n} nodal shortfalls and demands, got {} and {}",
            shortfalls_gw.len(),
            demands_gw.len()
        )));
    }
    if let Some(u) = fleet.iter().find(|u| u.node >= n) {
        return Err(Error::Parameter(format!(
            "storage unit placed at undeclared node {}",
            u.node
        )));
    }
    let layout = QpLayout::new(network, fleet);
    let nv = layout.var_count();
    let mut quad = vec![0.0; nv];
    let mut linear = vec![0.0; nv];
    let mut lower = vec![0.0; nv];
    let mut upper = vec![0.0; nv];

    for i in 0..n {
        let v = layout.unserved(i);
        quad[v] = params.beta * dt_hours / demands_gw[i].max(params.demand_floor_gw);
        linear[v] = params.alpha * dt_hours;
        lower[v] = 0.0;
        upper[v] = f64::INFINITY;
    }
    for (u, unit) in fleet.iter().enumerate() {
        let v = layout.power(u);
        let slope = params.delta / unit.p_max_gw;
        quad[v] = slope * dt_hours * dt_hours;
        linear[v] = (params.gamma - slope * unit.e_gwh) * dt_hours;
        (lower[v], upper[v]) = power_bounds(unit, dt_hours);
    }
    for (e, edge) in network.edges().iter().enumerate() {
        let v = layout.flow(e);
        lower[v] = -edge.capacity_gw;
        upper[v] = edge.capacity_gw;
    }

    // s_i + sum_{u at i} p_u + inflow_i >= S_i
    let mut rows: Vec<Row> = (0..n)
        .map(|i| Row {
            coeffs: vec![(layout.unserved(i), 1.0)],
            rhs: shortfalls_gw[i],
        })
        .collect();
    for (u, unit) in fleet.iter().enumerate() {
        rows[unit.node].coeffs.push((layout.power(u), 1.0));
    }
    for (e, edge) in network.edges().iter().enumerate() {
        rows[edge.a].coeffs.push((layout.flow(e), -1.0));
        rows[edge.b].coeffs.push((layout.flow(e), 1.0));
    }
    Ok(QpInstance {
        quad,
        linear,
        lower,
        upper,
        rows,
    })
}

/// Result of one dispatch step.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchOutcome {
    /// Unserved demand per node after storage and flows.
    pub unserved_gw: Vec<f64>,
    pub power_gw: Vec<f64>,
    /// Flow per edge, positive from `a` to `b`.
    pub flow_gw: Vec<f64>,
    pub fleet: Vec<StorageUnit>,
    pub objective: f64,
}

impl DispatchOutcome {
    /// Net inflow at each node implied by the edge flows.
    pub fn net_inflow(&self, network: &NetworkModel) -> Vec<f64> {
        net_inflow(network, &self.flow_gw)
    }
}

pub fn net_inflow(network: &NetworkModel, flows: &[f64]) -> Vec<f64> {
    let mut inflow = vec![0.0; network.node_count()];
    for (edge, f) in network.edges().iter().zip(flows) {
        inflow[edge.a] -= f;
        inflow[edge.b] += f;
    }
    inflow
}

/// Builds and solves the step QP, then advances every unit with its own efficiency.
pub fn dispatch_step(
    shortfalls_gw: &[f64],
    fleet: &[StorageUnit],
    network: &NetworkModel,
    params: &DispatchParams,
    demands_gw: &[f64],
    dt_hours: f64,
) -> Result<DispatchOutcome> {
    if let Some(mut outcome) = trivial_step(shortfalls_gw, fleet, network) {
        params.validate_for(fleet)?;
        outcome.objective = outcome
            .unserved_gw
            .iter()
            .zip(demands_gw)
            .map(|(&s, &d)| shortfall_cost(s, d, params, dt_hours))
            .sum();
        return Ok(outcome);
    }
    let qp = build_qp(shortfalls_gw, fleet, network, params, demands_gw, dt_hours)?;
    let sol = solve_qp(&qp)?;
    let layout = QpLayout::new(network, fleet);
    let clamp = |v: usize| -> Result<f64> {
        let x = sol.x[v];
        let (lo, hi) = (qp.lower[v], qp.upper[v]);
        if x < lo - FEASIBILITY_TOL || x > hi + FEASIBILITY_TOL {
            return Err(Error::Solver {
                iterations: sol.iterations,
                residual: sol.kkt_residual,
            });
        }
        Ok(x.clamp(lo, hi))
    };
    let unserved_gw = (0..layout.nodes)
        .map(|i| clamp(layout.unserved(i)))
        .collect::<Result<Vec<_>>>()?;
    let power_gw = (0..layout.units)
        .map(|u| clamp(layout.power(u)))
        .collect::<Result<Vec<_>>>()?;
    let flow_gw = (0..layout.edges)
        .map(|e| clamp(layout.flow(e)))
        .collect::<Result<Vec<_>>>()?;
    let fleet = fleet
        .iter()
        .zip(&power_gw)
        .map(|(unit, &p)| unit.apply_step(p, dt_hours))
        .collect::<Result<Vec<_>>>()?;
    Ok(DispatchOutcome {
        unserved_gw,
        power_gw,
        flow_gw,
        fleet,
        objective: sol.objective,
    })
}

/// Per-step cost of leaving `s` GW unserved at a node with demand `d`.
pub fn shortfall_cost(s: f64, d: f64, params: &DispatchParams, dt_hours: f64) -> f64 {
    params.beta * dt_hours / (2.0 * d.max(params.demand_floor_gw)) * s * s
        + params.alpha * dt_hours * s
}

// Nothing to do when no node is short and no unit can take charge; with no
// storage and no links the shortfall passes straight through.
fn trivial_step(
    shortfalls_gw: &[f64],
    fleet: &[StorageUnit],
    network: &NetworkModel,
) -> Option<DispatchOutcome> {
    if shortfalls_gw.len() != network.node_count() {
        return None;
    }
    let idle = shortfalls_gw.iter().all(|&s| s <= 0.0) && fleet.iter().all(|u| u.is_full());
    let isolated = fleet.is_empty() && network.edges().is_empty();
    if !(idle || isolated) {
        return None;
    }
    Some(DispatchOutcome {
        unserved_gw: shortfalls_gw.iter().map(|&s| s.max(0.0)).collect(),
        power_gw: vec![0.0; fleet.len()],
        flow_gw: vec![0.0; network.edges().len()],
        fleet: fleet.to_vec(),
        objective: 0.0,
    })
}

/// Per-step record kept in verbose mode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub unserved_gw: Vec<f64>,
    pub power_gw: Vec<f64>,
    pub energy_gwh: Vec<f64>,
    pub flow_gw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearOutcome {
    /// Resultant shortfall trace per node.
    pub resultant: Vec<TimeSeries>,
    pub log: Option<Vec<StepRecord>>,
    pub final_fleet: Vec<StorageUnit>,
}

fn check_traces(
    shortfalls: &[TimeSeries],
    demands: &[TimeSeries],
    network: &NetworkModel,
) -> Result<(usize, f64)> {
    let n = network.node_count();
    if shortfalls.len() != n || demands.len() != n {
        return Err(Error::Dimension(format!(
            "expected {n} nodal traces, got {} shortfall and {} demand traces",
            shortfalls.len(),
            demands.len()
        )));
    }
    let first = &shortfalls[0];
    for t in shortfalls.iter().chain(demands) {
        first.check_aligned(t)?;
    }
    Ok((first.len(), first.dt_hours()))
}

/// Steps through the year, handing every outcome to `observe`. Stops early when
/// `observe` breaks. Returns the fleet state after the last simulated step.
pub fn simulate_year_with<F>(
    shortfalls: &[TimeSeries],
    fleet: &[StorageUnit],
    network: &NetworkModel,
    params: &DispatchParams,
    demands: &[TimeSeries],
    mut observe: F,
) -> Result<Vec<StorageUnit>>
where
    F: FnMut(usize, &DispatchOutcome) -> ControlFlow<()>,
{
    let (len, dt) = check_traces(shortfalls, demands, network)?;
    params.validate_for(fleet)?;
    let n = network.node_count();
    let mut state = fleet.to_vec();
    let mut s = vec![0.0; n];
    let mut d = vec![0.0; n];
    for k in 0..len {
        for i in 0..n {
            s[i] = shortfalls[i].values()[k];
            d[i] = demands[i].values()[k];
        }
        let outcome = dispatch_step(&s, &state, network, params, &d, dt).map_err(|e| {
            Error::AtStep {
                step: k,
                source: Box::new(e),
            }
        })?;
        let flow = observe(k, &outcome);
        state = outcome.fleet;
        if flow.is_break() {
            break;
        }
    }
    Ok(state)
}

/// Runs a full year and collects the resultant traces (and the step log when `verbose`).
pub fn simulate_year(
    shortfalls: &[TimeSeries],
    fleet: &[StorageUnit],
    network: &NetworkModel,
    params: &DispatchParams,
    demands: &[TimeSeries],
    verbose: bool,
) -> Result<YearOutcome> {
    let (len, dt) = check_traces(shortfalls, demands, network)?;
    let n = network.node_count();
    let mut resultant = vec![Vec::with_capacity(len); n];
    let mut log = verbose.then(|| Vec::with_capacity(len));
    let final_fleet = simulate_year_with(shortfalls, fleet, network, params, demands, |_, out| {
        for (trace, &s) in resultant.iter_mut().zip(&out.unserved_gw) {
            trace.push(s);
        }
        if let Some(log) = log.as_mut() {
            log.push(StepRecord {
                unserved_gw: out.unserved_gw.clone(),
                power_gw: out.power_gw.clone(),
                energy_gwh: out.fleet.iter().map(|u| u.e_gwh).collect(),
                flow_gw: out.flow_gw.clone(),
            });
        }
        ControlFlow::Continue(())
    })?;
    let resultant = resultant
        .into_iter()
        .map(|v| TimeSeries::new(v, dt))
        .collect::<Result<Vec<_>>>()?;
    Ok(YearOutcome {
        resultant,
        log,
        final_fleet,
    })
}

/// Re-checks a step log against the dispatch invariants: power, energy and
/// flow limits, energy bookkeeping from the initial fleet, and
/// `s = max(0, S - sum p - inflow)` at every node. Returns one message per breach.
pub fn verify_log(
    shortfalls: &[TimeSeries],
    fleet: &[StorageUnit],
    network: &NetworkModel,
    log: &[StepRecord],
) -> Vec<String> {
    const RESULTANT_TOL: f64 = 1e-6;
    let mut issues = Vec::new();
    let Some(first) = shortfalls.first() else {
        return vec!["no shortfall traces".into()];
    };
    let dt = first.dt_hours();
    if log.len() != first.len() {
        issues.push(format!("log has {} steps, traces have {}", log.len(), first.len()));
    }
    let mut state = fleet.to_vec();
    for (k, step) in log.iter().enumerate() {
        if step.unserved_gw.len() != network.node_count()
            || step.power_gw.len() != state.len()
            || step.energy_gwh.len() != state.len()
            || step.flow_gw.len() != network.edges().len()
        {
            issues.push(format!("step {k}: wrong number of entries"));
            break;
        }
        for (j, (unit, &p)) in state.iter_mut().zip(&step.power_gw).enumerate() {
            if p.abs() > unit.p_max_gw + FEASIBILITY_TOL {
                issues.push(format!("step {k} unit {j}: power {p} beyond {}", unit.p_max_gw));
            }
            match unit.apply_step(p, dt) {
                Ok(next) => {
                    if (next.e_gwh - step.energy_gwh[j]).abs() > FEASIBILITY_TOL {
                        issues.push(format!(
                            "step {k} unit {j}: logged energy {} but dynamics give {}",
                            step.energy_gwh[j], next.e_gwh
                        ));
                    }
                    *unit = next;
                }
                Err(e) => issues.push(format!("step {k} unit {j}: {e}")),
            }
            unit.e_gwh = step.energy_gwh[j];
        }
        for (e, (edge, &f)) in network.edges().iter().zip(&step.flow_gw).enumerate() {
            if f.abs() > edge.capacity_gw + FEASIBILITY_TOL {
                issues.push(format!("step {k} edge {e}: flow {f} beyond {}", edge.capacity_gw));
            }
        }
        let inflow = net_inflow(network, &step.flow_gw);
        for i in 0..network.node_count() {
            let served: f64 = fleet
                .iter()
                .zip(&step.power_gw)
                .filter(|(u, _)| u.node == i)
                .map(|(_, p)| p)
                .sum();
            let Some(&s_in) = shortfalls.get(i).and_then(|t| t.values().get(k)) else {
                continue;
            };
            let expected = (s_in - served - inflow[i]).max(0.0);
            if (step.unserved_gw[i] - expected).abs() > RESULTANT_TOL {
                issues.push(format!(
                    "step {k} node {i}: unserved {} but balance gives {expected}",
                    step.unserved_gw[i]
                ));
            }
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(delta: f64) -> DispatchParams {
        DispatchParams {
            alpha: 100.0,
            beta: 100.0,
            gamma: 1.0,
            delta,
            demand_floor_gw: 1e-3,
        }
    }

    fn unit(node: usize, p_max: f64, e: f64, e_max: f64) -> StorageUnit {
        StorageUnit::new(node, p_max, e_max, e, 1.0).unwrap()
    }

    #[test]
    fn layout_counts() {
        let net = NetworkModel::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let fleet: Vec<_> = (0..3).map(|i| unit(i, 1.0, 4.0, 4.0)).collect();
        let qp = build_qp(&[0.0; 3], &fleet, &net, &params(0.2), &[1.0; 3], 1.0).unwrap();
        assert_eq!(qp.var_count(), 9);
        assert_eq!(qp.rows.len(), 3);
        let single = NetworkModel::single_node();
        let qp = build_qp(&[0.0], &fleet[..1], &single, &params(0.2), &[1.0], 1.0).unwrap();
        assert_eq!(qp.var_count(), 2);
    }

    #[test]
    fn idle_system_has_zero_optimum() {
        let net = NetworkModel::single_node();
        let fleet = [StorageUnit::new(0, 1.0, 4.0, 0.0, 1.0).unwrap()];
        let qp = build_qp(&[0.0], &fleet, &net, &params(0.2), &[1.0], 1.0).unwrap();
        let sol = solve_qp(&qp).unwrap();
        assert!(sol.x.iter().all(|v| v.abs() < 1e-12), "{:?}", sol.x);
        assert!(sol.objective.abs() < 1e-12);
    }

    #[test]
    fn build_qp_rejects_bad_params() {
        let net = NetworkModel::single_node();
        let fleet = [unit(0, 1.0, 4.0, 4.0)];
        let bad = DispatchParams {
            alpha: 1.0,
            gamma: 100.0,
            ..params(0.2)
        };
        assert!(build_qp(&[1.0], &fleet, &net, &bad, &[1.0], 1.0).is_err());
        assert!(build_qp(&[1.0], &fleet, &net, &params(0.3), &[1.0], 1.0).is_err());
    }

    #[test]
    fn single_node_matches_greedy_example() {
        let net = NetworkModel::single_node();
        let fleet = [unit(0, 2.0, 8.0, 8.0), unit(0, 2.0, 2.0, 8.0)];
        let out = dispatch_step(&[3.0], &fleet, &net, &params(0.2), &[4.0], 1.0).unwrap();
        assert!(out.unserved_gw[0].abs() < 1e-9);
        assert!((out.power_gw[0] - 2.0).abs() < 1e-9);
        assert!((out.power_gw[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn congested_link() {
        let net = NetworkModel::from_edges(2, &[(1, 0, 0.5)]).unwrap();
        let fleet = [unit(1, 3.0, 12.0, 12.0)];
        let out = dispatch_step(&[2.0, 0.0], &fleet, &net, &params(0.2), &[4.0, 4.0], 1.0).unwrap();
        assert!((out.flow_gw[0] - 0.5).abs() < 1e-9);
        assert!((out.power_gw[0] - 0.5).abs() < 1e-9);
        assert!((out.unserved_gw[0] - 1.5).abs() < 1e-9);
        assert!(out.unserved_gw[1].abs() < 1e-9);
    }

    #[test]
    fn cross_charging() {
        let net = NetworkModel::single_node();
        let fleet = [unit(0, 1.0, 5.0, 5.0), unit(0, 1.0, 1.0, 5.0)];
        let out = dispatch_step(&[0.0], &fleet, &net, &params(0.18), &[4.0], 1.0).unwrap();
        assert!((out.power_gw[0] - 1.0).abs() < 1e-9);
        assert!((out.power_gw[1] + 1.0).abs() < 1e-9);
        assert!(out.unserved_gw[0].abs() < 1e-9);
    }

    #[test]
    fn depletion_year() {
        let net = NetworkModel::single_node();
        let fleet = [unit(0, 2.0, 4.0, 4.0)];
        let s = TimeSeries::hourly(vec![1.0; 5]).unwrap();
        let d = TimeSeries::hourly(vec![5.0; 5]).unwrap();
        let out = simulate_year(&[s], &fleet, &net, &params(0.2), &[d], true).unwrap();
        assert_eq!(out.resultant[0].values(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(out.log.unwrap().len(), 5);
    }

    #[test]
    fn round_trip_year() {
        let net = NetworkModel::single_node();
        let fleet = [unit(0, 2.0, 2.0, 2.0)];
        let s = TimeSeries::hourly(vec![2.0, -2.0, 2.0]).unwrap();
        let d = TimeSeries::hourly(vec![5.0; 3]).unwrap();
        let out = simulate_year(&[s], &fleet, &net, &params(0.9), &[d], true).unwrap();
        assert_eq!(out.resultant[0].values(), &[0.0, 0.0, 0.0]);
        let log = out.log.unwrap();
        assert_eq!(log[1].power_gw, vec![-2.0]);
    }

    #[test]
    fn zero_year_is_noop() {
        let net = NetworkModel::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let fleet = [unit(0, 1.0, 3.0, 3.0), unit(1, 1.0, 3.0, 3.0)];
        let z = TimeSeries::hourly(vec![0.0; 4]).unwrap();
        let d = TimeSeries::hourly(vec![1.0; 4]).unwrap();
        let out = simulate_year(
            &[z.clone(), z.clone()],
            &fleet,
            &net,
            &params(0.2),
            &[d.clone(), d],
            false,
        )
        .unwrap();
        assert!(out.resultant.iter().all(|t| t.values().iter().all(|&v| v == 0.0)));
        assert_eq!(out.final_fleet, fleet.to_vec());
    }

    #[test]
    fn step_errors_carry_index() {
        let net = NetworkModel::single_node();
        let fleet = [unit(0, 1.0, 3.0, 3.0)];
        let s = TimeSeries::hourly(vec![0.0, 1.0]).unwrap();
        let d = TimeSeries::hourly(vec![1.0; 3]).unwrap();
        assert!(matches!(
            simulate_year(&[s], &fleet, &net, &params(0.2), &[d], false),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn verified_log_and_tampering() {
        let net = NetworkModel::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let fleet = vec![StorageUnit::new(1, 2.0, 4.0, 4.0, 0.8).unwrap()];
        let params = DispatchParams::for_fleet(&fleet);
        let s = vec![
            TimeSeries::hourly(vec![1.5, 0.5, -1.0, 2.0]).unwrap(),
            TimeSeries::hourly(vec![0.0, 1.0, -2.0, 0.5]).unwrap(),
        ];
        let d = vec![TimeSeries::hourly(vec![5.0; 4]).unwrap(); 2];
        let out = simulate_year(&s, &fleet, &net, &params, &d, true).unwrap();
        let mut log = out.log.unwrap();
        let issues = verify_log(&s, &fleet, &net, &log);
        assert!(issues.is_empty(), "{issues:?}");
        log[1].unserved_gw[0] += 0.5;
        log[2].flow_gw[0] = 1.5;
        let issues = verify_log(&s, &fleet, &net, &log);
        // the bad flow also breaks the balance at its tail node
        assert_eq!(issues.len(), 3, "{issues:?}");
    }
}
