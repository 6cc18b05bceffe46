//! Test-only oracles. Nothing here calls into the dispatch QP.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use storage_adequacy::model::{DispatchParams, NetworkModel, StorageUnit};

pub const LATTICE_GW: f64 = 0.01;

/// One randomized dispatch step on the 0.01 GW lattice.
#[derive(Debug, Clone)]
pub struct StepInstance {
    pub network: NetworkModel,
    pub fleet: Vec<StorageUnit>,
    pub shortfalls: Vec<f64>,
    pub demands: Vec<f64>,
    pub params: DispatchParams,
    pub dt: f64,
}

fn lattice(rng: &mut ChaCha8Rng, lo: i64, hi: i64) -> f64 {
    rng.random_range(lo..=hi) as f64 * LATTICE_GW
}

/// Points on the lattice within `[lo, hi]`, always including both ends.
pub fn lattice_points(lo: f64, hi: f64) -> Vec<f64> {
    let first = (lo / LATTICE_GW).ceil() as i64;
    let last = (hi / LATTICE_GW).floor() as i64;
    let mut pts = vec![lo];
    for k in first..=last {
        let v = k as f64 * LATTICE_GW;
        if v > lo + 1e-12 && v < hi - 1e-12 {
            pts.push(v);
        }
    }
    if hi > lo {
        pts.push(hi);
    }
    pts
}

fn unit_range(u: &StorageUnit, dt: f64) -> (f64, f64) {
    let lo = (-u.p_max_gw).max((u.e_gwh - u.e_max_gwh) / dt).min(0.0);
    let hi = u.p_max_gw.min(u.e_gwh / dt).max(0.0);
    (lo, hi)
}

/// Random instance with at most three nodes, units and edges, sized so the
/// lattice has at most `budget` points.
pub fn random_instance(seed: u64, budget: f64) -> StepInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let nodes = rng.random_range(1..=3usize);
        let pairs: Vec<(usize, usize)> = (0..nodes)
            .flat_map(|a| (a + 1..nodes).map(move |b| (a, b)))
            .collect();
        let mut edges = Vec::new();
        for &(a, b) in &pairs {
            if rng.random_bool(0.75) {
                let (a, b) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                edges.push((a, b, lattice(&mut rng, 0, 20)));
            }
        }
        let unit_count = rng.random_range(0..=3usize);
        let mut fleet = Vec::new();
        for _ in 0..unit_count {
            let node = rng.random_range(0..nodes);
            let p_max = lattice(&mut rng, 5, 30);
            let duration = [1.0, 2.0, 4.0][rng.random_range(0..3)];
            let e_max = p_max * duration;
            let e = (rng.random_range(0..=100) as f64 / 100.0 * e_max / LATTICE_GW).round()
                * LATTICE_GW;
            fleet.push(StorageUnit::new(node, p_max, e_max, e.min(e_max), 1.0).unwrap());
        }
        let shortfalls: Vec<f64> = (0..nodes).map(|_| lattice(&mut rng, -40, 60)).collect();
        let demands: Vec<f64> = (0..nodes).map(|_| lattice(&mut rng, 200, 500)).collect();
        let network = NetworkModel::from_edges(nodes, &edges).unwrap();
        let bound = fleet
            .iter()
            .map(|u| u.p_max_gw / u.e_max_gwh)
            .fold(f64::INFINITY, f64::min);
        let bound = if bound.is_finite() { bound } else { 1.0 };
        let frac = rng.random_range(0.05..0.95);
        let params = DispatchParams {
            alpha: rng.random_range(5.0..100.0),
            beta: rng.random_range(1.0..50.0),
            gamma: 1.0,
            delta: frac * bound,
            demand_floor_gw: 1e-3,
        };
        let dt = 1.0;
        let size: f64 = fleet
            .iter()
            .map(|u| {
                let (lo, hi) = unit_range(u, dt);
                lattice_points(lo, hi).len() as f64
            })
            .chain(edges.iter().map(|e| lattice_points(-e.2, e.2).len() as f64))
            .product();
        if size <= budget {
            return StepInstance {
                network,
                fleet,
                shortfalls,
                demands,
                params,
                dt,
            };
        }
    }
}

/// Per-step cost written out directly from the shortfall-cost and stored-value formulas.
pub fn step_cost(inst: &StepInstance, powers: &[f64], unserved: &[f64]) -> f64 {
    let p = &inst.params;
    let dt = inst.dt;
    let mut cost = 0.0;
    for (i, &s) in unserved.iter().enumerate() {
        let d = inst.demands[i].max(p.demand_floor_gw);
        cost += p.beta * dt / (2.0 * d) * s * s + p.alpha * dt * s;
    }
    for (u, &pw) in inst.fleet.iter().zip(powers) {
        cost += (p.gamma - p.delta / u.p_max_gw * u.e_gwh) * pw * dt
            + p.delta / (2.0 * u.p_max_gw) * (pw * dt) * (pw * dt);
    }
    cost
}

/// Exhaustive search over lattice unit powers and edge flows. Unserved demand
/// at each node is set to its smallest feasible value, which is optimal since
/// the shortfall cost increases in it.
pub fn grid_oracle(inst: &StepInstance) -> (f64, Vec<f64>, Vec<f64>) {
    let dt = inst.dt;
    let axes: Vec<Vec<f64>> = inst
        .fleet
        .iter()
        .map(|u| {
            let (lo, hi) = unit_range(u, dt);
            lattice_points(lo, hi)
        })
        .chain(
            inst.network
                .edges()
                .iter()
                .map(|e| lattice_points(-e.capacity_gw, e.capacity_gw)),
        )
        .collect();
    let units = inst.fleet.len();
    let nodes = inst.network.node_count();
    let mut best = (f64::INFINITY, Vec::new(), Vec::new());
    let mut idx = vec![0usize; axes.len()];
    let mut point = vec![0.0; axes.len()];
    loop {
        for (k, &i) in idx.iter().enumerate() {
            point[k] = axes[k][i];
        }
        let mut residual = inst.shortfalls.clone();
        for (u, unit) in inst.fleet.iter().enumerate() {
            residual[unit.node] -= point[u];
        }
        for (e, edge) in inst.network.edges().iter().enumerate() {
            let f = point[units + e];
            residual[edge.a] += f;
            residual[edge.b] -= f;
        }
        let unserved: Vec<f64> = (0..nodes).map(|i| residual[i].max(0.0)).collect();
        let cost = step_cost(inst, &point[..units], &unserved);
        if cost < best.0 {
            best = (cost, point.clone(), unserved);
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == axes.len() {
                return best;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
