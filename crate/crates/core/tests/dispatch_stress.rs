//! Randomised extreme steps: tiny or full stores, zero demand, near-zero
//! shortfalls, closed and unlimited links. Every step must solve and stay feasible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use storage_adequacy::dispatch::{dispatch_step, net_inflow};
use storage_adequacy::model::{DispatchParams, NetworkModel, StorageUnit};

const TOL: f64 = 1e-9;

#[test]
fn extreme_steps_solve_and_stay_feasible() {
    for seed in 0..5000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=5usize);
        let mut edges = vec![];
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(0.6) {
                    edges.push((a, b, [0.0, 0.1, 1.0, 5.0, 50.0][rng.random_range(0..5)]));
                }
            }
        }
        let net = NetworkModel::from_edges(n, &edges).unwrap();
        let dt = [0.5, 1.0, 3.0, 24.0][rng.random_range(0..4)];
        let mut fleet = vec![];
        for _ in 0..rng.random_range(0..=6) {
            let p = [0.01, 0.5, 2.0, 20.0][rng.random_range(0..4)];
            let em = p * [0.5, 1.0, 4.0, 10.0][rng.random_range(0..4)];
            let e = match rng.random_range(0..5) {
                0 => 0.0,
                1 => em,
                2 => em * (1.0 - 1e-13),
                3 => em * 1e-13,
                _ => em * rng.random::<f64>(),
            };
            let eta = [1.0, 0.9, 0.7][rng.random_range(0..3)];
            fleet.push(StorageUnit::new(rng.random_range(0..n), p, em, e, eta).unwrap());
        }
        let s: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.0,
                1 => rng.random_range(-1.0..1.0),
                2 => rng.random_range(-30.0..30.0),
                _ => rng.random_range(-1e-7..1e-7),
            })
            .collect();
        let d: Vec<f64> = (0..n).map(|_| [0.0, 0.5, 20.0, 60.0][rng.random_range(0..4)]).collect();
        let mut params = DispatchParams::for_fleet(&fleet);
        if rng.random_bool(0.5) {
            params.alpha = rng.random_range(1.5..1000.0);
            params.beta = rng.random_range(0.1..1000.0);
        }

        let out = dispatch_step(&s, &fleet, &net, &params, &d, dt)
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        for (u, (unit, p)) in fleet.iter().zip(&out.power_gw).enumerate() {
            assert!(p.abs() <= unit.p_max_gw + TOL, "seed {seed} unit {u}: p {p}");
            let e = out.fleet[u].e_gwh;
            assert!((-TOL..=unit.e_max_gwh + TOL).contains(&e), "seed {seed} unit {u}: e {e}");
        }
        for (edge, f) in net.edges().iter().zip(&out.flow_gw) {
            assert!(f.abs() <= edge.capacity_gw + TOL, "seed {seed}: flow {f}");
        }
        let inflow = net_inflow(&net, &out.flow_gw);
        for i in 0..n {
            let served: f64 = fleet
                .iter()
                .zip(&out.power_gw)
                .filter(|(u, _)| u.node == i)
                .map(|(_, p)| p)
                .sum();
            let s_i = out.unserved_gw[i];
            assert!(s_i >= -TOL, "seed {seed}: negative unserved {s_i}");
            assert!(
                s_i + served + inflow[i] >= s[i] - 1e-6,
                "seed {seed} node {i}: balance {s_i} + {served} + {} < {}",
                inflow[i],
                s[i]
            );
        }
    }
}
