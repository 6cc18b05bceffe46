//! Synthetic three-node study for demos, tests and benchmarks.
//!
//! Writes a configuration file plus demand, wind and solar trace files in the
//! layout the loader expects. Traces are smooth seasonal shapes with seeded
//! noise; they are not meant to resemble any real system.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::Result;
use crate::model::{annual_len, TimeSeries};
use crate::tracegen::{write_trace_csv, TraceLibrary};

pub const NODE_IDS: [&str; 3] = ["north", "mid", "south"];
pub const CONFIG_FILE: &str = "study.json";
const TRACE_DIR: &str = "traces";

#[derive(Debug, Clone, PartialEq)]
pub struct ToyOptions {
    pub dt_hours: f64,
    pub n_samples: usize,
    pub base_seed: u64,
    /// Seed for the synthetic traces themselves.
    pub trace_seed: u64,
    pub study_years: Vec<i32>,
    pub history_years: Vec<i32>,
}

impl Default for ToyOptions {
    fn default() -> Self {
        ToyOptions {
            dt_hours: 24.0,
            n_samples: 200,
            base_seed: 2024,
            trace_seed: 7,
            study_years: vec![2030, 2035],
            history_years: vec![2001, 2002, 2003],
        }
    }
}

/// Writes `study.json` and its traces under `dir` and returns the config path.
pub fn write_toy_study(dir: &Path, opts: &ToyOptions) -> Result<PathBuf> {
    let traces = dir.join(TRACE_DIR);
    std::fs::create_dir_all(&traces)?;
    let len = annual_len(opts.dt_hours)?;
    for &year in &opts.history_years {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.trace_seed ^ (year as u64) << 8);
        let demand = demand_trace(len, opts.dt_hours, &mut rng);
        write_trace_csv(&TraceLibrary::demand_path(&traces, year), &demand)?;
        let common = ar1(len, opts.dt_hours, &mut rng);
        for id in NODE_IDS {
            let wind = wind_trace(&common, opts.dt_hours, &mut rng);
            write_trace_csv(&TraceLibrary::profile_path(&traces, "wind", id, year), &wind)?;
            let solar = solar_trace(len, opts.dt_hours, &mut rng);
            write_trace_csv(&TraceLibrary::profile_path(&traces, "solar", id, year), &solar)?;
        }
    }
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&toy_config(opts))?)?;
    Ok(path)
}

/// The configuration document for the toy study.
pub fn toy_config(opts: &ToyOptions) -> serde_json::Value {
    let years: Vec<_> = opts
        .study_years
        .iter()
        .enumerate()
        .map(|(k, &year)| {
            let growth = 1.0 + 0.025 * k as f64;
            json!({
                "year": year,
                "peak_demand_gw": 53.5 * growth,
                "capacities_gw": {
                    "wind": [9.0 + 2.0 * k as f64, 6.0 + k as f64, 4.0],
                    "solar": [1.0, 3.0, 5.0],
                    "thermal": [19.0, 19.0, 13.0]
                },
                "interconnector_gw": [0.0, 0.0, 3.0]
            })
        })
        .collect();
    json!({
        "network": {
            "nodes": NODE_IDS.iter().map(|id| json!({"id": id})).collect::<Vec<_>>(),
            "edges": [
                {"from": "north", "to": "mid", "capacity_gw": 4.0},
                {"from": "mid", "to": "south", "capacity_gw": 4.0}
            ]
        },
        "years": years,
        "history": {
            "trace_dir": TRACE_DIR,
            "dt_hours": opts.dt_hours,
            "wind_years": opts.history_years,
            "solar_years": opts.history_years,
            "demand_years": opts.history_years
        },
        "availability": {
            "thermal": {"availability": 0.9, "cycle_hours": 2000.0},
            // longer than the usual 100 h so that daily steps stay valid
            "interconnector": {"de_rating": 0.8, "cycle_hours": 240.0}
        },
        "unit_size_gw": 0.5,
        "regional_weights": [0.3, 0.45, 0.25],
        "categories": [
            {"name": "Routine", "ppns_threshold_gw": 0.0, "allowed_per_year": 3, "exceedance_prob": 0.5},
            {"name": "Mild", "ppns_threshold_gw": 1.9, "allowed_per_year": 0, "exceedance_prob": 0.2}
        ],
        "sizing": {
            "rho": "proportional_to_demand",
            "duration_hours": 12.0,
            "n_samples": opts.n_samples,
            "p_grid_max_gw": 128.0,
            "resolution_gw": 1.0,
            "base_seed": opts.base_seed
        },
        "dispatch_params": {"delta": "auto"},
        "eta": 0.85
    })
}

fn phase(k: usize, dt: f64) -> (f64, f64) {
    let hours = k as f64 * dt;
    (2.0 * PI * hours / 8760.0, 2.0 * PI * (hours % 24.0) / 24.0)
}

fn demand_trace(len: usize, dt: f64, rng: &mut ChaCha8Rng) -> TimeSeries {
    let values = (0..len)
        .map(|k| {
            let (season, day) = phase(k, dt);
            let daily = if dt < 24.0 { -4.0 * day.cos() } else { 0.0 };
            40.0 + 9.0 * season.cos() + daily + rng.random_range(-2.5..2.5)
        })
        .collect();
    TimeSeries::new(values, dt).expect("finite values")
}

/// Weather-like latent process with a multi-day memory.
fn ar1(len: usize, dt: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = (-dt / 72.0f64).exp();
    let noise = (1.0 - keep * keep).sqrt();
    let mut x = 0.0;
    (0..len)
        .map(|_| {
            x = keep * x + noise * rng.random_range(-1.7..1.7);
            x
        })
        .collect()
}

fn wind_trace(common: &[f64], dt: f64, rng: &mut ChaCha8Rng) -> TimeSeries {
    let values = common
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let (season, _) = phase(k, dt);
            (0.33 + 0.08 * season.cos() + 0.22 * c + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0)
        })
        .collect();
    TimeSeries::new(values, dt).expect("finite values")
}

fn solar_trace(len: usize, dt: f64, rng: &mut ChaCha8Rng) -> TimeSeries {
    let values = (0..len)
        .map(|k| {
            let (season, day) = phase(k, dt);
            let level = 0.11 - 0.06 * season.cos();
            let shape = if dt < 24.0 { (-day.cos()).max(0.0) * PI } else { 1.0 };
            (level * shape * rng.random_range(0.6..1.2)).clamp(0.0, 1.0)
        })
        .collect();
    TimeSeries::new(values, dt).expect("finite values")
}
