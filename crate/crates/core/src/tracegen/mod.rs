//! Per-sample nodal shortfall traces from historical profiles, scenario
//! capacities and two-state availability chains.

mod markov;
mod profiles;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use markov::{sample_availability_trace, split_into_units, MarkovUnitModel, UnitStates};
pub use profiles::{read_trace_csv, write_trace_csv, ProfileKey, TraceLibrary};

use crate::error::{Error, Result};
use crate::model::{net_shortfall, NetworkModel, TimeSeries};

/// Which historical year a profile-backed class follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProfileSource {
    Wind,
    Solar,
}

impl ProfileSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProfileSource::Wind => "wind",
            ProfileSource::Solar => "solar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileMode {
    /// Values are capacity factors in [0, 1].
    PerUnit,
    /// Values are GW from a fleet of `base_gw` installed capacity.
    Raw { base_gw: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassModel {
    Profile {
        source: ProfileSource,
        mode: ProfileMode,
    },
    Markov {
        availability: f64,
        cycle_hours: f64,
    },
}

/// One generator class (wind, solar, thermal, interconnector, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorClassConfig {
    pub name: String,
    pub model: ClassModel,
    pub unit_size_gw: f64,
}

/// Scenario numbers for one study year.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioYear {
    pub year: i32,
    pub peak_demand_gw: f64,
    /// Installed capacity per class, one entry per node.
    pub capacities_gw: BTreeMap<String, Vec<f64>>,
}

/// Historical years each sample may draw from.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub wind_years: Vec<i32>,
    pub solar_years: Vec<i32>,
    pub demand_years: Vec<i32>,
}

/// Random choices that make up one Monte Carlo sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleDraw {
    pub wind_year: i32,
    pub solar_year: i32,
    pub demand_year: i32,
    pub rng_seed: u64,
}

impl SampleDraw {
    /// Per-sample seed is `base_seed ^ sample_index`; the same draw comes out
    /// regardless of the order samples are processed in.
    pub fn draw(base_seed: u64, sample_index: u64, history: &History) -> Result<SampleDraw> {
        let rng_seed = base_seed ^ sample_index;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut pick = |years: &[i32], what: &str| -> Result<i32> {
            if years.is_empty() {
                return Err(Error::Parameter(format!("no {what} years available")));
            }
            Ok(years[rng.random_range(0..years.len())])
        };
        Ok(SampleDraw {
            wind_year: pick(&history.wind_years, "wind")?,
            solar_year: pick(&history.solar_years, "solar")?,
            demand_year: pick(&history.demand_years, "demand")?,
            rng_seed,
        })
    }

    fn year_for(&self, source: ProfileSource) -> i32 {
        match source {
            ProfileSource::Wind => self.wind_year,
            ProfileSource::Solar => self.solar_year,
        }
    }

    /// Generator for the availability chains, on a stream separate from the year draws.
    pub fn unit_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(1);
        rng
    }
}

/// Scales a historical profile to an installed capacity.
pub fn scale_profile_to_capacity(
    profile: &TimeSeries,
    installed_gw: f64,
    mode: ProfileMode,
) -> Result<TimeSeries> {
    match mode {
        ProfileMode::PerUnit => Ok(profile.scaled(installed_gw)),
        ProfileMode::Raw { base_gw } => {
            if !(base_gw.is_finite() && base_gw > 0.0) {
                return Err(Error::Parameter(format!(
                    "raw profile base capacity must be positive, got {base_gw}"
                )));
            }
            Ok(profile.scaled(installed_gw / base_gw))
        }
    }
}

/// Rescales a demand trace so that its peak equals `target_peak_gw`.
pub fn scale_demand_to_peak(demand: &TimeSeries, target_peak_gw: f64) -> Result<TimeSeries> {
    let peak = demand.max();
    if !(peak > 0.0) {
        return Err(Error::Parameter(
            "demand trace has no positive value to scale".into(),
        ));
    }
    let factor = target_peak_gw / peak;
    // pin the peak exactly despite rounding in the ratio
    let values = demand
        .values()
        .iter()
        .map(|&v| if v == peak { target_peak_gw } else { v * factor })
        .collect();
    TimeSeries::new(values, demand.dt_hours())
}

/// Splits a national trace into nodal traces proportional to `weights`.
pub fn disaggregate_demand(national: &TimeSeries, weights: &[f64]) -> Result<Vec<TimeSeries>> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Parameter("regional weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "regional weights sum to {total}, not 1"
        )));
    }
    Ok(weights.iter().map(|&w| national.scaled(w)).collect())
}

/// Everything needed to turn a draw into nodal traces.
#[derive(Debug, Clone)]
pub struct TraceModel {
    pub network: NetworkModel,
    pub classes: Vec<GeneratorClassConfig>,
    pub history: History,
    pub regional_weights: Vec<f64>,
    pub library: TraceLibrary,
}

/// Nodal traces of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub shortfall: Vec<TimeSeries>,
    pub demand: Vec<TimeSeries>,
}

/// Composes one sample: nodal demand minus every generator class, per node.
pub fn compose_sample(model: &TraceModel, year: &ScenarioYear, draw: &SampleDraw) -> Result<Sample> {
    let n = model.network.node_count();
    let dt = model.library.dt_hours();
    let len = model.library.len();
    let national = model.library.demand(draw.demand_year)?;
    let national = scale_demand_to_peak(national, year.peak_demand_gw)?;
    let demand = disaggregate_demand(&national, &model.regional_weights)?;
    if demand.len() != n {
        return Err(Error::Dimension(format!(
            "{} regional weights for {n} nodes",
            demand.len()
        )));
    }
    let mut rng = draw.unit_rng();
    let mut shortfall = Vec::with_capacity(n);
    for (node, node_demand) in demand.iter().enumerate() {
        let mut supplies = Vec::new();
        for class in &model.classes {
            let Some(caps) = year.capacities_gw.get(&class.name) else {
                continue;
            };
            let installed = *caps.get(node).ok_or_else(|| {
                Error::Dimension(format!(
                    "class {} lists {} capacities for {n} nodes",
                    class.name,
                    caps.len()
                ))
            })?;
            if installed <= 0.0 {
                continue;
            }
            let trace = match &class.model {
                ClassModel::Profile { source, mode } => {
                    let key = ProfileKey {
                        class: class.name.clone(),
                        node,
                        year: draw.year_for(*source),
                    };
                    scale_profile_to_capacity(model.library.profile(&key)?, installed, *mode)?
                }
                ClassModel::Markov {
                    availability,
                    cycle_hours,
                } => {
                    let mut total = vec![0.0; len];
                    for unit in split_into_units(installed, class.unit_size_gw)? {
                        let m = MarkovUnitModel::new(unit, *availability, *cycle_hours, dt)?;
                        for (acc, up) in total.iter_mut().zip(m.states(&mut rng)) {
                            if up {
                                *acc += unit;
                            }
                        }
                    }
                    TimeSeries::new(total, dt)?
                }
            };
            supplies.push(trace);
        }
        shortfall.push(net_shortfall(node_demand, &supplies)?);
    }
    Ok(Sample { shortfall, demand })
}
