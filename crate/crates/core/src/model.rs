//! Shared domain types: traces, network, storage units, event categories and
//! dispatch parameters, plus the shortfall and storage-update primitives.
//!
//! Units are fixed throughout the crate: power in GW, energy in GWh, time in hours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hours in a (non-leap) study year.
pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Slack allowed on every power/energy feasibility check (GW or GWh).
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Number of samples in an annual trace with the given sample period.
pub fn annual_len(dt_hours: f64) -> Result<usize> {
    if !(dt_hours.is_finite() && dt_hours > 0.0) {
        return Err(Error::Parameter(format!(
            "sample period must be positive, got {dt_hours}"
        )));
    }
    let k = HOURS_PER_YEAR / dt_hours;
    let rounded = k.round();
    if (k - rounded).abs() > 1e-9 * k.max(1.0) || rounded < 1.0 {
        return Err(Error::Parameter(format!(
            "8760 h is not an integer number of {dt_hours} h samples"
        )));
    }
    Ok(rounded as usize)
}

/// Fixed-step trace of power values in GW.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    dt_hours: f64,
}

impl TimeSeries {
    /// Builds a trace of arbitrary length. Values must be finite.
    pub fn new(values: Vec<f64>, dt_hours: f64) -> Result<Self> {
        if !(dt_hours.is_finite() && dt_hours > 0.0) {
            return Err(Error::Parameter(format!(
                "sample period must be positive, got {dt_hours}"
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "trace value at index {k} is not finite"
            )));
        }
        Ok(TimeSeries { values, dt_hours })
    }

    /// Hourly trace of arbitrary length.
    pub fn hourly(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 1.0)
    }

    /// Builds an annual trace, rejecting lengths other than `8760 / dt_hours`.
    pub fn annual(values: Vec<f64>, dt_hours: f64) -> Result<Self> {
        let k = annual_len(dt_hours)?;
        if values.len() != k {
            return Err(Error::Dimension(format!(
                "annual trace at {dt_hours} h needs {k} samples, got {}",
                values.len()
            )));
        }
        Self::new(values, dt_hours)
    }

    pub fn zeros(len: usize, dt_hours: f64) -> Self {
        TimeSeries {
            values: vec![0.0; len],
            dt_hours,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dt_hours(&self) -> f64 {
        self.dt_hours
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Element-wise scaling by a constant.
    pub fn scaled(&self, factor: f64) -> TimeSeries {
        TimeSeries {
            values: self.values.iter().map(|v| v * factor).collect(),
            dt_hours: self.dt_hours,
        }
    }

    pub(crate) fn check_aligned(&self, other: &TimeSeries) -> Result<()> {
        if self.len() != other.len() || self.dt_hours != other.dt_hours {
            return Err(Error::Dimension(format!(
                "traces differ: {} samples at {} h vs {} samples at {} h",
                self.len(),
                self.dt_hours,
                other.len(),
                other.dt_hours
            )));
        }
        Ok(())
    }
}

/// Nodal net shortfall: demand minus the sum of all supply traces.
///
/// Negative values are surplus.
pub fn net_shortfall(demand: &TimeSeries, supplies: &[TimeSeries]) -> Result<TimeSeries> {
    let mut values = demand.values.clone();
    for supply in supplies {
        demand.check_aligned(supply)?;
        for (v, g) in values.iter_mut().zip(&supply.values) {
            *v -= g;
        }
    }
    Ok(TimeSeries {
        values,
        dt_hours: demand.dt_hours,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(default)]
    pub name: String,
}

/// Undirected transfer link. Positive flow runs from `a` to `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub capacity_gw: f64,
}

/// Lossless flow network with bidirectional capacity limits.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl NetworkModel {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Parameter("network needs at least one node".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if nodes[..i].iter().any(|m| m.id == n.id) {
                return Err(Error::Parameter(format!("duplicate node id {:?}", n.id)));
            }
        }
        for (k, e) in edges.iter().enumerate() {
            if e.a >= nodes.len() || e.b >= nodes.len() {
                return Err(Error::Parameter(format!(
                    "edge {k} references an undeclared node"
                )));
            }
            if e.a == e.b {
                return Err(Error::Parameter(format!("edge {k} is a self-loop")));
            }
            if !(e.capacity_gw.is_finite() && e.capacity_gw >= 0.0) {
                return Err(Error::Parameter(format!(
                    "edge {k} capacity must be non-negative"
                )));
            }
            let dup = edges[..k]
                .iter()
                .any(|o| (o.a == e.a && o.b == e.b) || (o.a == e.b && o.b == e.a));
            if dup {
                return Err(Error::Parameter(format!(
                    "edge {k} duplicates an earlier node pair"
                )));
            }
        }
        Ok(NetworkModel { nodes, edges })
    }

    /// One node, no edges.
    pub fn single_node() -> Self {
        NetworkModel {
            nodes: vec![Node {
                id: "node".into(),
                name: String::new(),
            }],
            edges: Vec::new(),
        }
    }

    /// Convenience constructor: nodes named `n0..`, edges given as `(a, b, capacity)`.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let nodes = (0..node_count)
            .map(|i| Node {
                id: format!("n{i}"),
                name: String::new(),
            })
            .collect();
        let edges = edges
            .iter()
            .map(|&(a, b, capacity_gw)| Edge { a, b, capacity_gw })
            .collect();
        Self::new(nodes, edges)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }
}

/// One storage device with a symmetric power rating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageUnit {
    pub node: usize,
    pub p_max_gw: f64,
    pub e_max_gwh: f64,
    /// Extractable stored energy.
    pub e_gwh: f64,
    /// Round-trip efficiency, booked on charge.
    pub eta: f64,
}

impl StorageUnit {
    pub fn new(node: usize, p_max_gw: f64, e_max_gwh: f64, e_gwh: f64, eta: f64) -> Result<Self> {
        if !(p_max_gw.is_finite() && p_max_gw > 0.0) {
            return Err(Error::Parameter(format!(
                "unit power rating must be positive, got {p_max_gw}"
            )));
        }
        if !(e_max_gwh.is_finite() && e_max_gwh > 0.0) {
            return Err(Error::Parameter(format!(
                "unit energy capacity must be positive, got {e_max_gwh}"
            )));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Parameter(format!(
                "round-trip efficiency must lie in (0, 1], got {eta}"
            )));
        }
        if !(e_gwh >= -FEASIBILITY_TOL && e_gwh <= e_max_gwh + FEASIBILITY_TOL) {
            return Err(Error::InfeasibleStep {
                energy_gwh: e_gwh,
                e_max_gwh,
            });
        }
        Ok(StorageUnit {
            node,
            p_max_gw,
            e_max_gwh,
            e_gwh: e_gwh.clamp(0.0, e_max_gwh),
            eta,
        })
    }

    /// Hours the unit can sustain full discharge from its current state.
    pub fn time_to_go(&self) -> f64 {
        self.e_gwh / self.p_max_gw
    }

    /// Advances the stored energy by one step of extracted power `p_gw`
    /// (positive = discharge). Charging losses are applied on charge.
    pub fn apply_step(&self, p_gw: f64, dt_hours: f64) -> Result<StorageUnit> {
        let e_next = if p_gw >= 0.0 {
            self.e_gwh - p_gw * dt_hours
        } else {
            self.e_gwh - self.eta * p_gw * dt_hours
        };
        if e_next < -FEASIBILITY_TOL || e_next > self.e_max_gwh + FEASIBILITY_TOL {
            return Err(Error::InfeasibleStep {
                energy_gwh: e_next,
                e_max_gwh: self.e_max_gwh,
            });
        }
        Ok(StorageUnit {
            e_gwh: e_next.clamp(0.0, self.e_max_gwh),
            ..*self
        })
    }

    /// Largest discharge power for one step of length `dt_hours`.
    pub fn max_discharge(&self, dt_hours: f64) -> f64 {
        self.p_max_gw.min(self.e_gwh / dt_hours)
    }

    /// Largest charge magnitude, counting the energy bound with the given efficiency.
    pub fn max_charge(&self, dt_hours: f64, eta: f64) -> f64 {
        self.p_max_gw
            .min((self.e_max_gwh - self.e_gwh) / (eta * dt_hours))
    }

    pub fn is_full(&self) -> bool {
        self.e_gwh >= self.e_max_gwh - FEASIBILITY_TOL
    }
}

/// Free-function form of [`StorageUnit::apply_step`].
pub fn apply_step_dynamics(unit: &StorageUnit, p_gw: f64, dt_hours: f64) -> Result<StorageUnit> {
    unit.apply_step(p_gw, dt_hours)
}

pub fn time_to_go(unit: &StorageUnit) -> f64 {
    unit.time_to_go()
}

/// Category of shortfall event: events with peak power-not-served strictly above
/// the threshold are tallied and at most `allowed_per_year` may occur, except with
/// probability `exceedance_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCategory {
    pub name: String,
    pub ppns_threshold_gw: f64,
    pub allowed_per_year: u32,
    pub exceedance_prob: f64,
}

impl EventCategory {
    pub fn new(
        name: impl Into<String>,
        ppns_threshold_gw: f64,
        allowed_per_year: u32,
        exceedance_prob: f64,
    ) -> Result<Self> {
        let c = EventCategory {
            name: name.into(),
            ppns_threshold_gw,
            allowed_per_year,
            exceedance_prob,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ppns_threshold_gw.is_finite() && self.ppns_threshold_gw >= 0.0) {
            return Err(Error::Parameter(format!(
                "category {:?}: threshold must be non-negative",
                self.name
            )));
        }
        if !(self.exceedance_prob > 0.0 && self.exceedance_prob <= 1.0) {
            return Err(Error::Parameter(format!(
                "category {:?}: exceedance probability must lie in (0, 1]",
                self.name
            )));
        }
        Ok(())
    }
}

/// Checks that no two categories share a threshold, so that sorting by severity
/// gives strictly increasing thresholds.
pub fn validate_categories(categories: &[EventCategory]) -> Result<()> {
    for c in categories {
        c.validate()?;
    }
    let mut thresholds: Vec<f64> = categories.iter().map(|c| c.ppns_threshold_gw).collect();
    thresholds.sort_by(f64::total_cmp);
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(
            "category thresholds must be strictly increasing by severity".into(),
        ));
    }
    Ok(())
}

/// Objective weights for the per-step dispatch program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchParams {
    /// Constant marginal cost of unserved demand.
    pub alpha: f64,
    /// Marginal cost slope in the unserved fraction of demand.
    pub beta: f64,
    /// Marginal value of stored energy when empty.
    pub gamma: f64,
    /// Decline of marginal stored-energy value per hour of time-to-go.
    pub delta: f64,
    /// Lower clamp on nodal demand in the shortfall cost.
    pub demand_floor_gw: f64,
}

impl DispatchParams {
    pub const DEFAULT_ALPHA: f64 = 100.0;
    pub const DEFAULT_BETA: f64 = 100.0;
    pub const DEFAULT_GAMMA: f64 = 1.0;
    pub const DEFAULT_DEMAND_FLOOR_GW: f64 = 1e-3;

    /// Default weights with `delta = 0.9 * gamma * min(p_max / e_max)` over the fleet.
    pub fn for_fleet(fleet: &[StorageUnit]) -> Self {
        let gamma = Self::DEFAULT_GAMMA;
        DispatchParams {
            alpha: Self::DEFAULT_ALPHA,
            beta: Self::DEFAULT_BETA,
            gamma,
            delta: Self::auto_delta(gamma, min_rate(fleet)),
            demand_floor_gw: Self::DEFAULT_DEMAND_FLOOR_GW,
        }
    }

    /// `0.9 * gamma * min_ratio` where `min_ratio` is the smallest `p_max / e_max`.
    pub fn auto_delta(gamma: f64, min_ratio: f64) -> f64 {
        0.9 * gamma * min_ratio
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("demand_floor_gw", self.demand_floor_gw),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.alpha <= self.gamma {
            return Err(Error::Parameter(format!(
                "alpha ({}) must exceed gamma ({}) so shortfall cost dominates stored-energy value",
                self.alpha, self.gamma
            )));
        }
        Ok(())
    }

    /// Full check, including the bound `delta < gamma * p_max / e_max` for every unit.
    pub fn validate_for(&self, fleet: &[StorageUnit]) -> Result<()> {
        self.validate()?;
        if let Some(u) = fleet
            .iter()
            .find(|u| self.delta >= self.gamma * u.p_max_gw / u.e_max_gwh)
        {
            return Err(Error::Parameter(format!(
                "delta ({}) must be below gamma * p_max / e_max = {} for the unit at node {}",
                self.delta,
                self.gamma * u.p_max_gw / u.e_max_gwh,
                u.node
            )));
        }
        Ok(())
    }
}

// An empty fleet places no bound on delta; fall back to a one-hour duration.
fn min_rate(fleet: &[StorageUnit]) -> f64 {
    let r = fleet
        .iter()
        .map(|u| u.p_max_gw / u.e_max_gwh)
        .fold(f64::INFINITY, f64::min);
    if r.is_finite() {
        r
    } else {
        1.0
    }
}
