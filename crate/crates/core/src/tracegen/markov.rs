use rand::Rng;

use crate::error::{Error, Result};
use crate::model::TimeSeries;

/// Two-state (up/down) availability chain for one generating unit or circuit.
///
/// `cycle_hours` is the mean failure-to-failure time, so the mean up sojourn is
/// `availability * cycle_hours` and the mean down sojourn is
/// `(1 - availability) * cycle_hours`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovUnitModel {
    pub capacity_gw: f64,
    pub availability: f64,
    pub cycle_hours: f64,
    /// Per-step probability of going from up to down.
    pub p_fail: f64,
    /// Per-step probability of going from down to up.
    pub p_repair: f64,
}

impl MarkovUnitModel {
    pub fn new(capacity_gw: f64, availability: f64, cycle_hours: f64, dt_hours: f64) -> Result<Self> {
        if !(capacity_gw.is_finite() && capacity_gw > 0.0) {
            return Err(Error::Parameter(format!(
                "unit capacity must be positive, got {capacity_gw}"
            )));
        }
        if !(availability > 0.0 && availability <= 1.0) {
            return Err(Error::Parameter(format!(
                "availability must lie in (0, 1], got {availability}"
            )));
        }
        if !(cycle_hours.is_finite() && cycle_hours > 0.0 && dt_hours > 0.0) {
            return Err(Error::Parameter(
                "cycle length and sample period must be positive".into(),
            ));
        }
        let p_fail = dt_hours / (availability * cycle_hours);
        let p_repair = if availability < 1.0 {
            dt_hours / ((1.0 - availability) * cycle_hours)
        } else {
            // never down, so never used
            1.0
        };
        let p_fail = if availability == 1.0 { 0.0 } else { p_fail };
        if p_fail > 1.0 || p_repair > 1.0 {
            return Err(Error::Parameter(format!(
                "a {cycle_hours} h cycle at availability {availability} is too short for {dt_hours} h steps"
            )));
        }
        Ok(MarkovUnitModel {
            capacity_gw,
            availability,
            cycle_hours,
            p_fail,
            p_repair,
        })
    }

    /// Long-run probability of the up state.
    pub fn stationary_up(&self) -> f64 {
        if self.p_fail == 0.0 {
            1.0
        } else {
            self.p_repair / (self.p_fail + self.p_repair)
        }
    }

    /// Lag-one autocorrelation of the up indicator.
    pub fn lag_one_correlation(&self) -> f64 {
        1.0 - self.p_fail - self.p_repair
    }

    /// Infinite stream of up/down states, starting from the stationary distribution.
    pub fn states<'a, R: Rng + ?Sized>(&self, rng: &'a mut R) -> UnitStates<'a, R> {
        let up = rng.random::<f64>() < self.stationary_up();
        UnitStates {
            model: *self,
            up,
            rng,
        }
    }
}

pub struct UnitStates<'a, R: ?Sized> {
    model: MarkovUnitModel,
    up: bool,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Iterator for UnitStates<'_, R> {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        let current = self.up;
        let u = self.rng.random::<f64>();
        self.up = if current {
            u >= self.model.p_fail
        } else {
            u < self.model.p_repair
        };
        Some(current)
    }
}

/// Available capacity trace of `len` steps: each value is 0 or the unit capacity.
pub fn sample_availability_trace<R: Rng + ?Sized>(
    model: &MarkovUnitModel,
    len: usize,
    dt_hours: f64,
    rng: &mut R,
) -> Result<TimeSeries> {
    let values = model
        .states(rng)
        .take(len)
        .map(|up| if up { model.capacity_gw } else { 0.0 })
        .collect();
    TimeSeries::new(values, dt_hours)
}

/// Splits an aggregate capacity into equal units plus one remainder unit.
pub fn split_into_units(total_capacity_gw: f64, unit_size_gw: f64) -> Result<Vec<f64>> {
    if !(total_capacity_gw.is_finite() && total_capacity_gw >= 0.0) {
        return Err(Error::Parameter(format!(
            "total capacity must be non-negative, got {total_capacity_gw}"
        )));
    }
    if !(unit_size_gw.is_finite() && unit_size_gw > 0.0) {
        return Err(Error::Parameter(format!(
            "unit size must be positive, got {unit_size_gw}"
        )));
    }
    let ratio = total_capacity_gw / unit_size_gw;
    let mut full = ratio.floor() as usize;
    // 1.0 / 0.5 style quotients that land a hair under an integer
    if (ratio - ratio.round()).abs() < 1e-9 {
        full = ratio.round() as usize;
    }
    let mut units = vec![unit_size_gw; full];
    let remainder = total_capacity_gw - full as f64 * unit_size_gw;
    if remainder > 1e-9 {
        units.push(remainder);
    }
    Ok(units)
}
