//! Per-sample boundary capacities by bisection and the chance-constrained
//! requirement per event category and study year.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::ops::ControlFlow;

use crate::dispatch::simulate_year_with;
use crate::error::{Error, Result};
use crate::evaluate::{count_peaks, EventTracker};
use crate::exec::Execution;
use crate::model::{
    validate_categories, DispatchParams, EventCategory, NetworkModel, StorageUnit, TimeSeries,
};
use crate::tracegen::{compose_sample, Sample, SampleDraw, ScenarioYear, TraceModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SizingConfig {
    /// Share of the total capacity placed at each node.
    pub rho: Vec<f64>,
    /// Energy rating per unit of power rating.
    pub duration_hours: f64,
    pub p_grid_max_gw: f64,
    pub resolution_gw: f64,
    pub n_samples: usize,
    pub base_seed: u64,
    /// Expected availability of the storage fleet; requirements are divided by it.
    pub availability_scaling: f64,
    pub eta: f64,
}

impl SizingConfig {
    pub const DEFAULT_DURATION_HOURS: f64 = 4.0;
    pub const DEFAULT_RESOLUTION_GW: f64 = 1.0;

    pub fn validate(&self, node_count: usize) -> Result<()> {
        if self.rho.len() != node_count {
            return Err(Error::Dimension(format!(
                "{} allocation fractions for {node_count} nodes",
                self.rho.len()
            )));
        }
        if self.rho.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Parameter("allocation fractions must be non-negative".into()));
        }
        let total: f64 = self.rho.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "allocation fractions sum to {total}, not 1"
            )));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.duration_hours) {
            return Err(Error::Parameter("duration_hours must be positive".into()));
        }
        if !positive(self.resolution_gw) {
            return Err(Error::Parameter("resolution_gw must be positive".into()));
        }
        if !positive(self.p_grid_max_gw) {
            return Err(Error::Parameter("p_grid_max_gw must be positive".into()));
        }
        self.grid_steps()?;
        if self.n_samples == 0 {
            return Err(Error::Parameter("n_samples must be at least 1".into()));
        }
        if !(self.availability_scaling > 0.0 && self.availability_scaling <= 1.0) {
            return Err(Error::Parameter(format!(
                "availability_scaling must lie in (0, 1], got {}",
                self.availability_scaling
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Parameter(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        Ok(())
    }

    /// Number of resolution steps between zero and `p_grid_max_gw`.
    pub fn grid_steps(&self) -> Result<usize> {
        let steps = (self.p_grid_max_gw / self.resolution_gw).round();
        if steps < 1.0 || (steps * self.resolution_gw - self.p_grid_max_gw).abs() > 1e-9 * self.p_grid_max_gw
        {
            return Err(Error::Parameter(format!(
                "p_grid_max_gw ({}) must be a positive multiple of resolution_gw ({})",
                self.p_grid_max_gw, self.resolution_gw
            )));
        }
        Ok(steps as usize)
    }

    pub fn capacity_at(&self, step: usize) -> f64 {
        step as f64 * self.resolution_gw
    }
}

/// One fully charged unit per node with a positive share of `total_capacity_gw`.
pub fn build_fleet(
    total_capacity_gw: f64,
    sizing: &SizingConfig,
    network: &NetworkModel,
) -> Result<Vec<StorageUnit>> {
    if sizing.rho.len() != network.node_count() {
        return Err(Error::Dimension(format!(
            "{} allocation fractions for {} nodes",
            sizing.rho.len(),
            network.node_count()
        )));
    }
    sizing
        .rho
        .iter()
        .enumerate()
        .filter_map(|(node, &r)| {
            let p = r * total_capacity_gw;
            (p > 0.0).then(|| {
                let e = sizing.duration_hours * p;
                StorageUnit::new(node, p, e, e, sizing.eta)
            })
        })
        .collect()
}

/// PPNS of every shortfall event left after dispatching a fleet of the given size.
pub fn event_peaks_at_capacity(
    sample: &Sample,
    capacity_gw: f64,
    sizing: &SizingConfig,
    network: &NetworkModel,
    params: &DispatchParams,
) -> Result<Vec<f64>> {
    let fleet = build_fleet(capacity_gw, sizing, network)?;
    let mut tracker = EventTracker::new(network.node_count());
    simulate_year_with(
        &sample.shortfall,
        &fleet,
        network,
        params,
        &sample.demand,
        |k, out| {
            tracker.push(k, &out.unserved_gw);
            ControlFlow::Continue(())
        },
    )?;
    Ok(tracker.finish().into_iter().map(|e| e.ppns_gw).collect())
}

pub fn criterion_at_capacity(
    sample: &Sample,
    capacity_gw: f64,
    category: &EventCategory,
    sizing: &SizingConfig,
    network: &NetworkModel,
    params: &DispatchParams,
) -> Result<bool> {
    let peaks = event_peaks_at_capacity(sample, capacity_gw, sizing, network, params)?;
    Ok(peaks_meet(&peaks, category))
}

fn peaks_meet(peaks: &[f64], category: &EventCategory) -> bool {
    count_peaks(peaks.iter().copied(), category.ppns_threshold_gw) <= category.allowed_per_year as usize
}

/// Per-sample boundary capacity for one category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Lower end of the fail-to-success interval (0 if the criterion holds without storage).
    Gw(f64),
    /// Still failing at the top of the search range.
    ExceedsRange,
}

impl Boundary {
    pub fn gw(&self) -> Option<f64> {
        match *self {
            Boundary::Gw(v) => Some(v),
            Boundary::ExceedsRange => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySearch {
    pub boundary: Boundary,
    /// A success observed strictly below a failure: `(success_gw, fail_gw)`.
    pub violation: Option<(f64, f64)>,
}

impl BoundarySearch {
    pub fn into_result(self) -> Result<Boundary> {
        match self.violation {
            Some((success_gw, fail_gw)) => Err(Error::NonMonotone {
                success_gw,
                fail_gw,
            }),
            None => Ok(self.boundary),
        }
    }
}

/// Bisects grid indices `0..=steps` for the fail-to-success transition of
/// `succeeds`, then re-checks both ends of the returned interval and every
/// evaluation made for consistency with a monotone criterion.
pub fn sample_boundary_capacity<F>(steps: usize, resolution_gw: f64, mut succeeds: F) -> Result<BoundarySearch>
where
    F: FnMut(usize) -> Result<bool>,
{
    let mut seen = BTreeMap::new();
    let mut eval = |i: usize, seen: &mut BTreeMap<usize, bool>| -> Result<bool> {
        let ok = succeeds(i)?;
        seen.insert(i, ok);
        Ok(ok)
    };
    let boundary = if eval(0, &mut seen)? {
        Boundary::Gw(0.0)
    } else if !eval(steps, &mut seen)? {
        Boundary::ExceedsRange
    } else {
        let (mut lo, mut hi) = (0, steps);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if eval(mid, &mut seen)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // a re-check that disagrees with the first evaluation is reported at that capacity
        for (i, expect) in [(lo, false), (lo + 1, true)] {
            if eval(i, &mut seen)? != expect {
                let gw = i as f64 * resolution_gw;
                return Ok(BoundarySearch {
                    boundary: Boundary::Gw(lo as f64 * resolution_gw),
                    violation: Some((gw, gw)),
                });
            }
        }
        Boundary::Gw(lo as f64 * resolution_gw)
    };
    Ok(BoundarySearch {
        boundary,
        violation: monotonicity_violation(seen.iter().map(|(&i, &ok)| (i, ok)))
            .map(|(s, f)| (s as f64 * resolution_gw, f as f64 * resolution_gw)),
    })
}

/// Lowest success and highest failure when a success lies below a failure.
pub fn monotonicity_violation(points: impl IntoIterator<Item = (usize, bool)>) -> Option<(usize, usize)> {
    let mut min_success = None::<usize>;
    let mut max_fail = None::<usize>;
    for (i, ok) in points {
        if ok {
            min_success = Some(min_success.map_or(i, |m| m.min(i)));
        } else {
            max_fail = Some(max_fail.map_or(i, |m| m.max(i)));
        }
    }
    match (min_success, max_fail) {
        (Some(s), Some(f)) if s < f => Some((s, f)),
        _ => None,
    }
}

/// The `ceil((1 - c) N)`-th smallest boundary, divided by `availability_scaling`.
pub fn required_capacity(
    boundaries: &[Boundary],
    exceedance_prob: f64,
    availability_scaling: f64,
) -> Result<f64> {
    let exceeding: Vec<usize> = boundaries
        .iter()
        .enumerate()
        .filter(|(_, b)| matches!(b, Boundary::ExceedsRange))
        .map(|(i, _)| i)
        .collect();
    if !exceeding.is_empty() {
        return Err(Error::ExceedsRange { samples: exceeding });
    }
    if boundaries.is_empty() {
        return Err(Error::Parameter("no sample boundaries to aggregate".into()));
    }
    let mut values: Vec<f64> = boundaries.iter().filter_map(Boundary::gw).collect();
    values.sort_by(f64::total_cmp);
    let rank = quantile_rank(values.len(), exceedance_prob);
    Ok(values[rank - 1] / availability_scaling)
}

/// 1-based rank `ceil((1 - c) N)`, kept within `1..=N`.
pub fn quantile_rank(n: usize, exceedance_prob: f64) -> usize {
    let raw = ((1.0 - exceedance_prob) * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

/// Samples whose boundary lies at or below `capacity_gw`, i.e. that meet the
/// criterion with a fleet of that size.
pub fn samples_met(boundaries: &[Boundary], capacity_gw: f64) -> usize {
    boundaries
        .iter()
        .filter(|b| b.gw().is_some_and(|v| v <= capacity_gw))
        .count()
}

/// Everything a multi-year study needs.
#[derive(Debug, Clone)]
pub struct Study {
    pub model: TraceModel,
    pub years: Vec<ScenarioYear>,
    pub categories: Vec<EventCategory>,
    pub sizing: SizingConfig,
    pub params: DispatchParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearResult {
    pub year: i32,
    /// One entry per category; `None` when some sample exceeded the search range.
    pub required_gw: Vec<Option<f64>>,
    /// Largest requirement over categories; `None` if any category failed.
    pub overall_gw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRecord {
    pub year: i32,
    pub category: String,
    pub sample: usize,
    pub boundary: Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub categories: Vec<String>,
    pub years: Vec<YearResult>,
    pub boundaries: Vec<BoundaryRecord>,
}

impl StudyResult {
    pub fn required(&self, year: i32, category: &str) -> Option<f64> {
        let j = self.categories.iter().position(|c| c == category)?;
        self.years.iter().find(|y| y.year == year)?.required_gw[j]
    }

    pub fn is_complete(&self) -> bool {
        self.years.iter().all(|y| y.overall_gw.is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    ExceedsRange {
        year: i32,
        category: String,
        samples: Vec<usize>,
    },
    NonMonotone {
        year: i32,
        category: String,
        sample: usize,
        success_gw: f64,
        fail_gw: f64,
    },
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diagnostic::ExceedsRange {
                year,
                category,
                samples,
            } => write!(
                f,
                "{year} {category}: {} sample(s) still fail at the top of the search range: {samples:?}",
                samples.len()
            ),
            Diagnostic::NonMonotone {
                year,
                category,
                sample,
                success_gw,
                fail_gw,
            } => write!(
                f,
                "{year} {category}: sample {sample} meets the criterion at {success_gw} GW but not at {fail_gw} GW"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub result: StudyResult,
    pub diagnostics: Vec<Diagnostic>,
}

/// Draws, composes and bisects one sample for every category. Simulations
/// are shared between categories through a per-capacity cache of event peaks.
pub fn sample_boundaries(
    study: &Study,
    year: &ScenarioYear,
    sample_index: usize,
) -> Result<Vec<BoundarySearch>> {
    let draw = SampleDraw::draw(
        study.sizing.base_seed,
        sample_index as u64,
        &study.model.history,
    )?;
    let sample = compose_sample(&study.model, year, &draw)?;
    boundaries_for_sample(&sample, study)
}

fn boundaries_for_sample(sample: &Sample, study: &Study) -> Result<Vec<BoundarySearch>> {
    let steps = study.sizing.grid_steps()?;
    let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut out = Vec::with_capacity(study.categories.len());
    for category in &study.categories {
        let mut search = sample_boundary_capacity(steps, study.sizing.resolution_gw, |i| {
            let peaks = match cache.entry(i) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => e.insert(event_peaks_at_capacity(
                    sample,
                    study.sizing.capacity_at(i),
                    &study.sizing,
                    &study.model.network,
                    &study.params,
                )?),
            };
            Ok(peaks_meet(peaks, category))
        })?;
        // also check capacities simulated for other categories
        if search.violation.is_none() {
            search.violation =
                monotonicity_violation(cache.iter().map(|(&i, p)| (i, peaks_meet(p, category))))
                    .map(|(s, f)| (study.sizing.capacity_at(s), study.sizing.capacity_at(f)));
        }
        out.push(search);
    }
    Ok(out)
}

/// Boundary search over pre-composed nodal traces, one per category.
pub fn boundaries_for_traces(
    shortfall: &[TimeSeries],
    demand: &[TimeSeries],
    study: &Study,
) -> Result<Vec<BoundarySearch>> {
    let sample = Sample {
        shortfall: shortfall.to_vec(),
        demand: demand.to_vec(),
    };
    boundaries_for_sample(&sample, study)
}

impl Study {
    pub fn validate(&self) -> Result<()> {
        let n = self.model.network.node_count();
        validate_categories(&self.categories)?;
        self.sizing.validate(n)?;
        // every fleet shares one duration, so a single unit checks the delta bound
        let probe = StorageUnit::new(0, 1.0, self.sizing.duration_hours, 0.0, self.sizing.eta)?;
        self.params.validate_for(&[probe])?;
        if self.years.is_empty() {
            return Err(Error::Parameter("no study years".into()));
        }
        Ok(())
    }
}

/// Runs every study year. The same sample draws are reused in each year.
pub fn run_study(study: &Study, exec: Execution) -> Result<StudyReport> {
    study.validate()?;
    let n = study.sizing.n_samples;
    let per_year = study.years.len();
    let searches = exec.map(per_year * n, |job| {
        sample_boundaries(study, &study.years[job / n], job % n)
    })?;

    let categories: Vec<String> = study.categories.iter().map(|c| c.name.clone()).collect();
    let mut years = Vec::with_capacity(per_year);
    let mut boundaries = Vec::new();
    let mut diagnostics = Vec::new();
    for (y, year) in study.years.iter().enumerate() {
        let rows = &searches[y * n..(y + 1) * n];
        let mut required_gw = Vec::with_capacity(categories.len());
        for (j, category) in study.categories.iter().enumerate() {
            let column: Vec<Boundary> = rows.iter().map(|r| r[j].boundary).collect();
            for (sample, r) in rows.iter().enumerate() {
                boundaries.push(BoundaryRecord {
                    year: year.year,
                    category: category.name.clone(),
                    sample,
                    boundary: r[j].boundary,
                });
                if let Some((success_gw, fail_gw)) = r[j].violation {
                    diagnostics.push(Diagnostic::NonMonotone {
                        year: year.year,
                        category: category.name.clone(),
                        sample,
                        success_gw,
                        fail_gw,
                    });
                }
            }
            match required_capacity(
                &column,
                category.exceedance_prob,
                study.sizing.availability_scaling,
            ) {
                Ok(v) => required_gw.push(Some(v)),
                Err(Error::ExceedsRange { samples }) => {
                    diagnostics.push(Diagnostic::ExceedsRange {
                        year: year.year,
                        category: category.name.clone(),
                        samples,
                    });
                    required_gw.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        let overall_gw = required_gw
            .iter()
            .try_fold(0.0_f64, |acc, r| r.map(|v| acc.max(v)));
        years.push(YearResult {
            year: year.year,
            required_gw,
            overall_gw,
        });
    }
    Ok(StudyReport {
        result: StudyResult {
            categories,
            years,
            boundaries,
        },
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sizing(rho: Vec<f64>) -> SizingConfig {
        SizingConfig {
            rho,
            duration_hours: 4.0,
            p_grid_max_gw: 128.0,
            resolution_gw: 1.0,
            n_samples: 1,
            base_seed: 0,
            availability_scaling: 1.0,
            eta: 1.0,
        }
    }

    #[test]
    fn fleet_allocation() {
        let net = NetworkModel::from_edges(3, &[]).unwrap();
        let fleet = build_fleet(10.0, &sizing(vec![0.5, 0.3, 0.2]), &net).unwrap();
        let p: Vec<f64> = fleet.iter().map(|u| u.p_max_gw).collect();
        let e: Vec<f64> = fleet.iter().map(|u| u.e_max_gwh).collect();
        assert_eq!(p, [5.0, 3.0, 2.0]);
        assert_eq!(e, [20.0, 12.0, 8.0]);
        assert!(fleet.iter().all(|u| u.is_full()));
        assert!(build_fleet(0.0, &sizing(vec![0.5, 0.3, 0.2]), &net)
            .unwrap()
            .is_empty());
        let one = build_fleet(7.0, &sizing(vec![1.0]), &NetworkModel::single_node()).unwrap();
        assert_eq!((one.len(), one[0].p_max_gw), (1, 7.0));
    }

    #[test]
    fn sizing_validation() {
        assert!(sizing(vec![0.5, 0.6]).validate(2).is_err());
        assert!(sizing(vec![1.0]).validate(2).is_err());
        assert!(sizing(vec![0.4, 0.6]).validate(2).is_ok());
        let mut s = sizing(vec![1.0]);
        s.p_grid_max_gw = 10.5;
        assert!(s.validate(1).is_err());
        s.resolution_gw = 0.5;
        assert_eq!(s.grid_steps().unwrap(), 21);
        s.availability_scaling = 0.0;
        assert!(s.validate(1).is_err());
    }

    fn threshold_search(threshold: f64) -> Boundary {
        sample_boundary_capacity(128, 1.0, |i| Ok(i as f64 >= threshold))
            .unwrap()
            .into_result()
            .unwrap()
    }

    #[test]
    fn bisection_examples() {
        assert_eq!(threshold_search(7.3), Boundary::Gw(7.0));
        assert_eq!(threshold_search(0.0), Boundary::Gw(0.0));
        assert_eq!(threshold_search(200.0), Boundary::ExceedsRange);
    }

    #[test]
    fn non_monotone_is_reported() {
        // succeeds only on [0] and from 100 upward
        let search = sample_boundary_capacity(128, 1.0, |i| Ok(i == 3 || i >= 100)).unwrap();
        assert_eq!(search.boundary, Boundary::Gw(99.0));
        assert!(search.violation.is_none());
        assert_eq!(monotonicity_violation([(3, true), (50, false), (99, false)]), Some((3, 99)));
        assert_eq!(monotonicity_violation([(3, false), (50, true)]), None);
        let err = BoundarySearch {
            boundary: Boundary::Gw(1.0),
            violation: Some((1.0, 4.0)),
        }
        .into_result();
        assert!(matches!(err, Err(Error::NonMonotone { .. })));
    }

    #[test]
    fn quantile_examples() {
        let b: Vec<Boundary> = [3.0, 5.0, 7.0, 9.0, 11.0].map(Boundary::Gw).to_vec();
        assert_eq!(required_capacity(&b, 0.2, 1.0).unwrap(), 9.0);
        assert_eq!(required_capacity(&b, 0.2, 0.5).unwrap(), 18.0);
        assert!(samples_met(&b, 9.0) >= 4);
        let flat = vec![Boundary::Gw(5.0); 7];
        for c in [0.0, 0.1, 0.5, 0.9] {
            assert_eq!(required_capacity(&flat, c, 1.0).unwrap(), 5.0);
        }
        let mut with_gap = b.clone();
        with_gap[2] = Boundary::ExceedsRange;
        match required_capacity(&with_gap, 0.2, 1.0) {
            Err(Error::ExceedsRange { samples }) => assert_eq!(samples, vec![2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn criterion_examples() {
        let net = NetworkModel::single_node();
        let s = sizing(vec![1.0]);
        let params = DispatchParams::for_fleet(&build_fleet(1.0, &s, &net).unwrap());
        let demand = vec![TimeSeries::hourly(vec![10.0; 6]).unwrap()];
        let routine = EventCategory::new("routine", 0.0, 3, 0.5).unwrap();
        let mild = EventCategory::new("mild", 1.9, 0, 0.2).unwrap();
        let spike = Sample {
            shortfall: vec![TimeSeries::hourly(vec![0.0, 0.0, 2.0, 0.0, 0.0, 0.0]).unwrap()],
            demand: demand.clone(),
        };
        assert!(criterion_at_capacity(&spike, 0.0, &routine, &s, &net, &params).unwrap());
        assert!(!criterion_at_capacity(&spike, 0.0, &mild, &s, &net, &params).unwrap());
        assert!(criterion_at_capacity(&spike, 2.0, &mild, &s, &net, &params).unwrap());
        let calm = Sample {
            shortfall: vec![TimeSeries::hourly(vec![-1.0; 6]).unwrap()],
            demand,
        };
        for cap in [0.0, 3.0, 50.0] {
            assert!(criterion_at_capacity(&calm, cap, &mild, &s, &net, &params).unwrap());
        }
    }

    proptest! {
        #[test]
        fn bisection_matches_scan(threshold in 0.0f64..140.0, res_idx in 0usize..3) {
            let res = [0.5, 1.0, 2.0][res_idx];
            let steps = (128.0 / res) as usize;
            let got = sample_boundary_capacity(steps, res, |i| Ok(i as f64 * res >= threshold))
                .unwrap()
                .into_result()
                .unwrap();
            let first_ok = (0..=steps).find(|&i| i as f64 * res >= threshold);
            let want = match first_ok {
                Some(0) => Boundary::Gw(0.0),
                Some(i) => Boundary::Gw((i - 1) as f64 * res),
                None => Boundary::ExceedsRange,
            };
            prop_assert_eq!(got, want);
        }

        #[test]
        fn requirement_monotone_in_c(
            mut values in proptest::collection::vec(0u32..100, 1..40),
            c1 in 0.0f64..1.0,
            c2 in 0.0f64..1.0,
        ) {
            values.sort();
            let b: Vec<Boundary> = values.iter().map(|&v| Boundary::Gw(v as f64)).collect();
            let (lo, hi) = if c1 < c2 { (c1, c2) } else { (c2, c1) };
            let r_lo = required_capacity(&b, lo, 1.0).unwrap();
            let r_hi = required_capacity(&b, hi, 1.0).unwrap();
            prop_assert!(r_lo >= r_hi);
            let need = quantile_rank(b.len(), lo);
            prop_assert!(samples_met(&b, r_lo) >= need);
        }
    }
}
