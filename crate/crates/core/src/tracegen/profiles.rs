use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{annual_len, TimeSeries};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProfileKey {
    pub class: String,
    pub node: usize,
    pub year: i32,
}

/// Historical traces, loaded once and shared read-only between samples.
#[derive(Debug, Clone)]
pub struct TraceLibrary {
    dt_hours: f64,
    len: usize,
    profiles: HashMap<ProfileKey, TimeSeries>,
    demand: BTreeMap<i32, TimeSeries>,
}

impl TraceLibrary {
    /// Empty library of annual traces at the given sample period.
    pub fn new(dt_hours: f64) -> Result<Self> {
        Ok(TraceLibrary {
            dt_hours,
            len: annual_len(dt_hours)?,
            profiles: HashMap::new(),
            demand: BTreeMap::new(),
        })
    }

    pub fn dt_hours(&self) -> f64 {
        self.dt_hours
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty() && self.demand.is_empty()
    }

    fn check(&self, trace: &TimeSeries) -> Result<()> {
        if trace.len() != self.len || trace.dt_hours() != self.dt_hours {
            return Err(Error::Dimension(format!(
                "trace has {} samples at {} h, library expects {} at {} h",
                trace.len(),
                trace.dt_hours(),
                self.len,
                self.dt_hours
            )));
        }
        Ok(())
    }

    pub fn insert_profile(&mut self, key: ProfileKey, trace: TimeSeries) -> Result<()> {
        self.check(&trace)?;
        self.profiles.insert(key, trace);
        Ok(())
    }

    pub fn insert_demand(&mut self, year: i32, trace: TimeSeries) -> Result<()> {
        self.check(&trace)?;
        self.demand.insert(year, trace);
        Ok(())
    }

    pub fn profile(&self, key: &ProfileKey) -> Result<&TimeSeries> {
        self.profiles.get(key).ok_or_else(|| {
            Error::Parameter(format!(
                "no {} profile for node {} in {}",
                key.class, key.node, key.year
            ))
        })
    }

    pub fn demand(&self, year: i32) -> Result<&TimeSeries> {
        self.demand
            .get(&year)
            .ok_or_else(|| Error::Parameter(format!("no demand trace for {year}")))
    }

    /// `<class>_<node>_<year>.csv`
    pub fn profile_path(dir: &Path, class: &str, node_id: &str, year: i32) -> PathBuf {
        dir.join(format!("{class}_{node_id}_{year}.csv"))
    }

    /// `demand_national_<year>.csv`
    pub fn demand_path(dir: &Path, year: i32) -> PathBuf {
        dir.join(format!("demand_national_{year}.csv"))
    }

    /// Loads a profile file into the library.
    pub fn load_profile(
        &mut self,
        dir: &Path,
        key: ProfileKey,
        node_id: &str,
        per_unit: bool,
    ) -> Result<()> {
        let path = Self::profile_path(dir, &key.class, node_id, key.year);
        let trace = read_trace_csv(&path, self.dt_hours, per_unit)?;
        self.insert_profile(key, trace)
    }

    pub fn load_demand(&mut self, dir: &Path, year: i32) -> Result<()> {
        let path = Self::demand_path(dir, year);
        let trace = read_trace_csv(&path, self.dt_hours, false)?;
        self.insert_demand(year, trace)
    }
}

/// Reads an annual `hour,value` trace. With `per_unit`, values must lie in [0, 1].
pub fn read_trace_csv(path: &Path, dt_hours: f64, per_unit: bool) -> Result<TimeSeries> {
    if !path.is_file() {
        return Err(Error::MissingData(path.to_path_buf()));
    }
    let malformed = |reason: String| Error::MalformedData {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "hour" || &headers[1] != "value" {
        return Err(malformed("header must be `hour,value`".into()));
    }
    let expected = annual_len(dt_hours)?;
    let mut values = Vec::with_capacity(expected);
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let hour: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| malformed(format!("row {row}: bad hour {:?}", &record[0])))?;
        if hour != row {
            return Err(malformed(format!("row {row}: hour {hour} out of sequence")));
        }
        let value: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| malformed(format!("row {row}: bad value {:?}", &record[1])))?;
        if !value.is_finite() {
            return Err(malformed(format!("row {row}: value not finite")));
        }
        if per_unit && !(0.0..=1.0).contains(&value) {
            return Err(malformed(format!(
                "row {row}: capacity factor {value} outside [0, 1]"
            )));
        }
        values.push(value);
    }
    if values.len() != expected {
        return Err(malformed(format!(
            "expected {expected} rows, found {}",
            values.len()
        )));
    }
    TimeSeries::new(values, dt_hours)
}

pub fn write_trace_csv(path: &Path, trace: &TimeSeries) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    writeln!(out, "hour,value")?;
    for (k, v) in trace.values().iter().enumerate() {
        writeln!(out, "{k},{v}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let trace = TimeSeries::annual((0..365).map(|k| k as f64 / 365.0).collect(), 24.0).unwrap();
        let path = dir.path().join("wind_n0_2001.csv");
        write_trace_csv(&path, &trace).unwrap();
        assert_eq!(read_trace_csv(&path, 24.0, true).unwrap(), trace);
        // wrong period -> wrong row count
        assert!(matches!(
            read_trace_csv(&path, 12.0, true),
            Err(Error::MalformedData { .. })
        ));
        let missing = dir.path().join("nope.csv");
        match read_trace_csv(&missing, 24.0, true) {
            Err(Error::MissingData(p)) => assert_eq!(p, missing),
            other => panic!("unexpected {other:?}"),
        }
        let big = TimeSeries::annual(vec![2.0; 365], 24.0).unwrap();
        write_trace_csv(&path, &big).unwrap();
        assert!(read_trace_csv(&path, 24.0, true).is_err());
        assert!(read_trace_csv(&path, 24.0, false).is_ok());
    }

    #[test]
    fn library_rejects_misaligned() {
        let mut lib = TraceLibrary::new(24.0).unwrap();
        let short = TimeSeries::new(vec![1.0; 10], 24.0).unwrap();
        assert!(lib.insert_demand(2010, short).is_err());
        assert!(lib.demand(2010).is_err());
    }
}
