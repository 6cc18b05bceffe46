//! CSV results, audit dumps, plot-ready series and dispatch logs.
//!
//! Numbers are written in Rust's shortest round-trip form, so parsing a file
//! gives back exactly the values that were written. Missing values are `NA`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dispatch::StepRecord;
use crate::error::{Error, Result};
use crate::model::{NetworkModel, TimeSeries};
use crate::sizing::{Boundary, BoundaryRecord, StudyResult, YearResult};

pub const STUDY_RESULT_FILE: &str = "study_result.csv";
pub const BOUNDARIES_FILE: &str = "boundaries.csv";
pub const CAPACITY_BY_YEAR_FILE: &str = "capacity_by_year.csv";

const NA: &str = "NA";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |v| v.to_string())
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedData {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| malformed(path, format!("bad number {s:?}")))
}

fn parse_opt(path: &Path, s: &str) -> Result<Option<f64>> {
    if s.trim() == NA {
        Ok(None)
    } else {
        parse_f64(path, s).map(Some)
    }
}

fn parse_int<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| malformed(path, format!("bad integer {s:?}")))
}

fn check_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let h = reader.headers()?;
    if !h.iter().eq(expected.iter().copied()) {
        return Err(malformed(path, format!("header must be `{}`", expected.join(","))));
    }
    Ok(())
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    if !path.is_file() {
        return Err(Error::MissingData(path.to_path_buf()));
    }
    Ok(csv::Reader::from_path(path)?)
}

/// Writes the three study files into `dir`, creating it if needed.
pub fn write_study_outputs(dir: &Path, result: &StudyResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_study_result(&dir.join(STUDY_RESULT_FILE), result)?;
    write_boundaries(&dir.join(BOUNDARIES_FILE), &result.boundaries)?;
    write_capacity_by_year(&dir.join(CAPACITY_BY_YEAR_FILE), result)
}

/// `year,category,required_gw,overall_gw`
pub fn write_study_result(path: &Path, result: &StudyResult) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "year,category,required_gw,overall_gw")?;
    for y in &result.years {
        for (name, req) in result.categories.iter().zip(&y.required_gw) {
            writeln!(out, "{},{name},{},{}", y.year, fmt_opt(*req), fmt_opt(y.overall_gw))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `year,category,sample,boundary_gw,exceeds_range`
pub fn write_boundaries(path: &Path, records: &[BoundaryRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "year,category,sample,boundary_gw,exceeds_range")?;
    for r in records {
        let exceeds = r.boundary == Boundary::ExceedsRange;
        writeln!(
            out,
            "{},{},{},{},{exceeds}",
            r.year,
            r.category,
            r.sample,
            fmt_opt(r.boundary.gw())
        )?;
    }
    out.flush()?;
    Ok(())
}

/// `year,<one column per category>,overall`
pub fn write_capacity_by_year(path: &Path, result: &StudyResult) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "year,{},overall", result.categories.join(","))?;
    for y in &result.years {
        let cols: Vec<String> = y.required_gw.iter().map(|v| fmt_opt(*v)).collect();
        writeln!(out, "{},{},{}", y.year, cols.join(","), fmt_opt(y.overall_gw))?;
    }
    out.flush()?;
    Ok(())
}

/// Rebuilds a [`StudyResult`] from the result and audit files in `dir`.
pub fn read_study_outputs(dir: &Path) -> Result<StudyResult> {
    let path = dir.join(STUDY_RESULT_FILE);
    let mut reader = open(&path)?;
    check_header(&path, &mut reader, &["year", "category", "required_gw", "overall_gw"])?;
    let mut categories: Vec<String> = Vec::new();
    let mut years: Vec<YearResult> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(malformed(&path, "expected 4 columns"));
        }
        let year: i32 = parse_int(&path, &rec[0])?;
        let name = rec[1].to_string();
        let required = parse_opt(&path, &rec[2])?;
        let overall = parse_opt(&path, &rec[3])?;
        if years.last().is_none_or(|y| y.year != year) {
            years.push(YearResult {
                year,
                required_gw: Vec::new(),
                overall_gw: overall,
            });
        }
        let y = years.last_mut().expect("pushed above");
        if y.overall_gw != overall {
            return Err(malformed(&path, format!("inconsistent overall value for {year}")));
        }
        let j = y.required_gw.len();
        if years.len() == 1 {
            categories.push(name);
        } else if categories.get(j) != Some(&name) {
            return Err(malformed(&path, format!("category order differs in {year}")));
        }
        years.last_mut().expect("pushed above").required_gw.push(required);
    }
    if years.iter().any(|y| y.required_gw.len() != categories.len()) {
        return Err(malformed(&path, "every year must list every category"));
    }

    let path = dir.join(BOUNDARIES_FILE);
    let mut reader = open(&path)?;
    check_header(
        &path,
        &mut reader,
        &["year", "category", "sample", "boundary_gw", "exceeds_range"],
    )?;
    let mut boundaries = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(malformed(&path, "expected 5 columns"));
        }
        let boundary = match (rec[4].trim(), parse_opt(&path, &rec[3])?) {
            ("true", None) => Boundary::ExceedsRange,
            ("false", Some(gw)) => Boundary::Gw(gw),
            _ => return Err(malformed(&path, "boundary_gw and exceeds_range disagree")),
        };
        boundaries.push(BoundaryRecord {
            year: parse_int(&path, &rec[0])?,
            category: rec[1].to_string(),
            sample: parse_int(&path, &rec[2])?,
            boundary,
        });
    }
    Ok(StudyResult {
        categories,
        years,
        boundaries,
    })
}

/// Wide trace file: `hour,<node id>...`, one row per step.
pub fn write_wide_traces(path: &Path, network: &NetworkModel, traces: &[TimeSeries]) -> Result<()> {
    let ids: Vec<&str> = network.nodes().iter().map(|n| n.id.as_str()).collect();
    if traces.len() != ids.len() {
        return Err(Error::Dimension(format!(
            "{} traces for {} nodes",
            traces.len(),
            ids.len()
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "hour,{}", ids.join(","))?;
    let len = traces.first().map_or(0, |t| t.len());
    for k in 0..len {
        write!(out, "{k}")?;
        for t in traces {
            write!(out, ",{}", t.values()[k])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a wide trace file whose columns name every node of `network`, in any order.
pub fn read_wide_traces(path: &Path, network: &NetworkModel, dt_hours: f64) -> Result<Vec<TimeSeries>> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("hour") {
        return Err(malformed(path, "first column must be `hour`"));
    }
    let mut column = Vec::with_capacity(network.node_count());
    for node in network.nodes() {
        let c = headers
            .iter()
            .position(|h| h == node.id)
            .ok_or_else(|| malformed(path, format!("no column for node {:?}", node.id)))?;
        column.push(c);
    }
    let mut values = vec![Vec::new(); network.node_count()];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let hour: usize = parse_int(path, &rec[0])?;
        if hour != row {
            return Err(malformed(path, format!("row {row}: hour {hour} out of sequence")));
        }
        for (v, &c) in values.iter_mut().zip(&column) {
            let x = parse_f64(path, rec.get(c).unwrap_or(""))?;
            if !x.is_finite() {
                return Err(malformed(path, format!("row {row}: value not finite")));
            }
            v.push(x);
        }
    }
    values.into_iter().map(|v| TimeSeries::new(v, dt_hours)).collect()
}

pub const UNSERVED_LOG_FILE: &str = "dispatch_unserved.csv";
pub const UNITS_LOG_FILE: &str = "dispatch_units.csv";
pub const FLOWS_LOG_FILE: &str = "dispatch_flows.csv";

/// Writes `k,node,s_gw`, `k,unit,p_gw,e_gwh` and `k,edge,flow_gw` files into `dir`.
pub fn write_dispatch_log(dir: &Path, log: &[StepRecord]) -> Result<()> {
    let mut s = BufWriter::new(File::create(dir.join(UNSERVED_LOG_FILE))?);
    let mut u = BufWriter::new(File::create(dir.join(UNITS_LOG_FILE))?);
    let mut f = BufWriter::new(File::create(dir.join(FLOWS_LOG_FILE))?);
    writeln!(s, "k,node,s_gw")?;
    writeln!(u, "k,unit,p_gw,e_gwh")?;
    writeln!(f, "k,edge,flow_gw")?;
    for (k, step) in log.iter().enumerate() {
        for (i, v) in step.unserved_gw.iter().enumerate() {
            writeln!(s, "{k},{i},{v}")?;
        }
        for (j, (p, e)) in step.power_gw.iter().zip(&step.energy_gwh).enumerate() {
            writeln!(u, "{k},{j},{p},{e}")?;
        }
        for (j, v) in step.flow_gw.iter().enumerate() {
            writeln!(f, "{k},{j},{v}")?;
        }
    }
    for w in [&mut s, &mut u, &mut f] {
        w.flush()?;
    }
    Ok(())
}

/// Reads a log written by [`write_dispatch_log`] back into per-step records.
pub fn read_dispatch_log(dir: &Path, nodes: usize, units: usize, edges: usize) -> Result<Vec<StepRecord>> {
    let table = |name: &str, header: &[&str], width: usize| -> Result<Vec<Vec<Vec<f64>>>> {
        let path = dir.join(name);
        let mut reader = open(&path)?;
        check_header(&path, &mut reader, header)?;
        let mut steps: Vec<Vec<Vec<f64>>> = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let k: usize = parse_int(&path, &rec[0])?;
            let idx: usize = parse_int(&path, &rec[1])?;
            if k == steps.len() {
                steps.push(Vec::new());
            }
            if k + 1 != steps.len() || idx != steps[k].len() {
                return Err(malformed(&path, format!("row for step {k}, index {idx} out of order")));
            }
            let vals = (2..rec.len())
                .map(|c| parse_f64(&path, &rec[c]))
                .collect::<Result<Vec<_>>>()?;
            steps[k].push(vals);
        }
        if steps.iter().any(|s| s.len() != width) {
            return Err(malformed(&path, format!("every step needs {width} rows")));
        }
        Ok(steps)
    };
    let s = if nodes > 0 { table(UNSERVED_LOG_FILE, &["k", "node", "s_gw"], nodes)? } else { Vec::new() };
    let u = if units > 0 {
        table(UNITS_LOG_FILE, &["k", "unit", "p_gw", "e_gwh"], units)?
    } else {
        Vec::new()
    };
    let f = if edges > 0 { table(FLOWS_LOG_FILE, &["k", "edge", "flow_gw"], edges)? } else { Vec::new() };
    let len = s.len();
    if (units > 0 && u.len() != len) || (edges > 0 && f.len() != len) {
        return Err(malformed(dir, "log files cover different numbers of steps"));
    }
    Ok((0..len)
        .map(|k| StepRecord {
            unserved_gw: s[k].iter().map(|r| r[0]).collect(),
            power_gw: u.get(k).map_or(Vec::new(), |r| r.iter().map(|r| r[0]).collect()),
            energy_gwh: u.get(k).map_or(Vec::new(), |r| r.iter().map(|r| r[1]).collect()),
            flow_gw: f.get(k).map_or(Vec::new(), |r| r.iter().map(|r| r[0]).collect()),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result() -> StudyResult {
        StudyResult {
            categories: vec!["Routine".into(), "Mild".into()],
            years: vec![
                YearResult {
                    year: 2030,
                    required_gw: vec![Some(3.0), Some(0.1 + 0.2)],
                    overall_gw: Some(3.0),
                },
                YearResult {
                    year: 2035,
                    required_gw: vec![None, Some(7.0)],
                    overall_gw: None,
                },
            ],
            boundaries: vec![
                BoundaryRecord {
                    year: 2030,
                    category: "Routine".into(),
                    sample: 0,
                    boundary: Boundary::Gw(1.0 / 3.0),
                },
                BoundaryRecord {
                    year: 2035,
                    category: "Routine".into(),
                    sample: 0,
                    boundary: Boundary::ExceedsRange,
                },
            ],
        }
    }

    #[test]
    fn study_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = result();
        write_study_outputs(dir.path(), &r).unwrap();
        assert_eq!(read_study_outputs(dir.path()).unwrap(), r);
        let plot = std::fs::read_to_string(dir.path().join(CAPACITY_BY_YEAR_FILE)).unwrap();
        assert_eq!(plot.lines().next(), Some("year,Routine,Mild,overall"));
        assert_eq!(plot.lines().nth(2), Some("2035,NA,7,NA"));
    }

    #[test]
    fn wide_traces_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let net = NetworkModel::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let traces = vec![
            TimeSeries::hourly(vec![0.1, -2.5, 1e-17]).unwrap(),
            TimeSeries::hourly(vec![3.0, 0.0, 7.25]).unwrap(),
        ];
        let path = dir.path().join("t.csv");
        write_wide_traces(&path, &net, &traces).unwrap();
        assert_eq!(read_wide_traces(&path, &net, 1.0).unwrap(), traces);
        let other = NetworkModel::from_edges(3, &[]).unwrap();
        assert!(read_wide_traces(&path, &other, 1.0).is_err());
    }

    #[test]
    fn dispatch_log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let log = vec![
            StepRecord {
                unserved_gw: vec![0.0, 1.5],
                power_gw: vec![0.25],
                energy_gwh: vec![3.75],
                flow_gw: vec![-0.5],
            },
            StepRecord {
                unserved_gw: vec![0.1, 0.0],
                power_gw: vec![-1.0],
                energy_gwh: vec![4.0],
                flow_gw: vec![0.0],
            },
        ];
        write_dispatch_log(dir.path(), &log).unwrap();
        assert_eq!(read_dispatch_log(dir.path(), 2, 1, 1).unwrap(), log);
        assert!(read_dispatch_log(dir.path(), 3, 1, 1).is_err());
    }
}
