//! JSON study configuration: parsing, validation with JSON pointers, and
//! resolution into a runnable [`Study`].
//!
//! Power values are GW, energies GWh, times hours throughout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::{Error, Result, Violation};
use crate::model::{validate_categories, DispatchParams, Edge, EventCategory, NetworkModel, Node, StorageUnit};
use crate::sizing::{SizingConfig, Study};
use crate::tracegen::{
    ClassModel, GeneratorClassConfig, History, ProfileKey, ProfileMode, ProfileSource, ScenarioYear,
    TraceLibrary, TraceModel,
};

pub const INTERCONNECTOR_CLASS: &str = "interconnector";
pub const DEFAULT_INTERCONNECTOR_CYCLE_HOURS: f64 = 100.0;

/// A fully resolved configuration. Defaults are filled in and `"auto"` delta computed.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub network: NetworkModel,
    /// Sorted by name; this fixes the order in which availability chains are drawn.
    pub classes: Vec<GeneratorClassConfig>,
    pub history: History,
    pub trace_dir: PathBuf,
    pub dt_hours: f64,
    pub regional_weights: Vec<f64>,
    pub years: Vec<ScenarioYear>,
    pub categories: Vec<EventCategory>,
    pub sizing: SizingConfig,
    pub params: DispatchParams,
}

/// Reads and checks a configuration file, including the presence of every trace
/// file it refers to. All violations are reported together.
pub fn validate_config(path: &Path) -> Result<StudyConfig> {
    let config = StudyConfig::load(path)?;
    let missing: Vec<Violation> = config
        .required_trace_files()
        .into_iter()
        .filter(|p| !p.is_file())
        .map(|p| Violation::new("/history/trace_dir", format!("missing trace file {}", p.display())))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(missing));
    }
    Ok(config)
}

impl StudyConfig {
    /// Parses the file; `trace_dir` is resolved relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingData(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json_str(&text, base)
    }

    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)?;
        let mut cx = Checker::default();
        let config = parse(&doc, base_dir, &mut cx);
        match config {
            Some(c) if cx.violations.is_empty() => Ok(c),
            _ => Err(Error::Config(cx.violations)),
        }
    }

    /// Keeps only the listed study years, in configuration order.
    pub fn restrict_years(&mut self, years: &[i32]) -> Result<()> {
        if let Some(y) = years.iter().find(|y| !self.years.iter().any(|s| s.year == **y)) {
            return Err(Error::Config(vec![Violation::new(
                "/years",
                format!("study year {y} is not configured"),
            )]));
        }
        self.years.retain(|s| years.contains(&s.year));
        Ok(())
    }

    /// Every trace file the configured study years can touch.
    pub fn required_trace_files(&self) -> Vec<PathBuf> {
        let dir = &self.trace_dir;
        let mut files: Vec<PathBuf> = self
            .history
            .demand_years
            .iter()
            .map(|&y| TraceLibrary::demand_path(dir, y))
            .collect();
        for key in self.required_profiles() {
            let node_id = &self.network.nodes()[key.node].id;
            files.push(TraceLibrary::profile_path(dir, &key.class, node_id, key.year));
        }
        files
    }

    fn required_profiles(&self) -> Vec<ProfileKey> {
        let mut keys = Vec::new();
        for class in &self.classes {
            let ClassModel::Profile { source, .. } = &class.model else {
                continue;
            };
            let hist_years = match source {
                ProfileSource::Wind => &self.history.wind_years,
                ProfileSource::Solar => &self.history.solar_years,
            };
            for node in 0..self.network.node_count() {
                let used = self.years.iter().any(|y| {
                    y.capacities_gw
                        .get(&class.name)
                        .is_some_and(|c| c.get(node).is_some_and(|&v| v > 0.0))
                });
                if used {
                    for &year in hist_years {
                        keys.push(ProfileKey {
                            class: class.name.clone(),
                            node,
                            year,
                        });
                    }
                }
            }
        }
        keys
    }

    /// Loads every required trace. A missing file is a [`Error::MissingData`].
    pub fn load_traces(&self) -> Result<TraceLibrary> {
        let mut library = TraceLibrary::new(self.dt_hours)?;
        for &year in &self.history.demand_years {
            library.load_demand(&self.trace_dir, year)?;
        }
        for key in self.required_profiles() {
            let class = self.classes.iter().find(|c| c.name == key.class).expect("listed class");
            let per_unit = matches!(
                class.model,
                ClassModel::Profile {
                    mode: ProfileMode::PerUnit,
                    ..
                }
            );
            let node_id = self.network.nodes()[key.node].id.clone();
            library.load_profile(&self.trace_dir, key, &node_id, per_unit)?;
        }
        Ok(library)
    }

    pub fn into_study(self, library: TraceLibrary) -> Study {
        Study {
            model: TraceModel {
                network: self.network,
                classes: self.classes,
                history: self.history,
                regional_weights: self.regional_weights,
                library,
            },
            years: self.years,
            categories: self.categories,
            sizing: self.sizing,
            params: self.params,
        }
    }

    /// Loads traces and builds the study.
    pub fn build_study(self) -> Result<Study> {
        let library = self.load_traces()?;
        Ok(self.into_study(library))
    }
}

#[derive(Default)]
struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn fail(&mut self, pointer: &str, message: impl Into<String>) {
        self.violations.push(Violation::new(pointer, message));
    }

    fn object<'a>(&mut self, v: Option<&'a Value>, pointer: &str) -> Option<&'a Map<String, Value>> {
        match v {
            Some(Value::Object(m)) => Some(m),
            Some(_) => {
                self.fail(pointer, "expected an object");
                None
            }
            None => {
                self.fail(pointer, "required");
                None
            }
        }
    }

    fn array<'a>(&mut self, v: Option<&'a Value>, pointer: &str) -> Option<&'a Vec<Value>> {
        match v {
            Some(Value::Array(a)) => Some(a),
            Some(_) => {
                self.fail(pointer, "expected an array");
                None
            }
            None => {
                self.fail(pointer, "required");
                None
            }
        }
    }

    fn number(&mut self, v: Option<&Value>, pointer: &str) -> Option<f64> {
        match v {
            Some(Value::Number(n)) => n.as_f64(),
            Some(_) => {
                self.fail(pointer, "expected a number");
                None
            }
            None => {
                self.fail(pointer, "required");
                None
            }
        }
    }

    fn number_or(&mut self, v: Option<&Value>, pointer: &str, default: f64) -> Option<f64> {
        match v {
            None => Some(default),
            some => self.number(some, pointer),
        }
    }

    fn positive(&mut self, v: Option<&Value>, pointer: &str) -> Option<f64> {
        let x = self.number(v, pointer)?;
        self.check_positive(x, pointer)
    }

    fn check_positive(&mut self, x: f64, pointer: &str) -> Option<f64> {
        if x.is_finite() && x > 0.0 {
            Some(x)
        } else {
            self.fail(pointer, format!("must be positive, got {x}"));
            None
        }
    }

    fn non_negative(&mut self, v: Option<&Value>, pointer: &str) -> Option<f64> {
        let x = self.number(v, pointer)?;
        if x.is_finite() && x >= 0.0 {
            Some(x)
        } else {
            self.fail(pointer, format!("must be non-negative, got {x}"));
            None
        }
    }

    fn integer<T: TryFrom<i64> + TryFrom<u64>>(&mut self, v: Option<&Value>, pointer: &str) -> Option<T> {
        let out = match v {
            Some(Value::Number(n)) => n
                .as_i64()
                .and_then(|i| T::try_from(i).ok())
                .or_else(|| n.as_u64().and_then(|u| T::try_from(u).ok())),
            None => {
                self.fail(pointer, "required");
                return None;
            }
            Some(_) => None,
        };
        if out.is_none() {
            self.fail(pointer, "expected an integer in range");
        }
        out
    }

    fn string<'a>(&mut self, v: Option<&'a Value>, pointer: &str) -> Option<&'a str> {
        match v {
            Some(Value::String(s)) => Some(s),
            Some(_) => {
                self.fail(pointer, "expected a string");
                None
            }
            None => {
                self.fail(pointer, "required");
                None
            }
        }
    }

    /// One non-negative number per node.
    fn per_node(&mut self, v: Option<&Value>, pointer: &str, nodes: usize) -> Option<Vec<f64>> {
        let arr = self.array(v, pointer)?;
        if arr.len() != nodes {
            self.fail(pointer, format!("expected {nodes} entries, found {}", arr.len()));
            return None;
        }
        let vals: Vec<Option<f64>> = arr
            .iter()
            .enumerate()
            .map(|(i, x)| self.non_negative(Some(x), &format!("{pointer}/{i}")))
            .collect();
        vals.into_iter().collect()
    }

    fn years(&mut self, v: Option<&Value>, pointer: &str) -> Option<Vec<i32>> {
        let arr = self.array(v, pointer)?;
        if arr.is_empty() {
            self.fail(pointer, "at least one year is needed");
            return None;
        }
        let vals: Vec<Option<i32>> = arr
            .iter()
            .enumerate()
            .map(|(i, x)| self.integer(Some(x), &format!("{pointer}/{i}")))
            .collect();
        vals.into_iter().collect()
    }

    fn unknown_keys(&mut self, m: &Map<String, Value>, pointer: &str, known: &[&str]) {
        for k in m.keys() {
            if !known.contains(&k.as_str()) {
                self.fail(&format!("{pointer}/{k}"), "unknown key");
            }
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "network",
    "years",
    "history",
    "availability",
    "profiles",
    "unit_size_gw",
    "regional_weights",
    "categories",
    "sizing",
    "dispatch_params",
    "eta",
];

fn parse(doc: &Value, base_dir: &Path, cx: &mut Checker) -> Option<StudyConfig> {
    let root = cx.object(Some(doc), "")?;
    cx.unknown_keys(root, "", TOP_KEYS);

    let network = parse_network(root.get("network"), cx);
    let n = network.as_ref().map(|n| n.node_count());
    let history = parse_history(root.get("history"), base_dir, cx);
    let eta = match root.get("eta") {
        None => Some(1.0),
        v => cx.number(v, "/eta").and_then(|e| {
            if e > 0.0 && e <= 1.0 {
                Some(e)
            } else {
                cx.fail("/eta", format!("round-trip efficiency must lie in (0, 1], got {e}"));
                None
            }
        }),
    };
    let weights = n.and_then(|n| cx.per_node(root.get("regional_weights"), "/regional_weights", n));
    if let Some(w) = &weights {
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            cx.fail("/regional_weights", format!("weights sum to {total}, not 1"));
        }
    }
    let categories = parse_categories(root.get("categories"), cx);
    let years = n.and_then(|n| parse_years(root.get("years"), n, cx));
    let classes = years
        .as_ref()
        .and_then(|y| parse_classes(root, y, cx));
    let sizing = match (n, &weights, eta) {
        (Some(n), Some(w), Some(eta)) => parse_sizing(root.get("sizing"), n, w, eta, cx),
        _ => None,
    };
    // checked on its own so that its violations show up next to sizing ones
    let duration = match root.get("sizing").and_then(|s| s.get("duration_hours")) {
        None => Some(SizingConfig::DEFAULT_DURATION_HOURS),
        Some(v) => v.as_f64().filter(|d| d.is_finite() && *d > 0.0),
    };
    let params = match (duration, eta) {
        (Some(d), Some(eta)) => parse_params(root.get("dispatch_params"), d, eta, cx),
        _ => None,
    };

    let (history, trace_dir, dt_hours) = history?;
    Some(StudyConfig {
        network: network?,
        classes: classes?,
        history,
        trace_dir,
        dt_hours,
        regional_weights: weights?,
        years: years?,
        categories: categories?,
        sizing: sizing?,
        params: params?,
    })
}

fn parse_network(v: Option<&Value>, cx: &mut Checker) -> Option<NetworkModel> {
    let m = cx.object(v, "/network")?;
    cx.unknown_keys(m, "/network", &["nodes", "edges"]);
    let arr = cx.array(m.get("nodes"), "/network/nodes")?;
    let mut nodes = Vec::new();
    for (i, node) in arr.iter().enumerate() {
        let p = format!("/network/nodes/{i}");
        let Some(obj) = cx.object(Some(node), &p) else { continue };
        cx.unknown_keys(obj, &p, &["id", "name"]);
        let Some(id) = cx.string(obj.get("id"), &format!("{p}/id")) else { continue };
        if nodes.iter().any(|n: &Node| n.id == id) {
            cx.fail(&format!("{p}/id"), format!("duplicate node id {id:?}"));
            continue;
        }
        let name = match obj.get("name") {
            None => String::new(),
            v => cx.string(v, &format!("{p}/name")).unwrap_or_default().to_string(),
        };
        nodes.push(Node { id: id.to_string(), name });
    }
    if arr.is_empty() {
        cx.fail("/network/nodes", "at least one node is needed");
        return None;
    }
    if nodes.len() != arr.len() {
        return None;
    }
    let mut edges = Vec::new();
    let mut ok = true;
    if let Some(arr) = match m.get("edges") {
        None => None,
        v => cx.array(v, "/network/edges"),
    } {
        for (k, e) in arr.iter().enumerate() {
            let p = format!("/network/edges/{k}");
            let Some(obj) = cx.object(Some(e), &p) else {
                ok = false;
                continue;
            };
            cx.unknown_keys(obj, &p, &["from", "to", "capacity_gw"]);
            let end = |key: &str, cx: &mut Checker| {
                let id = cx.string(obj.get(key), &format!("{p}/{key}"))?;
                let idx = nodes.iter().position(|n| n.id == id);
                if idx.is_none() {
                    cx.fail(&format!("{p}/{key}"), format!("unknown node {id:?}"));
                }
                idx
            };
            let a = end("from", cx);
            let b = end("to", cx);
            let cap = cx.non_negative(obj.get("capacity_gw"), &format!("{p}/capacity_gw"));
            match (a, b, cap) {
                (Some(a), Some(b), Some(capacity_gw)) => {
                    if a == b {
                        cx.fail(&p, "edge joins a node to itself");
                        ok = false;
                    } else if edges
                        .iter()
                        .any(|o: &Edge| (o.a == a && o.b == b) || (o.a == b && o.b == a))
                    {
                        cx.fail(&p, "duplicate edge between the same nodes");
                        ok = false;
                    } else {
                        edges.push(Edge { a, b, capacity_gw });
                    }
                }
                _ => ok = false,
            }
        }
    }
    if !ok {
        return None;
    }
    match NetworkModel::new(nodes, edges) {
        Ok(net) => Some(net),
        Err(e) => {
            cx.fail("/network", e.to_string());
            None
        }
    }
}

fn parse_history(v: Option<&Value>, base_dir: &Path, cx: &mut Checker) -> Option<(History, PathBuf, f64)> {
    let m = cx.object(v, "/history")?;
    cx.unknown_keys(
        m,
        "/history",
        &["trace_dir", "dt_hours", "wind_years", "solar_years", "demand_years"],
    );
    let dir = cx.string(m.get("trace_dir"), "/history/trace_dir");
    let dt = cx.number_or(m.get("dt_hours"), "/history/dt_hours", 1.0).and_then(|dt| {
        if crate::model::annual_len(dt).is_ok() {
            Some(dt)
        } else {
            cx.fail("/history/dt_hours", format!("{dt} h does not divide a 8760 h year"));
            None
        }
    });
    let wind = cx.years(m.get("wind_years"), "/history/wind_years");
    let solar = cx.years(m.get("solar_years"), "/history/solar_years");
    let demand = cx.years(m.get("demand_years"), "/history/demand_years");
    Some((
        History {
            wind_years: wind?,
            solar_years: solar?,
            demand_years: demand?,
        },
        base_dir.join(dir?),
        dt?,
    ))
}

fn parse_categories(v: Option<&Value>, cx: &mut Checker) -> Option<Vec<EventCategory>> {
    let arr = cx.array(v, "/categories")?;
    if arr.is_empty() {
        cx.fail("/categories", "at least one category is needed");
        return None;
    }
    let mut out = Vec::new();
    let mut ok = true;
    for (j, c) in arr.iter().enumerate() {
        let p = format!("/categories/{j}");
        let Some(obj) = cx.object(Some(c), &p) else {
            ok = false;
            continue;
        };
        cx.unknown_keys(
            obj,
            &p,
            &["name", "ppns_threshold_gw", "allowed_per_year", "exceedance_prob"],
        );
        let name = cx.string(obj.get("name"), &format!("{p}/name"));
        let threshold = cx.non_negative(obj.get("ppns_threshold_gw"), &format!("{p}/ppns_threshold_gw"));
        let allowed = cx.integer::<u32>(obj.get("allowed_per_year"), &format!("{p}/allowed_per_year"));
        let prob = cx.number(obj.get("exceedance_prob"), &format!("{p}/exceedance_prob"));
        if let Some(c) = prob {
            if !(c > 0.0 && c <= 1.0) {
                cx.fail(&format!("{p}/exceedance_prob"), format!("must lie in (0, 1], got {c}"));
                ok = false;
            }
        }
        if let Some(name) = name {
            if out.iter().any(|c: &EventCategory| c.name == name) {
                cx.fail(&format!("{p}/name"), format!("duplicate category {name:?}"));
                ok = false;
            }
        }
        match (name, threshold, allowed, prob) {
            (Some(name), Some(t), Some(a), Some(c)) => out.push(EventCategory {
                name: name.to_string(),
                ppns_threshold_gw: t,
                allowed_per_year: a,
                exceedance_prob: c,
            }),
            _ => ok = false,
        }
    }
    if !ok {
        return None;
    }
    if let Err(e) = validate_categories(&out) {
        cx.fail("/categories", e.to_string());
        return None;
    }
    Some(out)
}

fn parse_years(v: Option<&Value>, n: usize, cx: &mut Checker) -> Option<Vec<ScenarioYear>> {
    let arr = cx.array(v, "/years")?;
    if arr.is_empty() {
        cx.fail("/years", "at least one study year is needed");
        return None;
    }
    let mut out = Vec::new();
    let mut ok = true;
    for (i, y) in arr.iter().enumerate() {
        let p = format!("/years/{i}");
        let Some(obj) = cx.object(Some(y), &p) else {
            ok = false;
            continue;
        };
        cx.unknown_keys(obj, &p, &["year", "peak_demand_gw", "capacities_gw", "interconnector_gw"]);
        let year = cx.integer::<i32>(obj.get("year"), &format!("{p}/year"));
        if let Some(year) = year {
            if out.iter().any(|s: &ScenarioYear| s.year == year) {
                cx.fail(&format!("{p}/year"), format!("year {year} listed twice"));
                ok = false;
            }
        }
        let peak = cx.positive(obj.get("peak_demand_gw"), &format!("{p}/peak_demand_gw"));
        let mut caps = BTreeMap::new();
        if let Some(m) = cx.object(obj.get("capacities_gw"), &format!("{p}/capacities_gw")) {
            for (class, v) in m {
                if class == INTERCONNECTOR_CLASS {
                    cx.fail(
                        &format!("{p}/capacities_gw/{class}"),
                        "give interconnector capacity as interconnector_gw",
                    );
                    ok = false;
                } else if let Some(c) = cx.per_node(Some(v), &format!("{p}/capacities_gw/{class}"), n) {
                    caps.insert(class.clone(), c);
                } else {
                    ok = false;
                }
            }
        } else {
            ok = false;
        }
        if let Some(v) = obj.get("interconnector_gw") {
            match cx.per_node(Some(v), &format!("{p}/interconnector_gw"), n) {
                Some(c) => {
                    caps.insert(INTERCONNECTOR_CLASS.to_string(), c);
                }
                None => ok = false,
            }
        }
        match (year, peak) {
            (Some(year), Some(peak_demand_gw)) => out.push(ScenarioYear {
                year,
                peak_demand_gw,
                capacities_gw: caps,
            }),
            _ => ok = false,
        }
    }
    ok.then_some(out)
}

/// Resolves every class named in the study years to a profile or availability model.
fn parse_classes(
    root: &Map<String, Value>,
    years: &[ScenarioYear],
    cx: &mut Checker,
) -> Option<Vec<GeneratorClassConfig>> {
    let profiles = match root.get("profiles") {
        None => None,
        v => Some(cx.object(v, "/profiles")?),
    };
    let availability = match root.get("availability") {
        None => None,
        v => Some(cx.object(v, "/availability")?),
    };
    let unit_size = root.get("unit_size_gw");
    let mut names: Vec<&str> = years
        .iter()
        .flat_map(|y| y.capacities_gw.keys().map(String::as_str))
        .collect();
    names.sort_unstable();
    names.dedup();

    let mut out = Vec::new();
    let mut ok = true;
    for name in names {
        let profile = profiles.and_then(|m| m.get(name));
        let avail = availability.and_then(|m| m.get(name));
        let model = match (profile, avail) {
            (Some(_), Some(_)) => {
                cx.fail(&format!("/availability/{name}"), "class also has a profile");
                None
            }
            (Some(v), None) => parse_profile(v, &format!("/profiles/{name}"), cx),
            (None, Some(v)) => parse_availability(v, &format!("/availability/{name}"), name, cx),
            (None, None) => match name {
                "wind" => Some(ClassModel::Profile {
                    source: ProfileSource::Wind,
                    mode: ProfileMode::PerUnit,
                }),
                "solar" => Some(ClassModel::Profile {
                    source: ProfileSource::Solar,
                    mode: ProfileMode::PerUnit,
                }),
                _ => {
                    cx.fail(
                        &format!("/availability/{name}"),
                        format!("class {name:?} needs a profile or availability entry"),
                    );
                    None
                }
            },
        };
        let unit_size_gw = match (&model, unit_size) {
            (Some(ClassModel::Markov { .. }), Some(Value::Object(m))) => {
                cx.positive(m.get(name), &format!("/unit_size_gw/{name}"))
            }
            (Some(ClassModel::Markov { .. }), v) => cx.positive(v, "/unit_size_gw"),
            _ => Some(1.0),
        };
        match (model, unit_size_gw) {
            (Some(model), Some(unit_size_gw)) => out.push(GeneratorClassConfig {
                name: name.to_string(),
                model,
                unit_size_gw,
            }),
            _ => ok = false,
        }
    }
    for (key, map) in [("profiles", profiles), ("availability", availability)] {
        for class in map.into_iter().flat_map(|m| m.keys()) {
            if !out.iter().any(|c| &c.name == class) && ok {
                cx.fail(&format!("/{key}/{class}"), "class has no capacity in any study year");
            }
        }
    }
    ok.then_some(out)
}

fn parse_profile(v: &Value, p: &str, cx: &mut Checker) -> Option<ClassModel> {
    let obj = cx.object(Some(v), p)?;
    cx.unknown_keys(obj, p, &["source", "raw_base_gw"]);
    let source = match cx.string(obj.get("source"), &format!("{p}/source"))? {
        "wind" => ProfileSource::Wind,
        "solar" => ProfileSource::Solar,
        other => {
            cx.fail(&format!("{p}/source"), format!("expected \"wind\" or \"solar\", got {other:?}"));
            return None;
        }
    };
    let mode = match obj.get("raw_base_gw") {
        None => ProfileMode::PerUnit,
        v => ProfileMode::Raw {
            base_gw: cx.positive(v, &format!("{p}/raw_base_gw"))?,
        },
    };
    Some(ClassModel::Profile { source, mode })
}

fn parse_availability(v: &Value, p: &str, name: &str, cx: &mut Checker) -> Option<ClassModel> {
    let obj = cx.object(Some(v), p)?;
    cx.unknown_keys(obj, p, &["availability", "de_rating", "cycle_hours"]);
    let (a, cycle) = match (obj.get("availability"), obj.get("de_rating")) {
        (Some(a), None) => (
            cx.number(Some(a), &format!("{p}/availability")),
            cx.positive(obj.get("cycle_hours"), &format!("{p}/cycle_hours")),
        ),
        (None, Some(d)) => {
            let cycle = match obj.get("cycle_hours") {
                None => Some(DEFAULT_INTERCONNECTOR_CYCLE_HOURS),
                v => cx.positive(v, &format!("{p}/cycle_hours")),
            };
            (cx.number(Some(d), &format!("{p}/de_rating")), cycle)
        }
        _ => {
            let what = if name == INTERCONNECTOR_CLASS { "de_rating" } else { "availability" };
            cx.fail(p, format!("give exactly one of availability or de_rating (expected {what})"));
            return None;
        }
    };
    let a = a?;
    if !(a > 0.0 && a <= 1.0) {
        cx.fail(p, format!("availability must lie in (0, 1], got {a}"));
        return None;
    }
    Some(ClassModel::Markov {
        availability: a,
        cycle_hours: cycle?,
    })
}

fn parse_sizing(v: Option<&Value>, n: usize, weights: &[f64], eta: f64, cx: &mut Checker) -> Option<SizingConfig> {
    let m = cx.object(v, "/sizing")?;
    cx.unknown_keys(
        m,
        "/sizing",
        &[
            "rho",
            "duration_hours",
            "n_samples",
            "p_grid_max_gw",
            "resolution_gw",
            "base_seed",
            "availability_scaling",
        ],
    );
    let rho = match m.get("rho") {
        // nodal energy shares equal the demand disaggregation weights
        None => Some(weights.to_vec()),
        Some(Value::String(s)) if s == "proportional_to_demand" => Some(weights.to_vec()),
        Some(Value::String(s)) => {
            cx.fail("/sizing/rho", format!("expected a list or \"proportional_to_demand\", got {s:?}"));
            None
        }
        v => cx.per_node(v, "/sizing/rho", n).and_then(|r| {
            let total: f64 = r.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                cx.fail("/sizing/rho", format!("allocation sums to {total}, not 1"));
                None
            } else {
                Some(r)
            }
        }),
    };
    let duration = cx.number_or(m.get("duration_hours"), "/sizing/duration_hours", SizingConfig::DEFAULT_DURATION_HOURS);
    let duration = duration.and_then(|d| cx.check_positive(d, "/sizing/duration_hours"));
    let n_samples = cx.integer::<usize>(m.get("n_samples"), "/sizing/n_samples").and_then(|s| {
        if s == 0 {
            cx.fail("/sizing/n_samples", "must be at least 1");
            None
        } else {
            Some(s)
        }
    });
    let p_max = cx.positive(m.get("p_grid_max_gw"), "/sizing/p_grid_max_gw");
    let res = cx.number_or(m.get("resolution_gw"), "/sizing/resolution_gw", SizingConfig::DEFAULT_RESOLUTION_GW);
    let res = res.and_then(|r| cx.check_positive(r, "/sizing/resolution_gw"));
    let seed = match m.get("base_seed") {
        None => Some(0),
        v => cx.integer::<u64>(v, "/sizing/base_seed"),
    };
    let scaling = cx.number_or(m.get("availability_scaling"), "/sizing/availability_scaling", 1.0).and_then(|s| {
        if s > 0.0 && s <= 1.0 {
            Some(s)
        } else {
            cx.fail("/sizing/availability_scaling", format!("must lie in (0, 1], got {s}"));
            None
        }
    });
    let sizing = SizingConfig {
        rho: rho?,
        duration_hours: duration?,
        p_grid_max_gw: p_max?,
        resolution_gw: res?,
        n_samples: n_samples?,
        base_seed: seed?,
        availability_scaling: scaling?,
        eta,
    };
    if let Err(e) = sizing.grid_steps() {
        cx.fail("/sizing/p_grid_max_gw", e.to_string());
        return None;
    }
    Some(sizing)
}

fn parse_params(v: Option<&Value>, duration_hours: f64, eta: f64, cx: &mut Checker) -> Option<DispatchParams> {
    let empty = Map::new();
    let m = match v {
        None => &empty,
        v => cx.object(v, "/dispatch_params")?,
    };
    cx.unknown_keys(
        m,
        "/dispatch_params",
        &["alpha", "beta", "gamma", "delta", "demand_floor_gw"],
    );
    let alpha = cx.number_or(m.get("alpha"), "/dispatch_params/alpha", DispatchParams::DEFAULT_ALPHA);
    let beta = cx.number_or(m.get("beta"), "/dispatch_params/beta", DispatchParams::DEFAULT_BETA);
    let gamma = cx.number_or(m.get("gamma"), "/dispatch_params/gamma", DispatchParams::DEFAULT_GAMMA);
    let floor = cx.number_or(
        m.get("demand_floor_gw"),
        "/dispatch_params/demand_floor_gw",
        DispatchParams::DEFAULT_DEMAND_FLOOR_GW,
    );
    // every unit has p_max / e_max = 1 / duration
    let auto = gamma.map(|g| DispatchParams::auto_delta(g, 1.0 / duration_hours));
    let delta = match m.get("delta") {
        None => auto,
        Some(Value::String(s)) if s == "auto" => auto,
        v => cx.number(v, "/dispatch_params/delta"),
    };
    let params = DispatchParams {
        alpha: alpha?,
        beta: beta?,
        gamma: gamma?,
        delta: delta?,
        demand_floor_gw: floor?,
    };
    let probe = StorageUnit::new(0, 1.0, duration_hours, 0.0, eta).ok()?;
    if let Err(e) = params.validate_for(&[probe]) {
        cx.fail("/dispatch_params", e.to_string());
        return None;
    }
    Some(params)
}
