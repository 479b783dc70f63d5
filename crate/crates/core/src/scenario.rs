//! Auction input data: buses with their generators, storage units and load
//! bids, plus the wholesale commitment the DSO received from the ISO.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The bundled 4-bus, 24-hour scenario (published unit and wholesale data
/// with a synthetic load set).
pub const BUNDLED_SCENARIO_JSON: &str = include_str!("../data/tables_1_2_3.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub id: String,
    /// Number of hourly timeslots.
    pub horizon: usize,
    pub wsm: WsmCommitment,
    pub buses: Vec<BusData>,
    /// Penalty in $/MWh on energy committed by the ISO but not drawn.
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WsmCommitment {
    /// Committed energy per timeslot, MWh.
    pub supply: Vec<f64>,
    /// Wholesale price per timeslot, $/MWh.
    pub lmp: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusData {
    pub id: u32,
    #[serde(default)]
    pub generators: Vec<GeneratorSpec>,
    #[serde(default)]
    pub bss: Vec<BssSpec>,
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSegment {
    /// MW
    pub px_max: f64,
    /// $/MWh
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub id: String,
    pub segments: Vec<GenSegment>,
    #[serde(default)]
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub startup_cost: f64,
    pub shutdown_cost: f64,
    pub min_up_time: u32,
    pub min_down_time: u32,
    #[serde(default)]
    pub initial_committed: bool,
    #[serde(default)]
    pub initial_output: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_up_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_down_count: Option<u32>,
}

impl GeneratorSpec {
    /// Hours the unit has been on at t=0. Defaults to `min_up_time` (at
    /// least 1) for a committed unit, 0 otherwise.
    pub fn up_count0(&self) -> u32 {
        self.initial_up_count.unwrap_or(if self.initial_committed {
            self.min_up_time.max(1)
        } else {
            0
        })
    }

    /// Hours the unit has been off at t=0. Defaults to `min_down_time` (at
    /// least 1) so a start at t=1 is allowed.
    pub fn down_count0(&self) -> u32 {
        self.initial_down_count.unwrap_or(if self.initial_committed {
            0
        } else {
            self.min_down_time.max(1)
        })
    }

    pub fn capacity(&self) -> f64 {
        self.segments.iter().map(|s| s.px_max).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BssSpec {
    pub id: String,
    /// MWh
    pub soc_min: f64,
    /// MWh
    pub soc_max: f64,
    /// MWh per hour while discharging.
    pub e_min: f64,
    pub e_max: f64,
    pub min_discharge_time: u32,
    pub min_charge_time: u32,
    /// $/MWh
    pub sell_price: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_soc: Option<f64>,
    #[serde(default)]
    pub initial_discharging: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_discharge_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_charge_count: Option<u32>,
}

impl BssSpec {
    pub fn soc0(&self) -> f64 {
        self.initial_soc.unwrap_or(self.soc_max)
    }

    pub fn discharge_count0(&self) -> u32 {
        self.initial_discharge_count.unwrap_or(if self.initial_discharging {
            self.min_discharge_time.max(1)
        } else {
            0
        })
    }

    pub fn charge_count0(&self) -> u32 {
        self.initial_charge_count.unwrap_or(if self.initial_discharging {
            0
        } else {
            self.min_charge_time.max(1)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSegment {
    /// MWh
    pub dx_max: f64,
    /// $/MWh; ignored on the first (fixed) segment.
    #[serde(default)]
    pub bid: f64,
}

/// A value that is either constant over the horizon or given per timeslot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Series {
    Constant(f64),
    PerSlot(Vec<f64>),
}

impl Series {
    /// Value at 0-based slot `t`.
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Series::Constant(v) => *v,
            Series::PerSlot(v) => v[t],
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Series::Constant(v) => std::slice::from_ref(v),
            Series::PerSlot(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub id: String,
    /// `segments[t]` lists the bid segments for slot `t`; the first one is
    /// the fixed load.
    pub segments: Vec<Vec<LoadSegment>>,
    pub d_min: Series,
    pub d_max: Series,
}

impl LoadSpec {
    pub fn fixed(&self, t: usize) -> f64 {
        self.segments[t].first().map_or(0.0, |s| s.dx_max)
    }
}

/// One violated invariant, with a path naming the offending entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.out.push(Violation { path: path.into(), message: message.into() });
    }

    fn finite(&mut self, path: &str, v: f64) -> bool {
        if v.is_finite() {
            true
        } else {
            self.push(path, format!("must be finite, got {v}"));
            false
        }
    }

    fn nonneg(&mut self, path: &str, v: f64) {
        if self.finite(path, v) && v < 0.0 {
            self.push(path, format!("must be >= 0, got {v}"));
        }
    }
}

/// Lists every violated invariant; an empty list means the scenario is valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut c = Checker { out: Vec::new() };
    let h = s.horizon;
    if h < 1 {
        c.push("horizon", "horizon must be >= 1");
    }
    if s.wsm.supply.len() != h {
        c.push("wsm.supply", format!("expected {h} entries, got {}", s.wsm.supply.len()));
    }
    if s.wsm.lmp.len() != h {
        c.push("wsm.lmp", format!("expected {h} entries, got {}", s.wsm.lmp.len()));
    }
    for (t, &v) in s.wsm.supply.iter().enumerate() {
        c.nonneg(&format!("wsm.supply[{}]", t + 1), v);
    }
    for (t, &v) in s.wsm.lmp.iter().enumerate() {
        c.finite(&format!("wsm.lmp[{}]", t + 1), v);
    }
    c.nonneg("gamma", s.gamma);

    let mut bus_ids = std::collections::BTreeSet::new();
    for bus in &s.buses {
        let bp = format!("buses[{}]", bus.id);
        if !bus_ids.insert(bus.id) {
            c.push(&bp, format!("duplicate bus id {}", bus.id));
        }
        let mut ids = std::collections::BTreeSet::new();
        for g in &bus.generators {
            let gp = format!("{bp}.generators[{}]", g.id);
            if !ids.insert(&g.id) {
                c.push(&gp, "duplicate generator id");
            }
            check_generator(&mut c, &gp, g);
        }
        ids.clear();
        for b in &bus.bss {
            let p = format!("{bp}.bss[{}]", b.id);
            if !ids.insert(&b.id) {
                c.push(&p, "duplicate BSS id");
            }
            check_bss(&mut c, &p, b);
        }
        ids.clear();
        for l in &bus.loads {
            let p = format!("{bp}.loads[{}]", l.id);
            if !ids.insert(&l.id) {
                c.push(&p, "duplicate load id");
            }
            check_load(&mut c, &p, l, h);
        }
    }
    c.out
}

fn check_generator(c: &mut Checker, gp: &str, g: &GeneratorSpec) {
    if g.segments.is_empty() {
        c.push(format!("{gp}.segments"), "at least one segment required");
    }
    for (q, seg) in g.segments.iter().enumerate() {
        c.nonneg(&format!("{gp}.segments[{}].px_max", q + 1), seg.px_max);
        c.nonneg(&format!("{gp}.segments[{}].cost", q + 1), seg.cost);
    }
    for (name, v) in [
        ("p_min", g.p_min),
        ("p_max", g.p_max),
        ("ramp_up", g.ramp_up),
        ("ramp_down", g.ramp_down),
        ("startup_cost", g.startup_cost),
        ("shutdown_cost", g.shutdown_cost),
        ("initial_output", g.initial_output),
    ] {
        c.nonneg(&format!("{gp}.{name}"), v);
    }
    if g.p_max < g.p_min {
        c.push(format!("{gp}.p_max"), format!("p_max {} below p_min {}", g.p_max, g.p_min));
    }
    let cap = g.capacity();
    if g.p_max > cap + 1e-9 {
        c.push(format!("{gp}.p_max"), format!("p_max {} exceeds segment total {cap}", g.p_max));
    }
    let (up, down) = (g.up_count0(), g.down_count0());
    if g.initial_committed {
        if up == 0 || down != 0 {
            c.push(
                format!("{gp}.initial_up_count"),
                "a committed unit needs initial_up_count > 0 and initial_down_count = 0",
            );
        }
        if g.initial_output > g.p_max || g.initial_output < g.p_min {
            c.push(format!("{gp}.initial_output"), "initial output outside [p_min, p_max]");
        }
    } else {
        if down == 0 || up != 0 {
            c.push(
                format!("{gp}.initial_down_count"),
                "an uncommitted unit needs initial_down_count > 0 and initial_up_count = 0",
            );
        }
        if g.initial_output != 0.0 {
            c.push(format!("{gp}.initial_output"), "an uncommitted unit must start at 0 MW");
        }
    }
}

fn check_bss(c: &mut Checker, p: &str, b: &BssSpec) {
    for (name, v) in [
        ("soc_min", b.soc_min),
        ("soc_max", b.soc_max),
        ("e_min", b.e_min),
        ("e_max", b.e_max),
        ("sell_price", b.sell_price),
    ] {
        c.nonneg(&format!("{p}.{name}"), v);
    }
    let soc0 = b.soc0();
    c.finite(&format!("{p}.initial_soc"), soc0);
    if b.soc_min > b.soc_max {
        c.push(format!("{p}.soc_min"), format!("soc_min {} above soc_max {}", b.soc_min, b.soc_max));
    } else if soc0 < b.soc_min || soc0 > b.soc_max {
        c.push(format!("{p}.initial_soc"), format!("initial SOC {soc0} outside [soc_min, soc_max]"));
    }
    if b.e_min > b.e_max {
        c.push(format!("{p}.e_min"), format!("e_min {} above e_max {}", b.e_min, b.e_max));
    }
    if b.min_discharge_time < 1 {
        c.push(format!("{p}.min_discharge_time"), "must be >= 1");
    }
    if b.min_charge_time < 1 {
        c.push(format!("{p}.min_charge_time"), "must be >= 1");
    }
    let (dc, cc) = (b.discharge_count0(), b.charge_count0());
    if b.initial_discharging && (dc == 0 || cc != 0) {
        c.push(
            format!("{p}.initial_discharge_count"),
            "a discharging unit needs initial_discharge_count > 0 and initial_charge_count = 0",
        );
    }
    if !b.initial_discharging && (cc == 0 || dc != 0) {
        c.push(
            format!("{p}.initial_charge_count"),
            "a charging unit needs initial_charge_count > 0 and initial_discharge_count = 0",
        );
    }
}

fn check_load(c: &mut Checker, p: &str, l: &LoadSpec, h: usize) {
    if l.segments.len() != h {
        c.push(format!("{p}.segments"), format!("expected {h} timeslots, got {}", l.segments.len()));
    }
    for (name, series) in [("d_min", &l.d_min), ("d_max", &l.d_max)] {
        if let Series::PerSlot(v) = series {
            if v.len() != h {
                c.push(format!("{p}.{name}"), format!("expected {h} entries, got {}", v.len()));
                return;
            }
        }
        for (t, &v) in series.values().iter().enumerate() {
            c.nonneg(&format!("{p}.{name}[{}]", t + 1), v);
        }
    }
    for (t, segs) in l.segments.iter().enumerate() {
        let sp = format!("{p}.segments[t={}]", t + 1);
        if segs.is_empty() {
            c.push(&sp, "at least one segment required");
            continue;
        }
        for (r, seg) in segs.iter().enumerate() {
            c.nonneg(&format!("{sp}[{}].dx_max", r + 1), seg.dx_max);
            c.nonneg(&format!("{sp}[{}].bid", r + 1), seg.bid);
        }
        let (lo, hi) = (l.d_min.at(t), l.d_max.at(t));
        if lo < segs[0].dx_max {
            c.push(
                format!("{p}.d_min"),
                format!("d_min {lo} below the fixed segment {} at t={}", segs[0].dx_max, t + 1),
            );
        }
        if hi < lo {
            c.push(format!("{p}.d_max"), format!("d_max {hi} below d_min {lo} at t={}", t + 1));
        }
    }
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self, Error> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let violations = validate_scenario(&s);
        if violations.is_empty() {
            Ok(s)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn bundled() -> Self {
        Self::from_json_str(BUNDLED_SCENARIO_JSON).expect("bundled scenario is valid")
    }

    pub fn num_generators(&self) -> usize {
        self.buses.iter().map(|b| b.generators.len()).sum()
    }

    pub fn num_bss(&self) -> usize {
        self.buses.iter().map(|b| b.bss.len()).sum()
    }

    pub fn num_loads(&self) -> usize {
        self.buses.iter().map(|b| b.loads.len()).sum()
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Scenario::from_json_str(&text)
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), Error> {
    let path = path.as_ref();
    std::fs::write(path, s.to_json_string() + "\n").map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Copy of `s` with every wholesale price multiplied by `factor`.
pub fn scale_lmp(s: &Scenario, factor: f64) -> Result<Scenario, Error> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidArgument(format!("LMP scale factor must be > 0, got {factor}")));
    }
    let mut out = s.clone();
    for v in &mut out.wsm.lmp {
        *v *= factor;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_accepts_scalar_or_list() {
        let a: Series = serde_json::from_str("2.5").unwrap();
        let b: Series = serde_json::from_str("[1, 2]").unwrap();
        assert_eq!(a.at(7), 2.5);
        assert_eq!(b.at(1), 2.0);
    }

    #[test]
    fn default_initial_conditions() {
        let s = Scenario::bundled();
        let g = &s.buses[0].generators[0];
        assert!(!g.initial_committed);
        assert_eq!(g.up_count0(), 0);
        assert_eq!(g.down_count0(), g.min_down_time);
        let b = &s.buses[0].bss[0];
        assert_eq!(b.soc0(), b.soc_max);
        assert_eq!(b.charge_count0(), b.min_charge_time);
        assert_eq!(b.discharge_count0(), 0);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"horizon":1,"wsm":{"supply":[1],"lmp":[1]},"buses":[],"extra":1}"#;
        assert!(matches!(Scenario::from_json_str(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn scale_rejects_nonpositive() {
        let s = Scenario::bundled();
        assert!(scale_lmp(&s, 0.0).is_err());
        assert!(scale_lmp(&s, -1.0).is_err());
    }
}
