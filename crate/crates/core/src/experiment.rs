//! End-to-end runs: solve, price, settle, check, and write figure-ready
//! CSVs plus the solution JSON. Sweeps re-run the pipeline over a grid of
//! LMP scalings or deviation penalties.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dso_milp::bb::{solve_milp, BbConfig, MilpSolution, MilpStatus};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{build_model, BuildOptions, MilpModel};
use crate::pricing::{
    check_market_properties, compute_dlmp, settle, Dispatch, DlmpReport, PropertyCheck, PropertyReport,
    Settlement, EPS_MONEY,
};
use crate::scenario::{scale_lmp, Scenario};

/// Default LMP scaling factors: 1.0, 1.1, ..., 1.9.
pub fn default_lmp_factors() -> Vec<f64> {
    (0..10).map(|k| 1.0 + k as f64 / 10.0).collect()
}

/// Default LMP levels for penalty sweeps.
pub const DEFAULT_GAMMA_SCALES: [f64; 3] = [0.9, 1.0, 1.2];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub solver: BbConfig,
    pub build: BuildOptions,
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub scenario: Scenario,
    pub model: MilpModel,
    pub solution: MilpSolution,
    pub prices: DlmpReport,
    pub dispatch: Dispatch,
    pub settlement: Settlement,
    pub properties: PropertyReport,
}

impl RunOutcome {
    /// True when the solver certified its gap and every hard property holds.
    pub fn accepted(&self) -> bool {
        self.solution.status.has_certified_gap() && self.properties.all_hard_pass()
    }

    pub fn wsm_draw(&self) -> f64 {
        (0..self.scenario.horizon).map(|t| self.dispatch.wsm_draw(t)).sum()
    }
}

/// Runs model building, branch-and-bound, pricing, settlement and the
/// property checks on one scenario.
pub fn run_scenario(s: &Scenario, cfg: &RunConfig) -> Result<RunOutcome, Error> {
    cfg.solver.validate().map_err(Error::InvalidArgument)?;
    let model = build_model(s, &cfg.build)?;
    info!(
        "scenario {:?}: {} columns, {} rows, {} binaries",
        s.id,
        model.num_cols(),
        model.num_rows(),
        model.columns.binary_columns().count()
    );
    let solution = solve_milp(&model.to_mip(), &cfg.solver);
    info!(
        "solver {:?}: objective {} bound {} gap {:.3e} nodes {}",
        solution.status, solution.objective, solution.bound, solution.gap, solution.nodes_explored
    );
    if !solution.has_solution() {
        return Err(Error::Solver(format!("no feasible solution ({:?})", solution.status)));
    }
    let prices = compute_dlmp(s, &model, &solution)?;
    let dispatch = Dispatch::extract(s, &model, &prices.primal)?;
    let settlement = settle(s, &dispatch, &prices)?;
    let properties = check_market_properties(s, &dispatch, &prices, &settlement);
    for c in properties.hard_failures() {
        warn!("property {} failed: {} violation(s)", c.name, c.violations.len());
    }
    Ok(RunOutcome { scenario: s.clone(), model, solution, prices, dispatch, settlement, properties })
}

/// Solver summary and results as written to `solution.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub scenario: String,
    pub status: MilpStatus,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    /// Column name to value, for every model column.
    pub variables: BTreeMap<String, f64>,
    pub bus_ids: Vec<u32>,
    pub dlmp: Vec<Vec<f64>>,
    pub cap_dual: Vec<f64>,
    pub lmp: Vec<f64>,
    pub settlement: serde_json::Value,
    pub properties: Vec<serde_json::Value>,
    /// Seconds since the Unix epoch when the file was written.
    pub generated_at: u64,
}

impl SolutionDocument {
    pub fn new(run: &RunOutcome) -> Self {
        let names = run.model.columns.keys().iter().enumerate().map(|(j, _)| run.model.columns.name(j));
        let variables = names.zip(&run.prices.primal).map(|(n, &v)| (n.to_string(), clean(v))).collect();
        Self {
            scenario: run.scenario.id.clone(),
            status: run.solution.status,
            objective: run.solution.objective,
            bound: run.solution.bound,
            gap: run.solution.gap,
            nodes: run.solution.nodes_explored,
            variables,
            bus_ids: run.prices.bus_ids.clone(),
            dlmp: run.prices.dlmp.iter().map(|r| r.iter().map(|&v| clean(v)).collect()).collect(),
            cap_dual: run.prices.cap_dual.iter().map(|&v| clean(v)).collect(),
            lmp: run.prices.lmp.clone(),
            settlement: serde_json::to_value(&run.settlement).expect("settlement serializes"),
            properties: run
                .properties
                .checks
                .iter()
                .map(|c| serde_json::to_value(c).expect("property serializes"))
                .collect(),
            generated_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

fn clean(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Formats with six significant digits, no exponent, trailing zeros trimmed.
pub fn format_sig6(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    let s = if exp >= 5 {
        let unit = 10f64.powi(exp - 5);
        format!("{:.0}", (v / unit).round() * unit)
    } else {
        let decimals = (5 - exp) as usize;
        let s = format!("{v:.decimals$}");
        let s = s.trim_end_matches('0');
        s.trim_end_matches('.').to_string()
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// A rectangular table with a unit-annotated header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io { path: "<csv>".into(), message: e.to_string() };
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io { path: "<csv>".into(), message: e.to_string() })
    }

    /// Column index by exact header text.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn num_row(first: String, values: impl IntoIterator<Item = f64>) -> Vec<String> {
    std::iter::once(first).chain(values.into_iter().map(format_sig6)).collect()
}

const HOUR: &str = "hour [h]";

/// Hourly WSM energy allocated to each bus.
pub fn wsm_allocation_table(run: &RunOutcome) -> Table {
    let d = &run.dispatch;
    let mut t = Table::new(
        std::iter::once(HOUR.to_string())
            .chain(d.buses.iter().map(|b| format!("bus_{}_wsm [MWh]", b.bus)))
            .collect(),
    );
    for h in 0..run.scenario.horizon {
        t.push(num_row((h + 1).to_string(), d.buses.iter().map(|b| b.s[h])));
    }
    t
}

/// Hourly net position per bus: local generation plus storage output minus
/// demand. Negative values mean the bus draws from the network.
pub fn net_position_table(run: &RunOutcome) -> Table {
    let d = &run.dispatch;
    let mut t = Table::new(
        std::iter::once(HOUR.to_string())
            .chain(d.buses.iter().map(|b| format!("bus_{}_net [MWh]", b.bus)))
            .collect(),
    );
    for h in 0..run.scenario.horizon {
        let vals = (0..d.buses.len()).map(|m| d.generation(m, h) + d.bss_output(m, h) - d.demand(m, h));
        t.push(num_row((h + 1).to_string(), vals));
    }
    t
}

/// Hourly local generation per bus.
pub fn generation_table(run: &RunOutcome) -> Table {
    let d = &run.dispatch;
    let mut t = Table::new(
        std::iter::once(HOUR.to_string())
            .chain(d.buses.iter().map(|b| format!("bus_{}_generation [MWh]", b.bus)))
            .collect(),
    );
    for h in 0..run.scenario.horizon {
        t.push(num_row((h + 1).to_string(), (0..d.buses.len()).map(|m| d.generation(m, h))));
    }
    t
}

/// Hourly system totals: demand equals WSM draw plus generation plus storage.
pub fn supply_demand_table(run: &RunOutcome) -> Table {
    let d = &run.dispatch;
    let mut t = Table::new(
        [HOUR, "wsm [MWh]", "generation [MWh]", "bss [MWh]", "demand [MWh]"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    let n = d.buses.len();
    for h in 0..run.scenario.horizon {
        let gen: f64 = (0..n).map(|m| d.generation(m, h)).sum();
        let bss: f64 = (0..n).map(|m| d.bss_output(m, h)).sum();
        let dem: f64 = (0..n).map(|m| d.demand(m, h)).sum();
        t.push(num_row((h + 1).to_string(), [d.wsm_draw(h), gen, bss, dem]));
    }
    t
}

/// Per storage unit: hourly output, state of charge, bus DLMP and bid.
pub fn bss_schedule_table(run: &RunOutcome) -> Table {
    let mut header = vec![HOUR.to_string()];
    let mut units = Vec::new();
    for (mi, (bus, spec)) in run.dispatch.buses.iter().zip(&run.scenario.buses).enumerate() {
        for (bd, bs) in bus.bss.iter().zip(&spec.bss) {
            let p = format!("bus_{}_{}", bus.bus, bd.id);
            header.push(format!("{p}_output [MWh]"));
            header.push(format!("{p}_soc [MWh]"));
            header.push(format!("{p}_dlmp [$/MWh]"));
            header.push(format!("{p}_bid [$/MWh]"));
            units.push((mi, bd, bs.sell_price));
        }
    }
    let mut t = Table::new(header);
    for h in 0..run.scenario.horizon {
        let mut vals = Vec::new();
        for &(mi, bd, bid) in &units {
            vals.extend([bd.e[h], bd.c[h], run.prices.dlmp[mi][h], bid]);
        }
        t.push(num_row((h + 1).to_string(), vals));
    }
    t
}

/// Hourly LMP against each bus DLMP, with the supply-cap shadow price.
pub fn dlmp_table(run: &RunOutcome) -> Table {
    let p = &run.prices;
    let mut header = vec![HOUR.to_string(), "lmp [$/MWh]".to_string()];
    header.extend(p.bus_ids.iter().map(|b| format!("bus_{b}_dlmp [$/MWh]")));
    header.push("cap_dual [$/MWh]".into());
    let mut t = Table::new(header);
    for h in 0..run.scenario.horizon {
        let mut vals = vec![p.lmp[h]];
        vals.extend(p.dlmp.iter().map(|r| r[h]));
        vals.push(p.cap_dual[h]);
        t.push(num_row((h + 1).to_string(), vals));
    }
    t
}

/// File name and contents of every per-run CSV.
pub fn run_tables(run: &RunOutcome) -> Vec<(&'static str, Table)> {
    vec![
        ("fig2_wsm_allocation.csv", wsm_allocation_table(run)),
        ("fig2_net_position.csv", net_position_table(run)),
        ("fig3_generation.csv", generation_table(run)),
        ("fig4_supply_demand.csv", supply_demand_table(run)),
        ("fig5_bss_schedule.csv", bss_schedule_table(run)),
        ("fig7_dlmp_lmp.csv", dlmp_table(run)),
    ]
}

/// Writes `bytes` to a sibling temporary file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let io = |e: std::io::Error| Error::Io { path: path.display().to_string(), message: e.to_string() };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable");
    b.push(b'\n');
    b
}

/// Paths written by [`write_run`] or [`write_sweep`].
#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    pub solution: Option<PathBuf>,
    pub properties: Option<PathBuf>,
    pub csv: Vec<PathBuf>,
}

/// Writes the solution JSON, property report and per-run CSVs into `dir`.
pub fn write_run(run: &RunOutcome, dir: &Path) -> Result<RunArtifacts, Error> {
    let mut out = RunArtifacts::default();
    let sol = dir.join("solution.json");
    write_atomic(&sol, &json_bytes(&SolutionDocument::new(run)))?;
    out.solution = Some(sol);
    let props = dir.join("properties.json");
    write_atomic(&props, &json_bytes(&run.properties.checks))?;
    out.properties = Some(props);
    for (name, table) in run_tables(run) {
        let p = dir.join(name);
        write_atomic(&p, &table.to_csv()?)?;
        out.csv.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    LmpScale,
    Gamma,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::LmpScale => "lmp_scale",
            SweepKind::Gamma => "gamma",
        }
    }
}

/// A grid of derived scenarios. Penalty sweeps run once per entry of
/// `lmp_scales`; LMP sweeps ignore it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    pub lmp_scales: Vec<f64>,
}

impl SweepSpec {
    pub fn lmp_scale(values: Vec<f64>) -> Self {
        Self { kind: SweepKind::LmpScale, values, lmp_scales: vec![1.0] }
    }

    pub fn gamma(values: Vec<f64>, lmp_scales: Vec<f64>) -> Self {
        Self { kind: SweepKind::Gamma, values, lmp_scales }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.values.is_empty() {
            return bad("sweep values are empty".into());
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return bad(format!("sweep value {v} is not finite"));
        }
        if let Some(w) = self.values.windows(2).find(|w| w[1] <= w[0]) {
            return bad(format!("sweep values must be strictly increasing ({} then {})", w[0], w[1]));
        }
        match self.kind {
            SweepKind::LmpScale => {
                if let Some(v) = self.values.iter().find(|v| **v <= 0.0) {
                    return bad(format!("LMP factor {v} must be positive"));
                }
            }
            SweepKind::Gamma => {
                if let Some(v) = self.values.iter().find(|v| **v < 0.0) {
                    return bad(format!("penalty {v} must be non-negative"));
                }
                if self.lmp_scales.is_empty() {
                    return bad("penalty sweep needs at least one LMP scale".into());
                }
                if let Some(v) = self.lmp_scales.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return bad(format!("LMP scale {v} must be positive"));
                }
            }
        }
        Ok(())
    }

    /// `(lmp scale, gamma)` for every row in output order.
    pub fn points(&self, base_gamma: f64) -> Vec<(f64, f64)> {
        match self.kind {
            SweepKind::LmpScale => self.values.iter().map(|&f| (f, base_gamma)).collect(),
            SweepKind::Gamma => self
                .lmp_scales
                .iter()
                .flat_map(|&k| self.values.iter().map(move |&g| (k, g)))
                .collect(),
        }
    }
}

/// One sweep row. Numeric fields are NaN when the run failed.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lmp_scale: f64,
    pub gamma: f64,
    pub status: String,
    pub avg_lmp: f64,
    pub avg_dlmp: f64,
    pub wsm_draw: f64,
    pub deviation: f64,
    pub gross_revenue: f64,
    pub net_revenue: f64,
    pub objective: f64,
    pub gap: f64,
    pub hard_failures: Vec<String>,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.status == "optimal" || self.status == "gap_limit"
    }

    fn from_run(lmp_scale: f64, gamma: f64, run: &RunOutcome) -> Self {
        let status = serde_json::to_value(run.solution.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        Self {
            lmp_scale,
            gamma,
            status,
            avg_lmp: run.prices.average_lmp(),
            avg_dlmp: run.prices.average_dlmp(),
            wsm_draw: run.wsm_draw(),
            deviation: run.settlement.deviation,
            gross_revenue: run.settlement.dso_revenue_gross,
            net_revenue: run.settlement.dso_revenue_net,
            objective: run.solution.objective,
            gap: run.solution.gap,
            hard_failures: run.properties.hard_failures().map(|c: &PropertyCheck| c.name.clone()).collect(),
        }
    }

    fn failed(lmp_scale: f64, gamma: f64, e: &Error) -> Self {
        Self {
            lmp_scale,
            gamma,
            status: format!("error: {}", e.kind()),
            avg_lmp: f64::NAN,
            avg_dlmp: f64::NAN,
            wsm_draw: f64::NAN,
            deviation: f64::NAN,
            gross_revenue: f64::NAN,
            net_revenue: f64::NAN,
            objective: f64::NAN,
            gap: f64::NAN,
            hard_failures: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(SweepRow::ok)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(
            [
                "lmp_scale [-]",
                "gamma [$/MWh]",
                "avg_lmp [$/MWh]",
                "avg_dlmp [$/MWh]",
                "wsm_draw [MWh]",
                "deviation [MWh]",
                "gross_revenue [$]",
                "net_revenue [$]",
                "objective [$]",
                "gap [-]",
                "status",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        );
        for r in &self.rows {
            let mut row = num_row(
                format_sig6(r.lmp_scale),
                [r.gamma, r.avg_lmp, r.avg_dlmp, r.wsm_draw, r.deviation, r.gross_revenue, r.net_revenue, r.objective, r.gap],
            );
            row.push(r.status.clone());
            t.push(row);
        }
        t
    }

    /// Rows of one LMP scale, in sweep order.
    pub fn at_scale(&self, scale: f64) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.lmp_scale == scale)
    }
}

/// Smallest penalty whose deviation is at most `tol`, if any row reaches it.
pub fn min_zero_deviation_gamma<'a>(rows: impl IntoIterator<Item = &'a SweepRow>, tol: f64) -> Option<f64> {
    rows.into_iter().filter(|r| r.ok() && r.deviation <= tol).map(|r| r.gamma).reduce(f64::min)
}

/// Runs every point of `spec` on `workers` threads. Each finished row is
/// also written to `rows_dir` when given.
pub fn run_sweep(
    base: &Scenario,
    spec: &SweepSpec,
    cfg: &RunConfig,
    workers: usize,
    rows_dir: Option<&Path>,
) -> Result<SweepResult, Error> {
    spec.validate()?;
    let points = spec.points(base.gamma);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(k, &(scale, gamma))| {
                let row = derive(base, scale, gamma)
                    .and_then(|s| run_scenario(&s, cfg))
                    .map(|run| SweepRow::from_run(scale, gamma, &run))
                    .unwrap_or_else(|e| {
                        warn!("sweep row {k} (scale {scale}, gamma {gamma}) failed: {e}");
                        SweepRow::failed(scale, gamma, &e)
                    });
                info!("sweep row {k}: scale {scale} gamma {gamma} status {}", row.status);
                if let Some(dir) = rows_dir {
                    let p = dir.join(format!("{}_{k:03}.json", spec.kind.name()));
                    if let Err(e) = write_atomic(&p, &json_bytes(&row)) {
                        warn!("{e}");
                    }
                }
                row
            })
            .collect()
    });
    Ok(SweepResult { spec: spec.clone(), rows })
}

fn derive(base: &Scenario, scale: f64, gamma: f64) -> Result<Scenario, Error> {
    let mut s = if scale == 1.0 { base.clone() } else { scale_lmp(base, scale)? };
    s.gamma = gamma;
    Ok(s)
}

/// Writes `sweep_<kind>.csv` into `dir`.
pub fn write_sweep(result: &SweepResult, dir: &Path) -> Result<RunArtifacts, Error> {
    let p = dir.join(format!("sweep_{}.csv", result.spec.kind.name()));
    write_atomic(&p, &result.table().to_csv()?)?;
    Ok(RunArtifacts { csv: vec![p], ..RunArtifacts::default() })
}

/// Tolerance for "zero deviation" in penalty sweeps, in MWh.
pub const ZERO_DEVIATION_TOL: f64 = 1e-6;

/// Whether gross revenue stays non-negative and ends at zero.
pub fn revenue_vanishes(rows: &[SweepRow]) -> bool {
    rows.iter().all(|r| r.gross_revenue >= -EPS_MONEY)
        && rows.last().is_some_and(|r| r.gross_revenue <= EPS_MONEY)
}
