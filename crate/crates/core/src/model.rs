//! Translation of a [`Scenario`] into the social-welfare MILP: one column per
//! decision variable and one tagged row per constraint instance.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};

use dso_milp::bb::{Integrality, MipProblem};
use dso_milp::lp::{LpProblem, ObjSense, RowSense};
use serde::Serialize;

use crate::error::Error;
use crate::scenario::{validate_scenario, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    /// Generator output on one bid segment.
    Px,
    /// Generator output.
    P,
    /// Storage discharge.
    E,
    /// Wholesale supply routed to a bus.
    S,
    /// Load served on one bid segment.
    Dx,
    /// Load served.
    D,
    /// Storage state of charge.
    C,
    /// Generator committed.
    I,
    /// Generator start-up.
    Y,
    /// Generator shut-down.
    Z,
    /// Hours the generator has been up.
    Su,
    /// Hours the generator has been down.
    Sd,
    /// Storage discharging.
    J,
    /// Storage switches to charging.
    U,
    /// Storage switches to discharging.
    V,
    /// Hours the storage has been charging.
    Cc,
    /// Hours the storage has been discharging.
    Dc,
}

impl VarKind {
    pub fn symbol(self) -> &'static str {
        match self {
            VarKind::Px => "px",
            VarKind::P => "p",
            VarKind::E => "e",
            VarKind::S => "s",
            VarKind::Dx => "dx",
            VarKind::D => "d",
            VarKind::C => "c",
            VarKind::I => "i",
            VarKind::Y => "y",
            VarKind::Z => "z",
            VarKind::Su => "su",
            VarKind::Sd => "sd",
            VarKind::J => "j",
            VarKind::U => "u",
            VarKind::V => "v",
            VarKind::Cc => "cc",
            VarKind::Dc => "dc",
        }
    }

    pub fn is_binary(self) -> bool {
        matches!(self, VarKind::I | VarKind::Y | VarKind::Z | VarKind::J | VarKind::U | VarKind::V)
    }

    pub fn is_counter(self) -> bool {
        matches!(self, VarKind::Su | VarKind::Sd | VarKind::Cc | VarKind::Dc)
    }
}

/// Symbolic address of a column. `bus` and `unit` are positions in the
/// scenario lists (unit within its category on that bus), `segment` is
/// 0-based and `t` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarKey {
    pub kind: VarKind,
    pub bus: usize,
    pub unit: usize,
    pub segment: usize,
    pub t: usize,
}

impl VarKey {
    pub fn new(kind: VarKind, bus: usize, unit: usize, segment: usize, t: usize) -> Self {
        Self { kind, bus, unit, segment, t }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VariableIndex {
    keys: Vec<VarKey>,
    names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integrality: Vec<Integrality>,
    lookup: HashMap<VarKey, usize>,
}

impl VariableIndex {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, key: &VarKey) -> Option<usize> {
        self.lookup.get(key).copied()
    }

    pub fn key(&self, col: usize) -> VarKey {
        self.keys[col]
    }

    pub fn name(&self, col: usize) -> &str {
        &self.names[col]
    }

    pub fn keys(&self) -> &[VarKey] {
        &self.keys
    }

    pub fn binary_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.keys.iter().enumerate().filter(|(_, k)| k.kind.is_binary()).map(|(j, _)| j)
    }

    fn push(&mut self, key: VarKey, name: String, lo: f64, hi: f64, class: Integrality) -> usize {
        let col = self.keys.len();
        let prev = self.lookup.insert(key, col);
        debug_assert!(prev.is_none(), "duplicate column {name}");
        self.keys.push(key);
        self.names.push(name);
        self.lower.push(lo);
        self.upper.push(hi);
        self.integrality.push(class);
        col
    }
}

/// Which constraint family a row instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RowFamily {
    /// Numbered constraint family (2 through 30).
    Eq(u8),
    /// Pins the fixed load segment to its declared amount.
    FixedSegment,
    /// Valid inequality carried only by the MIP relaxation.
    Cut(CutKind),
}

/// Inequalities every integral solution already satisfies. They tighten the
/// branch-and-bound relaxation without changing the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    /// At most one start-up inside a minimum-up window, and it keeps the unit on.
    UpWindow,
    DownWindow,
    DischargeWindow,
    ChargeWindow,
    /// Output in a start-up or shut-down slot is capped by the ramp limits.
    RampedCapacity,
    /// Each offer segment is available only while the unit is committed.
    SegmentCapacity,
}

impl RowFamily {
    pub fn label(self) -> &'static str {
        match self {
            RowFamily::FixedSegment => "fixed_segment",
            RowFamily::Cut(k) => match k {
                CutKind::UpWindow => "up_window",
                CutKind::DownWindow => "down_window",
                CutKind::DischargeWindow => "discharge_window",
                CutKind::ChargeWindow => "charge_window",
                CutKind::RampedCapacity => "ramped_capacity",
                CutKind::SegmentCapacity => "segment_capacity",
            },
            RowFamily::Eq(n) => match n {
                2 => "supply_cap",
                3 => "balance",
                4 => "load_total",
                7 => "gen_total",
                9 => "gen_limit",
                10 => "ramp_up",
                11 => "ramp_down",
                12 => "up_counter_cap",
                13 => "up_counter_step",
                14 => "min_up",
                15 => "down_counter_cap",
                16 => "down_counter_step",
                17 => "min_down",
                18 => "commit_transition",
                19 => "start_stop_exclusive",
                20 => "bss_output_limit",
                22 => "soc_update",
                23 => "discharge_counter_cap",
                24 => "discharge_counter_step",
                25 => "min_discharge",
                26 => "charge_counter_cap",
                27 => "charge_counter_step",
                28 => "min_charge",
                29 => "bss_transition",
                30 => "switch_exclusive",
                _ => "unknown",
            },
        }
    }
}

/// Lower or upper half of a two-sided constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowPart {
    Only,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct RowTag {
    pub family: RowFamily,
    pub part: RowPart,
    pub bus: Option<u32>,
    pub unit: Option<String>,
    /// 1-based segment, only on fixed-segment rows.
    pub segment: Option<usize>,
    /// 1-based timeslot; 0 marks rows tying t=1 to initial conditions.
    pub t: usize,
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.family.label())?;
        match self.part {
            RowPart::Only => {}
            RowPart::Lower => f.write_str("_lo")?,
            RowPart::Upper => f.write_str("_hi")?,
        }
        if let Some(m) = self.bus {
            write!(f, "_m{m}")?;
        }
        if let Some(u) = &self.unit {
            write!(f, "_{}", sanitize(u))?;
        }
        if let Some(r) = self.segment {
            write!(f, "_r{r}")?;
        }
        write!(f, "_t{}", self.t)
    }
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub coefs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
    pub tag: RowTag,
}

impl ConstraintRow {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            RowSense::Le => (act - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - act).max(0.0),
            RowSense::Eq => (act - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Declare the hour counters integer instead of continuous.
    pub strict_integers: bool,
}

#[derive(Debug, Clone)]
pub struct MilpModel {
    pub columns: VariableIndex,
    /// Dense objective coefficients, maximized.
    pub objective: Vec<f64>,
    /// Constant part of the objective (the deviation penalty on the full
    /// commitment).
    pub objective_constant: f64,
    pub rows: Vec<ConstraintRow>,
    /// Rows of [`CutKind`]: added by [`MilpModel::to_mip`], left out of
    /// [`MilpModel::to_lp`] and of the price re-solve.
    pub cuts: Vec<ConstraintRow>,
    pub horizon: usize,
    pub bus_ids: Vec<u32>,
}

impl MilpModel {
    pub fn num_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn col(&self, key: VarKey) -> Option<usize> {
        self.columns.get(&key)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest violation of any row or column bound by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.columns.lower[j] - v).max(v - self.columns.upper[j]);
        }
        self.rows.iter().fold(worst, |w, r| w.max(r.violation(x)))
    }

    pub fn to_lp(&self) -> LpProblem {
        let mut lp = LpProblem::new(ObjSense::Maximize);
        lp.objective = self.objective.clone();
        lp.offset = self.objective_constant;
        lp.lower = self.columns.lower.clone();
        lp.upper = self.columns.upper.clone();
        for r in &self.rows {
            lp.add_row(r.coefs.clone(), r.sense, r.rhs);
        }
        lp
    }

    pub fn to_mip(&self) -> MipProblem {
        let mut lp = self.to_lp();
        for r in &self.cuts {
            lp.add_row(r.coefs.clone(), r.sense, r.rhs);
        }
        let mut mip = MipProblem::new(lp, self.columns.integrality.clone());
        // Commitment states first; start/stop indicators and counters follow
        // from them.
        mip.priority = self
            .columns
            .keys()
            .iter()
            .map(|k| match k.kind {
                VarKind::I | VarKind::J => 2,
                _ if k.kind.is_binary() => 1,
                _ => 0,
            })
            .collect();
        mip
    }

    /// Index of the unique row of `family` at (`bus`, `t`). Families indexed
    /// by unit need [`MilpModel::find_rows`] instead.
    pub fn row_index(&self, family: RowFamily, bus: Option<u32>, t: usize) -> Result<usize, Error> {
        let mut found = self
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.tag.family == family && r.tag.bus == bus && r.tag.t == t);
        let describe = || {
            let bus = bus.map_or("-".to_string(), |b| b.to_string());
            format!("{} bus {bus} t {t}", family.label())
        };
        match (found.next(), found.next()) {
            (Some((i, _)), None) => Ok(i),
            (None, _) => Err(Error::RowNotFound(describe())),
            (Some(_), Some(_)) => Err(Error::RowNotFound(format!("{} (ambiguous)", describe()))),
        }
    }

    /// The unique row of numbered family `equation` at (`bus`, `t`).
    pub fn row_lookup(&self, equation: u8, bus: Option<u32>, t: usize) -> Result<&ConstraintRow, Error> {
        self.row_index(RowFamily::Eq(equation), bus, t).map(|i| &self.rows[i])
    }

    pub fn find_rows<'a>(
        &'a self,
        pred: impl Fn(&RowTag) -> bool + 'a,
    ) -> impl Iterator<Item = (usize, &'a ConstraintRow)> + 'a {
        self.rows.iter().enumerate().filter(move |(_, r)| pred(&r.tag))
    }

    /// Rounded values of every binary column in `x`.
    pub fn binary_assignment(&self, x: &[f64]) -> BTreeMap<usize, f64> {
        self.columns.binary_columns().map(|j| (j, x[j].round())).collect()
    }

    /// Writes the model in CPLEX LP text format with rows named by tag.
    pub fn write_lp<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let term = |c: f64, j: usize| {
            let sign = if c < 0.0 { "-" } else { "+" };
            format!(" {sign} {} {}", c.abs(), self.columns.name(j))
        };
        writeln!(w, "\\ objective constant: {}", self.objective_constant)?;
        writeln!(w, "Maximize")?;
        write!(w, " obj:")?;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                write!(w, "{}", term(c, j))?;
            }
        }
        writeln!(w)?;
        writeln!(w, "Subject To")?;
        for r in &self.rows {
            write!(w, " {}:", r.tag)?;
            if r.coefs.is_empty() {
                write!(w, " 0 {}", self.columns.name(0))?;
            }
            for &(j, a) in &r.coefs {
                write!(w, "{}", term(a, j))?;
            }
            writeln!(w, " {} {}", r.sense.symbol(), r.rhs)?;
        }
        writeln!(w, "Bounds")?;
        for j in 0..self.num_cols() {
            let (lo, hi) = (self.columns.lower[j], self.columns.upper[j]);
            let name = self.columns.name(j);
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => writeln!(w, " {lo} <= {name} <= {hi}")?,
                (true, false) => writeln!(w, " {name} >= {lo}")?,
                (false, true) => writeln!(w, " -inf <= {name} <= {hi}")?,
                (false, false) => writeln!(w, " {name} free")?,
            }
        }
        for (header, class) in [("Binaries", Integrality::Binary), ("General", Integrality::Integer)] {
            let cols: Vec<usize> =
                (0..self.num_cols()).filter(|&j| self.columns.integrality[j] == class).collect();
            if !cols.is_empty() {
                writeln!(w, "{header}")?;
                for j in cols {
                    writeln!(w, " {}", self.columns.name(j))?;
                }
            }
        }
        writeln!(w, "End")
    }
}

/// Returns a copy of `model` with every binary column pinned to the value
/// in `values`. All columns of the result are continuous.
pub fn fix_binaries(model: &MilpModel, values: &BTreeMap<usize, f64>) -> Result<MilpModel, Error> {
    let mut out = model.clone();
    for j in model.columns.binary_columns() {
        let Some(&v) = values.get(&j) else {
            return Err(Error::FixBinaries(format!("no value for {}", model.columns.name(j))));
        };
        if v != 0.0 && v != 1.0 {
            return Err(Error::FixBinaries(format!("{} = {v} is not 0 or 1", model.columns.name(j))));
        }
        out.columns.lower[j] = v;
        out.columns.upper[j] = v;
    }
    for (&j, _) in values {
        if j >= model.num_cols() || !model.columns.key(j).kind.is_binary() {
            return Err(Error::FixBinaries(format!("column {j} is not binary")));
        }
    }
    for c in &mut out.columns.integrality {
        *c = Integrality::Continuous;
    }
    Ok(out)
}

struct Builder {
    cols: VariableIndex,
    objective: Vec<f64>,
    rows: Vec<ConstraintRow>,
    cuts: Vec<ConstraintRow>,
    strict: bool,
}

impl Builder {
    fn col(&mut self, key: VarKey, name: String, lo: f64, hi: f64, cost: f64) -> usize {
        let class = if key.kind.is_binary() {
            Integrality::Binary
        } else if key.kind.is_counter() && self.strict {
            Integrality::Integer
        } else {
            Integrality::Continuous
        };
        self.objective.push(cost);
        self.cols.push(key, name, lo, hi, class)
    }

    fn row(&mut self, coefs: Vec<(usize, f64)>, sense: RowSense, rhs: f64, tag: RowTag) {
        let coefs = coefs.into_iter().filter(|&(_, a)| a != 0.0).collect();
        self.rows.push(ConstraintRow { coefs, sense, rhs, tag });
    }

    /// `sum of starts[tau] over the window ending at t <= state[t]` (or
    /// `<= 1 - state[t]` when `off`), for windows longer than one slot.
    #[allow(clippy::too_many_arguments)]
    fn windows(&mut self, starts: &[usize], state: &[usize], len: u32, off: bool, kind: CutKind, bus: u32, unit: &str) {
        let len = len as usize;
        if len < 2 {
            return;
        }
        for t in 1..starts.len() {
            let first = (t + 1).saturating_sub(len).max(1);
            let mut coefs: Vec<(usize, f64)> = (first..=t).map(|tau| (starts[tau], 1.0)).collect();
            coefs.push((state[t], if off { 1.0 } else { -1.0 }));
            let mut tag = tag(0, RowPart::Only, bus, unit, t);
            tag.family = RowFamily::Cut(kind);
            self.cuts.push(ConstraintRow { coefs, sense: RowSense::Le, rhs: if off { 1.0 } else { 0.0 }, tag });
        }
    }
}

fn tag(family: u8, part: RowPart, bus: u32, unit: &str, t: usize) -> RowTag {
    RowTag {
        family: RowFamily::Eq(family),
        part,
        bus: Some(bus),
        unit: Some(unit.to_string()),
        segment: None,
        t,
    }
}

/// Per-unit hour counter: previous column, or the initial count at t=1.
enum Prev {
    Col(usize),
    Const(f64),
}

impl Prev {
    /// Adds `coef * prev` to `coefs` or moves it to the right-hand side.
    fn apply(&self, coef: f64, coefs: &mut Vec<(usize, f64)>, rhs: &mut f64) {
        match *self {
            Prev::Col(j) => coefs.push((j, coef)),
            Prev::Const(v) => *rhs -= coef * v,
        }
    }
}

/// Builds the welfare-maximizing MILP for a valid scenario.
pub fn build_model(s: &Scenario, opts: &BuildOptions) -> Result<MilpModel, Error> {
    let violations = validate_scenario(s);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    let h = s.horizon;
    let mut b = Builder {
        cols: VariableIndex::default(),
        objective: Vec::new(),
        rows: Vec::new(),
        cuts: Vec::new(),
        strict: opts.strict_integers,
    };
    let inf = f64::INFINITY;

    let mut s_cols = vec![vec![0; h + 1]; s.buses.len()];
    for (mi, bus) in s.buses.iter().enumerate() {
        let m = bus.id;
        for t in 1..=h {
            let cost = -s.wsm.lmp[t - 1] + s.gamma;
            s_cols[mi][t] = b.col(VarKey::new(VarKind::S, mi, 0, 0, t), format!("s_m{m}_t{t}"), 0.0, inf, cost);
        }
    }

    for t in 1..=h {
        let coefs = (0..s.buses.len()).map(|mi| (s_cols[mi][t], 1.0)).collect();
        let tag = RowTag {
            family: RowFamily::Eq(2),
            part: RowPart::Only,
            bus: None,
            unit: None,
            segment: None,
            t,
        };
        b.row(coefs, RowSense::Le, s.wsm.supply[t - 1], tag);
    }

    for (mi, bus) in s.buses.iter().enumerate() {
        let m = bus.id;
        // Per-slot injections (+) and withdrawals (-) for the balance row.
        let mut balance: Vec<Vec<(usize, f64)>> = (0..=h).map(|t| vec![(s_cols[mi][t], 1.0)]).collect();

        for (gi, g) in bus.generators.iter().enumerate() {
            let gid = sanitize(&g.id);
            let (su0, sd0) = (g.up_count0() as f64, g.down_count0() as f64);
            let big_m = h as f64 + su0.max(sd0);
            let key = |kind, seg, t| VarKey::new(kind, mi, gi, seg, t);
            let mut p = vec![0; h + 1];
            let mut i = vec![0; h + 1];
            let mut y = vec![0; h + 1];
            let mut z = vec![0; h + 1];
            let mut su = vec![0; h + 1];
            let mut sd = vec![0; h + 1];
            let mut px = vec![Vec::new(); h + 1];
            for t in 1..=h {
                for (q, seg) in g.segments.iter().enumerate() {
                    let name = format!("px_m{m}_{gid}_q{}_t{t}", q + 1);
                    px[t].push(b.col(key(VarKind::Px, q, t), name, 0.0, seg.px_max, -seg.cost));
                }
                p[t] = b.col(key(VarKind::P, 0, t), format!("p_m{m}_{gid}_t{t}"), 0.0, inf, 0.0);
                i[t] = b.col(key(VarKind::I, 0, t), format!("i_m{m}_{gid}_t{t}"), 0.0, 1.0, 0.0);
                y[t] = b.col(key(VarKind::Y, 0, t), format!("y_m{m}_{gid}_t{t}"), 0.0, 1.0, -g.startup_cost);
                z[t] = b.col(key(VarKind::Z, 0, t), format!("z_m{m}_{gid}_t{t}"), 0.0, 1.0, -g.shutdown_cost);
                su[t] = b.col(key(VarKind::Su, 0, t), format!("su_m{m}_{gid}_t{t}"), 0.0, big_m, 0.0);
                sd[t] = b.col(key(VarKind::Sd, 0, t), format!("sd_m{m}_{gid}_t{t}"), 0.0, big_m, 0.0);
                balance[t].push((p[t], 1.0));
            }
            let tg = |fam, part, t| tag(fam, part, m, &g.id, t);
            for t in 1..=h {
                let mut coefs = vec![(p[t], 1.0)];
                coefs.extend(px[t].iter().map(|&j| (j, -1.0)));
                b.row(coefs, RowSense::Eq, 0.0, tg(7, RowPart::Only, t));
                b.row(vec![(p[t], 1.0), (i[t], -g.p_min)], RowSense::Ge, 0.0, tg(9, RowPart::Lower, t));
                b.row(vec![(p[t], 1.0), (i[t], -g.p_max)], RowSense::Le, 0.0, tg(9, RowPart::Upper, t));

                let prev_p = if t == 1 { Prev::Const(g.initial_output) } else { Prev::Col(p[t - 1]) };
                let (mut c, mut rhs) = (vec![(p[t], 1.0)], g.ramp_up);
                prev_p.apply(-1.0, &mut c, &mut rhs);
                b.row(c, RowSense::Le, rhs, tg(10, RowPart::Only, t));
                let (mut c, mut rhs) = (vec![(p[t], -1.0)], g.ramp_down);
                prev_p.apply(1.0, &mut c, &mut rhs);
                b.row(c, RowSense::Le, rhs, tg(11, RowPart::Only, t));

                // Up counter: su <= M i, and su_t - su_{t-1} in [(M+1) i - M, 1].
                b.row(vec![(su[t], 1.0), (i[t], -big_m)], RowSense::Le, 0.0, tg(12, RowPart::Only, t));
                let prev = if t == 1 { Prev::Const(su0) } else { Prev::Col(su[t - 1]) };
                let (mut c, mut rhs) = (vec![(su[t], 1.0), (i[t], -(big_m + 1.0))], -big_m);
                prev.apply(-1.0, &mut c, &mut rhs);
                b.row(c, RowSense::Ge, rhs, tg(13, RowPart::Lower, t));
                let (mut c, mut rhs) = (vec![(su[t], 1.0)], 1.0);
                prev.apply(-1.0, &mut c, &mut rhs);
                b.row(c, RowSense::Le, rhs, tg(13, RowPart::Upper, t));

                b.row(vec![(sd[t], 1.0), (i[t], big_m)], RowSense::Le, big_m, tg(15, RowPart::Only, t));
                let prev = if t == 1 { Prev::Const(sd0) } else { Prev::Col(sd[t - 1]) };
                let (mut c, mut rhs) = (vec![(sd[t], 1.0), (i[t], big_m + 1.0)], 1.0);
                prev.apply(-1.0, &mut c, &mut rhs);
                b.row(c, RowSense::Ge, rhs, tg(16, RowPart::Lower, t));
                let (mut c, mut rhs) = (vec![(sd[t], 1.0)], 1.0);
                prev.apply(-1.0, &mut c, &mut rhs);
                b.row(c, RowSense::Le, rhs, tg(16, RowPart::Upper, t));

                let prev_i = if t == 1 {
                    Prev::Const(if g.initial_committed { 1.0 } else { 0.0 })
                } else {
                    Prev::Col(i[t - 1])
                };
                let (mut c, mut rhs) = (vec![(i[t], 1.0), (y[t], -1.0), (z[t], 1.0)], 0.0);
                prev_i.apply(-1.0, &mut c, &mut rhs);
                b.row(c, RowSense::Eq, rhs, tg(18, RowPart::Only, t));
                b.row(vec![(y[t], 1.0), (z[t], 1.0)], RowSense::Le, 1.0, tg(19, RowPart::Only, t));
            }
            // A shut-down (start-up) in slot t+1 needs the minimum up (down)
            // time served by slot t; slot 0 uses the initial counts.
            for t in 0..h {
                let mut c = vec![(z[t + 1], -(g.min_up_time as f64))];
                let mut rhs = 0.0;
                if t == 0 {
                    rhs -= su0;
                } else {
                    c.push((su[t], 1.0));
                }
                if t > 0 || g.min_up_time > 0 {
                    b.row(c, RowSense::Ge, rhs, tg(14, RowPart::Only, t));
                }
                let mut c = vec![(y[t + 1], -(g.min_down_time as f64))];
                let mut rhs = 0.0;
                if t == 0 {
                    rhs -= sd0;
                } else {
                    c.push((sd[t], 1.0));
                }
                if t > 0 || g.min_down_time > 0 {
                    b.row(c, RowSense::Ge, rhs, tg(17, RowPart::Only, t));
                }
            }
            b.windows(&y, &i, g.min_up_time, false, CutKind::UpWindow, m, &g.id);
            for t in 1..=h {
                for (q, seg) in g.segments.iter().enumerate() {
                    let mut tag = tg(9, RowPart::Upper, t);
                    tag.family = RowFamily::Cut(CutKind::SegmentCapacity);
                    tag.segment = Some(q + 1);
                    let coefs = vec![(px[t][q], 1.0), (i[t], -seg.px_max)];
                    b.cuts.push(ConstraintRow { coefs, sense: RowSense::Le, rhs: 0.0, tag });
                }
            }
            // p_t <= Pmax i_t - (Pmax - RU) y_t - (Pmax - RD) z_{t+1}; both
            // terms fit in one row only when a unit cannot start and stop
            // in consecutive slots.
            let (su_cut, sd_cut) = ((g.p_max - g.ramp_up).max(0.0), (g.p_max - g.ramp_down).max(0.0));
            for t in 1..=h {
                let start = (su_cut > 0.0).then_some((y[t], su_cut));
                let stop = (sd_cut > 0.0 && t < h).then(|| (z[t + 1], sd_cut));
                let parts: Vec<Vec<(usize, f64)>> = match (start, stop) {
                    (Some(a), Some(b)) if g.min_up_time >= 2 => vec![vec![a, b]],
                    (a, b) => [a, b].into_iter().flatten().map(|c| vec![c]).collect(),
                };
                for extra in parts {
                    let mut coefs = vec![(p[t], 1.0), (i[t], -g.p_max)];
                    coefs.extend(extra);
                    let mut tag = tg(9, RowPart::Upper, t);
                    tag.family = RowFamily::Cut(CutKind::RampedCapacity);
                    b.cuts.push(ConstraintRow { coefs, sense: RowSense::Le, rhs: 0.0, tag });
                }
            }
            b.windows(&z, &i, g.min_down_time, true, CutKind::DownWindow, m, &g.id);
        }

        for (bi, u) in bus.bss.iter().enumerate() {
            let uid = sanitize(&u.id);
            let (dc0, cc0) = (u.discharge_count0() as f64, u.charge_count0() as f64);
            let big_m = h as f64 + dc0.max(cc0);
            let key = |kind, t| VarKey::new(kind, mi, bi, 0, t);
            let mut e = vec![0; h + 1];
            let mut c = vec![0; h + 1];
            let mut j = vec![0; h + 1];
            let mut uu = vec![0; h + 1];
            let mut v = vec![0; h + 1];
            let mut cc = vec![0; h + 1];
            let mut dc = vec![0; h + 1];
            for t in 1..=h {
                e[t] = b.col(key(VarKind::E, t), format!("e_m{m}_{uid}_t{t}"), 0.0, inf, -u.sell_price);
                c[t] = b.col(key(VarKind::C, t), format!("c_m{m}_{uid}_t{t}"), u.soc_min, u.soc_max, 0.0);
                j[t] = b.col(key(VarKind::J, t), format!("j_m{m}_{uid}_t{t}"), 0.0, 1.0, 0.0);
                uu[t] = b.col(key(VarKind::U, t), format!("u_m{m}_{uid}_t{t}"), 0.0, 1.0, 0.0);
                v[t] = b.col(key(VarKind::V, t), format!("v_m{m}_{uid}_t{t}"), 0.0, 1.0, 0.0);
                cc[t] = b.col(key(VarKind::Cc, t), format!("cc_m{m}_{uid}_t{t}"), 0.0, big_m, 0.0);
                dc[t] = b.col(key(VarKind::Dc, t), format!("dc_m{m}_{uid}_t{t}"), 0.0, big_m, 0.0);
                balance[t].push((e[t], 1.0));
            }
            let tg = |fam, part, t| tag(fam, part, m, &u.id, t);
            for t in 1..=h {
                b.row(vec![(e[t], 1.0), (j[t], -u.e_min)], RowSense::Ge, 0.0, tg(20, RowPart::Lower, t));
                b.row(vec![(e[t], 1.0), (j[t], -u.e_max)], RowSense::Le, 0.0, tg(20, RowPart::Upper, t));

                let prev = if t == 1 { Prev::Const(u.soc0()) } else { Prev::Col(c[t - 1]) };
                let (mut co, mut rhs) = (vec![(c[t], 1.0), (e[t], 1.0)], 0.0);
                prev.apply(-1.0, &mut co, &mut rhs);
                b.row(co, RowSense::Eq, rhs, tg(22, RowPart::Only, t));

                b.row(vec![(dc[t], 1.0), (j[t], -big_m)], RowSense::Le, 0.0, tg(23, RowPart::Only, t));
                let prev = if t == 1 { Prev::Const(dc0) } else { Prev::Col(dc[t - 1]) };
                let (mut co, mut rhs) = (vec![(dc[t], 1.0), (j[t], -(big_m + 1.0))], -big_m);
                prev.apply(-1.0, &mut co, &mut rhs);
                b.row(co, RowSense::Ge, rhs, tg(24, RowPart::Lower, t));
                let (mut co, mut rhs) = (vec![(dc[t], 1.0)], 1.0);
                prev.apply(-1.0, &mut co, &mut rhs);
                b.row(co, RowSense::Le, rhs, tg(24, RowPart::Upper, t));

                b.row(vec![(cc[t], 1.0), (j[t], big_m)], RowSense::Le, big_m, tg(26, RowPart::Only, t));
                let prev = if t == 1 { Prev::Const(cc0) } else { Prev::Col(cc[t - 1]) };
                let (mut co, mut rhs) = (vec![(cc[t], 1.0), (j[t], big_m + 1.0)], 1.0);
                prev.apply(-1.0, &mut co, &mut rhs);
                b.row(co, RowSense::Ge, rhs, tg(27, RowPart::Lower, t));
                let (mut co, mut rhs) = (vec![(cc[t], 1.0)], 1.0);
                prev.apply(-1.0, &mut co, &mut rhs);
                b.row(co, RowSense::Le, rhs, tg(27, RowPart::Upper, t));

                let prev_j = if t == 1 {
                    Prev::Const(if u.initial_discharging { 1.0 } else { 0.0 })
                } else {
                    Prev::Col(j[t - 1])
                };
                let (mut co, mut rhs) = (vec![(j[t], 1.0), (v[t], -1.0), (uu[t], 1.0)], 0.0);
                prev_j.apply(-1.0, &mut co, &mut rhs);
                b.row(co, RowSense::Eq, rhs, tg(29, RowPart::Only, t));
                b.row(vec![(uu[t], 1.0), (v[t], 1.0)], RowSense::Le, 1.0, tg(30, RowPart::Only, t));
            }
            // Switching to charging (discharging) in t+1 needs the minimum
            // discharge (charge) time served by slot t.
            for t in 0..h {
                let (dmin, cmin) = (u.min_discharge_time as f64, u.min_charge_time as f64);
                let (mut co, rhs) = if t == 0 {
                    (vec![], -dc0)
                } else {
                    (vec![(dc[t], 1.0)], 0.0)
                };
                co.push((uu[t + 1], -dmin));
                b.row(co, RowSense::Ge, rhs, tg(25, RowPart::Only, t));
                let (mut co, rhs) = if t == 0 {
                    (vec![], -cc0)
                } else {
                    (vec![(cc[t], 1.0)], 0.0)
                };
                co.push((v[t + 1], -cmin));
                b.row(co, RowSense::Ge, rhs, tg(28, RowPart::Only, t));
            }
            b.windows(&v, &j, u.min_discharge_time, false, CutKind::DischargeWindow, m, &u.id);
            b.windows(&uu, &j, u.min_charge_time, true, CutKind::ChargeWindow, m, &u.id);
        }

        for (li, l) in bus.loads.iter().enumerate() {
            let lid = sanitize(&l.id);
            for t in 1..=h {
                let segs = &l.segments[t - 1];
                let mut dx = Vec::with_capacity(segs.len());
                for (r, seg) in segs.iter().enumerate() {
                    let bid = if r == 0 { 0.0 } else { seg.bid };
                    let name = format!("dx_m{m}_{lid}_r{}_t{t}", r + 1);
                    dx.push(b.col(VarKey::new(VarKind::Dx, mi, li, r, t), name, 0.0, seg.dx_max, bid));
                }
                let (lo, hi) = (l.d_min.at(t - 1), l.d_max.at(t - 1));
                let d = b.col(VarKey::new(VarKind::D, mi, li, 0, t), format!("d_m{m}_{lid}_t{t}"), lo, hi, 0.0);
                balance[t].push((d, -1.0));
                let mut coefs = vec![(d, 1.0)];
                coefs.extend(dx.iter().map(|&j| (j, -1.0)));
                b.row(coefs, RowSense::Eq, 0.0, tag(4, RowPart::Only, m, &l.id, t));
                let fixed = RowTag {
                    family: RowFamily::FixedSegment,
                    part: RowPart::Only,
                    bus: Some(m),
                    unit: Some(l.id.clone()),
                    segment: Some(1),
                    t,
                };
                b.row(vec![(dx[0], 1.0)], RowSense::Eq, segs[0].dx_max, fixed);
            }
        }

        for (t, coefs) in balance.into_iter().enumerate().skip(1) {
            let tag = RowTag {
                family: RowFamily::Eq(3),
                part: RowPart::Only,
                bus: Some(m),
                unit: None,
                segment: None,
                t,
            };
            b.row(coefs, RowSense::Eq, 0.0, tag);
        }
    }

    let objective_constant = -s.gamma * s.wsm.supply.iter().sum::<f64>();
    Ok(MilpModel {
        columns: b.cols,
        objective: b.objective,
        objective_constant,
        rows: b.rows,
        cuts: b.cuts,
        horizon: h,
        bus_ids: s.buses.iter().map(|b| b.id).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{BusData, GenSegment, GeneratorSpec, LoadSegment, LoadSpec, Series, WsmCommitment};

    fn one_gen_fixed_load() -> Scenario {
        Scenario {
            id: "t".into(),
            horizon: 2,
            wsm: WsmCommitment { supply: vec![10.0, 10.0], lmp: vec![20.0, 20.0] },
            buses: vec![BusData {
                id: 1,
                generators: vec![GeneratorSpec {
                    id: "G1".into(),
                    segments: vec![GenSegment { px_max: 5.0, cost: 30.0 }],
                    p_min: 0.0,
                    p_max: 5.0,
                    ramp_up: 5.0,
                    ramp_down: 5.0,
                    startup_cost: 0.0,
                    shutdown_cost: 0.0,
                    min_up_time: 1,
                    min_down_time: 1,
                    initial_committed: false,
                    initial_output: 0.0,
                    initial_up_count: None,
                    initial_down_count: None,
                }],
                bss: vec![],
                loads: vec![LoadSpec {
                    id: "L1".into(),
                    segments: vec![vec![LoadSegment { dx_max: 5.0, bid: 0.0 }]; 2],
                    d_min: Series::Constant(5.0),
                    d_max: Series::Constant(5.0),
                }],
            }],
            gamma: 0.0,
        }
    }

    #[test]
    fn column_count_for_minimal_instance() {
        let m = build_model(&one_gen_fixed_load(), &BuildOptions::default()).unwrap();
        assert_eq!(m.num_cols(), 20);
        assert_eq!(m.columns.binary_columns().count(), 6);
    }

    #[test]
    fn empty_bus_has_trivial_rows() {
        let s = Scenario {
            id: String::new(),
            horizon: 1,
            wsm: WsmCommitment { supply: vec![1.0], lmp: vec![10.0] },
            buses: vec![BusData { id: 1, generators: vec![], bss: vec![], loads: vec![] }],
            gamma: 0.0,
        };
        let m = build_model(&s, &BuildOptions::default()).unwrap();
        assert_eq!(m.num_rows(), 2);
        assert_eq!(m.num_cols(), 1);
        let bal = m.row_lookup(3, Some(1), 1).unwrap();
        assert_eq!(bal.coefs, vec![(0, 1.0)]);
        assert_eq!(bal.rhs, 0.0);
        assert!(m.row_lookup(2, None, 1).is_ok());
    }

    #[test]
    fn strict_mode_marks_counters_integer() {
        let m = build_model(&one_gen_fixed_load(), &BuildOptions { strict_integers: true }).unwrap();
        let ints = m.columns.integrality.iter().filter(|c| **c == Integrality::Integer).count();
        assert_eq!(ints, 4);
    }

    #[test]
    fn tag_names() {
        let m = build_model(&one_gen_fixed_load(), &BuildOptions::default()).unwrap();
        let names: Vec<String> = m.rows.iter().map(|r| r.tag.to_string()).collect();
        assert!(names.contains(&"balance_m1_t2".to_string()));
        assert!(names.contains(&"up_counter_step_lo_m1_G1_t1".to_string()));
        assert!(names.contains(&"fixed_segment_m1_L1_r1_t1".to_string()));
        assert!(names.contains(&"supply_cap_t1".to_string()));
    }
}
