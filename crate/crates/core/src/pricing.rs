//! Clearing prices, settlement and market-property checks.

use std::collections::BTreeMap;

use dso_milp::bb::MilpSolution;
use dso_milp::lp::{solve_lp, LpStatus};
use serde::Serialize;

use crate::error::Error;
use crate::model::{fix_binaries, MilpModel, RowFamily, VarKind};
use crate::scenario::Scenario;

/// Dispatch amounts below this are treated as zero, MWh.
pub const TOL_QUANTITY: f64 = 1e-6;
/// Slack allowed when comparing prices with bids, $/MWh.
pub const TOL_PRICE: f64 = 1e-5;
/// Slack for stationarity identities on prices, $/MWh.
pub const TOL_KKT: f64 = 1e-6;
/// Slack for money comparisons, $.
pub const EPS_MONEY: f64 = 1e-4;

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::default();
        for v in iter {
            k.add(v);
        }
        k
    }
}

fn ksum(iter: impl IntoIterator<Item = f64>) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenDispatch {
    pub id: String,
    pub p: Vec<f64>,
    /// `px[t][q]`
    pub px: Vec<Vec<f64>>,
    pub i: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub su: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BssDispatch {
    pub id: String,
    pub e: Vec<f64>,
    pub c: Vec<f64>,
    pub j: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub cc: Vec<f64>,
    pub dc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadDispatch {
    pub id: String,
    pub d: Vec<f64>,
    /// `dx[t][r]`
    pub dx: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusDispatch {
    pub bus: u32,
    pub s: Vec<f64>,
    pub generators: Vec<GenDispatch>,
    pub bss: Vec<BssDispatch>,
    pub loads: Vec<LoadDispatch>,
}

/// Solution values arranged by bus and unit; all series are indexed by
/// 0-based timeslot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dispatch {
    pub buses: Vec<BusDispatch>,
}

impl Dispatch {
    pub fn extract(s: &Scenario, model: &MilpModel, x: &[f64]) -> Result<Self, Error> {
        if x.len() != model.num_cols() {
            return Err(Error::Dimension(format!(
                "solution has {} values, model has {} columns",
                x.len(),
                model.num_cols()
            )));
        }
        let h = s.horizon;
        let zeros = || vec![0.0; h];
        let mut buses: Vec<BusDispatch> = s
            .buses
            .iter()
            .map(|b| BusDispatch {
                bus: b.id,
                s: zeros(),
                generators: b
                    .generators
                    .iter()
                    .map(|g| GenDispatch {
                        id: g.id.clone(),
                        p: zeros(),
                        px: vec![vec![0.0; g.segments.len()]; h],
                        i: zeros(),
                        y: zeros(),
                        z: zeros(),
                        su: zeros(),
                        sd: zeros(),
                    })
                    .collect(),
                bss: b
                    .bss
                    .iter()
                    .map(|u| BssDispatch {
                        id: u.id.clone(),
                        e: zeros(),
                        c: zeros(),
                        j: zeros(),
                        u: zeros(),
                        v: zeros(),
                        cc: zeros(),
                        dc: zeros(),
                    })
                    .collect(),
                loads: b
                    .loads
                    .iter()
                    .map(|l| LoadDispatch {
                        id: l.id.clone(),
                        d: zeros(),
                        dx: l.segments.iter().map(|segs| vec![0.0; segs.len()]).collect(),
                    })
                    .collect(),
            })
            .collect();
        for (col, key) in model.columns.keys().iter().enumerate() {
            let v = x[col];
            let t = key.t - 1;
            let bus = &mut buses[key.bus];
            match key.kind {
                VarKind::S => bus.s[t] = v,
                VarKind::Px => bus.generators[key.unit].px[t][key.segment] = v,
                VarKind::P => bus.generators[key.unit].p[t] = v,
                VarKind::I => bus.generators[key.unit].i[t] = v,
                VarKind::Y => bus.generators[key.unit].y[t] = v,
                VarKind::Z => bus.generators[key.unit].z[t] = v,
                VarKind::Su => bus.generators[key.unit].su[t] = v,
                VarKind::Sd => bus.generators[key.unit].sd[t] = v,
                VarKind::E => bus.bss[key.unit].e[t] = v,
                VarKind::C => bus.bss[key.unit].c[t] = v,
                VarKind::J => bus.bss[key.unit].j[t] = v,
                VarKind::U => bus.bss[key.unit].u[t] = v,
                VarKind::V => bus.bss[key.unit].v[t] = v,
                VarKind::Cc => bus.bss[key.unit].cc[t] = v,
                VarKind::Dc => bus.bss[key.unit].dc[t] = v,
                VarKind::D => bus.loads[key.unit].d[t] = v,
                VarKind::Dx => bus.loads[key.unit].dx[t][key.segment] = v,
            }
        }
        Ok(Dispatch { buses })
    }

    /// Total wholesale draw per timeslot.
    pub fn wsm_draw(&self, t: usize) -> f64 {
        ksum(self.buses.iter().map(|b| b.s[t]))
    }

    pub fn generation(&self, bus: usize, t: usize) -> f64 {
        ksum(self.buses[bus].generators.iter().map(|g| g.p[t]))
    }

    pub fn bss_output(&self, bus: usize, t: usize) -> f64 {
        ksum(self.buses[bus].bss.iter().map(|u| u.e[t]))
    }

    pub fn demand(&self, bus: usize, t: usize) -> f64 {
        ksum(self.buses[bus].loads.iter().map(|l| l.d[t]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DlmpReport {
    pub bus_ids: Vec<u32>,
    /// `dlmp[bus][t]`, $/MWh.
    pub dlmp: Vec<Vec<f64>>,
    /// Shadow price of the wholesale commitment per timeslot, $/MWh.
    pub cap_dual: Vec<f64>,
    pub lmp: Vec<f64>,
    /// (bus, 1-based t) of balance rows with no participants or no flow.
    pub degenerate_balance: Vec<(u32, usize)>,
    /// 1-based timeslots whose commitment row binds with a zero dual.
    pub degenerate_cap: Vec<usize>,
    /// Objective of the binary-fixed LP.
    pub lp_objective: f64,
    /// Primal of the binary-fixed LP; the dispatch these prices support.
    #[serde(skip)]
    pub primal: Vec<f64>,
}

/// Re-solves the LP with the solution's binaries fixed and reads the
/// balance-row and commitment-row duals.
pub fn compute_dlmp(s: &Scenario, model: &MilpModel, sol: &MilpSolution) -> Result<DlmpReport, Error> {
    if !sol.has_solution() {
        return Err(Error::Solver("no incumbent to price".into()));
    }
    let fixed = fix_binaries(model, &model.binary_assignment(&sol.primal))?;
    let lp = fixed.to_lp();
    let r = solve_lp(&lp);
    if r.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("binary-fixed LP ended {:?}", r.status)));
    }
    if (r.objective - sol.objective).abs() > 1e-6 * sol.objective.abs().max(1.0) {
        return Err(Error::ObjectiveMismatch { lp: r.objective, milp: sol.objective });
    }

    let h = model.horizon;
    let mut balance_rows: BTreeMap<(u32, usize), usize> = BTreeMap::new();
    let mut cap_rows = vec![usize::MAX; h + 1];
    for (i, row) in model.rows.iter().enumerate() {
        match (row.tag.family, row.tag.bus) {
            (RowFamily::Eq(3), Some(m)) => {
                balance_rows.insert((m, row.tag.t), i);
            }
            (RowFamily::Eq(2), None) => cap_rows[row.tag.t] = i,
            _ => {}
        }
    }
    let mut dlmp = Vec::with_capacity(model.bus_ids.len());
    let mut degenerate_balance = Vec::new();
    for &m in &model.bus_ids {
        let mut series = Vec::with_capacity(h);
        for t in 1..=h {
            let i = balance_rows[&(m, t)];
            // The balance row reads supply - demand = 0, so its dual is the
            // welfare change from one extra MWh of demand, negated.
            series.push(-r.duals[i]);
            let row = &model.rows[i];
            let idle = row.coefs.iter().all(|&(j, _)| r.primal[j].abs() <= TOL_QUANTITY);
            if row.coefs.len() <= 1 || idle {
                degenerate_balance.push((m, t));
            }
        }
        dlmp.push(series);
    }
    let mut cap_dual = Vec::with_capacity(h);
    let mut degenerate_cap = Vec::new();
    for t in 1..=h {
        let i = cap_rows[t];
        let y = r.duals[i];
        cap_dual.push(y);
        let slack = s.wsm.supply[t - 1] - model.rows[i].activity(&r.primal);
        if slack.abs() <= TOL_QUANTITY && y.abs() <= TOL_KKT {
            degenerate_cap.push(t);
        }
    }
    Ok(DlmpReport {
        bus_ids: model.bus_ids.clone(),
        dlmp,
        cap_dual,
        lmp: s.wsm.lmp.clone(),
        degenerate_balance,
        degenerate_cap,
        lp_objective: r.objective,
        primal: r.primal,
    })
}

impl DlmpReport {
    pub fn average_dlmp(&self) -> f64 {
        let n = self.dlmp.iter().map(Vec::len).sum::<usize>();
        if n == 0 {
            return f64::NAN;
        }
        ksum(self.dlmp.iter().flatten().copied()) / n as f64
    }

    pub fn average_lmp(&self) -> f64 {
        ksum(self.lmp.iter().copied()) / self.lmp.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Payment {
    pub bus: u32,
    pub id: String,
    /// $
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settlement {
    pub load_payments: Vec<Payment>,
    pub gen_revenues: Vec<Payment>,
    pub bss_revenues: Vec<Payment>,
    pub iso_payment: f64,
    /// Committed energy not drawn, MWh.
    pub deviation: f64,
    pub penalty: f64,
    pub dso_revenue_gross: f64,
    pub dso_revenue_net: f64,
}

/// Pays every participant at its bus price and the ISO at the LMP.
pub fn settle(s: &Scenario, dispatch: &Dispatch, prices: &DlmpReport) -> Result<Settlement, Error> {
    let h = s.horizon;
    if dispatch.buses.len() != prices.dlmp.len() || prices.dlmp.len() != s.buses.len() {
        return Err(Error::Dimension("bus count differs between scenario, dispatch and prices".into()));
    }
    if prices.dlmp.iter().any(|v| v.len() != h) || prices.lmp.len() != h {
        return Err(Error::Dimension("price series length differs from the horizon".into()));
    }
    let pay = |bus: &BusDispatch, mi: usize, id: &str, q: &[f64]| Payment {
        bus: bus.bus,
        id: id.to_string(),
        amount: ksum((0..h).map(|t| prices.dlmp[mi][t] * q[t])),
    };
    let mut load_payments = Vec::new();
    let mut gen_revenues = Vec::new();
    let mut bss_revenues = Vec::new();
    for (mi, bus) in dispatch.buses.iter().enumerate() {
        load_payments.extend(bus.loads.iter().map(|l| pay(bus, mi, &l.id, &l.d)));
        gen_revenues.extend(bus.generators.iter().map(|g| pay(bus, mi, &g.id, &g.p)));
        bss_revenues.extend(bus.bss.iter().map(|u| pay(bus, mi, &u.id, &u.e)));
    }
    let iso_payment = ksum((0..h).map(|t| s.wsm.lmp[t] * dispatch.wsm_draw(t)));
    let deviation = ksum((0..h).map(|t| s.wsm.supply[t] - dispatch.wsm_draw(t)));
    let penalty = s.gamma * deviation;
    let mut gross = KahanSum::default();
    load_payments.iter().for_each(|p| gross.add(p.amount));
    gen_revenues.iter().for_each(|p| gross.add(-p.amount));
    bss_revenues.iter().for_each(|p| gross.add(-p.amount));
    gross.add(-iso_payment);
    let dso_revenue_gross = gross.value();
    Ok(Settlement {
        load_payments,
        gen_revenues,
        bss_revenues,
        iso_payment,
        deviation,
        penalty,
        dso_revenue_gross,
        dso_revenue_net: dso_revenue_gross - penalty,
    })
}

impl Settlement {
    pub fn total_load_payments(&self) -> f64 {
        ksum(self.load_payments.iter().map(|p| p.amount))
    }

    pub fn total_gen_revenues(&self) -> f64 {
        ksum(self.gen_revenues.iter().map(|p| p.amount))
    }

    pub fn total_bss_revenues(&self) -> f64 {
        ksum(self.bss_revenues.iter().map(|p| p.amount))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    /// Hard properties decide the run's exit status; soft ones are reported.
    pub hard: bool,
    pub passed: bool,
    /// Number of instances examined.
    pub checked: usize,
    pub violations: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn hard_failures(&self) -> impl Iterator<Item = &PropertyCheck> {
        self.checks.iter().filter(|c| c.hard && !c.passed)
    }

    pub fn all_hard_pass(&self) -> bool {
        self.hard_failures().next().is_none()
    }
}

struct CheckBuilder {
    check: PropertyCheck,
}

impl CheckBuilder {
    fn new(name: &str, hard: bool) -> Self {
        Self {
            check: PropertyCheck {
                name: name.to_string(),
                hard,
                passed: true,
                checked: 0,
                violations: Vec::new(),
                note: None,
            },
        }
    }

    fn test(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.check.checked += 1;
        if !ok {
            self.check.passed = false;
            self.check.violations.push(describe());
        }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.check.note = Some(note.into());
        self
    }

    fn done(self) -> PropertyCheck {
        self.check
    }
}

/// Evaluates the market properties of a priced, settled solution.
pub fn check_market_properties(
    s: &Scenario,
    dispatch: &Dispatch,
    prices: &DlmpReport,
    settlement: &Settlement,
) -> PropertyReport {
    let h = s.horizon;
    let gamma = s.gamma;
    let mut checks = Vec::new();

    let mut c = CheckBuilder::new("weak_budget_balance", true);
    if gamma == 0.0 {
        let gross = settlement.dso_revenue_gross;
        c.test(gross >= -EPS_MONEY, || format!("gross revenue {gross} < 0"));
        checks.push(c.done());
    } else {
        checks.push(c.note("not applicable: deviation penalty is active").done());
    }

    // With the penalty folded into the objective, drawing one MWh is worth
    // gamma on top of the LMP, so the bus price is LMP - gamma + cap dual.
    let mut c = CheckBuilder::new("kkt_price_identity", true);
    let mut wsm = CheckBuilder::new("wsm_marginality", true);
    for (mi, bus) in dispatch.buses.iter().enumerate() {
        for t in 0..h {
            if bus.s[t] <= TOL_QUANTITY {
                continue;
            }
            let (p, lmp, mu) = (prices.dlmp[mi][t], s.wsm.lmp[t], prices.cap_dual[t]);
            let err = p - (lmp - gamma + mu);
            c.test(err.abs() <= TOL_KKT, || {
                format!("bus {} t {}: dlmp {p} vs lmp {lmp} - gamma {gamma} + cap dual {mu}", bus.bus, t + 1)
            });
            if mu <= TOL_KKT {
                let err = p - (lmp - gamma);
                wsm.test(err.abs() <= TOL_KKT, || {
                    format!("bus {} t {}: dlmp {p} vs lmp - gamma {}", bus.bus, t + 1, lmp - gamma)
                });
            }
        }
    }
    checks.push(c.done());
    checks.push(wsm.done());

    let mut c = CheckBuilder::new("cap_dual_sign", true);
    for (t, &mu) in prices.cap_dual.iter().enumerate() {
        c.test(mu >= -TOL_KKT, || format!("t {}: cap dual {mu} < 0", t + 1));
    }
    checks.push(c.done());

    let mut c = CheckBuilder::new("deviation_nonnegative", true);
    for t in 0..h {
        let dev = s.wsm.supply[t] - dispatch.wsm_draw(t);
        c.test(dev >= -TOL_QUANTITY, || format!("t {}: drew {} over commitment", t + 1, -dev));
    }
    checks.push(c.done());

    let mut c = CheckBuilder::new("revenue_identity", true);
    let expected = ksum((0..h).map(|t| (prices.cap_dual[t] - gamma) * dispatch.wsm_draw(t)));
    let gross = settlement.dso_revenue_gross;
    let scale = 1.0 + settlement.iso_payment.abs() + settlement.total_load_payments().abs();
    c.test((gross - expected).abs() <= EPS_MONEY.max(1e-9 * scale), || {
        format!("gross revenue {gross} vs sum of (cap dual - gamma) x draw {expected}")
    });
    checks.push(c.done());

    let mut c = CheckBuilder::new("supplier_rationality", true);
    for (mi, (spec, bus)) in s.buses.iter().zip(&dispatch.buses).enumerate() {
        for (g, gd) in spec.generators.iter().zip(&bus.generators) {
            for t in 0..h {
                let price = prices.dlmp[mi][t];
                for (q, seg) in g.segments.iter().enumerate() {
                    let amount = gd.px[t][q];
                    c.test(amount <= TOL_QUANTITY || price >= seg.cost - TOL_PRICE, || {
                        format!(
                            "bus {} {} segment {} t {}: {amount} MW at dlmp {price} < bid {}",
                            bus.bus,
                            g.id,
                            q + 1,
                            t + 1,
                            seg.cost
                        )
                    });
                }
            }
        }
        for (u, ud) in spec.bss.iter().zip(&bus.bss) {
            for t in 0..h {
                let price = prices.dlmp[mi][t];
                let amount = ud.e[t];
                c.test(amount <= TOL_QUANTITY || price >= u.sell_price - TOL_PRICE, || {
                    format!(
                        "bus {} {} t {}: {amount} MWh at dlmp {price} < bid {}",
                        bus.bus,
                        u.id,
                        t + 1,
                        u.sell_price
                    )
                });
            }
        }
    }
    checks.push(c.done());

    let mut c = CheckBuilder::new("buyer_rationality", true);
    for (mi, (spec, bus)) in s.buses.iter().zip(&dispatch.buses).enumerate() {
        for (l, ld) in spec.loads.iter().zip(&bus.loads) {
            for t in 0..h {
                let price = prices.dlmp[mi][t];
                for (r, seg) in l.segments[t].iter().enumerate().skip(1) {
                    let amount = ld.dx[t][r];
                    c.test(amount <= TOL_QUANTITY || price <= seg.bid + TOL_PRICE, || {
                        format!(
                            "bus {} {} segment {} t {}: {amount} MWh at dlmp {price} > bid {}",
                            bus.bus,
                            l.id,
                            r + 1,
                            t + 1,
                            seg.bid
                        )
                    });
                }
            }
        }
    }
    checks.push(c.done());

    let mut c = CheckBuilder::new("bss_min_discharge_run", true);
    for (spec, bus) in s.buses.iter().zip(&dispatch.buses) {
        for (u, ud) in spec.bss.iter().zip(&bus.bss) {
            let mut run = u.discharge_count0() as usize;
            for t in 0..h {
                if ud.j[t] > 0.5 {
                    run += 1;
                } else {
                    if run > 0 && t > 0 {
                        c.test(run >= u.min_discharge_time as usize, || {
                            format!("bus {} {}: run of {run} h ends at t {}", bus.bus, u.id, t)
                        });
                    }
                    run = 0;
                }
            }
        }
    }
    checks.push(c.done());

    let mut c = CheckBuilder::new("unit_cost_recovery", false);
    for (mi, (spec, bus)) in s.buses.iter().zip(&dispatch.buses).enumerate() {
        for (g, gd) in spec.generators.iter().zip(&bus.generators) {
            let mut profit = KahanSum::default();
            for t in 0..h {
                profit.add(prices.dlmp[mi][t] * gd.p[t]);
                for (q, seg) in g.segments.iter().enumerate() {
                    profit.add(-seg.cost * gd.px[t][q]);
                }
                profit.add(-g.startup_cost * gd.y[t]);
                profit.add(-g.shutdown_cost * gd.z[t]);
            }
            let p = profit.value();
            c.test(p >= -EPS_MONEY, || format!("bus {} {}: profit {p}", bus.bus, g.id));
        }
        for (u, ud) in spec.bss.iter().zip(&bus.bss) {
            let p = ksum((0..h).map(|t| (prices.dlmp[mi][t] - u.sell_price) * ud.e[t]));
            c.test(p >= -EPS_MONEY, || format!("bus {} {}: profit {p}", bus.bus, u.id));
        }
    }
    checks.push(c.note("no make-whole payments; units may lose money on commitment costs").done());

    PropertyReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut k = KahanSum::default();
        k.add(1e16);
        for _ in 0..10 {
            k.add(1.0);
        }
        k.add(-1e16);
        assert_eq!(k.value(), 10.0);
    }
}
