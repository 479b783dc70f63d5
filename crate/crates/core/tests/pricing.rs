mod support;

use approx::assert_abs_diff_eq;
use dso_auction::experiment::{run_scenario, RunConfig, RunOutcome};
use dso_auction::pricing::{check_market_properties, settle, DlmpReport};
use dso_auction::scenario::{BssSpec, BusData, Scenario, WsmCommitment};
use dso_milp::bb::BbConfig;

fn exact() -> RunConfig {
    RunConfig { solver: BbConfig { mip_gap_rel: 0.0, ..BbConfig::default() }, ..RunConfig::default() }
}

fn solve(s: &Scenario) -> RunOutcome {
    run_scenario(s, &exact()).unwrap()
}

#[test]
fn cheap_wholesale_supply_is_marginal() {
    // Example A: 5 MWh from the wholesale side at 20 beats the 30 $/MWh unit.
    let run = solve(&support::one_slot(10.0, 0.0));
    let bus = &run.dispatch.buses[0];
    assert_abs_diff_eq!(bus.s[0], 5.0, epsilon = 1e-9);
    assert_abs_diff_eq!(bus.generators[0].p[0], 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(run.prices.dlmp[0][0], 20.0, epsilon = 1e-9);
    assert_abs_diff_eq!(run.prices.cap_dual[0], 0.0, epsilon = 1e-9);

    let st = &run.settlement;
    assert_abs_diff_eq!(st.total_load_payments(), 100.0, epsilon = 1e-9);
    assert_abs_diff_eq!(st.iso_payment, 100.0, epsilon = 1e-9);
    assert_abs_diff_eq!(st.dso_revenue_gross, 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(st.deviation, 5.0, epsilon = 1e-9);
    assert_eq!(st.penalty, 0.0);
}

#[test]
fn binding_commitment_makes_the_generator_marginal() {
    // Example B: only 2 MWh committed, so the unit covers 3 MWh at its bid
    // and the commitment row carries the 10 $/MWh difference.
    let run = solve(&support::one_slot(2.0, 0.0));
    let bus = &run.dispatch.buses[0];
    assert_abs_diff_eq!(bus.s[0], 2.0, epsilon = 1e-9);
    assert_abs_diff_eq!(bus.generators[0].p[0], 3.0, epsilon = 1e-9);
    assert_abs_diff_eq!(run.prices.dlmp[0][0], 30.0, epsilon = 1e-9);
    assert_abs_diff_eq!(run.prices.cap_dual[0], 10.0, epsilon = 1e-9);

    let st = &run.settlement;
    assert_abs_diff_eq!(st.total_load_payments(), 150.0, epsilon = 1e-9);
    assert_abs_diff_eq!(st.total_gen_revenues(), 90.0, epsilon = 1e-9);
    assert_abs_diff_eq!(st.iso_payment, 40.0, epsilon = 1e-9);
    assert_abs_diff_eq!(st.dso_revenue_gross, 20.0, epsilon = 1e-9);
    let wbb = run.properties.get("weak_budget_balance").unwrap();
    assert!(wbb.passed && wbb.checked == 1);
    assert!(run.accepted());
}

#[test]
fn penalty_arithmetic_at_fixed_prices() {
    // Settling example A's dispatch at its gamma-free price of 20 with a unit
    // penalty: 5 MWh undrawn cost 5 $, all of it out of a zero gross margin.
    let mut s = support::one_slot(10.0, 0.0);
    let run = solve(&s);
    s.gamma = 1.0;
    let st = settle(&s, &run.dispatch, &run.prices).unwrap();
    assert_abs_diff_eq!(st.deviation, 5.0, epsilon = 1e-9);
    assert_abs_diff_eq!(st.penalty, 5.0, epsilon = 1e-9);
    assert_abs_diff_eq!(st.dso_revenue_net, -5.0, epsilon = 1e-9);
}

#[test]
fn penalty_lowers_the_bus_price() {
    // Each MWh drawn saves gamma of penalty, so with the commitment slack the
    // bus price is 20 - 1 = 19 and the unit (bid 30) stays off.
    let run = solve(&support::one_slot(10.0, 1.0));
    assert_abs_diff_eq!(run.dispatch.buses[0].s[0], 5.0, epsilon = 1e-9);
    assert_abs_diff_eq!(run.prices.dlmp[0][0], 19.0, epsilon = 1e-9);
    let st = &run.settlement;
    assert_abs_diff_eq!(st.total_load_payments(), 95.0, epsilon = 1e-9);
    assert_abs_diff_eq!(st.dso_revenue_gross, -5.0, epsilon = 1e-9);
    assert_abs_diff_eq!(st.dso_revenue_net, -10.0, epsilon = 1e-9);
    // The objective counts the penalty on the full commitment as a constant.
    assert_abs_diff_eq!(run.solution.objective, -100.0 - 5.0, epsilon = 1e-9);
    assert!(run.properties.get("weak_budget_balance").unwrap().note.is_some());
}

fn storage_bus() -> Scenario {
    let unit = BssSpec {
        id: "B1".into(),
        soc_min: 0.0,
        soc_max: 4.0,
        e_min: 0.0,
        e_max: 2.0,
        min_discharge_time: 1,
        min_charge_time: 1,
        sell_price: 25.0,
        initial_soc: None,
        initial_discharging: false,
        initial_discharge_count: None,
        initial_charge_count: None,
    };
    Scenario {
        id: "storage".into(),
        horizon: 2,
        wsm: WsmCommitment { supply: vec![1.0, 5.0], lmp: vec![40.0, 20.0] },
        buses: vec![BusData {
            id: 7,
            generators: vec![],
            bss: vec![unit],
            loads: vec![support::fixed_load("L1", 3.0), support::fixed_load("L2", 0.0)]
                .into_iter()
                .map(|mut l| {
                    l.segments = vec![l.segments[0].clone(); 2];
                    l
                })
                .collect(),
        }],
        gamma: 0.0,
    }
}

#[test]
fn storage_discharges_in_the_expensive_slot() {
    let run = solve(&storage_bus());
    let u = &run.dispatch.buses[0].bss[0];
    assert_abs_diff_eq!(u.e[0], 2.0, epsilon = 1e-9);
    assert_abs_diff_eq!(u.e[1], 0.0, epsilon = 1e-9);
    // State of charge telescopes from the initial value.
    assert_abs_diff_eq!(u.c[1], 4.0 - 2.0, epsilon = 1e-9);
    assert!(run.prices.dlmp[0][0] >= 25.0 - 1e-9);
    assert!(run.properties.get("supplier_rationality").unwrap().passed);
}

#[test]
fn discharging_below_the_bid_is_reported() {
    let run = solve(&storage_bus());
    let mut prices: DlmpReport = run.prices.clone();
    prices.dlmp[0][0] = 24.0;
    let st = settle(&run.scenario, &run.dispatch, &prices).unwrap();
    let report = check_market_properties(&run.scenario, &run.dispatch, &prices, &st);
    let c = report.get("supplier_rationality").unwrap();
    assert!(!c.passed);
    assert_eq!(c.violations.len(), 1);
    assert!(c.violations[0].contains("bus 7 B1 t 1"), "{}", c.violations[0]);
    assert!(report.hard_failures().any(|f| f.name == "supplier_rationality"));
}

#[test]
fn empty_bus_price_is_flagged_degenerate() {
    let mut s = support::one_slot(10.0, 0.0);
    s.buses.push(BusData { id: 2, generators: vec![], bss: vec![], loads: vec![] });
    let run = solve(&s);
    assert_eq!(run.prices.bus_ids, vec![1, 2]);
    assert!(run.prices.degenerate_balance.contains(&(2, 1)));
    assert!(!run.prices.degenerate_balance.contains(&(1, 1)));
}

#[test]
fn settle_rejects_mismatched_prices() {
    let run = solve(&support::one_slot(10.0, 0.0));
    let mut prices = run.prices.clone();
    prices.dlmp.push(vec![0.0]);
    assert!(settle(&run.scenario, &run.dispatch, &prices).is_err());
}

#[test]
fn random_instances_price_consistently() {
    use rand::SeedableRng;
    for seed in 0..20 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let s = support::random_scenario(&mut rng);
        let run = solve(&s);
        let st = &run.settlement;
        // Gross margin equals the commitment rent: sum of cap dual times draw.
        let rent: f64 = (0..s.horizon).map(|t| run.prices.cap_dual[t] * run.dispatch.wsm_draw(t)).sum();
        assert_abs_diff_eq!(st.dso_revenue_gross, rent, epsilon = 1e-6);
        assert!(run.prices.cap_dual.iter().all(|&m| m >= -1e-7));
        assert_abs_diff_eq!(run.prices.lp_objective, run.solution.objective, epsilon = 1e-6);
        // Dispatched energy at each bus balances.
        for (m, bus) in run.dispatch.buses.iter().enumerate() {
            for t in 0..s.horizon {
                let net = bus.s[t] + run.dispatch.generation(m, t) + run.dispatch.bss_output(m, t)
                    - run.dispatch.demand(m, t);
                assert!(net.abs() <= 1e-7, "seed {seed} bus {} t {t}: {net}", bus.bus);
            }
        }
    }
}
