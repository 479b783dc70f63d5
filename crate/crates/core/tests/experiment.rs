mod support;

use dso_auction::experiment::{
    format_sig6, min_zero_deviation_gamma, run_scenario, run_sweep, run_tables, write_run, write_sweep, RunConfig,
    SweepSpec,
};
use dso_auction::scenario::{BusData, Scenario, WsmCommitment};
use proptest::prelude::*;
use serde_json::Value;

/// Two buses over three slots: bus 1 holds a cheap generator and a load,
/// bus 2 only a load, so bus 2 must be served from the commitment.
fn two_buses() -> Scenario {
    let load = |id: &str, amount: f64| {
        let mut l = support::fixed_load(id, amount);
        l.segments = vec![l.segments[0].clone(); 3];
        l
    };
    Scenario {
        id: "two_buses".into(),
        horizon: 3,
        wsm: WsmCommitment { supply: vec![6.0, 6.0, 6.0], lmp: vec![20.0, 35.0, 25.0] },
        buses: vec![
            BusData {
                id: 1,
                generators: vec![support::simple_generator("G1", 30.0, 4.0)],
                bss: vec![],
                loads: vec![load("L1", 3.0)],
            },
            BusData { id: 2, generators: vec![], bss: vec![], loads: vec![load("L2", 2.0)] },
        ],
        gamma: 0.0,
    }
}

fn cells(table: &dso_auction::experiment::Table, row: usize, col: &str) -> f64 {
    table.rows[row][table.column(col).unwrap()].parse().unwrap()
}

#[test]
fn per_run_tables_have_the_documented_shape() {
    let run = run_scenario(&two_buses(), &RunConfig::default()).unwrap();
    let tables = run_tables(&run);
    let names: Vec<&str> = tables.iter().map(|(n, _)| *n).collect();
    assert_eq!(
        names,
        [
            "fig2_wsm_allocation.csv",
            "fig2_net_position.csv",
            "fig3_generation.csv",
            "fig4_supply_demand.csv",
            "fig5_bss_schedule.csv",
            "fig7_dlmp_lmp.csv"
        ]
    );
    let widths: Vec<usize> = tables.iter().map(|(_, t)| t.header.len()).collect();
    assert_eq!(widths, [3, 3, 3, 5, 1, 5]);
    for (_, t) in &tables {
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["1", "2", "3"]);
    }

    // The unit (bid 30) only runs in the 35 $/MWh slot.
    let gen = &tables[2].1;
    assert_eq!(cells(gen, 0, "bus_1_generation [MWh]"), 0.0);
    assert_eq!(cells(gen, 1, "bus_1_generation [MWh]"), 3.0);
    let alloc = &tables[0].1;
    assert_eq!(cells(alloc, 1, "bus_2_wsm [MWh]"), 2.0);
    let net = &tables[1].1;
    assert_eq!(cells(net, 1, "bus_1_net [MWh]"), 0.0);
    assert_eq!(cells(net, 0, "bus_1_net [MWh]"), -3.0);

    let fig4 = &tables[3].1;
    for r in 0..3 {
        let supply = cells(fig4, r, "wsm [MWh]") + cells(fig4, r, "generation [MWh]") + cells(fig4, r, "bss [MWh]");
        assert!((supply - cells(fig4, r, "demand [MWh]")).abs() < 1e-9);
    }
    let prices = &tables[5].1;
    assert_eq!(cells(prices, 1, "bus_1_dlmp [$/MWh]"), 30.0);
    assert_eq!(cells(prices, 1, "lmp [$/MWh]"), 35.0);
}

#[test]
fn written_solution_document() {
    let run = run_scenario(&two_buses(), &RunConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let art = write_run(&run, dir.path()).unwrap();
    assert_eq!(art.csv.len(), 6);
    assert!(art.csv.iter().all(|p| p.exists()));
    let doc: Value = serde_json::from_slice(&std::fs::read(art.solution.unwrap()).unwrap()).unwrap();
    for key in ["status", "objective", "bound", "gap", "nodes", "variables", "dlmp", "cap_dual", "settlement", "properties"] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    assert_eq!(doc["status"], "optimal");
    assert_eq!(doc["variables"]["p_m1_G1_t2"], 3.0);
    assert_eq!(doc["dlmp"].as_array().unwrap().len(), 2);
    assert_eq!(doc["cap_dual"].as_array().unwrap().len(), 3);
    let props: Value = serde_json::from_slice(&std::fs::read(art.properties.unwrap()).unwrap()).unwrap();
    assert!(props.as_array().unwrap().iter().any(|c| c["name"] == "weak_budget_balance"));
    // No temporary files survive the atomic writes.
    assert!(std::fs::read_dir(dir.path()).unwrap().all(|e| !e.unwrap().path().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn lmp_sweep_rows_and_monotone_draw() {
    let base = two_buses();
    let dir = tempfile::tempdir().unwrap();
    let spec = SweepSpec::lmp_scale(vec![1.0, 1.2, 1.5, 2.0]);
    let result = run_sweep(&base, &spec, &RunConfig::default(), 2, Some(&dir.path().join("rows"))).unwrap();
    assert!(result.all_ok());
    assert_eq!(result.rows.len(), 4);
    for w in result.rows.windows(2) {
        assert!(w[1].wsm_draw <= w[0].wsm_draw + 1e-9);
    }
    // At factor 2 every price (40, 70, 50) exceeds the bid of 30, so bus 1
    // self-supplies throughout and only bus 2's 2 MWh per slot is drawn.
    assert!((result.rows[3].wsm_draw - 6.0).abs() < 1e-9);
    assert!(dir.path().join("rows").join("lmp_scale_003.json").exists());
    let art = write_sweep(&result, dir.path()).unwrap();
    let text = std::fs::read_to_string(&art.csv[0]).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("lmp_scale [-],gamma [$/MWh]"));
}

#[test]
fn gamma_sweep_matches_single_runs() {
    let base = two_buses();
    let spec = SweepSpec::gamma(vec![0.0, 5.0, 20.0], vec![1.0, 1.5]);
    let result = run_sweep(&base, &spec, &RunConfig::default(), 1, None).unwrap();
    assert_eq!(result.rows.len(), 6);
    let solo = run_scenario(&base, &RunConfig::default()).unwrap();
    let first = &result.rows[0];
    assert_eq!((first.lmp_scale, first.gamma), (1.0, 0.0));
    assert!((first.deviation - solo.settlement.deviation).abs() < 1e-12);
    for scale in [1.0, 1.5] {
        let rows: Vec<_> = result.at_scale(scale).collect();
        assert_eq!(rows.len(), 3);
        for w in rows.windows(2) {
            assert!(w[1].deviation <= w[0].deviation + 1e-9);
        }
    }
    // Fixed demand peaks at 5 MWh against 6 committed, so no penalty closes
    // the gap.
    assert_eq!(min_zero_deviation_gamma(result.at_scale(1.0), 1e-6), None);
    assert!(result.rows.iter().all(|r| r.deviation >= 3.0 - 1e-9));
}

#[test]
fn infeasible_rows_are_recorded_not_fatal() {
    let mut s = two_buses();
    s.buses[0].generators.clear();
    s.wsm.supply = vec![1.0, 6.0, 6.0];
    let result = run_sweep(&s, &SweepSpec::lmp_scale(vec![1.0, 1.1]), &RunConfig::default(), 1, None).unwrap();
    assert!(!result.all_ok());
    assert!(result.rows.iter().all(|r| r.status == "error: solver" && r.wsm_draw.is_nan()));
    let csv = String::from_utf8(result.table().to_csv().unwrap()).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with("error: solver"));
    assert!(run_sweep(&s, &SweepSpec::lmp_scale(vec![]), &RunConfig::default(), 1, None).is_err());
}

proptest! {
    #[test]
    fn six_significant_digits_round_trip(v in -1e9f64..1e9) {
        let text = format_sig6(v);
        prop_assert!(!text.contains(['e', 'E', ',']));
        let back: f64 = text.parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-6 * v.abs() + 1e-300, "{v} -> {text}");
    }
}
