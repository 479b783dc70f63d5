use dso_auction::scenario::{load_scenario, save_scenario, scale_lmp, validate_scenario, Scenario, Series};
use dso_auction::Error;
use proptest::prelude::*;

fn paths(s: &Scenario) -> Vec<String> {
    validate_scenario(s).into_iter().map(|v| v.path).collect()
}

#[test]
fn bundled_tables() {
    let s = Scenario::bundled();
    assert_eq!(s.buses.len(), 4);
    assert_eq!(s.num_generators(), 10);
    assert_eq!(s.num_bss(), 4);
    assert_eq!(s.horizon, 24);
    assert_eq!(s.wsm.supply[0], 29.04);
    assert_eq!(s.wsm.lmp[0], 22.07);
    assert!(validate_scenario(&s).is_empty());
    for bus in &s.buses {
        assert!((2..=4).contains(&bus.loads.len()), "bus {}", bus.id);
    }
    // Synthetic fixed load is 60-80 % of the commitment in every slot.
    for t in 0..s.horizon {
        let fixed: f64 = s.buses.iter().flat_map(|b| &b.loads).map(|l| l.fixed(t)).sum();
        let share = fixed / s.wsm.supply[t];
        assert!((0.6..=0.8).contains(&share), "t {}: {share}", t + 1);
    }
}

#[test]
fn empty_horizon_is_rejected() {
    let mut s = Scenario::bundled();
    s.horizon = 0;
    assert!(paths(&s).contains(&"horizon".to_string()));
}

#[test]
fn inverted_soc_bounds_name_the_unit() {
    let mut s = Scenario::bundled();
    let unit = &mut s.buses[0].bss[0];
    unit.soc_min = 10.0;
    unit.soc_max = 8.0;
    unit.initial_soc = Some(9.0);
    let id = unit.id.clone();
    let p = paths(&s);
    assert_eq!(p.len(), 1, "{p:?}");
    assert!(p[0].contains(&id) && p[0].ends_with("soc_min"), "{p:?}");
}

#[test]
fn generator_bounds_out_of_order() {
    let mut s = Scenario::bundled();
    let g = &mut s.buses[1].generators[0];
    g.p_min = g.p_max + 1.0;
    assert_eq!(paths(&s).len(), 1, "{:?}", paths(&s));
}

#[test]
fn demand_floor_below_fixed_segment() {
    let mut s = Scenario::bundled();
    let l = &mut s.buses[2].loads[0];
    let fixed = l.fixed(0);
    let mut lo: Vec<f64> = (0..24).map(|t| l.d_min.at(t)).collect();
    lo[0] = fixed - 0.5;
    l.d_min = Series::PerSlot(lo);
    let p = paths(&s);
    assert_eq!(p.len(), 1, "{p:?}");
    assert!(p[0].ends_with("d_min"));
}

#[test]
fn save_then_load_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let s = Scenario::bundled();
    save_scenario(&s, &path).unwrap();
    assert_eq!(load_scenario(&path).unwrap(), s);
}

#[test]
fn loading_reports_position_of_malformed_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(&path, "{\n  \"horizon\": 2,\n  \"wsm\": [\n").unwrap();
    match load_scenario(&path) {
        Err(Error::Parse { line, .. }) => assert!(line >= 3),
        other => panic!("{other:?}"),
    }
    assert!(matches!(load_scenario(dir.path().join("missing.json")), Err(Error::Io { .. })));
}

#[test]
fn scale_lmp_examples() {
    let s = Scenario::bundled();
    assert_eq!(scale_lmp(&s, 1.0).unwrap(), s);
    assert!((scale_lmp(&s, 2.0).unwrap().wsm.lmp[0] - 44.14).abs() < 1e-12);
    let twice = scale_lmp(&scale_lmp(&s, 1.1).unwrap(), 1.1).unwrap();
    let once = scale_lmp(&s, 1.21).unwrap();
    for (a, b) in twice.wsm.lmp.iter().zip(&once.wsm.lmp) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn scale_lmp_touches_only_prices() {
    let s = Scenario::bundled();
    let mut scaled = scale_lmp(&s, 1.37).unwrap();
    assert_ne!(scaled.wsm.lmp, s.wsm.lmp);
    scaled.wsm.lmp = s.wsm.lmp.clone();
    assert_eq!(scaled.to_json_string(), s.to_json_string());
}

/// A single-field change to the bundled scenario that breaks one invariant,
/// with the path fragment its violation must mention.
fn mutate(s: &mut Scenario, kind: usize, bus: usize, k: usize) -> String {
    if kind == 6 {
        s.wsm.lmp.push(1.0);
        return "wsm.lmp".into();
    }
    let b = &mut s.buses[bus];
    let (ng, nl) = (b.generators.len().max(1), b.loads.len());
    match kind {
        0..=3 => {
            let g = &mut b.generators[k % ng];
            match kind {
                0 => g.segments[0].px_max = -1.0,
                1 => g.ramp_up = f64::NAN,
                2 => g.p_max = g.capacity() + 1.0,
                _ => g.initial_output = 1.0,
            }
            let field = ["segments", "ramp_up", "p_max", "initial_output"][kind];
            format!("[{}].{field}", g.id)
        }
        4 => {
            let l = &mut b.loads[k % nl];
            l.segments.pop();
            format!("[{}].segments", l.id)
        }
        5 => {
            let l = &mut b.loads[k % nl];
            l.d_max = Series::Constant(-1.0);
            format!("[{}].d_max", l.id)
        }
        _ => {
            let dup = b.loads[0].id.clone();
            b.loads[1].id = dup.clone();
            format!("[{dup}]")
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn single_mutations_are_detected(kind in 0usize..8, bus in 0usize..4, k in 0usize..4) {
        let mut s = Scenario::bundled();
        // Generator mutations need a bus with units.
        prop_assume!(kind > 3 || !s.buses[bus].generators.is_empty());
        prop_assume!(kind != 7 || s.buses[bus].loads.len() > 1);
        let fragment = mutate(&mut s, kind, bus, k);
        let found = paths(&s);
        prop_assert!(found.iter().any(|p| p.contains(&fragment)), "{fragment} not in {found:?}");
    }

    #[test]
    fn scaling_is_multiplicative(a in 0.1f64..5.0, b in 0.1f64..5.0) {
        let s = Scenario::bundled();
        let ab = scale_lmp(&scale_lmp(&s, a).unwrap(), b).unwrap();
        let once = scale_lmp(&s, a * b).unwrap();
        for (x, y) in ab.wsm.lmp.iter().zip(&once.wsm.lmp) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
