//! Helpers shared by the integration suites: a generator of small random
//! scenarios and an independent replay of the hour counters.

#![allow(dead_code)]

use dso_auction::pricing::Dispatch;
use dso_auction::scenario::{
    validate_scenario, BssSpec, BusData, GenSegment, GeneratorSpec, LoadSegment, LoadSpec, Scenario, Series,
    WsmCommitment,
};
use rand::Rng;

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn generator<R: Rng>(rng: &mut R, id: String) -> GeneratorSpec {
    let segments: Vec<GenSegment> = (0..rng.gen_range(1..=3))
        .map(|_| GenSegment { px_max: round2(rng.gen_range(0.5..2.0)), cost: round2(rng.gen_range(15.0..45.0)) })
        .collect();
    let p_max: f64 = segments.iter().map(|s| s.px_max).sum();
    let p_min = round2(rng.gen_range(0.0..0.4) * p_max);
    let ramp = |rng: &mut R| round2(rng.gen_range(p_min.max(0.3 * p_max)..=p_max));
    let ramp_up = ramp(rng);
    let ramp_down = ramp(rng);
    let initial_committed = rng.gen_bool(0.4);
    let initial_output = if initial_committed { round2(rng.gen_range(p_min..=ramp_down.min(p_max))) } else { 0.0 };
    GeneratorSpec {
        id,
        segments,
        p_min,
        p_max,
        ramp_up,
        ramp_down,
        startup_cost: round2(rng.gen_range(0.0..40.0)),
        shutdown_cost: round2(rng.gen_range(0.0..20.0)),
        min_up_time: rng.gen_range(1..=3),
        min_down_time: rng.gen_range(1..=3),
        initial_committed,
        initial_output,
        initial_up_count: None,
        initial_down_count: None,
    }
}

fn storage<R: Rng>(rng: &mut R, id: String) -> BssSpec {
    let soc_max = round2(rng.gen_range(2.0..6.0));
    let soc_min = round2(rng.gen_range(0.0..0.3) * soc_max);
    let e_max = round2(rng.gen_range(0.5..2.0));
    BssSpec {
        id,
        soc_min,
        soc_max,
        e_min: round2(rng.gen_range(0.0..0.5) * e_max),
        e_max,
        min_discharge_time: rng.gen_range(1..=3),
        min_charge_time: rng.gen_range(1..=3),
        sell_price: round2(rng.gen_range(15.0..45.0)),
        initial_soc: Some(round2(rng.gen_range(soc_min..=soc_max))),
        initial_discharging: rng.gen_bool(0.3),
        initial_discharge_count: None,
        initial_charge_count: None,
    }
}

fn load<R: Rng>(rng: &mut R, id: String, h: usize) -> LoadSpec {
    let responsive = rng.gen_range(1..=2);
    let segments: Vec<Vec<LoadSegment>> = (0..h)
        .map(|_| {
            let mut segs = vec![LoadSegment { dx_max: round2(rng.gen_range(0.2..1.0)), bid: 0.0 }];
            for _ in 0..responsive {
                segs.push(LoadSegment {
                    dx_max: round2(rng.gen_range(0.3..1.5)),
                    bid: round2(rng.gen_range(20.0..50.0)),
                });
            }
            segs
        })
        .collect();
    let fixed: Vec<f64> = segments.iter().map(|s| s[0].dx_max).collect();
    let total: Vec<f64> = segments.iter().map(|s| s.iter().map(|x| x.dx_max).sum()).collect();
    LoadSpec { id, segments, d_min: Series::PerSlot(fixed), d_max: Series::PerSlot(total) }
}

/// A valid scenario with 1-2 buses, up to 2 committable units, up to 4
/// slots and at most 12 binary columns. The commitment always covers the
/// fixed load, so the instance is feasible.
pub fn random_scenario<R: Rng>(rng: &mut R) -> Scenario {
    let h = rng.gen_range(1..=4);
    let max_units = (12 / (3 * h)).min(2);
    let units = rng.gen_range(1..=max_units);
    let nbus = rng.gen_range(1..=2);
    let mut buses: Vec<BusData> = (0..nbus)
        .map(|m| BusData { id: m as u32 + 1, generators: vec![], bss: vec![], loads: vec![] })
        .collect();
    for k in 0..units {
        let bus = &mut buses[rng.gen_range(0..nbus)];
        if rng.gen_bool(0.6) {
            bus.generators.push(generator(rng, format!("G{}", k + 1)));
        } else {
            bus.bss.push(storage(rng, format!("B{}", k + 1)));
        }
    }
    for (m, bus) in buses.iter_mut().enumerate() {
        for k in 0..rng.gen_range(1..=2) {
            bus.loads.push(load(rng, format!("L{}{}", m + 1, k + 1), h));
        }
    }
    let fixed: Vec<f64> = (0..h)
        .map(|t| buses.iter().flat_map(|b| &b.loads).map(|l| l.fixed(t)).sum())
        .collect();
    let s = Scenario {
        id: "random".into(),
        horizon: h,
        wsm: WsmCommitment {
            supply: fixed.iter().map(|f| round2(f + rng.gen_range(0.0..3.0))).collect(),
            lmp: (0..h).map(|_| round2(rng.gen_range(15.0..40.0))).collect(),
        },
        buses,
        gamma: 0.0,
    };
    assert_eq!(validate_scenario(&s), vec![]);
    s
}

/// Largest gap between the counters in `d` and the consecutive-hour counts
/// obtained by walking the commitment and discharge states from their
/// initial values.
pub fn counter_replay_error(s: &Scenario, d: &Dispatch) -> f64 {
    let mut worst = 0.0_f64;
    let walk = |state: &[f64], up0: u32, down0: u32, up: &[f64], down: &[f64]| {
        let (mut on, mut off) = (up0 as f64, down0 as f64);
        let mut err = 0.0_f64;
        for t in 0..state.len() {
            if state[t] > 0.5 {
                on += 1.0;
                off = 0.0;
            } else {
                on = 0.0;
                off += 1.0;
            }
            err = err.max((up[t] - on).abs()).max((down[t] - off).abs());
        }
        err
    };
    for (spec, bus) in s.buses.iter().zip(&d.buses) {
        for (g, gd) in spec.generators.iter().zip(&bus.generators) {
            worst = worst.max(walk(&gd.i, g.up_count0(), g.down_count0(), &gd.su, &gd.sd));
        }
        for (u, ud) in spec.bss.iter().zip(&bus.bss) {
            worst = worst.max(walk(&ud.j, u.discharge_count0(), u.charge_count0(), &ud.dc, &ud.cc));
        }
    }
    worst
}

pub fn simple_generator(id: &str, cost: f64, cap: f64) -> GeneratorSpec {
    GeneratorSpec {
        id: id.into(),
        segments: vec![GenSegment { px_max: cap, cost }],
        p_min: 0.0,
        p_max: cap,
        ramp_up: cap,
        ramp_down: cap,
        startup_cost: 0.0,
        shutdown_cost: 0.0,
        min_up_time: 1,
        min_down_time: 1,
        initial_committed: false,
        initial_output: 0.0,
        initial_up_count: None,
        initial_down_count: None,
    }
}

pub fn fixed_load(id: &str, amount: f64) -> LoadSpec {
    LoadSpec {
        id: id.into(),
        segments: vec![vec![LoadSegment { dx_max: amount, bid: 0.0 }]],
        d_min: Series::Constant(amount),
        d_max: Series::Constant(amount),
    }
}

/// One bus, one slot: a fixed load of 5 MWh, commitment `supply` at 20
/// $/MWh and a 5 MW generator bidding 30 $/MWh.
pub fn one_slot(supply: f64, gamma: f64) -> Scenario {
    Scenario {
        id: "one_slot".into(),
        horizon: 1,
        wsm: WsmCommitment { supply: vec![supply], lmp: vec![20.0] },
        buses: vec![BusData {
            id: 1,
            generators: vec![simple_generator("G1", 30.0, 5.0)],
            bss: vec![],
            loads: vec![fixed_load("L1", 5.0)],
        }],
        gamma,
    }
}
