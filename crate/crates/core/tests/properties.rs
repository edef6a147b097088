//! Property tests over the dispatch engine, validation and trace handling.

use gridopt_core::calendar::{intervals_in_years, Timestamp, HOURS_PER_INTERVAL};
use gridopt_core::demand::ProfileSet;
use gridopt_core::dispatch::{
    simulate, EvAggregateState, HydroBioBudget, Portfolio, RegionInterval, StorageState,
};
use gridopt_core::network::{balance_flows, line_loss_rate};
use gridopt_core::scenario::{build_topology, validate_scenario, HydroBio};
use gridopt_core::test_fixtures::*;
use gridopt_core::trace::{align, resample_half_hourly, TimeSeries};
use proptest::prelude::*;

fn ts0() -> Timestamp {
    Timestamp::from_ymd_hm(2021, 1, 1, 0, 0).unwrap()
}

/// Drives one interval's deficit/surplus closure the same way the engine
/// does and returns the filled ledger row.
fn close_interval(
    demand: f64,
    vre: f64,
    net_import: f64,
    forced_ev: f64,
    opportunistic_room: f64,
    storage: &mut StorageState,
    hydro: &mut HydroBioBudget,
) -> RegionInterval {
    let mut row = RegionInterval {
        demand,
        vre_used: vre,
        ev_charge: forced_ev,
        net_import,
        ..RegionInterval::default()
    };
    let residual = vre - demand - forced_ev + net_import;
    if residual < 0.0 {
        let mut deficit = -residual;
        row.storage_discharge = storage.discharge(deficit);
        deficit -= row.storage_discharge;
        row.hydro_bio = hydro.dispatch(deficit);
        deficit -= row.hydro_bio;
        row.unserved = deficit.max(0.0);
    } else {
        let mut surplus = residual;
        row.storage_charge = storage.charge(surplus);
        surplus -= row.storage_charge;
        let ev = surplus.min(opportunistic_room);
        row.ev_charge += ev;
        surplus -= ev;
        row.spill = surplus.max(0.0);
    }
    row
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Balance identity on randomized interval states, exact to 1e-9 GW.
    #[test]
    fn interval_balance_identity(
        demand in 0.0..30.0f64,
        vre in 0.0..40.0f64,
        net_import in -5.0..5.0f64,
        forced_ev in 0.0..2.0f64,
        opp_room in 0.0..3.0f64,
        soc_frac in 0.0..1.0f64,
        power in 0.0..8.0f64,
        energy in 0.0..40.0f64,
        hydro_power in 0.0..4.0f64,
        hydro_left in 0.0..10.0f64,
    ) {
        let mut storage = StorageState::new(power, energy);
        storage.soc_gwh = soc_frac * energy;
        let mut hydro = HydroBioBudget::new(hydro_power, 1.0);
        hydro.year_used_gwh = hydro.annual_cap_gwh - hydro_left.min(1000.0).min(hydro.annual_cap_gwh);
        let row = close_interval(demand, vre, net_import, forced_ev, opp_room, &mut storage, &mut hydro);
        prop_assert!(row.balance_residual().abs() < 1e-9, "residual {}", row.balance_residual());
        prop_assert!(row.unserved >= 0.0 && row.spill >= 0.0);
        prop_assert!(storage.soc_gwh >= -1e-12 && storage.soc_gwh <= energy + 1e-12);
    }

    // Storage SoC stays in [0, capacity] under arbitrary charge/discharge
    // request sequences, and a full round trip returns 80%.
    #[test]
    fn storage_soc_bounds(requests in prop::collection::vec(-10.0..10.0f64, 1..200)) {
        let mut s = StorageState::new(3.0, 10.0);
        for r in requests {
            if r >= 0.0 {
                s.charge(r);
            } else {
                s.discharge(-r);
            }
            prop_assert!(s.soc_gwh >= -1e-9 && s.soc_gwh <= 10.0 + 1e-9, "soc {}", s.soc_gwh);
        }
    }

    // Round-trip conservation: any horizon that returns storage to its
    // starting SoC delivered exactly 80% of what it absorbed.
    #[test]
    fn storage_round_trip_conservation(cycles in prop::collection::vec(0.1..5.0f64, 1..40)) {
        let mut s = StorageState::new(100.0, 1000.0);
        s.soc_gwh = 0.0;
        let mut energy_in = 0.0;
        let mut energy_out = 0.0;
        for gw in cycles {
            energy_in += s.charge(gw) * HOURS_PER_INTERVAL;
            // Immediately drain everything back out.
            loop {
                let out = s.discharge(100.0);
                if out <= 0.0 {
                    break;
                }
                energy_out += out * HOURS_PER_INTERVAL;
            }
            prop_assert!(s.soc_gwh.abs() < 1e-9);
        }
        if energy_in > 0.0 {
            let ratio = energy_out / energy_in;
            prop_assert!((ratio - 0.80).abs() < 1e-6, "round trip {ratio}");
        }
    }

    // Resampling never exits the input's value range.
    #[test]
    fn resample_bounded(values in prop::collection::vec(0.0..1.0f64, 2..100), factor in 1u32..5) {
        let ts = TimeSeries { start: ts0(), step_minutes: 30 * factor as i64, values };
        let out = resample_half_hourly(&ts).unwrap();
        let lo = ts.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ts.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(out.len(), ts.len() * factor as usize);
        for v in &out.values {
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }

    // Transfers respect capacity, conserve flow and never deepen the total
    // deficit.
    #[test]
    fn flows_conserve_and_help(
        positions in prop::collection::vec(-4.0..4.0f64, 4),
        caps in prop::collection::vec(0.0..3.0f64, 3),
    ) {
        let mut s = scenario_with_regions(4);
        for (i, l) in s.interconnectors.iter_mut().enumerate() {
            l.length_km = 500.0 + 700.0 * i as f64;
        }
        let topo = build_topology(&s);
        let (after, flows) = balance_flows(&positions, &topo, &caps);
        let mut delta = [0.0; 4];
        for (l, f) in topo.links.iter().zip(&flows) {
            let ci = topo.links.iter().position(|x| x.id == f.link).unwrap();
            prop_assert!(f.send_gw <= caps[ci] + 1e-9);
            prop_assert!((f.receive_gw - f.send_gw * (1.0 - l.loss_rate)).abs() < 1e-9);
            let (src, dst) = if f.forward { (l.from, l.to) } else { (l.to, l.from) };
            delta[src] -= f.send_gw;
            delta[dst] += f.receive_gw;
        }
        for r in 0..4 {
            prop_assert!((positions[r] + delta[r] - after[r]).abs() < 1e-9);
        }
        let deficit_before: f64 = positions.iter().filter(|&&p| p < 0.0).sum();
        let deficit_after: f64 = after.iter().filter(|&&p| p < 0.0).sum();
        prop_assert!(deficit_after >= deficit_before - 1e-9);
    }

    // Loss rate is linear in length under the sanity cap.
    #[test]
    fn loss_rate_linear(length in 0.0..10_000.0f64) {
        let r = line_loss_rate(length);
        prop_assert!((r - (0.03 * length / 1000.0).min(0.5)).abs() < 1e-15);
    }

    // validate() accepts exactly the scenarios whose invariants hold:
    // start from a valid scenario, apply one targeted corruption, and the
    // expected violation code (and only then) must appear.
    #[test]
    fn validation_matches_invariants(corruption in 0usize..7, magnitude in 1.1..5.0f64) {
        let mut s = scenario_with_regions(3);
        prop_assert!(validate_scenario(&s).is_empty());
        let expected = match corruption {
            0 => {
                s.flags.ev_min_soc = magnitude;
                "soc_out_of_range"
            }
            1 => {
                s.regions[1].hydro_bio = Some(HydroBio { power_cap_gw: -magnitude, annual_cap_twh: 1.0 });
                "negative_cap"
            }
            2 => {
                s.interconnectors[0].to = "nowhere".into();
                "unknown_region"
            }
            3 => {
                s.interconnectors[0].length_km = 0.0;
                "nonpositive_length"
            }
            4 => {
                s.costs.pv.lifetime_years = 0;
                "bad_lifetime"
            }
            5 => {
                s.reliability_limit = magnitude;
                "bad_reliability_limit"
            }
            _ => {
                s.regions[0].zones.clear();
                "empty_zones"
            }
        };
        let violations = validate_scenario(&s);
        prop_assert!(
            violations.iter().any(|v| v.code == expected),
            "expected {expected}, got {violations:?}"
        );
    }

    // EV aggregate: interval-end SoC never falls below the floor when the
    // charge rate dominates the draw rate, and never exceeds capacity.
    #[test]
    fn ev_floor_holds(
        draws in prop::collection::vec(0.0..0.5f64, 50..300),
        surpluses in prop::collection::vec(0.0..3.0f64, 300),
        capacity in 5.0..50.0f64,
    ) {
        let n = draws.len();
        let mut cum = vec![0.0];
        let mut acc = 0.0;
        for &d in &draws {
            acc += d * HOURS_PER_INTERVAL;
            cum.push(acc);
        }
        let mut ev = EvAggregateState {
            soc_gwh: 0.5 * capacity,
            capacity_gwh: capacity,
            max_charge_gw: 6.0,
            min_soc_fraction: 0.25,
            charge_eff: 0.85,
            lookahead_intervals: 48,
        };
        let floor = ev.floor_gwh();
        for t in 0..n {
            let charge = ev.flexible_charge(t, &cum, surpluses[t], 0.0);
            ev.step(charge, cum[t + 1] - cum[t]);
            prop_assert!(ev.soc_gwh >= floor, "soc {} below floor {floor} at {t}", ev.soc_gwh);
            prop_assert!(ev.soc_gwh <= capacity + 1e-9);
        }
    }

    // Bigger reservoir (power fixed, EV flexibility off) never increases
    // total unserved energy.
    #[test]
    fn storage_energy_monotonicity(
        seedish in 0u64..1000,
        small in 1.0..20.0f64,
        extra in 0.1..30.0f64,
        wind_cap in 0.5..3.0f64,
    ) {
        let scenario = single_region_scenario();
        let intervals = 48 * 30;
        // Repeatable pseudo-random wind from the seed, demand flat 1 GW.
        let wind: Vec<f64> = (0..intervals)
            .map(|t| {
                let x = ((t as u64).wrapping_mul(6364136223846793005).wrapping_add(seedish * 31991) >> 33) as f64
                    / (1u64 << 31) as f64;
                let diurnal = 0.5 + 0.45 * ((t % 48) as f64 / 48.0 * std::f64::consts::TAU).sin();
                (0.15 + 0.7 * x * diurnal).clamp(0.0, 1.0)
            })
            .collect();
        let start = ts0();
        let traces = align(vec![
            ("pv0".into(), TimeSeries::half_hourly(start, vec![0.0; intervals])),
            ("wind0".into(), TimeSeries::half_hourly(start, wind)),
            ("demand0".into(), TimeSeries::half_hourly(start, vec![1.0; intervals])),
        ])
        .unwrap();
        let mut p = Portfolio::zeros(&scenario);
        p.wind_gw[0] = wind_cap;
        p.storage_power_gw[0] = 2.0;
        p.storage_energy_gwh[0] = small;
        let small_run = simulate(&scenario, &p, &traces).unwrap();
        p.storage_energy_gwh[0] = small + extra;
        let big_run = simulate(&scenario, &p, &traces).unwrap();
        prop_assert!(
            big_run.totals.unserved_gwh <= small_run.totals.unserved_gwh + 1e-9,
            "bigger storage increased unserved: {} -> {}",
            small_run.totals.unserved_gwh,
            big_run.totals.unserved_gwh
        );
    }
}

// EV flexibility monotonicity: enabling flexible charging never increases
// total unserved energy on identical inputs.
#[test]
fn ev_flexibility_never_hurts() {
    use gridopt_core::demand::FleetClass;
    for seed in [1u64, 7, 23, 99] {
        let mut scenario = single_region_scenario();
        scenario.demand.fleets.push(FleetClass {
            name: "cars".into(),
            count: 0.4e6,
            annual_km: 12_600.0,
            energy_intensity_kwh_per_100km: 27.0,
            charging_efficiency: 0.85,
            vampire_loss_per_day: 0.01,
            tnd_loss: 0.075,
            flexible_share: 0.8,
            battery_kwh: 60.0,
            charge_power_kw: 7.0,
            travel_profile: "commuter".into(),
        });
        let intervals = 48 * 30;
        let start = ts0();
        let wind: Vec<f64> = (0..intervals)
            .map(|t| {
                let x = ((t as u64)
                    .wrapping_mul(2862933555777941757)
                    .wrapping_add(seed * 104729)
                    >> 33) as f64
                    / (1u64 << 31) as f64;
                (0.1 + 0.8 * x).clamp(0.0, 1.0)
            })
            .collect();
        let solar: Vec<f64> = (0..intervals)
            .map(|t| {
                let h = (t % 48) as f64 * 0.5;
                if (6.0..18.0).contains(&h) {
                    (std::f64::consts::PI * (h - 6.0) / 12.0).sin() * 0.9
                } else {
                    0.0
                }
            })
            .collect();
        let traces = align(vec![
            ("pv0".into(), TimeSeries::half_hourly(start, solar)),
            ("wind0".into(), TimeSeries::half_hourly(start, wind)),
            (
                "demand0".into(),
                TimeSeries::half_hourly(start, vec![1.0; intervals]),
            ),
        ])
        .unwrap();
        let mut p = Portfolio::zeros(&scenario);
        p.pv_gw[0] = 1.2;
        p.wind_gw[0] = 1.2;
        p.storage_power_gw[0] = 0.5;
        p.storage_energy_gwh[0] = 3.0;

        scenario.flags.ev_flexibility_enabled = false;
        let rigid = simulate(&scenario, &p, &traces).unwrap();
        scenario.flags.ev_flexibility_enabled = true;
        let flexible = simulate(&scenario, &p, &traces).unwrap();
        assert!(
            flexible.totals.unserved_gwh <= rigid.totals.unserved_gwh + 1e-9,
            "seed {seed}: flexibility increased unserved {} -> {}",
            rigid.totals.unserved_gwh,
            flexible.totals.unserved_gwh
        );
    }
}

// Aggregates equal the sums of recorded interval values.
#[test]
fn aggregates_match_interval_records() {
    use gridopt_core::dispatch::{simulate_ctx, SimContext, SimOptions};
    let scenario = two_region_scenario();
    let traces = anti_correlated_traces(&scenario, 48 * 21);
    let profiles = ProfileSet::with_builtins();
    let ctx = SimContext::new(&scenario, &traces, &profiles).unwrap();
    let mut p = Portfolio::zeros(&scenario);
    p.wind_gw = vec![1.8, 1.8];
    p.storage_power_gw = vec![0.6, 0.6];
    p.storage_energy_gwh = vec![5.0, 5.0];
    p.link_capacity_gw = vec![1.0];
    let dr = simulate_ctx(
        &ctx,
        &p,
        &SimOptions {
            record_intervals: true,
            burn_in_years: 0,
        },
    )
    .unwrap();
    let records = dr.intervals.as_ref().unwrap();
    assert_eq!(records.len(), dr.horizon);
    let mut demand = 0.0;
    let mut unserved = 0.0;
    let mut spill = 0.0;
    let mut charge = 0.0;
    for rec in records {
        for row in &rec.regions {
            demand += row.demand * HOURS_PER_INTERVAL;
            unserved += row.unserved * HOURS_PER_INTERVAL;
            spill += row.spill * HOURS_PER_INTERVAL;
            charge += row.storage_charge * HOURS_PER_INTERVAL;
            assert!(row.balance_residual().abs() < 1e-9);
        }
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.max(1e-12);
    assert!(rel(demand, dr.totals.demand_gwh) < 1e-6);
    assert!(
        rel(unserved, dr.totals.unserved_gwh.max(1e-12)) < 1e-6 || dr.totals.unserved_gwh < 1e-9
    );
    assert!(rel(spill, dr.totals.spill_gwh) < 1e-6);
    assert!(rel(charge, dr.totals.storage_charge_gwh) < 1e-6);
}

// Hydro/bio stays within its annual cap each calendar year and resets at
// the year boundary.
#[test]
fn hydro_cap_binds_per_calendar_year() {
    let mut scenario = single_region_scenario();
    scenario.regions[0].hydro_bio = Some(HydroBio {
        power_cap_gw: 5.0,
        annual_cap_twh: 0.004,
    });
    let intervals = intervals_in_years(2021, 2);
    let traces = constant_traces(&scenario, 0.0, 0.0, 1.0, intervals);
    let p = Portfolio::zeros(&scenario);
    let dr = simulate(&scenario, &p, &traces).unwrap();
    assert_eq!(dr.years.len(), 2);
    for (year, agg) in &dr.years {
        assert!(
            agg.hydro_bio_gwh <= 4.0 + 1e-9,
            "year {year} dispatched {} GWh over the 4 GWh cap",
            agg.hydro_bio_gwh
        );
        assert!(agg.hydro_bio_gwh > 3.9, "cap not reached in year {year}");
    }
}

// Larger-than-needed horizon slices: burn-in removes the first year from
// accounting but leaves state evolution intact.
#[test]
fn burn_in_drops_first_year_from_accounting() {
    use gridopt_core::dispatch::{simulate_ctx, SimContext, SimOptions};
    let scenario = single_region_scenario();
    let intervals = intervals_in_years(2021, 2);
    let traces = constant_traces(&scenario, 0.0, 0.5, 1.0, intervals);
    let profiles = ProfileSet::with_builtins();
    let ctx = SimContext::new(&scenario, &traces, &profiles).unwrap();
    let mut p = Portfolio::zeros(&scenario);
    p.wind_gw[0] = 2.0;
    let all = simulate_ctx(&ctx, &p, &SimOptions::default()).unwrap();
    let burned = simulate_ctx(
        &ctx,
        &p,
        &SimOptions {
            record_intervals: false,
            burn_in_years: 1,
        },
    )
    .unwrap();
    assert_eq!(all.years.len(), 2);
    assert_eq!(burned.years.len(), 1);
    assert_eq!(burned.years[0].0, 2022);
    assert!((burned.accounted_hours - 8760.0).abs() < 1e-9);
}
