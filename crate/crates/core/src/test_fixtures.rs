//! Shared scenario/trace constructors for tests. Not part of the public
//! API surface.
#![doc(hidden)]

use crate::calendar::{days_in_year, CalendarIndex, Timestamp};
use crate::demand::{DemandSpec, FleetClass, HeatingSpec};
use crate::scenario::*;
use crate::trace::{align, TimeSeries, TraceSet};
use std::collections::BTreeMap;

/// Cost assumptions for generation, storage and transmission used across
/// the test suite (AUD, 5% real discount rate).
pub fn reference_costs() -> TechnologyCosts {
    TechnologyCosts {
        discount_rate_real: 0.05,
        pv: TechCost {
            capital_per_kw: 1600.0,
            fom_per_kw_yr: 18.0,
            vom_per_mwh: 0.0,
            lifetime_years: 25,
        },
        wind: TechCost {
            capital_per_kw: 1800.0,
            fom_per_kw_yr: 36.0,
            vom_per_mwh: 3.0,
            lifetime_years: 25,
        },
        storage: StorageCost {
            power_per_kw: 800.0,
            energy_per_kwh: 70.0,
            fom_per_kw_yr: 10.0,
            lifetime_years: 50,
        },
        hvdc: HvdcCost {
            overhead_per_mw_km: 320.0,
            overhead_converter_per_mw: 160_000.0,
            submarine_per_kw: 4000.0,
            lifetime_years: 50,
        },
        hvac: HvacCost {
            per_kw: 1500.0,
            lifetime_years: 50,
            storage_multiplier: 0.0,
        },
        hydro_bio_price_per_mwh: 50.0,
    }
}

/// Demand spec carrying only per-region base traces named `demand<i>`.
pub fn demand_only_base(region_ids: &[&str]) -> DemandSpec {
    DemandSpec {
        base_demand_trace: region_ids
            .iter()
            .enumerate()
            .map(|(i, r)| (r.to_string(), format!("demand{i}")))
            .collect(),
        fleets: Vec::new(),
        heating: Vec::new(),
        industry_gw: 0.0,
        transport_shares: None,
        heating_shares: None,
        industry_shares: None,
        ev_charge_eff: 0.85,
    }
}

/// `n` regions `r0..r{n-1}`, one zone each, chained by 1,000 km overhead
/// links. Base demand only.
pub fn scenario_with_regions(n: usize) -> Scenario {
    let regions: Vec<Region> = (0..n)
        .map(|i| Region {
            id: format!("r{i}"),
            zones: vec![Zone {
                id: format!("z{i}"),
                pv_trace: format!("pv{i}"),
                wind_trace: format!("wind{i}"),
                hvac_cost_per_kw: None,
            }],
            hydro_bio: None,
        })
        .collect();
    let interconnectors: Vec<Interconnector> = (0..n.saturating_sub(1))
        .map(|i| Interconnector {
            id: format!("l{i}"),
            from: format!("r{i}"),
            to: format!("r{}", i + 1),
            length_km: 1000.0,
            kind: LinkKind::Overhead,
            reserve_fraction: DEFAULT_RESERVE_FRACTION,
            existing_capacity_gw: 0.0,
        })
        .collect();
    let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
    let id_refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
    Scenario {
        id: "test".into(),
        regions,
        interconnectors,
        costs: reference_costs(),
        flags: ScenarioFlags::default(),
        demand: demand_only_base(&id_refs),
        reliability_limit: DEFAULT_RELIABILITY_LIMIT,
        hydro_bio_cap_scope: HydroBioCapScope::PerRegion,
    }
}

pub fn single_region_scenario() -> Scenario {
    scenario_with_regions(1)
}

pub fn two_region_scenario() -> Scenario {
    scenario_with_regions(2)
}

/// Constant-valued traces for every zone/region of a scenario.
pub fn constant_traces(
    scenario: &Scenario,
    pv_cf: f64,
    wind_cf: f64,
    demand_gw: f64,
    intervals: usize,
) -> TraceSet {
    let start = Timestamp::from_ymd_hm(2021, 1, 1, 0, 0).unwrap();
    let mut traces = Vec::new();
    for (i, _) in scenario.regions.iter().enumerate() {
        traces.push((
            format!("pv{i}"),
            TimeSeries::half_hourly(start, vec![pv_cf; intervals]),
        ));
        traces.push((
            format!("wind{i}"),
            TimeSeries::half_hourly(start, vec![wind_cf; intervals]),
        ));
        traces.push((
            format!("demand{i}"),
            TimeSeries::half_hourly(start, vec![demand_gw; intervals]),
        ));
    }
    align(traces).unwrap()
}

/// Two-region trace set with day-on/day-off wind in opposite phase, flat
/// 1 GW demand and no solar.
pub fn anti_correlated_traces(scenario: &Scenario, intervals: usize) -> TraceSet {
    let start = Timestamp::from_ymd_hm(2021, 1, 1, 0, 0).unwrap();
    let mut traces = Vec::new();
    for (i, _) in scenario.regions.iter().enumerate() {
        let wind: Vec<f64> = (0..intervals)
            .map(|t| {
                let on = (t / 48 + i) % 2 == 0;
                if on {
                    0.80
                } else {
                    0.05
                }
            })
            .collect();
        traces.push((
            format!("pv{i}"),
            TimeSeries::half_hourly(start, vec![0.0; intervals]),
        ));
        traces.push((format!("wind{i}"), TimeSeries::half_hourly(start, wind)));
        traces.push((
            format!("demand{i}"),
            TimeSeries::half_hourly(start, vec![1.0; intervals]),
        ));
    }
    align(traces).unwrap()
}

/// Passenger-car class at national fleet scale. Energy intensity is taken
/// at the metering point (charging losses folded in), so grid demand is
/// wheels energy plus standby drain.
pub fn passenger_car_fleet() -> FleetClass {
    FleetClass {
        name: "passenger_car".into(),
        count: 14.3e6,
        annual_km: 12_600.0,
        energy_intensity_kwh_per_100km: 27.0,
        charging_efficiency: 1.0,
        vampire_loss_per_day: 0.01,
        tnd_loss: 0.0,
        flexible_share: 0.80,
        battery_kwh: 60.0,
        charge_power_kw: 7.0,
        travel_profile: "commuter".into(),
    }
}

/// Full land-transport fleet table plus calibrated heating components and
/// the 9 GW flat industrial load.
pub fn national_scale_demand() -> DemandSpec {
    let car = passenger_car_fleet();
    let fleet = |name: &str, count: f64, km: f64, intensity: f64, battery: f64| FleetClass {
        name: name.into(),
        count,
        annual_km: km,
        energy_intensity_kwh_per_100km: intensity,
        flexible_share: 0.0,
        battery_kwh: battery,
        ..car.clone()
    };
    let fleets = vec![
        car.clone(),
        fleet("light_commercial", 3.2e6, 16_400.0, 32.0, 60.0),
        fleet("rigid_truck", 0.5e6, 20_800.0, 80.0, 60.0),
        fleet("articulated_truck", 0.1e6, 79_400.0, 160.0, 60.0),
        fleet("non_freight_truck", 0.02e6, 13_100.0, 73.0, 60.0),
        fleet("bus", 0.08e6, 26_900.0, 76.0, 60.0),
        fleet("motorcycle", 0.86e6, 2_600.0, 14.0, 10.0),
        FleetClass {
            name: "rail".into(),
            count: 1_500.0,
            annual_km: 150_000.0,
            energy_intensity_kwh_per_100km: 2_108.0,
            charging_efficiency: 1.0,
            vampire_loss_per_day: 0.0,
            tnd_loss: 0.075,
            flexible_share: 0.0,
            battery_kwh: 0.0,
            charge_power_kw: 0.0,
            travel_profile: "flat".into(),
        },
    ];
    let heating = vec![
        HeatingSpec {
            name: "space_heating".into(),
            fuel_energy_pj: 98.6,
            fuel_efficiency: 0.825,
            cop: 3.0,
            tnd_loss: 0.075,
            profile: "evening".into(),
        },
        HeatingSpec {
            name: "water_heating".into(),
            fuel_energy_pj: 80.0,
            fuel_efficiency: 0.67,
            cop: 2.425,
            tnd_loss: 0.075,
            profile: "evening".into(),
        },
        HeatingSpec {
            name: "cooking".into(),
            fuel_energy_pj: 28.72,
            fuel_efficiency: 0.40,
            cop: 0.70,
            tnd_loss: 0.075,
            profile: "evening".into(),
        },
    ];
    DemandSpec {
        base_demand_trace: BTreeMap::from([("nem".to_string(), "base".to_string())]),
        fleets,
        heating,
        industry_gw: 9.0,
        transport_shares: None,
        heating_shares: None,
        industry_shares: None,
        ev_charge_eff: 0.85,
    }
}

/// One-region trace environment at national demand scale: constant base
/// demand carrying 201 TWh over one calendar year.
pub fn national_scale_traces(year: i32) -> (DemandSpec, Vec<RegionId>, TraceSet, CalendarIndex) {
    let spec = national_scale_demand();
    let regions = vec!["nem".to_string()];
    let start = Timestamp::from_ymd_hm(year, 1, 1, 0, 0).unwrap();
    let intervals = days_in_year(year) as usize * 48;
    let hours = intervals as f64 * 0.5;
    let base_gw = 201_000.0 / hours;
    let traces = align(vec![(
        "base".to_string(),
        TimeSeries::half_hourly(start, vec![base_gw; intervals]),
    )])
    .unwrap();
    let cal = CalendarIndex::new(start, intervals);
    (spec, regions, traces, cal)
}
