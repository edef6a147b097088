//! Render/parse round-trip over randomized scenario configurations.

use gridopt_cli::config::*;
use gridopt_core::scenario::LinkKind;
use gridopt_core::trace::SynthKind;
use proptest::prelude::*;
use std::collections::BTreeMap;
use std::path::Path;

fn raw_costs() -> impl Strategy<Value = RawCosts> {
    (0.0..0.15f64, 100.0..3000.0f64, 0.0..50.0f64, 1u32..60).prop_map(
        |(rate, capital, fom, life)| RawCosts {
            discount_rate_real: rate,
            pv: RawTechCost {
                capital_per_kw: capital,
                fom_per_kw_yr: fom,
                vom_per_mwh: 0.0,
                lifetime_years: life,
            },
            wind: RawTechCost {
                capital_per_kw: capital * 1.1,
                fom_per_kw_yr: fom * 2.0,
                vom_per_mwh: 3.0,
                lifetime_years: life,
            },
            storage: RawStorageCost {
                power_per_kw: 800.0,
                energy_per_kwh: 70.0,
                fom_per_kw_yr: 10.0,
                lifetime_years: 50,
            },
            hvdc: RawHvdcCost {
                overhead_per_mw_km: 320.0,
                overhead_converter_per_mw: 160_000.0,
                submarine_per_kw: 4000.0,
                lifetime_years: 50,
            },
            hvac: RawHvacCost {
                per_kw: 1500.0,
                lifetime_years: 50,
                storage_multiplier: 0.0,
            },
            hydro_bio_price_per_mwh: 50.0,
        },
    )
}

fn raw_scenario() -> impl Strategy<Value = RawScenario> {
    let region_count = 1usize..4;
    (
        region_count,
        raw_costs(),
        0.0..1.0f64,
        any::<bool>(),
        any::<bool>(),
        0.5..0.9f64,
    )
        .prop_flat_map(|(n, costs, soc_frac, interconnect, ev_flex, flex_share)| {
            let lengths = prop::collection::vec(1.0..3000.0f64, n.saturating_sub(1));
            let hydro = prop::collection::vec(prop::option::of((0.0..5.0f64, 0.0..20.0f64)), n);
            (
                Just(n),
                Just(costs),
                Just(soc_frac),
                Just(interconnect),
                Just(ev_flex),
                Just(flex_share),
                lengths,
                hydro,
            )
                .prop_map(
                    |(n, costs, soc_frac, interconnect, ev_flex, flex_share, lengths, hydro)| {
                        let mut traces = BTreeMap::new();
                        let regions = (0..n)
                            .map(|i| {
                                for (prefix, profile, mean) in [
                                    ("pv", SynthKind::Solar, 0.3),
                                    ("wind", SynthKind::Wind, 0.41),
                                    ("demand", SynthKind::Demand, 2.0),
                                ] {
                                    traces.insert(
                                        format!("{prefix}{i}"),
                                        TraceConfig::Synthetic {
                                            profile,
                                            seed: i as u64,
                                            mean,
                                            diurnal_amplitude: 0.2,
                                            noise: 0.1,
                                            daylight_start_hour: 6.0,
                                            daylight_end_hour: 18.0,
                                        },
                                    );
                                }
                                RawRegion {
                                    id: format!("r{i}"),
                                    base_demand_trace: format!("demand{i}"),
                                    hydro_bio: hydro[i].map(|(p, e)| RawHydroBio {
                                        power_cap_gw: p,
                                        annual_cap_twh: e,
                                    }),
                                    zones: vec![RawZone {
                                        id: format!("z{i}"),
                                        pv_trace: format!("pv{i}"),
                                        wind_trace: format!("wind{i}"),
                                        hvac_cost_per_kw: None,
                                    }],
                                }
                            })
                            .collect();
                        let interconnectors = lengths
                            .iter()
                            .enumerate()
                            .map(|(i, &len)| RawInterconnector {
                                id: format!("l{i}"),
                                from: format!("r{i}"),
                                to: format!("r{}", i + 1),
                                length_km: len,
                                kind: if i % 2 == 0 {
                                    LinkKind::Overhead
                                } else {
                                    LinkKind::Submarine
                                },
                                reserve_fraction: 0.25,
                                existing_capacity_gw: 0.0,
                            })
                            .collect();
                        RawScenario {
                            schema_version: 1,
                            id: "generated".into(),
                            horizon: RawHorizon {
                                start: "2021-01-01T00:00".into(),
                                years: 1,
                            },
                            flags: RawFlags {
                                interconnection_enabled: interconnect,
                                ev_flexibility_enabled: ev_flex,
                                ev_flexible_share: flex_share,
                                ev_min_soc: soc_frac * 0.5,
                                ev_lookahead_hours: 24.0,
                            },
                            reliability_limit: 0.00002,
                            hydro_bio_system_cap_twh: None,
                            costs,
                            regions,
                            interconnectors,
                            demand: RawDemand::default(),
                            traces,
                            profiles: BTreeMap::new(),
                            optimize: None,
                        }
                    },
                )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parse_render_round_trip(raw in raw_scenario()) {
        let text = render_scenario(&raw).unwrap();
        let doc = parse_scenario_lenient(&text, Path::new(".")).unwrap();
        prop_assert_eq!(&doc.raw, &raw, "raw config drifted through render/parse");
        let text2 = render_scenario(&doc.raw).unwrap();
        let doc2 = parse_scenario_lenient(&text2, Path::new(".")).unwrap();
        prop_assert_eq!(&doc2.scenario, &doc.scenario, "scenario drifted through second round-trip");
        prop_assert_eq!(text, text2);
    }
}
