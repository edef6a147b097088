//! Capital annualization and LCOE decomposition into generation and
//! balancing components.

use crate::calendar::MEAN_HOURS_PER_YEAR;
use crate::dispatch::{DispatchResult, Portfolio};
use crate::error::CoreError;
use crate::network::{hvac_connection_cost, interconnector_annual_cost};
use crate::scenario::{Scenario, TechCost, Topology};
use serde::{Deserialize, Serialize};

/// Annuity fraction converting capital cost to equivalent annual cost:
/// `r(1+r)^n / ((1+r)^n - 1)`, with the zero-rate limit `1/n`.
pub fn capital_recovery_factor(rate: f64, lifetime_years: u32) -> f64 {
    let n = lifetime_years.max(1);
    if rate == 0.0 {
        return 1.0 / n as f64;
    }
    let growth = (1.0 + rate).powi(n as i32);
    rate * growth / (growth - 1.0)
}

/// Stand-alone levelised cost of a generation technology at a given
/// capacity factor, $/MWh.
pub fn technology_lcoe(
    cost: &TechCost,
    discount_rate: f64,
    capacity_factor: f64,
) -> Result<f64, CoreError> {
    if capacity_factor <= 0.0 || capacity_factor.is_nan() {
        return Err(CoreError::ZeroCapacityFactor);
    }
    let crf = capital_recovery_factor(discount_rate, cost.lifetime_years);
    // 8.760 MWh per kW-year at unit capacity factor.
    Ok(
        (cost.capital_per_kw * crf + cost.fom_per_kw_yr) / (8.760 * capacity_factor)
            + cost.vom_per_mwh,
    )
}

/// Annualized fixed costs (capital + fixed O&M) by asset class, $/yr.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnualizedCosts {
    pub pv: f64,
    pub wind: f64,
    pub storage: f64,
    pub hvdc: f64,
    pub hvac: f64,
}

impl AnnualizedCosts {
    pub fn total(&self) -> f64 {
        self.pv + self.wind + self.storage + self.hvdc + self.hvac
    }
}

/// Annualizes the portfolio's capital and fixed O&M against the scenario's
/// cost table. HVDC costs apply to new-build link capacity only.
pub fn annualize_portfolio(
    portfolio: &Portfolio,
    scenario: &Scenario,
    topo: &Topology,
) -> AnnualizedCosts {
    let costs = &scenario.costs;
    let r = costs.discount_rate_real;
    let mut out = AnnualizedCosts::default();

    let crf_pv = capital_recovery_factor(r, costs.pv.lifetime_years);
    let crf_wind = capital_recovery_factor(r, costs.wind.lifetime_years);
    for (zi, (_, zone)) in scenario.zones().iter().enumerate() {
        let pv_kw = portfolio.pv_gw[zi] * 1e6;
        let wind_kw = portfolio.wind_gw[zi] * 1e6;
        out.pv += pv_kw * (costs.pv.capital_per_kw * crf_pv + costs.pv.fom_per_kw_yr);
        out.wind += wind_kw * (costs.wind.capital_per_kw * crf_wind + costs.wind.fom_per_kw_yr);
        let hvac_rate = zone.hvac_cost_per_kw.unwrap_or(costs.hvac.per_kw);
        out.hvac += hvac_connection_cost(
            hvac_rate,
            portfolio.pv_gw[zi] + portfolio.wind_gw[zi],
            costs,
        );
    }

    let crf_storage = capital_recovery_factor(r, costs.storage.lifetime_years);
    for (ri, _) in scenario.regions.iter().enumerate() {
        let power_kw = portfolio.storage_power_gw[ri] * 1e6;
        let energy_kwh = portfolio.storage_energy_gwh[ri] * 1e6;
        let capital =
            costs.storage.power_per_kw * power_kw + costs.storage.energy_per_kwh * energy_kwh;
        out.storage += capital * crf_storage + costs.storage.fom_per_kw_yr * power_kw;
        if costs.hvac.storage_multiplier > 0.0 {
            out.hvac += costs.hvac.storage_multiplier
                * hvac_connection_cost(costs.hvac.per_kw, portfolio.storage_power_gw[ri], costs);
        }
    }

    for (li, link) in topo.links.iter().enumerate() {
        out.hvdc += interconnector_annual_cost(link, portfolio.link_capacity_gw[li], costs);
    }

    out
}

/// Cost of purchased hydro/bio energy, $/yr.
pub fn hydro_bio_purchase_cost(price_per_mwh: f64, energy_twh: f64) -> f64 {
    price_per_mwh * energy_twh * 1e6
}

/// The LCOE split: generation plus the three balancing components. The
/// spillage & loss term is constructed as a residual so the identity
/// `lcoe = lcog + storage + transmission + spill_loss` holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub lcog: f64,
    pub lcob_storage: f64,
    pub lcob_transmission: f64,
    pub lcob_spill_loss: f64,
    pub lcoe: f64,
    /// Annualized totals behind the levelised figures, $/yr.
    pub annual_generation: f64,
    pub annual_vom: f64,
    pub annual_hydro_bio_purchase: f64,
    pub annual_storage: f64,
    pub annual_transmission: f64,
    /// Mean annual delivered energy, MWh.
    pub delivered_mwh_per_yr: f64,
    /// Mean annual dispatched generation (storage- and loss-bound energy
    /// included, curtailed energy excluded), MWh.
    pub generated_mwh_per_yr: f64,
}

impl CostBreakdown {
    pub fn lcob(&self) -> f64 {
        self.lcob_storage + self.lcob_transmission + self.lcob_spill_loss
    }

    /// Residual of the decomposition identity; zero up to rounding.
    pub fn identity_residual(&self) -> f64 {
        self.lcoe - (self.lcog + self.lcob_storage + self.lcob_transmission + self.lcob_spill_loss)
    }
}

/// Decomposes system cost over a dispatch result covering at least one
/// calendar year of accounted intervals.
pub fn lcoe_breakdown(
    annualized: &AnnualizedCosts,
    scenario: &Scenario,
    dispatch: &DispatchResult,
) -> Result<CostBreakdown, CoreError> {
    let years = dispatch.accounted_hours / MEAN_HOURS_PER_YEAR;
    if years <= 0.0 {
        return Err(CoreError::ZeroDeliveredEnergy);
    }
    // GWh totals over the accounting span → mean annual MWh.
    let per_year = |gwh_total: f64| gwh_total * 1e3 / years;
    let delivered = per_year(dispatch.totals.delivered_gwh());
    if delivered <= 0.0 {
        return Err(CoreError::ZeroDeliveredEnergy);
    }
    let pv = per_year(dispatch.totals.pv_gwh);
    let wind = per_year(dispatch.totals.wind_gwh);
    let hydro_bio = per_year(dispatch.totals.hydro_bio_gwh);
    let generated = pv + wind + hydro_bio;

    let annual_generation = annualized.pv + annualized.wind;
    let annual_vom = scenario.costs.pv.vom_per_mwh * pv + scenario.costs.wind.vom_per_mwh * wind;
    let annual_purchase =
        hydro_bio_purchase_cost(scenario.costs.hydro_bio_price_per_mwh, hydro_bio / 1e6);
    let annual_storage = annualized.storage;
    let annual_transmission = annualized.hvdc + annualized.hvac;

    let lcoe =
        (annual_generation + annual_vom + annual_purchase + annual_storage + annual_transmission)
            / delivered;
    let lcog = if generated > 0.0 {
        (annual_generation + annual_vom + annual_purchase) / generated
    } else {
        0.0
    };
    let lcob_storage = annual_storage / delivered;
    let lcob_transmission = annual_transmission / delivered;
    let lcob_spill_loss = lcoe - lcog - lcob_storage - lcob_transmission;

    Ok(CostBreakdown {
        lcog,
        lcob_storage,
        lcob_transmission,
        lcob_spill_loss,
        lcoe,
        annual_generation,
        annual_vom,
        annual_hydro_bio_purchase: annual_purchase,
        annual_storage,
        annual_transmission,
        delivered_mwh_per_yr: delivered,
        generated_mwh_per_yr: generated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::EnergyAggregate;
    use crate::scenario::build_topology;
    use crate::test_fixtures::{reference_costs, scenario_with_regions};

    #[test]
    fn crf_anchors() {
        assert!((capital_recovery_factor(0.05, 25) - 0.070952).abs() < 5e-7);
        assert!((capital_recovery_factor(0.05, 50) - 0.054777).abs() < 5e-7);
        assert!((capital_recovery_factor(0.0, 10) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn crf_zero_rate_limit() {
        // CRF(r, n) * n -> 1 as r -> 0.
        let crf = capital_recovery_factor(1e-9, 40);
        assert!((crf * 40.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn technology_lcoe_anchors() {
        let costs = reference_costs();
        let pv = technology_lcoe(&costs.pv, 0.05, 0.30).unwrap();
        let wind = technology_lcoe(&costs.wind, 0.05, 0.41).unwrap();
        assert!((pv - 50.0).abs() / 50.0 < 0.05, "pv lcoe {pv}");
        assert!((wind - 50.0).abs() / 50.0 < 0.05, "wind lcoe {wind}");
        // Hand-evaluated expectations.
        assert!((pv - 50.046).abs() < 0.01);
        assert!((wind - 48.58).abs() < 0.01);
    }

    #[test]
    fn technology_lcoe_constructed_identity() {
        // cf = 1, zero O&M, capital chosen so the annuity equals 8,760 $/kW-yr
        // pays exactly 1 $/MWh.
        let crf = capital_recovery_factor(0.05, 25);
        let tech = TechCost {
            capital_per_kw: 8.760 / crf,
            fom_per_kw_yr: 0.0,
            vom_per_mwh: 0.0,
            lifetime_years: 25,
        };
        let lcoe = technology_lcoe(&tech, 0.05, 1.0).unwrap();
        assert!((lcoe - 1.0).abs() < 1e-12);
    }

    #[test]
    fn technology_lcoe_rejects_zero_cf() {
        let costs = reference_costs();
        assert!(technology_lcoe(&costs.pv, 0.05, 0.0).is_err());
    }

    #[test]
    fn storage_annualization_anchor() {
        let s = scenario_with_regions(1);
        let topo = build_topology(&s);
        let mut p = Portfolio::zeros(&s);
        p.storage_power_gw[0] = 1.0;
        p.storage_energy_gwh[0] = 10.0;
        let ann = annualize_portfolio(&p, &s, &topo);
        // Capital 800*1e6 + 70*1e7 = $1.5B; annual = 1.5e9*CRF(0.05,50) + $10M.
        let expect = 1.5e9 * capital_recovery_factor(0.05, 50) + 10.0 * 1e6;
        assert!(
            (ann.storage - expect).abs() / expect < 1e-12,
            "{} vs {expect}",
            ann.storage
        );
        assert!((ann.storage - 92.2e6).abs() < 0.1e6);
    }

    #[test]
    fn zone_hvac_override_and_storage_multiplier() {
        let mut s = scenario_with_regions(1);
        let topo = build_topology(&s);
        let mut p = Portfolio::zeros(&s);
        p.pv_gw[0] = 1.0;
        let base = annualize_portfolio(&p, &s, &topo).hvac;
        // Halving the zone's connection rate halves its HVAC cost.
        s.regions[0].zones[0].hvac_cost_per_kw = Some(750.0);
        let halved = annualize_portfolio(&p, &s, &topo).hvac;
        assert!((halved - base / 2.0).abs() / base < 1e-12);
        // Storage connection share adds on top when configured.
        s.costs.hvac.storage_multiplier = 1.0;
        p.storage_power_gw[0] = 1.0;
        p.storage_energy_gwh[0] = 4.0;
        let with_storage = annualize_portfolio(&p, &s, &topo).hvac;
        assert!((with_storage - (halved + base)).abs() / base < 1e-12);
    }

    #[test]
    fn empty_portfolio_costs_nothing() {
        let s = scenario_with_regions(2);
        let topo = build_topology(&s);
        let ann = annualize_portfolio(&Portfolio::zeros(&s), &s, &topo);
        assert_eq!(ann.total(), 0.0);
    }

    #[test]
    fn annualization_is_linear_in_capacity() {
        let s = scenario_with_regions(2);
        let topo = build_topology(&s);
        let mut p = Portfolio::zeros(&s);
        p.pv_gw.fill(2.0);
        p.wind_gw.fill(1.0);
        p.storage_power_gw.fill(0.5);
        p.storage_energy_gwh.fill(4.0);
        p.link_capacity_gw.fill(1.0);
        let base = annualize_portfolio(&p, &s, &topo);
        let mut doubled = p.clone();
        doubled.pv_gw.iter_mut().for_each(|x| *x *= 2.0);
        doubled.wind_gw.iter_mut().for_each(|x| *x *= 2.0);
        doubled.storage_power_gw.iter_mut().for_each(|x| *x *= 2.0);
        doubled
            .storage_energy_gwh
            .iter_mut()
            .for_each(|x| *x *= 2.0);
        doubled.link_capacity_gw.iter_mut().for_each(|x| *x *= 2.0);
        let twice = annualize_portfolio(&doubled, &s, &topo);
        assert!((twice.total() - 2.0 * base.total()).abs() / base.total() < 1e-12);
    }

    #[test]
    fn hydro_bio_purchase_anchors() {
        assert_eq!(hydro_bio_purchase_cost(50.0, 20.0), 1.0e9);
        assert_eq!(hydro_bio_purchase_cost(50.0, 0.0), 0.0);
        // 1 MWh at the $50/MWh purchase price.
        assert!((hydro_bio_purchase_cost(50.0, 1e-6) - 50.0).abs() < 1e-9);
    }

    fn bare_dispatch(delivered_gwh: f64, pv_gwh: f64, hours: f64) -> DispatchResult {
        let mut d = DispatchResult::empty_for_test(1);
        d.accounted_hours = hours;
        d.totals = EnergyAggregate {
            demand_gwh: delivered_gwh,
            unserved_gwh: 0.0,
            pv_gwh,
            ..EnergyAggregate::default()
        };
        d
    }

    #[test]
    fn breakdown_residual_vanishes_without_losses() {
        // Lossless single region: all generation delivered, no storage or
        // transmission assets.
        let s = scenario_with_regions(1);
        let gwh = 8766.0; // 1 GW average over one mean year
        let d = bare_dispatch(gwh, gwh, MEAN_HOURS_PER_YEAR);
        let ann = AnnualizedCosts {
            pv: 50.0 * gwh * 1e3,
            ..Default::default()
        };
        let b = lcoe_breakdown(&ann, &s, &d).unwrap();
        assert!((b.lcoe - b.lcog).abs() < 1e-9);
        assert_eq!(b.lcob_storage, 0.0);
        assert_eq!(b.lcob_transmission, 0.0);
        assert!(b.lcob_spill_loss.abs() < 1e-9);
        assert!(b.identity_residual().abs() < 1e-12);
    }

    #[test]
    fn breakdown_spill_loss_residual() {
        // 10% of dispatched generation is lost downstream; flat generation
        // cost of 50 $/MWh. Expect spill&loss ≈ 50/0.9 - 50.
        let s = scenario_with_regions(1);
        let generated = 10_000.0;
        let delivered = 9_000.0;
        let mut d = DispatchResult::empty_for_test(1);
        d.accounted_hours = MEAN_HOURS_PER_YEAR;
        d.totals = EnergyAggregate {
            demand_gwh: delivered,
            pv_gwh: generated,
            ..EnergyAggregate::default()
        };
        let ann = AnnualizedCosts {
            pv: 50.0 * generated * 1e3,
            ..Default::default()
        };
        let b = lcoe_breakdown(&ann, &s, &d).unwrap();
        assert!((b.lcog - 50.0).abs() < 1e-9);
        assert!(
            (b.lcob_spill_loss - (50.0 / 0.9 - 50.0)).abs() < 1e-6,
            "{}",
            b.lcob_spill_loss
        );
        assert!(b.identity_residual().abs() < 1e-12);
    }

    #[test]
    fn breakdown_rejects_zero_delivery() {
        let s = scenario_with_regions(1);
        let d = bare_dispatch(0.0, 0.0, MEAN_HOURS_PER_YEAR);
        assert!(matches!(
            lcoe_breakdown(&AnnualizedCosts::default(), &s, &d),
            Err(CoreError::ZeroDeliveredEnergy)
        ));
    }

    #[test]
    fn lcoe_monotone_in_delivered_energy() {
        let s = scenario_with_regions(1);
        let ann = AnnualizedCosts {
            pv: 1e9,
            ..Default::default()
        };
        let mut last = f64::INFINITY;
        for delivered in [1000.0, 2000.0, 4000.0, 8000.0] {
            let d = bare_dispatch(delivered, delivered, MEAN_HOURS_PER_YEAR);
            let b = lcoe_breakdown(&ann, &s, &d).unwrap();
            assert!(b.lcoe < last);
            last = b.lcoe;
        }
    }
}
