//! Chronological half-hourly supply-demand balance: VRE dispatch, storage
//! charge/discharge, flexible EV charging, budget-capped hydro/bio, spill
//! and unserved accounting.
//!
//! Merit order per interval, deficit side: local VRE, inter-region transfer
//! of surplus, storage discharge, hydro/bio, unserved. Surplus side: storage
//! charge, opportunistic EV charge (when flexibility is enabled), spill.
//! Infeasibility shows up as unserved energy, never as an error, so the
//! optimizer can evaluate any portfolio.

use crate::calendar::{CalendarIndex, HOURS_PER_INTERVAL};
use crate::demand::{compose_demand, ComposedDemand, ProfileSet};
use crate::error::CoreError;
use crate::network::{balance_flows_into, FlowScratch};
use crate::scenario::{build_topology, HydroBioCapScope, Scenario, Topology, Violation};
use crate::trace::TraceSet;
use serde::{Deserialize, Serialize};

/// The capacity decision vector. Zone and region vectors follow scenario
/// declaration order; link capacities follow the topology's lexicographic
/// link order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub pv_gw: Vec<f64>,
    pub wind_gw: Vec<f64>,
    pub storage_power_gw: Vec<f64>,
    pub storage_energy_gwh: Vec<f64>,
    pub link_capacity_gw: Vec<f64>,
}

impl Portfolio {
    pub fn zeros(scenario: &Scenario) -> Self {
        Portfolio {
            pv_gw: vec![0.0; scenario.zone_count()],
            wind_gw: vec![0.0; scenario.zone_count()],
            storage_power_gw: vec![0.0; scenario.regions.len()],
            storage_energy_gwh: vec![0.0; scenario.regions.len()],
            link_capacity_gw: vec![0.0; scenario.interconnectors.len()],
        }
    }

    pub fn validate(&self, scenario: &Scenario) -> Vec<Violation> {
        let mut v = Vec::new();
        let nz = scenario.zone_count();
        let nr = scenario.regions.len();
        let nl = scenario.interconnectors.len();
        if self.pv_gw.len() != nz || self.wind_gw.len() != nz {
            v.push(Violation {
                code: "portfolio_shape",
                message: format!("expected {nz} zone capacities"),
            });
        }
        if self.storage_power_gw.len() != nr || self.storage_energy_gwh.len() != nr {
            v.push(Violation {
                code: "portfolio_shape",
                message: format!("expected {nr} storage entries"),
            });
        }
        if self.link_capacity_gw.len() != nl {
            v.push(Violation {
                code: "portfolio_shape",
                message: format!("expected {nl} link capacities"),
            });
        }
        let all = self
            .pv_gw
            .iter()
            .chain(&self.wind_gw)
            .chain(&self.storage_power_gw)
            .chain(&self.storage_energy_gwh)
            .chain(&self.link_capacity_gw);
        if all.clone().any(|&x| x < 0.0 || !x.is_finite()) {
            v.push(Violation {
                code: "negative_capacity",
                message: "capacities must be non-negative".into(),
            });
        }
        for (p, e) in self.storage_power_gw.iter().zip(&self.storage_energy_gwh) {
            if *e < *p * HOURS_PER_INTERVAL - 1e-12 {
                v.push(Violation {
                    code: "storage_undersized",
                    message: format!("storage energy {e} GWh below one interval at {p} GW"),
                });
            }
        }
        v
    }
}

/// Round-trip efficiency of the pumped-hydro storage fleet.
pub const STORAGE_ROUND_TRIP: f64 = 0.80;

/// Reservoir storage with a symmetric charge/discharge efficiency split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageState {
    pub soc_gwh: f64,
    pub capacity_gwh: f64,
    pub power_gw: f64,
    pub charge_eff: f64,
    pub discharge_eff: f64,
}

impl StorageState {
    pub fn new(power_gw: f64, capacity_gwh: f64) -> Self {
        let eff = STORAGE_ROUND_TRIP.sqrt();
        StorageState {
            soc_gwh: 0.5 * capacity_gwh,
            capacity_gwh,
            power_gw,
            charge_eff: eff,
            discharge_eff: eff,
        }
    }

    /// Accepts up to `request_gw` of grid power for one interval; returns
    /// the accepted grid-side power.
    pub fn charge(&mut self, request_gw: f64) -> f64 {
        let headroom_gw =
            (self.capacity_gwh - self.soc_gwh) / (self.charge_eff * HOURS_PER_INTERVAL);
        let accepted = request_gw.min(self.power_gw).min(headroom_gw).max(0.0);
        self.soc_gwh += accepted * self.charge_eff * HOURS_PER_INTERVAL;
        accepted
    }

    /// Delivers up to `request_gw` of grid power for one interval; returns
    /// the delivered grid-side power.
    pub fn discharge(&mut self, request_gw: f64) -> f64 {
        let available_gw = self.soc_gwh * self.discharge_eff / HOURS_PER_INTERVAL;
        let delivered = request_gw.min(self.power_gw).min(available_gw).max(0.0);
        self.soc_gwh =
            (self.soc_gwh - delivered * HOURS_PER_INTERVAL / self.discharge_eff).max(0.0);
        delivered
    }
}

/// Aggregated flexible EV battery for one region. Charging is schedulable;
/// no energy ever flows back to the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvAggregateState {
    pub soc_gwh: f64,
    pub capacity_gwh: f64,
    pub max_charge_gw: f64,
    pub min_soc_fraction: f64,
    /// Grid→battery efficiency (charging and network losses combined).
    pub charge_eff: f64,
    /// Lookahead window for floor protection, intervals.
    pub lookahead_intervals: usize,
}

impl EvAggregateState {
    pub fn floor_gwh(&self) -> f64 {
        self.min_soc_fraction * self.capacity_gwh
    }

    /// Charging forced regardless of system balance: the minimum needed so
    /// the battery stays at or above the floor across the lookahead window
    /// of driving draw, assuming no other charging.
    ///
    /// `draw_cum[t]` is cumulative battery draw (GWh) before interval `t`;
    /// it is non-decreasing so the window minimum SoC occurs at the window
    /// end.
    pub fn forced_charge_gw(&self, t: usize, draw_cum: &[f64]) -> f64 {
        if self.capacity_gwh <= 0.0 {
            return 0.0;
        }
        let horizon = draw_cum.len() - 1;
        let end = (t + self.lookahead_intervals).min(horizon);
        let window_draw = draw_cum[end] - draw_cum[t];
        let needed_gwh = self.floor_gwh() + window_draw - self.soc_gwh;
        if needed_gwh <= 0.0 {
            return 0.0;
        }
        // Tiny cushion keeps the floor invariant exact under rounding.
        let grid_gw = (needed_gwh + 1e-12) / (self.charge_eff * HOURS_PER_INTERVAL);
        let headroom_gw =
            (self.capacity_gwh - self.soc_gwh) / (self.charge_eff * HOURS_PER_INTERVAL);
        grid_gw.min(self.max_charge_gw).min(headroom_gw).max(0.0)
    }

    /// Additional opportunistic charging out of a local surplus, beyond the
    /// forced component.
    pub fn opportunistic_charge_gw(&self, surplus_gw: f64, forced_gw: f64) -> f64 {
        if self.capacity_gwh <= 0.0 || surplus_gw <= 0.0 {
            return 0.0;
        }
        let headroom_gw =
            (self.capacity_gwh - self.soc_gwh) / (self.charge_eff * HOURS_PER_INTERVAL) - forced_gw;
        surplus_gw
            .min(self.max_charge_gw - forced_gw)
            .min(headroom_gw)
            .max(0.0)
    }

    /// Combined charging decision for one interval: defers during deficit,
    /// charges opportunistically during surplus, and overrides deferral
    /// when the SoC floor is at risk within the lookahead window.
    pub fn flexible_charge(
        &self,
        t: usize,
        draw_cum: &[f64],
        surplus_gw: f64,
        _deficit_gw: f64,
    ) -> f64 {
        let forced = self.forced_charge_gw(t, draw_cum);
        forced + self.opportunistic_charge_gw(surplus_gw, forced)
    }

    /// Applies one interval of charging and driving draw.
    pub fn step(&mut self, charge_gw: f64, draw_gwh: f64) {
        self.soc_gwh += charge_gw * self.charge_eff * HOURS_PER_INTERVAL - draw_gwh;
        if self.soc_gwh > self.capacity_gwh {
            self.soc_gwh = self.capacity_gwh;
        }
    }
}

/// Dispatchable hydro/bio with a power cap and an annual energy budget that
/// resets at calendar-year boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroBioBudget {
    pub power_cap_gw: f64,
    pub annual_cap_gwh: f64,
    pub year_used_gwh: f64,
}

impl HydroBioBudget {
    pub fn new(power_cap_gw: f64, annual_cap_twh: f64) -> Self {
        HydroBioBudget {
            power_cap_gw,
            annual_cap_gwh: annual_cap_twh * 1e3,
            year_used_gwh: 0.0,
        }
    }

    pub fn remaining_gwh(&self) -> f64 {
        (self.annual_cap_gwh - self.year_used_gwh).max(0.0)
    }

    /// Dispatches against a residual deficit, limited by power cap and the
    /// remaining annual budget; decrements the budget.
    pub fn dispatch(&mut self, residual_gw: f64) -> f64 {
        let by_budget = self.remaining_gwh() / HOURS_PER_INTERVAL;
        let gw = residual_gw.min(self.power_cap_gw).min(by_budget).max(0.0);
        self.year_used_gwh += gw * HOURS_PER_INTERVAL;
        gw
    }

    pub fn reset_year(&mut self) {
        self.year_used_gwh = 0.0;
    }
}

/// Per-region slice of one interval's balance ledger, all GW.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RegionInterval {
    pub demand: f64,
    pub vre_used: f64,
    pub storage_charge: f64,
    pub storage_discharge: f64,
    pub hydro_bio: f64,
    pub ev_charge: f64,
    pub net_import: f64,
    pub spill: f64,
    pub unserved: f64,
}

impl RegionInterval {
    /// Residual of the per-region balance identity; exact up to rounding.
    pub fn balance_residual(&self) -> f64 {
        self.vre_used + self.storage_discharge + self.hydro_bio + self.net_import
            - self.storage_charge
            - self.ev_charge
            - self.spill
            - (self.demand - self.unserved)
    }
}

/// One recorded interval: per-region ledger and per-link signed flow/loss.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRecord {
    pub index: usize,
    pub regions: Vec<RegionInterval>,
    /// Signed send-side flow per link (positive = declared from→to) and loss.
    pub link_flow_gw: Vec<f64>,
    pub link_loss_gw: Vec<f64>,
}

/// Energy totals over some accounting span, GWh.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyAggregate {
    pub demand_gwh: f64,
    pub unserved_gwh: f64,
    /// Dispatched (non-curtailed) generation by source.
    pub pv_gwh: f64,
    pub wind_gwh: f64,
    pub hydro_bio_gwh: f64,
    pub vre_available_gwh: f64,
    pub spill_gwh: f64,
    pub storage_charge_gwh: f64,
    pub storage_discharge_gwh: f64,
    pub ev_charge_gwh: f64,
    pub line_loss_gwh: f64,
}

impl EnergyAggregate {
    fn add(&mut self, other: &EnergyAggregate) {
        self.demand_gwh += other.demand_gwh;
        self.unserved_gwh += other.unserved_gwh;
        self.pv_gwh += other.pv_gwh;
        self.wind_gwh += other.wind_gwh;
        self.hydro_bio_gwh += other.hydro_bio_gwh;
        self.vre_available_gwh += other.vre_available_gwh;
        self.spill_gwh += other.spill_gwh;
        self.storage_charge_gwh += other.storage_charge_gwh;
        self.storage_discharge_gwh += other.storage_discharge_gwh;
        self.ev_charge_gwh += other.ev_charge_gwh;
        self.line_loss_gwh += other.line_loss_gwh;
    }

    /// Energy actually delivered to consumers: served demand plus actual EV
    /// charging.
    pub fn delivered_gwh(&self) -> f64 {
        self.demand_gwh - self.unserved_gwh + self.ev_charge_gwh
    }
}

/// Outcome of a chronological simulation. Interval records are retained
/// only when requested; aggregates are always streamed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchResult {
    /// Totals per calendar year over the accounted span.
    pub years: Vec<(i32, EnergyAggregate)>,
    pub totals: EnergyAggregate,
    /// Per-region totals over the accounted span.
    pub regions: Vec<EnergyAggregate>,
    pub peak_unserved_gw: f64,
    pub peak_storage_discharge_gw: f64,
    /// Highest storage SoC reached per region, GWh.
    pub max_storage_soc_gwh: Vec<f64>,
    /// Lowest EV SoC reached per region at interval end, GWh (capacity when
    /// no fleet exists).
    pub min_ev_soc_gwh: Vec<f64>,
    /// Hours covered by the accounting span (after burn-in).
    pub accounted_hours: f64,
    pub horizon: usize,
    pub intervals: Option<Vec<IntervalRecord>>,
}

impl DispatchResult {
    #[doc(hidden)]
    pub fn empty_for_test(regions: usize) -> Self {
        DispatchResult {
            years: Vec::new(),
            totals: EnergyAggregate::default(),
            regions: vec![EnergyAggregate::default(); regions],
            peak_unserved_gw: 0.0,
            peak_storage_discharge_gw: 0.0,
            max_storage_soc_gwh: vec![0.0; regions],
            min_ev_soc_gwh: vec![0.0; regions],
            accounted_hours: 0.0,
            horizon: 0,
            intervals: None,
        }
    }
}

/// Reliability metrics derived from a dispatch result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reliability {
    /// Unserved energy as a fraction of demand energy, whole span.
    pub overall_fraction: f64,
    /// Per calendar year.
    pub per_year: Vec<(i32, f64)>,
    /// Deepest single-interval unserved power, GW.
    pub worst_interval_gw: f64,
}

/// Unserved-energy fractions per calendar year and overall.
pub fn reliability(dr: &DispatchResult) -> Reliability {
    let frac = |agg: &EnergyAggregate| {
        let denom = agg.demand_gwh + agg.ev_charge_gwh;
        if denom > 0.0 {
            agg.unserved_gwh / denom
        } else {
            0.0
        }
    };
    Reliability {
        overall_fraction: frac(&dr.totals),
        per_year: dr.years.iter().map(|(y, agg)| (*y, frac(agg))).collect(),
        worst_interval_gw: dr.peak_unserved_gw,
    }
}

/// Simulation options.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Retain the full per-interval ledger (memory-heavy on long horizons).
    pub record_intervals: bool,
    /// Calendar years excluded from aggregates at the start of the horizon
    /// to remove initial-condition bias. State still evolves through them.
    pub burn_in_years: u32,
}

/// Everything that is fixed across portfolio evaluations: scenario,
/// topology, composed demand and resolved traces. Immutable and shared by
/// concurrent evaluators.
pub struct SimContext<'a> {
    pub scenario: &'a Scenario,
    pub topo: Topology,
    pub cal: CalendarIndex,
    pub composed: ComposedDemand,
    /// Per zone: host region index and resolved CF slices.
    zone_region: Vec<usize>,
    zone_pv: Vec<&'a [f64]>,
    zone_wind: Vec<&'a [f64]>,
    /// Cumulative EV battery draw per region, GWh, length horizon+1.
    ev_draw_cum: Vec<Vec<f64>>,
    horizon: usize,
}

impl<'a> SimContext<'a> {
    pub fn new(
        scenario: &'a Scenario,
        traces: &'a TraceSet,
        profiles: &ProfileSet,
    ) -> Result<Self, CoreError> {
        let topo = build_topology(scenario);
        let horizon = traces.horizon();
        let cal = CalendarIndex::new(traces.start(), horizon);
        let region_order: Vec<String> = scenario.regions.iter().map(|r| r.id.clone()).collect();
        let composed = compose_demand(&scenario.demand, &region_order, traces, profiles, &cal)?;

        let zones = scenario.zones();
        let mut zone_region = Vec::with_capacity(zones.len());
        let mut zone_pv = Vec::with_capacity(zones.len());
        let mut zone_wind = Vec::with_capacity(zones.len());
        for (ri, zone) in &zones {
            zone_region.push(*ri);
            zone_pv.push(traces.get(&zone.pv_trace)?);
            zone_wind.push(traces.get(&zone.wind_trace)?);
        }

        let ev_draw_cum = composed
            .ev_battery_draw
            .iter()
            .map(|draw| {
                let mut cum = Vec::with_capacity(horizon + 1);
                let mut acc = 0.0;
                cum.push(0.0);
                for &gw in draw {
                    acc += gw * HOURS_PER_INTERVAL;
                    cum.push(acc);
                }
                cum
            })
            .collect();

        Ok(SimContext {
            scenario,
            topo,
            cal,
            composed,
            zone_region,
            zone_pv,
            zone_wind,
            ev_draw_cum,
            horizon,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Capacity available on each link: existing plus portfolio new-build.
    fn link_capacities(&self, portfolio: &Portfolio) -> Vec<f64> {
        self.topo
            .links
            .iter()
            .enumerate()
            .map(|(li, l)| {
                l.existing_capacity_gw + portfolio.link_capacity_gw.get(li).copied().unwrap_or(0.0)
            })
            .collect()
    }
}

/// Runs the chronological simulation for one portfolio.
pub fn simulate(
    scenario: &Scenario,
    portfolio: &Portfolio,
    traces: &TraceSet,
) -> Result<DispatchResult, CoreError> {
    let profiles = ProfileSet::with_builtins();
    let ctx = SimContext::new(scenario, traces, &profiles)?;
    simulate_ctx(&ctx, portfolio, &SimOptions::default())
}

/// Mutable simulation state evolved interval by interval: storage and EV
/// aggregates, hydro/bio budgets and the per-interval work buffers.
pub struct SimState {
    pub storage: Vec<StorageState>,
    pub ev: Vec<EvAggregateState>,
    pub hydro: Vec<Option<HydroBioBudget>>,
    shared_budget: Option<f64>,
    shared_cap_gwh: Option<f64>,
    link_capacities: Vec<f64>,
    current_year: i32,
    positions: Vec<f64>,
    pre_flow: Vec<f64>,
    flows: Vec<f64>,
    scratch: FlowScratch,
    vre_pv: Vec<f64>,
    vre_wind: Vec<f64>,
    rows: Vec<RegionInterval>,
}

impl SimState {
    /// Initial state for a portfolio: storage and EV aggregates at 50% of
    /// capacity, fresh hydro/bio budgets.
    pub fn new(ctx: &SimContext, portfolio: &Portfolio) -> Self {
        let nr = ctx.scenario.regions.len();
        let flags = &ctx.scenario.flags;
        let storage: Vec<StorageState> = (0..nr)
            .map(|ri| {
                StorageState::new(
                    portfolio.storage_power_gw[ri],
                    portfolio.storage_energy_gwh[ri],
                )
            })
            .collect();
        let lookahead_intervals = (flags.ev_lookahead_hours / HOURS_PER_INTERVAL)
            .round()
            .max(1.0) as usize;
        let ev = ctx
            .composed
            .ev_fleet
            .iter()
            .map(|p| EvAggregateState {
                soc_gwh: 0.5 * p.capacity_gwh,
                capacity_gwh: p.capacity_gwh,
                max_charge_gw: p.max_charge_gw,
                min_soc_fraction: flags.ev_min_soc,
                charge_eff: p.grid_to_battery_eff,
                lookahead_intervals,
            })
            .collect();
        let hydro = ctx
            .scenario
            .regions
            .iter()
            .map(|r| {
                r.hydro_bio
                    .map(|hb| HydroBioBudget::new(hb.power_cap_gw, hb.annual_cap_twh))
            })
            .collect();
        let shared_budget = match ctx.scenario.hydro_bio_cap_scope {
            HydroBioCapScope::PerRegion => None,
            HydroBioCapScope::SystemWide(cap_twh) => Some(cap_twh * 1e3),
        };
        SimState {
            storage,
            ev,
            hydro,
            shared_budget,
            shared_cap_gwh: shared_budget,
            link_capacities: ctx.link_capacities(portfolio),
            current_year: ctx.cal.year_of.first().copied().unwrap_or(0),
            positions: vec![0.0; nr],
            pre_flow: vec![0.0; nr],
            flows: vec![0.0; ctx.topo.links.len()],
            scratch: FlowScratch::new(nr),
            vre_pv: vec![0.0; nr],
            vre_wind: vec![0.0; nr],
            rows: vec![RegionInterval::default(); nr],
        }
    }

    /// Advances one interval, applying the merit order: local VRE, transfer
    /// of surplus toward deficit, storage discharge, hydro/bio, unserved;
    /// surplus side storage charge, opportunistic EV charge, spill. Returns
    /// the per-region ledger for the interval.
    pub fn step_interval(
        &mut self,
        ctx: &SimContext,
        portfolio: &Portfolio,
        t: usize,
    ) -> &[RegionInterval] {
        let nr = self.positions.len();
        let flags = &ctx.scenario.flags;

        // Calendar-year boundary: reset hydro/bio budgets.
        let year = ctx.cal.year_of[t];
        if year != self.current_year {
            self.current_year = year;
            for h in self.hydro.iter_mut().flatten() {
                h.reset_year();
            }
            if let Some(cap) = self.shared_cap_gwh {
                self.shared_budget = Some(cap);
            }
        }

        // Per-region VRE availability, inflexible demand and EV decisions.
        self.vre_pv.fill(0.0);
        self.vre_wind.fill(0.0);
        for zi in 0..ctx.zone_region.len() {
            let ri = ctx.zone_region[zi];
            self.vre_pv[ri] += portfolio.pv_gw[zi] * ctx.zone_pv[zi][t];
            self.vre_wind[ri] += portfolio.wind_gw[zi] * ctx.zone_wind[zi][t];
        }
        for ri in 0..nr {
            let mut demand = ctx.composed.demand[ri][t];
            let mut forced_ev = 0.0;
            if flags.ev_flexibility_enabled {
                forced_ev = self.ev[ri].forced_charge_gw(t, &ctx.ev_draw_cum[ri]);
            } else {
                demand += ctx.composed.ev_flexible_profile[ri][t];
            }
            let avail = self.vre_pv[ri] + self.vre_wind[ri];
            self.positions[ri] = avail - demand - forced_ev;
            self.rows[ri] = RegionInterval {
                demand,
                vre_used: avail,
                ev_charge: forced_ev,
                ..RegionInterval::default()
            };
        }

        // Inter-regional transfer of surplus toward deficit.
        self.pre_flow.copy_from_slice(&self.positions);
        self.flows.fill(0.0);
        if !self.flows.is_empty() {
            balance_flows_into(
                &mut self.positions,
                &ctx.topo,
                &self.link_capacities,
                &mut self.flows,
                &mut self.scratch,
            );
        }

        // Close each region's residual locally.
        for ri in 0..nr {
            let row = &mut self.rows[ri];
            row.net_import = self.positions[ri] - self.pre_flow[ri];
            let residual = self.positions[ri];
            if residual < 0.0 {
                let mut deficit = -residual;
                let discharged = self.storage[ri].discharge(deficit);
                deficit -= discharged;
                row.storage_discharge = discharged;
                if deficit > 0.0 {
                    let gw =
                        hydro_bio_dispatch(&mut self.hydro[ri], &mut self.shared_budget, deficit);
                    row.hydro_bio = gw;
                    deficit -= gw;
                }
                row.unserved = deficit.max(0.0);
            } else {
                let mut surplus = residual;
                let charged = self.storage[ri].charge(surplus);
                surplus -= charged;
                row.storage_charge = charged;
                if flags.ev_flexibility_enabled && surplus > 0.0 {
                    let opportunistic = self.ev[ri].opportunistic_charge_gw(surplus, row.ev_charge);
                    row.ev_charge += opportunistic;
                    surplus -= opportunistic;
                }
                row.spill = surplus.max(0.0);
            }
        }

        // EV battery bookkeeping.
        if flags.ev_flexibility_enabled {
            for ri in 0..nr {
                if self.ev[ri].capacity_gwh <= 0.0 {
                    continue;
                }
                let draw_gwh = ctx.ev_draw_cum[ri][t + 1] - ctx.ev_draw_cum[ri][t];
                self.ev[ri].step(self.rows[ri].ev_charge, draw_gwh);
            }
        }

        &self.rows
    }

    /// Signed send-side flow per link for the last stepped interval.
    pub fn link_flows(&self) -> &[f64] {
        &self.flows
    }

    /// PV and wind availability of a region in the last stepped interval.
    pub fn vre_split(&self, region: usize) -> (f64, f64) {
        (self.vre_pv[region], self.vre_wind[region])
    }
}

/// Runs the simulation against a prepared context (the hot path for the
/// optimizer).
pub fn simulate_ctx(
    ctx: &SimContext,
    portfolio: &Portfolio,
    opts: &SimOptions,
) -> Result<DispatchResult, CoreError> {
    let violations = portfolio.validate(ctx.scenario);
    if !violations.is_empty() {
        return Err(CoreError::InvalidPortfolio(violations[0].message.clone()));
    }

    let nr = ctx.scenario.regions.len();
    let n = ctx.horizon;
    let mut state = SimState::new(ctx, portfolio);

    let burn_until = if opts.burn_in_years == 0 {
        0
    } else {
        let cutoff_year = ctx.cal.year_of[0] + opts.burn_in_years as i32;
        ctx.cal
            .year_starts
            .iter()
            .find(|&&(y, _)| y >= cutoff_year)
            .map(|&(_, t)| t)
            .unwrap_or(n)
    };

    let mut years: Vec<(i32, EnergyAggregate)> = Vec::new();
    let mut totals = EnergyAggregate::default();
    let mut regions_agg = vec![EnergyAggregate::default(); nr];
    let mut peak_unserved: f64 = 0.0;
    let mut peak_discharge: f64 = 0.0;
    let mut max_soc: Vec<f64> = state.storage.iter().map(|s| s.soc_gwh).collect();
    let mut min_ev_soc: Vec<f64> = state
        .ev
        .iter()
        .map(|e| if e.capacity_gwh > 0.0 { e.soc_gwh } else { 0.0 })
        .collect();
    let mut records: Option<Vec<IntervalRecord>> =
        opts.record_intervals.then(|| Vec::with_capacity(n));

    for t in 0..n {
        let year = ctx.cal.year_of[t];
        state.step_interval(ctx, portfolio, t);
        if ctx.scenario.flags.ev_flexibility_enabled {
            for (ev, low) in state.ev.iter().zip(min_ev_soc.iter_mut()) {
                if ev.capacity_gwh > 0.0 && ev.soc_gwh < *low {
                    *low = ev.soc_gwh;
                }
            }
        }

        // Aggregate.
        let accounted = t >= burn_until;
        if accounted {
            if year != years.last().map(|&(y, _)| y).unwrap_or(i32::MIN) {
                years.push((year, EnergyAggregate::default()));
            }
            let year_agg = &mut years.last_mut().unwrap().1;
            let line_loss: f64 = state
                .link_flows()
                .iter()
                .zip(&ctx.topo.links)
                .map(|(f, l)| f.abs() * l.loss_rate)
                .sum::<f64>()
                * HOURS_PER_INTERVAL;
            year_agg.line_loss_gwh += line_loss;
            totals.line_loss_gwh += line_loss;
            for ri in 0..nr {
                let row = state.rows[ri];
                let avail = row.vre_used;
                // Curtailment is attributed pro rata to PV and wind.
                let (pv_avail, wind_avail) = state.vre_split(ri);
                let (pv_d, wind_d) = if avail > 0.0 {
                    let kept = (avail - row.spill) / avail;
                    (pv_avail * kept, wind_avail * kept)
                } else {
                    (0.0, 0.0)
                };
                let h = HOURS_PER_INTERVAL;
                let slice = EnergyAggregate {
                    demand_gwh: row.demand * h,
                    unserved_gwh: row.unserved * h,
                    pv_gwh: pv_d * h,
                    wind_gwh: wind_d * h,
                    hydro_bio_gwh: row.hydro_bio * h,
                    vre_available_gwh: avail * h,
                    spill_gwh: row.spill * h,
                    storage_charge_gwh: row.storage_charge * h,
                    storage_discharge_gwh: row.storage_discharge * h,
                    ev_charge_gwh: row.ev_charge * h,
                    line_loss_gwh: 0.0,
                };
                year_agg.add(&slice);
                totals.add(&slice);
                regions_agg[ri].add(&slice);
                if row.unserved > peak_unserved {
                    peak_unserved = row.unserved;
                }
                if row.storage_discharge > peak_discharge {
                    peak_discharge = row.storage_discharge;
                }
                if state.storage[ri].soc_gwh > max_soc[ri] {
                    max_soc[ri] = state.storage[ri].soc_gwh;
                }
            }
            if let Some(rec) = records.as_mut() {
                rec.push(IntervalRecord {
                    index: t,
                    regions: state.rows.clone(),
                    link_flow_gw: state.link_flows().to_vec(),
                    link_loss_gw: state
                        .link_flows()
                        .iter()
                        .zip(&ctx.topo.links)
                        .map(|(f, l)| f.abs() * l.loss_rate)
                        .collect(),
                });
            }
        }
    }

    let accounted_intervals = n - burn_until;
    Ok(DispatchResult {
        years,
        totals,
        regions: regions_agg,
        peak_unserved_gw: peak_unserved,
        peak_storage_discharge_gw: peak_discharge,
        max_storage_soc_gwh: max_soc,
        min_ev_soc_gwh: min_ev_soc,
        accounted_hours: accounted_intervals as f64 * HOURS_PER_INTERVAL,
        horizon: n,
        intervals: records,
    })
}

/// Hydro/bio dispatch against both the per-region budget and, when
/// configured, the shared system-wide budget.
fn hydro_bio_dispatch(
    budget: &mut Option<HydroBioBudget>,
    shared: &mut Option<f64>,
    residual_gw: f64,
) -> f64 {
    let Some(b) = budget.as_mut() else {
        return 0.0;
    };
    match shared {
        None => b.dispatch(residual_gw),
        Some(pool_gwh) => {
            // Shared scope replaces the per-region energy budget; the power
            // cap still applies.
            let by_pool = *pool_gwh / HOURS_PER_INTERVAL;
            let gw = residual_gw.min(b.power_cap_gw).min(by_pool).max(0.0);
            *pool_gwh -= gw * HOURS_PER_INTERVAL;
            gw
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::{
        anti_correlated_traces, constant_traces, single_region_scenario, two_region_scenario,
    };

    #[test]
    fn storage_round_trip_is_80_percent() {
        let mut s = StorageState::new(100.0, 1000.0);
        s.soc_gwh = 0.0;
        // Push 10 GWh of grid energy in (20 GW for one interval).
        let accepted = s.charge(20.0);
        assert!((accepted - 20.0).abs() < 1e-12);
        let stored = s.soc_gwh;
        // Drain fully.
        let mut delivered = 0.0;
        for _ in 0..100 {
            delivered += s.discharge(100.0) * HOURS_PER_INTERVAL;
        }
        assert!(s.soc_gwh < 1e-9);
        let round_trip = delivered / (accepted * HOURS_PER_INTERVAL);
        assert!((round_trip - 0.80).abs() < 1e-4, "round trip {round_trip}");
        let _ = stored;
    }

    #[test]
    fn storage_discharge_from_empty_is_zero() {
        let mut s = StorageState::new(5.0, 10.0);
        s.soc_gwh = 0.0;
        assert_eq!(s.discharge(3.0), 0.0);
    }

    #[test]
    fn storage_charge_respects_power_cap() {
        let mut s = StorageState::new(2.0, 100.0);
        s.soc_gwh = 0.0;
        assert_eq!(s.charge(5.0), 2.0);
    }

    #[test]
    fn storage_charge_respects_headroom() {
        // Surplus 3 GW, headroom 1 GWh, power cap 1 GW → accept 1 GW.
        let mut s = StorageState::new(1.0, 1.0);
        s.soc_gwh = 0.0;
        let accepted = s.charge(3.0);
        assert!((accepted - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hydro_budget_limits_dispatch() {
        let mut b = HydroBioBudget::new(7.0, 1.0);
        b.year_used_gwh = b.annual_cap_gwh - 0.5;
        // Remaining 0.5 GWh over half an hour supports 1 GW.
        assert!((b.dispatch(3.0) - 1.0).abs() < 1e-12);
        assert!(b.remaining_gwh() < 1e-12);
        assert_eq!(b.dispatch(3.0), 0.0);
        b.reset_year();
        assert!((b.dispatch(3.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ev_forced_charge_protects_floor_over_window() {
        // Hand-rolled 4-interval window: capacity 10, floor 2.5, SoC 2.6,
        // upcoming battery draws 0.2, 0.2 GWh then nothing.
        let ev = EvAggregateState {
            soc_gwh: 2.6,
            capacity_gwh: 10.0,
            max_charge_gw: 50.0,
            min_soc_fraction: 0.25,
            charge_eff: 0.85,
            lookahead_intervals: 4,
        };
        let draw_cum = vec![0.0, 0.2, 0.4, 0.4, 0.4];
        let forced = ev.forced_charge_gw(0, &draw_cum);
        // Needed 0.3 GWh → 0.3 / (0.5 × 0.85) ≈ 0.70588 GW.
        assert!(
            (forced - 0.3 / (0.5 * 0.85)).abs() < 1e-6,
            "forced {forced}"
        );
        // Applying it keeps the floor at the window end.
        let mut ev2 = ev.clone();
        ev2.step(forced, 0.2);
        ev2.step(ev2.forced_charge_gw(1, &draw_cum), 0.2);
        assert!(ev2.soc_gwh >= 2.5);
    }

    #[test]
    fn ev_opportunistic_charge_takes_surplus() {
        let ev = EvAggregateState {
            soc_gwh: 5.0,
            capacity_gwh: 10.0,
            max_charge_gw: 3.0,
            min_soc_fraction: 0.25,
            charge_eff: 0.85,
            lookahead_intervals: 48,
        };
        let draw_cum = vec![0.0; 49];
        let charge = ev.flexible_charge(0, &draw_cum, 2.0, 0.0);
        assert!((charge - 2.0).abs() < 1e-12);
        // Ample surplus is limited by the charge-power cap.
        let charge = ev.flexible_charge(0, &draw_cum, 50.0, 0.0);
        assert!((charge - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ev_defers_when_no_surplus_and_floor_safe() {
        let ev = EvAggregateState {
            soc_gwh: 8.0,
            capacity_gwh: 10.0,
            max_charge_gw: 3.0,
            min_soc_fraction: 0.25,
            charge_eff: 0.85,
            lookahead_intervals: 48,
        };
        let draw_cum: Vec<f64> = (0..49).map(|i| i as f64 * 0.01).collect();
        assert_eq!(ev.flexible_charge(0, &draw_cum, 0.0, 1.0), 0.0);
    }

    #[test]
    fn step_interval_deficit_served_by_storage() {
        // Deficit 1 GW, ample SoC, 2 GW power cap: discharge 1, unserved 0.
        let scenario = single_region_scenario();
        let traces = constant_traces(&scenario, 0.0, 0.0, 1.0, 48);
        let profiles = crate::demand::ProfileSet::with_builtins();
        let ctx = SimContext::new(&scenario, &traces, &profiles).unwrap();
        let mut p = Portfolio::zeros(&scenario);
        p.storage_power_gw[0] = 2.0;
        p.storage_energy_gwh[0] = 20.0;
        let mut state = SimState::new(&ctx, &p);
        let rows = state.step_interval(&ctx, &p, 0);
        assert!((rows[0].storage_discharge - 1.0).abs() < 1e-12);
        assert_eq!(rows[0].unserved, 0.0);
        assert!(rows[0].balance_residual().abs() < 1e-12);
    }

    #[test]
    fn step_interval_exhausted_resources_leave_unserved() {
        // Deficit 1 GW, empty storage, hydro/bio budget used up: unserved 1.
        let mut scenario = single_region_scenario();
        scenario.regions[0].hydro_bio = Some(crate::scenario::HydroBio {
            power_cap_gw: 5.0,
            annual_cap_twh: 0.001,
        });
        let traces = constant_traces(&scenario, 0.0, 0.0, 1.0, 48);
        let profiles = crate::demand::ProfileSet::with_builtins();
        let ctx = SimContext::new(&scenario, &traces, &profiles).unwrap();
        let p = Portfolio::zeros(&scenario);
        let mut state = SimState::new(&ctx, &p);
        let budget = state.hydro[0].as_mut().unwrap();
        budget.year_used_gwh = budget.annual_cap_gwh;
        let rows = state.step_interval(&ctx, &p, 0);
        assert_eq!(rows[0].hydro_bio, 0.0);
        assert!((rows[0].unserved - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_interval_surplus_split_between_storage_and_spill() {
        // Surplus 3 GW, storage headroom 1 GWh, power cap 1 GW: charge 1,
        // spill 2.
        let scenario = single_region_scenario();
        let traces = constant_traces(&scenario, 0.0, 1.0, 0.0, 48);
        let profiles = crate::demand::ProfileSet::with_builtins();
        let ctx = SimContext::new(&scenario, &traces, &profiles).unwrap();
        let mut p = Portfolio::zeros(&scenario);
        p.wind_gw[0] = 3.0;
        p.storage_power_gw[0] = 1.0;
        p.storage_energy_gwh[0] = 10.0;
        let mut state = SimState::new(&ctx, &p);
        state.storage[0].soc_gwh = 9.0;
        let rows = state.step_interval(&ctx, &p, 0);
        assert!((rows[0].storage_charge - 1.0).abs() < 1e-12);
        assert!((rows[0].spill - 2.0).abs() < 1e-12);
        assert!(rows[0].balance_residual().abs() < 1e-12);
    }

    #[test]
    fn simulate_overbuilt_wind_spills() {
        // Demand 1 GW flat, wind 2 GW at CF 1.0, no storage: no unserved,
        // spill 1 GW every interval.
        let scenario = single_region_scenario();
        let traces = constant_traces(&scenario, 0.0, 1.0, 1.0, 48 * 14);
        let mut p = Portfolio::zeros(&scenario);
        p.wind_gw[0] = 2.0;
        let dr = simulate(&scenario, &p, &traces).unwrap();
        assert_eq!(dr.totals.unserved_gwh, 0.0);
        let hours = dr.accounted_hours;
        assert!((dr.totals.spill_gwh - 1.0 * hours).abs() < 1e-6);
        assert!((dr.totals.wind_gwh - 1.0 * hours).abs() < 1e-6);
    }

    #[test]
    fn simulate_zero_portfolio_serves_nothing() {
        let scenario = single_region_scenario();
        let traces = constant_traces(&scenario, 0.3, 0.4, 1.0, 48 * 7);
        let p = Portfolio::zeros(&scenario);
        let dr = simulate(&scenario, &p, &traces).unwrap();
        assert!((dr.totals.unserved_gwh - dr.totals.demand_gwh).abs() < 1e-9);
        let rel = reliability(&dr);
        assert!((rel.overall_fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interconnection_never_hurts() {
        let (scenario, traces) = {
            let s = two_region_scenario();
            let t = anti_correlated_traces(&s, 48 * 28);
            (s, t)
        };
        let mut p = Portfolio::zeros(&scenario);
        p.wind_gw = vec![1.4, 1.4];
        p.link_capacity_gw = vec![2.0];
        let with_link = simulate(&scenario, &p, &traces).unwrap();
        let mut off = scenario.clone();
        off.flags.interconnection_enabled = false;
        let without_link = simulate(&off, &p, &traces).unwrap();
        assert!(with_link.totals.unserved_gwh <= without_link.totals.unserved_gwh + 1e-9);
        assert!(with_link.totals.unserved_gwh < without_link.totals.unserved_gwh - 1e-6);
    }

    #[test]
    fn system_wide_hydro_cap_pools_the_budget() {
        use crate::scenario::{HydroBio, HydroBioCapScope};
        // Two hydro regions, each capped at 3 TWh individually, but a shared
        // 4 TWh pool replaces the per-region budgets.
        let mut scenario = two_region_scenario();
        scenario.flags.interconnection_enabled = false;
        for r in &mut scenario.regions {
            r.hydro_bio = Some(HydroBio {
                power_cap_gw: 2.0,
                annual_cap_twh: 3.0,
            });
        }
        scenario.hydro_bio_cap_scope = HydroBioCapScope::SystemWide(4.0);
        let intervals = crate::calendar::intervals_in_years(2021, 1);
        let traces = constant_traces(&scenario, 0.0, 0.0, 2.0, intervals);
        let p = Portfolio::zeros(&scenario);
        let dr = simulate(&scenario, &p, &traces).unwrap();
        let total = dr.totals.hydro_bio_gwh;
        assert!(
            (total - 4_000.0).abs() < 1.0,
            "shared pool should bind at 4 TWh, dispatched {total} GWh"
        );
        // Per-region scope would have allowed 6 TWh.
        scenario.hydro_bio_cap_scope = HydroBioCapScope::PerRegion;
        let dr = simulate(&scenario, &p, &traces).unwrap();
        assert!((dr.totals.hydro_bio_gwh - 6_000.0).abs() < 1.0);
    }

    #[test]
    fn flexibility_disabled_charges_on_the_profile() {
        // With flexibility off, EV charging is part of inflexible demand and
        // follows the travel profile verbatim: the demand column equals the
        // composed base plus the flexible profile, and no ev_charge appears.
        let mut scenario = single_region_scenario();
        scenario.demand.fleets.push(crate::demand::FleetClass {
            name: "cars".into(),
            count: 0.5e6,
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
        scenario.flags.ev_flexibility_enabled = false;
        let traces = constant_traces(&scenario, 0.3, 0.5, 1.0, 48 * 3);
        let profiles = crate::demand::ProfileSet::with_builtins();
        let ctx = SimContext::new(&scenario, &traces, &profiles).unwrap();
        let mut p = Portfolio::zeros(&scenario);
        p.wind_gw[0] = 10.0;
        let mut state = SimState::new(&ctx, &p);
        for t in 0..ctx.horizon() {
            let rows = state.step_interval(&ctx, &p, t);
            let expected = ctx.composed.demand[0][t] + ctx.composed.ev_flexible_profile[0][t];
            assert!((rows[0].demand - expected).abs() < 1e-12);
            assert_eq!(rows[0].ev_charge, 0.0);
        }
    }

    #[test]
    fn reliability_isolates_years() {
        // Ample wind in year one, nothing in year two: the first year's
        // unserved fraction is exactly zero.
        let scenario = single_region_scenario();
        let intervals = crate::calendar::intervals_in_years(2021, 2);
        let start = crate::calendar::Timestamp::from_ymd_hm(2021, 1, 1, 0, 0).unwrap();
        let year1 = crate::calendar::intervals_in_years(2021, 1);
        let wind: Vec<f64> = (0..intervals)
            .map(|t| if t < year1 { 1.0 } else { 0.0 })
            .collect();
        let traces = crate::trace::align(vec![
            (
                "pv0".into(),
                crate::trace::TimeSeries::half_hourly(start, vec![0.0; intervals]),
            ),
            (
                "wind0".into(),
                crate::trace::TimeSeries::half_hourly(start, wind),
            ),
            (
                "demand0".into(),
                crate::trace::TimeSeries::half_hourly(start, vec![1.0; intervals]),
            ),
        ])
        .unwrap();
        let mut p = Portfolio::zeros(&scenario);
        p.wind_gw[0] = 2.0;
        let dr = simulate(&scenario, &p, &traces).unwrap();
        let rel = reliability(&dr);
        assert_eq!(rel.per_year.len(), 2);
        assert_eq!(rel.per_year[0], (2021, 0.0));
        assert!((rel.per_year[1].1 - 1.0).abs() < 1e-12);
        assert!(rel.overall_fraction > 0.0 && rel.overall_fraction < 1.0);
    }

    #[test]
    fn reliability_hand_arithmetic() {
        let mut dr = DispatchResult::empty_for_test(1);
        dr.totals = EnergyAggregate {
            demand_gwh: 1e5,
            unserved_gwh: 1.0,
            ..Default::default()
        };
        dr.years = vec![(2020, dr.totals)];
        let rel = reliability(&dr);
        assert!((rel.overall_fraction - 1e-5).abs() < 1e-15);
    }

    #[test]
    fn yearly_aggregates_sum_to_totals() {
        let scenario = single_region_scenario();
        let traces = constant_traces(
            &scenario,
            0.3,
            0.4,
            1.0,
            crate::calendar::intervals_in_years(2021, 2),
        );
        let mut p = Portfolio::zeros(&scenario);
        p.pv_gw[0] = 2.0;
        p.wind_gw[0] = 1.0;
        p.storage_power_gw[0] = 1.0;
        p.storage_energy_gwh[0] = 8.0;
        let dr = simulate(&scenario, &p, &traces).unwrap();
        assert_eq!(dr.years.len(), 2);
        let sum: f64 = dr.years.iter().map(|(_, a)| a.demand_gwh).sum();
        assert!((sum - dr.totals.demand_gwh).abs() / dr.totals.demand_gwh < 1e-9);
        let sum_un: f64 = dr.years.iter().map(|(_, a)| a.unserved_gwh).sum();
        assert!((sum_un - dr.totals.unserved_gwh).abs() <= 1e-9 * dr.totals.unserved_gwh.max(1.0));
    }
}
