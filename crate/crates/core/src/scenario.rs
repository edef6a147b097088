//! Scenario domain model: regions, zones, interconnectors, technology costs
//! and scenario flags, plus structural validation and topology construction.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::demand::DemandSpec;
use crate::network::line_loss_rate;

pub type RegionId = String;
pub type ZoneId = String;
pub type TraceId = String;
pub type LinkId = String;

pub const DEFAULT_RESERVE_FRACTION: f64 = 0.25;
pub const DEFAULT_EV_FLEXIBLE_SHARE: f64 = 0.80;
pub const DEFAULT_EV_MIN_SOC: f64 = 0.25;
/// Maximum tolerated unserved-energy fraction per year (0.002% of demand).
pub const DEFAULT_RELIABILITY_LIMIT: f64 = 0.00002;

/// A renewable energy zone: a point where PV and wind capacity can be built,
/// attached to its host region by HVAC connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: ZoneId,
    pub pv_trace: TraceId,
    pub wind_trace: TraceId,
    /// HVAC connection cost override, $/kW of installed generation;
    /// falls back to the scenario-wide HVAC rate.
    pub hvac_cost_per_kw: Option<f64>,
}

/// Dispatchable hydro/bio head: power-capped and energy-budgeted per
/// calendar year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydroBio {
    pub power_cap_gw: f64,
    pub annual_cap_twh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: RegionId,
    pub zones: Vec<Zone>,
    /// Present when the region has dispatchable hydro/bio.
    pub hydro_bio: Option<HydroBio>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Overhead,
    Submarine,
}

/// A point-to-point HVDC transfer corridor between two regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interconnector {
    pub id: LinkId,
    pub from: RegionId,
    pub to: RegionId,
    pub length_km: f64,
    pub kind: LinkKind,
    /// N-1 reserve added to capital cost (not usable transfer capacity).
    pub reserve_fraction: f64,
    /// Capacity available at zero capital cost; optimizer decisions add new
    /// capacity on top of this.
    pub existing_capacity_gw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechCost {
    pub capital_per_kw: f64,
    pub fom_per_kw_yr: f64,
    pub vom_per_mwh: f64,
    pub lifetime_years: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageCost {
    /// Power components: turbines, generators, pipes, transformers.
    pub power_per_kw: f64,
    /// Energy components: dams, reservoirs, water.
    pub energy_per_kwh: f64,
    pub fom_per_kw_yr: f64,
    pub lifetime_years: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvdcCost {
    pub overhead_per_mw_km: f64,
    pub overhead_converter_per_mw: f64,
    pub submarine_per_kw: f64,
    pub lifetime_years: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvacCost {
    pub per_kw: f64,
    pub lifetime_years: u32,
    /// Fraction of storage power capacity also charged at the HVAC rate
    /// (zones connect generation; storage connection is configurable).
    pub storage_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologyCosts {
    pub discount_rate_real: f64,
    pub pv: TechCost,
    pub wind: TechCost,
    pub storage: StorageCost,
    pub hvdc: HvdcCost,
    pub hvac: HvacCost,
    pub hydro_bio_price_per_mwh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFlags {
    pub interconnection_enabled: bool,
    pub ev_flexibility_enabled: bool,
    /// Default flexible share applied to fleets that do not set their own.
    pub ev_flexible_share: f64,
    pub ev_min_soc: f64,
    /// Forced-charge projection window for the EV aggregate, hours.
    pub ev_lookahead_hours: f64,
}

impl Default for ScenarioFlags {
    fn default() -> Self {
        ScenarioFlags {
            interconnection_enabled: true,
            ev_flexibility_enabled: false,
            ev_flexible_share: DEFAULT_EV_FLEXIBLE_SHARE,
            ev_min_soc: DEFAULT_EV_MIN_SOC,
            ev_lookahead_hours: 24.0,
        }
    }
}

/// Scope of the hydro/bio annual energy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HydroBioCapScope {
    /// Each region consumes its own annual budget.
    PerRegion,
    /// One shared system-wide annual budget (TWh); per-region power caps
    /// still apply.
    SystemWide(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub regions: Vec<Region>,
    pub interconnectors: Vec<Interconnector>,
    pub costs: TechnologyCosts,
    pub flags: ScenarioFlags,
    pub demand: DemandSpec,
    /// Maximum tolerated unserved-energy fraction per year.
    pub reliability_limit: f64,
    pub hydro_bio_cap_scope: HydroBioCapScope,
}

impl Scenario {
    pub fn region_index(&self) -> BTreeMap<&str, usize> {
        self.regions
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect()
    }

    /// Zones in declaration order with their host region index; this order
    /// defines the portfolio and decision-vector layout.
    pub fn zones(&self) -> Vec<(usize, &Zone)> {
        self.regions
            .iter()
            .enumerate()
            .flat_map(|(ri, r)| r.zones.iter().map(move |z| (ri, z)))
            .collect()
    }

    pub fn zone_count(&self) -> usize {
        self.regions.iter().map(|r| r.zones.len()).sum()
    }
}

/// A single validation finding; validation reports data rather than failing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
}

impl Violation {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Violation {
            code,
            message: message.into(),
        }
    }
}

fn fraction_ok(v: f64) -> bool {
    (0.0..=1.0).contains(&v) && v.is_finite()
}

/// Checks every structural invariant of the scenario. An empty result means
/// the scenario is valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut v = Vec::new();

    if s.regions.is_empty() {
        v.push(Violation::new(
            "empty_regions",
            "scenario declares no regions",
        ));
    }
    let mut region_ids = BTreeSet::new();
    let mut zone_ids = BTreeSet::new();
    for r in &s.regions {
        if !region_ids.insert(r.id.as_str()) {
            v.push(Violation::new(
                "duplicate_id",
                format!("duplicate region id '{}'", r.id),
            ));
        }
        if r.zones.is_empty() {
            v.push(Violation::new(
                "empty_zones",
                format!("region '{}' has no zones", r.id),
            ));
        }
        for z in &r.zones {
            if !zone_ids.insert(z.id.as_str()) {
                v.push(Violation::new(
                    "duplicate_id",
                    format!("duplicate zone id '{}'", z.id),
                ));
            }
            if let Some(rate) = z.hvac_cost_per_kw {
                if rate < 0.0 {
                    v.push(Violation::new(
                        "negative_cost",
                        format!("zone '{}' HVAC cost rate is negative", z.id),
                    ));
                }
            }
        }
        if let Some(hb) = &r.hydro_bio {
            if hb.power_cap_gw < 0.0 || hb.annual_cap_twh < 0.0 {
                v.push(Violation::new(
                    "negative_cap",
                    format!("region '{}' hydro/bio caps must be non-negative", r.id),
                ));
            }
        }
    }

    let mut link_ids = BTreeSet::new();
    for l in &s.interconnectors {
        if !link_ids.insert(l.id.as_str()) {
            v.push(Violation::new(
                "duplicate_id",
                format!("duplicate interconnector id '{}'", l.id),
            ));
        }
        for end in [&l.from, &l.to] {
            if !region_ids.contains(end.as_str()) {
                v.push(Violation::new(
                    "unknown_region",
                    format!(
                        "interconnector '{}' references undeclared region '{}'",
                        l.id, end
                    ),
                ));
            }
        }
        if l.from == l.to {
            v.push(Violation::new(
                "self_loop",
                format!("interconnector '{}' connects '{}' to itself", l.id, l.from),
            ));
        }
        if l.length_km <= 0.0 || l.length_km.is_nan() {
            v.push(Violation::new(
                "nonpositive_length",
                format!("interconnector '{}' length must be > 0", l.id),
            ));
        }
        if !fraction_ok(l.reserve_fraction) {
            v.push(Violation::new(
                "reserve_out_of_range",
                format!(
                    "interconnector '{}' reserve fraction must be in [0,1]",
                    l.id
                ),
            ));
        }
        if l.existing_capacity_gw < 0.0 {
            v.push(Violation::new(
                "negative_cap",
                format!("interconnector '{}' existing capacity is negative", l.id),
            ));
        }
    }

    validate_costs(&s.costs, &mut v);

    if !fraction_ok(s.flags.ev_min_soc) {
        v.push(Violation::new(
            "soc_out_of_range",
            format!("ev_min_soc {} must be in [0,1]", s.flags.ev_min_soc),
        ));
    }
    if !fraction_ok(s.flags.ev_flexible_share) {
        v.push(Violation::new(
            "share_out_of_range",
            format!(
                "ev_flexible_share {} must be in [0,1]",
                s.flags.ev_flexible_share
            ),
        ));
    }
    if s.flags.ev_lookahead_hours <= 0.0 || s.flags.ev_lookahead_hours.is_nan() {
        v.push(Violation::new(
            "bad_lookahead",
            "ev_lookahead_hours must be > 0",
        ));
    }
    if !fraction_ok(s.reliability_limit) {
        v.push(Violation::new(
            "bad_reliability_limit",
            format!("reliability_limit {} must be in [0,1]", s.reliability_limit),
        ));
    }
    if let HydroBioCapScope::SystemWide(cap) = s.hydro_bio_cap_scope {
        if cap < 0.0 {
            v.push(Violation::new(
                "negative_cap",
                "system-wide hydro/bio cap is negative",
            ));
        }
    }

    crate::demand::validate_demand(&s.demand, &region_ids, &mut v);

    // Connectivity: with interconnection on and more than one region, every
    // region must be reachable.
    if s.flags.interconnection_enabled && s.regions.len() > 1 && v.is_empty() {
        let topo = build_topology(s);
        if !topo.is_connected() {
            v.push(Violation::new(
                "topology_disconnected",
                "interconnection is enabled but the region graph is not connected",
            ));
        }
    }

    v
}

fn validate_costs(c: &TechnologyCosts, v: &mut Vec<Violation>) {
    if c.discount_rate_real < 0.0 || c.discount_rate_real.is_nan() {
        v.push(Violation::new("bad_discount", "discount rate must be >= 0"));
    }
    for (name, t) in [("pv", &c.pv), ("wind", &c.wind)] {
        if t.capital_per_kw < 0.0 || t.fom_per_kw_yr < 0.0 || t.vom_per_mwh < 0.0 {
            v.push(Violation::new(
                "negative_cost",
                format!("{name} costs must be non-negative"),
            ));
        }
        if t.lifetime_years < 1 {
            v.push(Violation::new(
                "bad_lifetime",
                format!("{name} lifetime must be >= 1 year"),
            ));
        }
    }
    if c.storage.power_per_kw < 0.0
        || c.storage.energy_per_kwh < 0.0
        || c.storage.fom_per_kw_yr < 0.0
    {
        v.push(Violation::new(
            "negative_cost",
            "storage costs must be non-negative",
        ));
    }
    if c.storage.lifetime_years < 1 {
        v.push(Violation::new(
            "bad_lifetime",
            "storage lifetime must be >= 1 year",
        ));
    }
    if c.hvdc.overhead_per_mw_km < 0.0
        || c.hvdc.overhead_converter_per_mw < 0.0
        || c.hvdc.submarine_per_kw < 0.0
    {
        v.push(Violation::new(
            "negative_cost",
            "HVDC costs must be non-negative",
        ));
    }
    if c.hvdc.lifetime_years < 1 {
        v.push(Violation::new(
            "bad_lifetime",
            "HVDC lifetime must be >= 1 year",
        ));
    }
    if c.hvac.per_kw < 0.0 || c.hvac.storage_multiplier < 0.0 {
        v.push(Violation::new(
            "negative_cost",
            "HVAC costs must be non-negative",
        ));
    }
    if c.hvac.lifetime_years < 1 {
        v.push(Violation::new(
            "bad_lifetime",
            "HVAC lifetime must be >= 1 year",
        ));
    }
    if c.hydro_bio_price_per_mwh < 0.0 {
        v.push(Violation::new(
            "negative_cost",
            "hydro/bio purchase price must be non-negative",
        ));
    }
}

/// A resolved interconnector inside a [`Topology`].
#[derive(Debug, Clone, PartialEq)]
pub struct TopoLink {
    pub id: LinkId,
    pub from: usize,
    pub to: usize,
    pub length_km: f64,
    pub loss_rate: f64,
    pub kind: LinkKind,
    pub reserve_fraction: f64,
    pub existing_capacity_gw: f64,
}

/// Region/interconnector adjacency with per-link loss rates. Immutable after
/// construction and shared read-only across evaluator workers.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub region_ids: Vec<RegionId>,
    pub links: Vec<TopoLink>,
    /// Per region: `(link index, neighbour region index)`, ordered by
    /// lexicographic link id for deterministic traversal.
    pub adjacency: Vec<Vec<(usize, usize)>>,
}

/// Builds the transfer topology. With interconnection disabled the regions
/// become isolated nodes.
pub fn build_topology(s: &Scenario) -> Topology {
    let region_ids: Vec<RegionId> = s.regions.iter().map(|r| r.id.clone()).collect();
    let index = s.region_index();
    let mut links: Vec<TopoLink> = Vec::new();
    if s.flags.interconnection_enabled {
        for l in &s.interconnectors {
            let (Some(&from), Some(&to)) = (index.get(l.from.as_str()), index.get(l.to.as_str()))
            else {
                continue;
            };
            links.push(TopoLink {
                id: l.id.clone(),
                from,
                to,
                length_km: l.length_km,
                loss_rate: line_loss_rate(l.length_km),
                kind: l.kind,
                reserve_fraction: l.reserve_fraction,
                existing_capacity_gw: l.existing_capacity_gw,
            });
        }
        links.sort_by(|a, b| a.id.cmp(&b.id));
    }
    let mut adjacency = vec![Vec::new(); region_ids.len()];
    for (li, l) in links.iter().enumerate() {
        adjacency[l.from].push((li, l.to));
        adjacency[l.to].push((li, l.from));
    }
    Topology {
        region_ids,
        links,
        adjacency,
    }
}

impl Topology {
    pub fn node_count(&self) -> usize {
        self.region_ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.links.len()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(r) = stack.pop() {
            for &(_, nb) in &self.adjacency[r] {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        seen.into_iter().all(|x| x)
    }
}
