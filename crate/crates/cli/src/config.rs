//! Scenario configuration file format (TOML), portfolio files, and the
//! assembly of core domain types from them.
//!
//! Files are fail-closed: unknown keys are errors and `schema_version`
//! must match. The documented schema lives in `docs/scenario-format.md`.

use anyhow::{anyhow, bail, Context, Result};
use gridopt_core::calendar::{intervals_in_years, Timestamp};
use gridopt_core::demand::{
    DemandSpec, FleetClass, HeatingSpec, Profile, ProfileSet, DEFAULT_BATTERY_KWH,
    DEFAULT_CHARGE_POWER_KW, DEFAULT_CHARGING_EFFICIENCY, DEFAULT_EV_DISPATCH_CHARGE_EFF,
    DEFAULT_TND_LOSS, DEFAULT_VAMPIRE_LOSS_PER_DAY,
};
use gridopt_core::dispatch::Portfolio;
use gridopt_core::optimizer::DeConfig;
use gridopt_core::scenario::*;
use gridopt_core::trace::{synth_trace, SynthKind, SynthSpec, TraceSet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub schema_version: u32,
    pub id: String,
    pub horizon: RawHorizon,
    #[serde(default)]
    pub flags: RawFlags,
    #[serde(default = "default_reliability_limit")]
    pub reliability_limit: f64,
    /// When set, hydro/bio consumes one shared system-wide annual budget
    /// instead of per-region budgets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hydro_bio_system_cap_twh: Option<f64>,
    pub costs: RawCosts,
    #[serde(rename = "region")]
    pub regions: Vec<RawRegion>,
    #[serde(
        rename = "interconnector",
        default,
        skip_serializing_if = "Vec::is_empty"
    )]
    pub interconnectors: Vec<RawInterconnector>,
    #[serde(default)]
    pub demand: RawDemand,
    pub traces: BTreeMap<String, TraceConfig>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub profiles: BTreeMap<String, ProfileConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<RawOptimize>,
}

fn default_reliability_limit() -> f64 {
    DEFAULT_RELIABILITY_LIMIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHorizon {
    /// ISO timestamp of the first interval, e.g. `2021-01-01T00:00`.
    pub start: String,
    /// Whole calendar years simulated from `start`.
    pub years: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawFlags {
    pub interconnection_enabled: bool,
    pub ev_flexibility_enabled: bool,
    pub ev_flexible_share: f64,
    pub ev_min_soc: f64,
    pub ev_lookahead_hours: f64,
}

impl Default for RawFlags {
    fn default() -> Self {
        let f = ScenarioFlags::default();
        RawFlags {
            interconnection_enabled: f.interconnection_enabled,
            ev_flexibility_enabled: f.ev_flexibility_enabled,
            ev_flexible_share: f.ev_flexible_share,
            ev_min_soc: f.ev_min_soc,
            ev_lookahead_hours: f.ev_lookahead_hours,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCosts {
    pub discount_rate_real: f64,
    pub pv: RawTechCost,
    pub wind: RawTechCost,
    pub storage: RawStorageCost,
    pub hvdc: RawHvdcCost,
    pub hvac: RawHvacCost,
    pub hydro_bio_price_per_mwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTechCost {
    pub capital_per_kw: f64,
    pub fom_per_kw_yr: f64,
    pub vom_per_mwh: f64,
    pub lifetime_years: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStorageCost {
    pub power_per_kw: f64,
    pub energy_per_kwh: f64,
    pub fom_per_kw_yr: f64,
    pub lifetime_years: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHvdcCost {
    pub overhead_per_mw_km: f64,
    pub overhead_converter_per_mw: f64,
    pub submarine_per_kw: f64,
    pub lifetime_years: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHvacCost {
    pub per_kw: f64,
    pub lifetime_years: u32,
    #[serde(default)]
    pub storage_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRegion {
    pub id: String,
    pub base_demand_trace: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hydro_bio: Option<RawHydroBio>,
    #[serde(rename = "zone")]
    pub zones: Vec<RawZone>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHydroBio {
    pub power_cap_gw: f64,
    pub annual_cap_twh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawZone {
    pub id: String,
    pub pv_trace: String,
    pub wind_trace: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hvac_cost_per_kw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInterconnector {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length_km: f64,
    pub kind: LinkKind,
    #[serde(default = "default_reserve")]
    pub reserve_fraction: f64,
    #[serde(default)]
    pub existing_capacity_gw: f64,
}

fn default_reserve() -> f64 {
    DEFAULT_RESERVE_FRACTION
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawDemand {
    pub industry_gw: f64,
    #[serde(rename = "fleet", skip_serializing_if = "Vec::is_empty")]
    pub fleets: Vec<RawFleet>,
    #[serde(rename = "heating", skip_serializing_if = "Vec::is_empty")]
    pub heating: Vec<RawHeating>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shares: Option<RawShares>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ev_charge_eff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawShares {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heating: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub industry: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFleet {
    pub name: String,
    pub count: f64,
    pub annual_km: f64,
    pub energy_intensity_kwh_per_100km: f64,
    pub travel_profile: String,
    #[serde(default = "default_charging_eff")]
    pub charging_efficiency: f64,
    #[serde(default = "default_vampire")]
    pub vampire_loss_per_day: f64,
    #[serde(default = "default_tnd")]
    pub tnd_loss: f64,
    /// Defaults to `flags.ev_flexible_share`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flexible_share: Option<f64>,
    #[serde(default = "default_battery")]
    pub battery_kwh: f64,
    #[serde(default = "default_charge_power")]
    pub charge_power_kw: f64,
}

fn default_charging_eff() -> f64 {
    DEFAULT_CHARGING_EFFICIENCY
}

fn default_vampire() -> f64 {
    DEFAULT_VAMPIRE_LOSS_PER_DAY
}

fn default_tnd() -> f64 {
    DEFAULT_TND_LOSS
}

fn default_battery() -> f64 {
    DEFAULT_BATTERY_KWH
}

fn default_charge_power() -> f64 {
    DEFAULT_CHARGE_POWER_KW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHeating {
    pub name: String,
    pub fuel_energy_pj: f64,
    pub fuel_efficiency: f64,
    pub cop: f64,
    pub profile: String,
    #[serde(default = "default_tnd")]
    pub tnd_loss: f64,
}

/// Where a trace's values come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceConfig {
    /// Column of a CSV file; `path` is relative to the scenario file.
    Csv {
        path: String,
        column: String,
        #[serde(default)]
        values: ValueKind,
        /// Accept coarser steps and linearly downscale to 30 minutes.
        #[serde(default)]
        resample: bool,
    },
    /// Deterministic synthetic series.
    Synthetic {
        profile: SynthKind,
        seed: u64,
        mean: f64,
        #[serde(default)]
        diurnal_amplitude: f64,
        #[serde(default)]
        noise: f64,
        #[serde(
            default = "default_daylight_start",
            skip_serializing_if = "is_default_daylight_start"
        )]
        daylight_start_hour: f64,
        #[serde(
            default = "default_daylight_end",
            skip_serializing_if = "is_default_daylight_end"
        )]
        daylight_end_hour: f64,
    },
}

fn default_daylight_start() -> f64 {
    6.0
}

fn default_daylight_end() -> f64 {
    18.0
}

fn is_default_daylight_start(v: &f64) -> bool {
    *v == 6.0
}

fn is_default_daylight_end(v: &f64) -> bool {
    *v == 18.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    /// Bounded to [0, 1]; values up to 1.05 are clamped with a warning,
    /// anything larger is an error.
    #[default]
    CapacityFactor,
    /// Non-negative power in GW.
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    /// CSV weight file with 48 or 17,520 rows, relative to the scenario file.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOptimize {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub differential_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossover_rate: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_weight: Option<f64>,
    pub bounds: RawBounds,
}

/// Upper bounds of the decision variables (lower bounds are zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBounds {
    pub pv_max_gw: f64,
    pub wind_max_gw: f64,
    pub storage_power_max_gw: f64,
    pub storage_energy_max_gwh: f64,
    #[serde(default)]
    pub link_max_gw: f64,
}

/// A parsed scenario document: raw config plus the assembled domain model.
#[derive(Debug, Clone)]
pub struct ScenarioDoc {
    pub raw: RawScenario,
    pub scenario: Scenario,
    pub start: Timestamp,
    pub intervals: usize,
    pub base_dir: PathBuf,
}

/// Parses and assembles a scenario, then checks every structural invariant;
/// any violation is an error. `base_dir` anchors relative trace paths.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<ScenarioDoc> {
    let doc = parse_scenario_lenient(text, base_dir)?;
    let violations = validate_scenario(&doc.scenario);
    if !violations.is_empty() {
        let list = violations
            .iter()
            .map(|v| format!("[{}] {}", v.code, v.message))
            .collect::<Vec<_>>()
            .join("; ");
        bail!("scenario is invalid: {list}");
    }
    Ok(doc)
}

/// Parses and assembles without semantic validation (used by `validate`).
pub fn parse_scenario_lenient(text: &str, base_dir: &Path) -> Result<ScenarioDoc> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| anyhow!("scenario parse error: {e}"))?;
    if raw.schema_version != SCHEMA_VERSION {
        bail!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            raw.schema_version
        );
    }
    let start = Timestamp::parse_iso(&raw.horizon.start).context("horizon.start")?;
    if raw.horizon.years == 0 {
        bail!("horizon.years must be at least 1");
    }
    let intervals = intervals_in_years(start.year(), raw.horizon.years);
    let scenario = build_scenario(&raw)?;
    Ok(ScenarioDoc {
        raw,
        scenario,
        start,
        intervals,
        base_dir: base_dir.to_path_buf(),
    })
}

/// Renders a scenario document back to TOML. `parse(render(s))` yields an
/// equivalent scenario.
pub fn render_scenario(raw: &RawScenario) -> Result<String> {
    toml::to_string_pretty(raw).context("render scenario")
}

fn build_scenario(raw: &RawScenario) -> Result<Scenario> {
    let regions = raw
        .regions
        .iter()
        .map(|r| Region {
            id: r.id.clone(),
            zones: r
                .zones
                .iter()
                .map(|z| Zone {
                    id: z.id.clone(),
                    pv_trace: z.pv_trace.clone(),
                    wind_trace: z.wind_trace.clone(),
                    hvac_cost_per_kw: z.hvac_cost_per_kw,
                })
                .collect(),
            hydro_bio: r.hydro_bio.map(|hb| HydroBio {
                power_cap_gw: hb.power_cap_gw,
                annual_cap_twh: hb.annual_cap_twh,
            }),
        })
        .collect();
    let interconnectors = raw
        .interconnectors
        .iter()
        .map(|l| Interconnector {
            id: l.id.clone(),
            from: l.from.clone(),
            to: l.to.clone(),
            length_km: l.length_km,
            kind: l.kind,
            reserve_fraction: l.reserve_fraction,
            existing_capacity_gw: l.existing_capacity_gw,
        })
        .collect();
    let flags = ScenarioFlags {
        interconnection_enabled: raw.flags.interconnection_enabled,
        ev_flexibility_enabled: raw.flags.ev_flexibility_enabled,
        ev_flexible_share: raw.flags.ev_flexible_share,
        ev_min_soc: raw.flags.ev_min_soc,
        ev_lookahead_hours: raw.flags.ev_lookahead_hours,
    };
    let demand = DemandSpec {
        base_demand_trace: raw
            .regions
            .iter()
            .map(|r| (r.id.clone(), r.base_demand_trace.clone()))
            .collect(),
        fleets: raw
            .demand
            .fleets
            .iter()
            .map(|f| FleetClass {
                name: f.name.clone(),
                count: f.count,
                annual_km: f.annual_km,
                energy_intensity_kwh_per_100km: f.energy_intensity_kwh_per_100km,
                charging_efficiency: f.charging_efficiency,
                vampire_loss_per_day: f.vampire_loss_per_day,
                tnd_loss: f.tnd_loss,
                flexible_share: f.flexible_share.unwrap_or(flags.ev_flexible_share),
                battery_kwh: f.battery_kwh,
                charge_power_kw: f.charge_power_kw,
                travel_profile: f.travel_profile.clone(),
            })
            .collect(),
        heating: raw
            .demand
            .heating
            .iter()
            .map(|h| HeatingSpec {
                name: h.name.clone(),
                fuel_energy_pj: h.fuel_energy_pj,
                fuel_efficiency: h.fuel_efficiency,
                cop: h.cop,
                tnd_loss: h.tnd_loss,
                profile: h.profile.clone(),
            })
            .collect(),
        industry_gw: raw.demand.industry_gw,
        transport_shares: raw.demand.shares.as_ref().and_then(|s| s.transport.clone()),
        heating_shares: raw.demand.shares.as_ref().and_then(|s| s.heating.clone()),
        industry_shares: raw.demand.shares.as_ref().and_then(|s| s.industry.clone()),
        ev_charge_eff: raw
            .demand
            .ev_charge_eff
            .unwrap_or(DEFAULT_EV_DISPATCH_CHARGE_EFF),
    };
    Ok(Scenario {
        id: raw.id.clone(),
        regions,
        interconnectors,
        costs: TechnologyCosts {
            discount_rate_real: raw.costs.discount_rate_real,
            pv: TechCost {
                capital_per_kw: raw.costs.pv.capital_per_kw,
                fom_per_kw_yr: raw.costs.pv.fom_per_kw_yr,
                vom_per_mwh: raw.costs.pv.vom_per_mwh,
                lifetime_years: raw.costs.pv.lifetime_years,
            },
            wind: TechCost {
                capital_per_kw: raw.costs.wind.capital_per_kw,
                fom_per_kw_yr: raw.costs.wind.fom_per_kw_yr,
                vom_per_mwh: raw.costs.wind.vom_per_mwh,
                lifetime_years: raw.costs.wind.lifetime_years,
            },
            storage: StorageCost {
                power_per_kw: raw.costs.storage.power_per_kw,
                energy_per_kwh: raw.costs.storage.energy_per_kwh,
                fom_per_kw_yr: raw.costs.storage.fom_per_kw_yr,
                lifetime_years: raw.costs.storage.lifetime_years,
            },
            hvdc: HvdcCost {
                overhead_per_mw_km: raw.costs.hvdc.overhead_per_mw_km,
                overhead_converter_per_mw: raw.costs.hvdc.overhead_converter_per_mw,
                submarine_per_kw: raw.costs.hvdc.submarine_per_kw,
                lifetime_years: raw.costs.hvdc.lifetime_years,
            },
            hvac: HvacCost {
                per_kw: raw.costs.hvac.per_kw,
                lifetime_years: raw.costs.hvac.lifetime_years,
                storage_multiplier: raw.costs.hvac.storage_multiplier,
            },
            hydro_bio_price_per_mwh: raw.costs.hydro_bio_price_per_mwh,
        },
        flags,
        demand,
        reliability_limit: raw.reliability_limit,
        hydro_bio_cap_scope: match raw.hydro_bio_system_cap_twh {
            Some(cap) => HydroBioCapScope::SystemWide(cap),
            None => HydroBioCapScope::PerRegion,
        },
    })
}

/// What `load_traces` reports besides the trace set itself.
#[derive(Debug, Default)]
pub struct TraceLoadReport {
    /// Capacity-factor values clamped to 1.0, per trace.
    pub clamped: BTreeMap<String, u32>,
    /// External files that fed the trace set, in hash order.
    pub files: Vec<PathBuf>,
}

impl ScenarioDoc {
    /// Loads every configured trace (CSV or synthetic) and aligns them.
    pub fn load_traces(&self) -> Result<(TraceSet, TraceLoadReport)> {
        let mut report = TraceLoadReport::default();
        let mut series = Vec::new();
        for (id, cfg) in &self.raw.traces {
            let ts = match cfg {
                TraceConfig::Csv {
                    path,
                    column,
                    values,
                    resample,
                } => {
                    let full = self.base_dir.join(path);
                    let loaded = if *resample {
                        let raw = crate::csvio::read_series_csv(&full, column)
                            .with_context(|| format!("trace '{id}'"))?;
                        gridopt_core::trace::resample_half_hourly(&raw)
                            .with_context(|| format!("trace '{id}'"))?
                    } else {
                        let (ts, clamped) = crate::csvio::load_trace_csv(&full, column, *values)
                            .with_context(|| format!("trace '{id}'"))?;
                        if clamped > 0 {
                            report.clamped.insert(id.clone(), clamped);
                        }
                        ts
                    };
                    let validated = if *resample {
                        let (ts, clamped) = crate::csvio::validate_values(loaded, *values)
                            .with_context(|| format!("trace '{id}'"))?;
                        if clamped > 0 {
                            report.clamped.insert(id.clone(), clamped);
                        }
                        ts
                    } else {
                        loaded
                    };
                    report.files.push(full);
                    validated
                }
                TraceConfig::Synthetic {
                    profile,
                    seed,
                    mean,
                    diurnal_amplitude,
                    noise,
                    daylight_start_hour,
                    daylight_end_hour,
                } => synth_trace(&SynthSpec {
                    kind: *profile,
                    seed: *seed,
                    start: self.start,
                    intervals: self.intervals,
                    mean: *mean,
                    diurnal_amplitude: *diurnal_amplitude,
                    noise: *noise,
                    daylight_start_hour: *daylight_start_hour,
                    daylight_end_hour: *daylight_end_hour,
                }),
            };
            series.push((id.clone(), ts));
        }
        let set = gridopt_core::trace::align(series)?;
        if set.horizon() != self.intervals {
            bail!(
                "trace horizon is {} intervals but the configured horizon needs {}",
                set.horizon(),
                self.intervals
            );
        }
        if set.start() != self.start {
            bail!(
                "traces start at {} but the horizon starts at {}",
                set.start(),
                self.start
            );
        }
        Ok((set, report))
    }

    /// Built-in profiles plus any CSV-configured ones.
    pub fn load_profiles(&self) -> Result<(ProfileSet, Vec<PathBuf>)> {
        let mut set = ProfileSet::with_builtins();
        let mut files = Vec::new();
        for (id, cfg) in &self.raw.profiles {
            let full = self.base_dir.join(&cfg.path);
            let weights =
                crate::csvio::load_profile_csv(&full).with_context(|| format!("profile '{id}'"))?;
            let profile = match weights.len() {
                48 => Profile::Daily(weights),
                17_520 => Profile::Annual(weights),
                n => bail!("profile '{id}': expected 48 or 17520 rows, got {n}"),
            };
            profile.validate(id)?;
            set.insert(id, profile);
            files.push(full);
        }
        Ok((set, files))
    }

    /// DE configuration resolved from the `[optimize]` section.
    pub fn optimizer_config(
        &self,
        seed_override: Option<u64>,
    ) -> Result<(DeConfig, Vec<(f64, f64)>)> {
        let opt = self.optimize_section()?;
        let layout = gridopt_core::optimizer::DecisionLayout::of(&self.scenario);
        let dim = layout.dimension();
        let mut config = DeConfig::for_dimension(dim, seed_override.unwrap_or(opt.seed));
        if let Some(p) = opt.population {
            config.population_size = p;
        }
        if let Some(g) = opt.generations {
            config.max_generations = g;
        }
        if let Some(f) = opt.differential_weight {
            config.differential_weight = f;
        }
        if let Some(cr) = opt.crossover_rate {
            config.crossover_rate = cr;
        }
        if let Some(w) = opt.convergence_window {
            config.convergence_window = w;
        }
        if let Some(t) = opt.convergence_tolerance {
            config.convergence_tolerance = t;
        }
        if let Some(p) = opt.penalty_weight {
            config.penalty_weight = p;
        }
        let b = &opt.bounds;
        let mut bounds = Vec::with_capacity(dim);
        bounds.extend(std::iter::repeat_n((0.0, b.pv_max_gw), layout.zones));
        bounds.extend(std::iter::repeat_n((0.0, b.wind_max_gw), layout.zones));
        bounds.extend(std::iter::repeat_n(
            (0.0, b.storage_power_max_gw),
            layout.regions,
        ));
        bounds.extend(std::iter::repeat_n(
            (0.0, b.storage_energy_max_gwh),
            layout.regions,
        ));
        bounds.extend(std::iter::repeat_n((0.0, b.link_max_gw), layout.links));
        Ok((config, bounds))
    }

    fn optimize_section(&self) -> Result<&RawOptimize> {
        self.raw
            .optimize
            .as_ref()
            .ok_or_else(|| anyhow!("scenario '{}' has no [optimize] section", self.raw.id))
    }
}

/// SHA-256 over the scenario text and every external input file, hex-encoded.
pub fn content_hash(scenario_bytes: &[u8], files: &[PathBuf]) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update((scenario_bytes.len() as u64).to_le_bytes());
    hasher.update(scenario_bytes);
    let mut sorted: Vec<&PathBuf> = files.iter().collect();
    sorted.sort();
    for path in sorted {
        let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex_encode(&hasher.finalize()))
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// On-disk portfolio: capacities keyed by zone, region and interconnector id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortfolioFile {
    pub pv_gw: BTreeMap<String, f64>,
    pub wind_gw: BTreeMap<String, f64>,
    pub storage_power_gw: BTreeMap<String, f64>,
    pub storage_energy_gwh: BTreeMap<String, f64>,
    pub link_capacity_gw: BTreeMap<String, f64>,
}

pub fn parse_portfolio(text: &str, scenario: &Scenario) -> Result<Portfolio> {
    let file: PortfolioFile =
        toml::from_str(text).map_err(|e| anyhow!("portfolio parse error: {e}"))?;
    portfolio_from_file(&file, scenario)
}

/// Resolves a portfolio file against the scenario's entity order. Missing
/// entries default to zero; unknown ids are errors.
pub fn portfolio_from_file(file: &PortfolioFile, scenario: &Scenario) -> Result<Portfolio> {
    let mut p = Portfolio::zeros(scenario);
    let zones = scenario.zones();
    let zone_pos: BTreeMap<&str, usize> = zones
        .iter()
        .enumerate()
        .map(|(i, (_, z))| (z.id.as_str(), i))
        .collect();
    for (id, &gw) in &file.pv_gw {
        let i = zone_pos
            .get(id.as_str())
            .ok_or_else(|| anyhow!("pv_gw references unknown zone '{id}'"))?;
        p.pv_gw[*i] = gw;
    }
    for (id, &gw) in &file.wind_gw {
        let i = zone_pos
            .get(id.as_str())
            .ok_or_else(|| anyhow!("wind_gw references unknown zone '{id}'"))?;
        p.wind_gw[*i] = gw;
    }
    let region_pos: BTreeMap<&str, usize> = scenario
        .regions
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    for (id, &gw) in &file.storage_power_gw {
        let i = region_pos
            .get(id.as_str())
            .ok_or_else(|| anyhow!("storage_power_gw references unknown region '{id}'"))?;
        p.storage_power_gw[*i] = gw;
    }
    for (id, &gwh) in &file.storage_energy_gwh {
        let i = region_pos
            .get(id.as_str())
            .ok_or_else(|| anyhow!("storage_energy_gwh references unknown region '{id}'"))?;
        p.storage_energy_gwh[*i] = gwh;
    }
    let link_pos: BTreeMap<&str, usize> = scenario
        .interconnectors
        .iter()
        .enumerate()
        .map(|(i, l)| (l.id.as_str(), i))
        .collect();
    for (id, &gw) in &file.link_capacity_gw {
        let i = link_pos
            .get(id.as_str())
            .ok_or_else(|| anyhow!("link_capacity_gw references unknown link '{id}'"))?;
        p.link_capacity_gw[*i] = gw;
    }
    Ok(p)
}

pub fn portfolio_to_file(p: &Portfolio, scenario: &Scenario) -> PortfolioFile {
    let zones = scenario.zones();
    PortfolioFile {
        pv_gw: zones
            .iter()
            .enumerate()
            .map(|(i, (_, z))| (z.id.clone(), p.pv_gw[i]))
            .collect(),
        wind_gw: zones
            .iter()
            .enumerate()
            .map(|(i, (_, z))| (z.id.clone(), p.wind_gw[i]))
            .collect(),
        storage_power_gw: scenario
            .regions
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), p.storage_power_gw[i]))
            .collect(),
        storage_energy_gwh: scenario
            .regions
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), p.storage_energy_gwh[i]))
            .collect(),
        link_capacity_gw: scenario
            .interconnectors
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id.clone(), p.link_capacity_gw[i]))
            .collect(),
    }
}

/// Resolves a scenario argument: an existing path wins; otherwise the
/// `GRIDOPT_CONFIG_DIR` directory is searched for `<name>` and `<name>.toml`.
pub fn resolve_scenario_path(arg: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(arg);
    if direct.is_file() {
        return Ok(direct);
    }
    if let Ok(dir) = std::env::var("GRIDOPT_CONFIG_DIR") {
        for candidate in [
            Path::new(&dir).join(arg),
            Path::new(&dir).join(format!("{arg}.toml")),
        ] {
            if candidate.is_file() {
                return Ok(candidate);
            }
        }
    }
    bail!("scenario file '{arg}' not found (set GRIDOPT_CONFIG_DIR to search a config directory)")
}
