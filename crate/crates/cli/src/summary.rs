//! Run summary serialization: fixed key order, floats at 6 significant
//! digits, byte-reproducible for identical inputs.

use anyhow::{bail, Context, Result};
use gridopt_core::cost::CostBreakdown;
use gridopt_core::optimizer::Fitness;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Everything a `simulate` or `optimize` run reports.
///
/// Field order here *is* the key order in the JSON file. All runtime
/// figures are deterministic counters so identical inputs produce
/// byte-identical files regardless of wall clock or thread count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub scenario_id: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 over the scenario file and every referenced input file.
    pub inputs_hash: String,
    pub portfolio: PortfolioSummary,
    pub storage_total_gw: f64,
    pub storage_total_gwh: f64,
    pub cost: CostSummary,
    /// Residual of `lcoe - (lcog + storage + transmission + spill_loss)`.
    pub breakdown_identity_residual: f64,
    pub reliability: ReliabilitySummary,
    pub generation_shares: GenerationShares,
    pub energy: EnergySummary,
    pub runtime: RuntimeSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSummary {
    pub pv_gw: BTreeMap<String, f64>,
    pub wind_gw: BTreeMap<String, f64>,
    pub storage_power_gw: BTreeMap<String, f64>,
    pub storage_energy_gwh: BTreeMap<String, f64>,
    pub link_capacity_gw: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub lcoe: f64,
    pub lcog: f64,
    pub lcob_storage: f64,
    pub lcob_transmission: f64,
    pub lcob_spill_loss: f64,
    pub annual_generation: f64,
    pub annual_vom: f64,
    pub annual_hydro_bio_purchase: f64,
    pub annual_storage: f64,
    pub annual_transmission: f64,
}

impl From<&CostBreakdown> for CostSummary {
    fn from(b: &CostBreakdown) -> Self {
        CostSummary {
            lcoe: b.lcoe,
            lcog: b.lcog,
            lcob_storage: b.lcob_storage,
            lcob_transmission: b.lcob_transmission,
            lcob_spill_loss: b.lcob_spill_loss,
            annual_generation: b.annual_generation,
            annual_vom: b.annual_vom,
            annual_hydro_bio_purchase: b.annual_hydro_bio_purchase,
            annual_storage: b.annual_storage,
            annual_transmission: b.annual_transmission,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilitySummary {
    pub unserved_fraction: f64,
    pub worst_interval_gw: f64,
    pub per_year: Vec<YearReliability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearReliability {
    pub year: i32,
    pub unserved_fraction: f64,
}

/// Shares of dispatched generation by source (sum to 1 when any energy was
/// generated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationShares {
    pub pv: f64,
    pub wind: f64,
    pub hydro_bio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub demand_twh_per_yr: f64,
    pub delivered_twh_per_yr: f64,
    pub unserved_twh_per_yr: f64,
    pub spill_twh_per_yr: f64,
    pub storage_discharge_twh_per_yr: f64,
    pub ev_charge_twh_per_yr: f64,
    pub line_loss_twh_per_yr: f64,
}

/// Deterministic run counters (never wall-clock time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSummary {
    pub generations: usize,
    pub evaluations: usize,
    pub intervals_simulated: usize,
    pub termination: String,
    pub unserved_penalty: f64,
}

impl RuntimeSummary {
    pub fn for_simulate(intervals: usize) -> Self {
        RuntimeSummary {
            generations: 0,
            evaluations: 1,
            intervals_simulated: intervals,
            termination: "single_run".into(),
            unserved_penalty: 0.0,
        }
    }

    pub fn for_optimize(
        generations: usize,
        evaluations: usize,
        intervals: usize,
        termination: &str,
        fitness: &Fitness,
    ) -> Self {
        RuntimeSummary {
            generations,
            evaluations,
            intervals_simulated: intervals,
            termination: termination.to_string(),
            unserved_penalty: fitness.penalty,
        }
    }
}

/// Rounds to 6 significant digits and renders the shortest representation.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        // Serialization guards against this earlier; keep JSON valid.
        return "null".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(5 - magnitude);
    let rounded = (x * scale).round() / scale;
    format!("{rounded}")
}

// serde_json formatter writing every float at 6 significant digits.
struct SigDigitFormatter;

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        writer.write_all(format_sig6(value).as_bytes())
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        writer.write_all(format_sig6(value as f64).as_bytes())
    }
}

/// Serializes a summary with fixed key order and 6-significant-digit
/// floats. A trailing newline terminates the file.
pub fn summary_to_json(summary: &RunSummary) -> Result<String> {
    check_finite(summary)?;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitFormatter);
    summary.serialize(&mut ser).context("serialize summary")?;
    buf.push(b'\n');
    String::from_utf8(buf).context("summary is not UTF-8")
}

fn check_finite(summary: &RunSummary) -> Result<()> {
    let v = serde_json::to_value(summary).context("summary to value")?;
    // The schema has no optional fields, so any null is a non-finite float
    // that serde_json degraded.
    fn walk(v: &serde_json::Value) -> bool {
        match v {
            serde_json::Value::Null => false,
            serde_json::Value::Number(n) => n.as_f64().map(|x| x.is_finite()).unwrap_or(true),
            serde_json::Value::Array(a) => a.iter().all(walk),
            serde_json::Value::Object(o) => o.values().all(walk),
            _ => true,
        }
    }
    if !walk(&v) {
        bail!("summary contains non-finite numbers");
    }
    Ok(())
}

pub fn write_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    let json = summary_to_json(summary)?;
    let mut file =
        std::fs::File::create(path).with_context(|| format!("create {}", path.display()))?;
    file.write_all(json.as_bytes())?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = std::fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    parse_summary(&text)
}

pub fn parse_summary(text: &str) -> Result<RunSummary> {
    serde_json::from_str(text).context("parse summary JSON")
}
