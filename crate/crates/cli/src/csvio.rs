//! CSV ingestion for traces and profiles, and the dispatch ledger dump.
//!
//! Trace files: header row, first column an ISO-8601 timestamp, remaining
//! columns named series; UTF-8, decimal point, no thousands separators.

use crate::config::ValueKind;
use anyhow::{bail, Context, Result};
use gridopt_core::calendar::{Timestamp, INTERVAL_MINUTES};
use gridopt_core::dispatch::DispatchResult;
use gridopt_core::scenario::Topology;
use gridopt_core::trace::TimeSeries;
use gridopt_core::CoreError;
use std::path::Path;

/// Values above 1 by at most this much are clamped; anything larger is a
/// hard error (likely a unit mistake).
pub const CF_CLAMP_TOLERANCE: f64 = 0.05;

/// Reads one named column without enforcing the 30-minute step (the step
/// must still be uniform and positive).
pub fn read_series_csv(path: &Path, column: &str) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("open {}", path.display()))?;
    let headers = reader.headers().context("read header")?.clone();
    let col = headers
        .iter()
        .position(|h| h == column)
        .with_context(|| format!("column '{column}' not present in {}", path.display()))?;
    if headers.len() < 2 {
        bail!(
            "{}: expected a timestamp column plus data columns",
            path.display()
        );
    }

    let mut values = Vec::new();
    let mut start: Option<Timestamp> = None;
    let mut prev: Option<Timestamp> = None;
    let mut step: Option<i64> = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let record = record.with_context(|| format!("{}: row {row}", path.display()))?;
        let ts = Timestamp::parse_iso(record.get(0).unwrap_or(""))
            .map_err(|e| anyhow::anyhow!("{}: row {row}: {e}", path.display()))?;
        if let Some(p) = prev {
            let delta = ts.minutes_since_epoch() - p.minutes_since_epoch();
            if delta <= 0 {
                bail!(
                    "{}: row {row}: timestamps must be strictly increasing",
                    path.display()
                );
            }
            match step {
                None => step = Some(delta),
                Some(s) if s != delta => {
                    bail!(
                        "{}: gap at row {row} (timestamp {ts}): step {delta} min, expected {s} min",
                        path.display()
                    )
                }
                _ => {}
            }
        }
        let cell = record.get(col).unwrap_or("");
        let value: f64 = cell.parse().map_err(|_| {
            anyhow::anyhow!("{}: row {row}: non-numeric value '{cell}'", path.display())
        })?;
        values.push(value);
        start.get_or_insert(ts);
        prev = Some(ts);
    }
    let Some(start) = start else {
        bail!("{}: no data rows", path.display());
    };
    Ok(TimeSeries {
        start,
        step_minutes: step.unwrap_or(INTERVAL_MINUTES),
        values,
    })
}

/// Applies the value-kind checks: capacity factors are validated to
/// [0, 1 + ε], clamped at 1 (returning the clamp count); power must be
/// non-negative.
pub fn validate_values(mut ts: TimeSeries, kind: ValueKind) -> Result<(TimeSeries, u32)> {
    let mut clamped = 0u32;
    match kind {
        ValueKind::CapacityFactor => {
            for (i, v) in ts.values.iter_mut().enumerate() {
                if *v < 0.0 || *v > 1.0 + CF_CLAMP_TOLERANCE {
                    bail!(
                        "capacity factor {v} out of range at data row {} (unit mistake?)",
                        i + 1
                    );
                }
                if *v > 1.0 {
                    *v = 1.0;
                    clamped += 1;
                }
            }
        }
        ValueKind::Power => {
            if let Some((i, v)) = ts.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
                bail!("negative power {v} at data row {}", i + 1);
            }
        }
    }
    Ok((ts, clamped))
}

/// Loads a strictly half-hourly trace column, validating and clamping
/// values per `kind`. Returns the series and the clamp-warning count.
pub fn load_trace_csv(path: &Path, column: &str, kind: ValueKind) -> Result<(TimeSeries, u32)> {
    let ts = read_series_csv(path, column)?;
    ts.ensure_half_hourly().map_err(|e| match e {
        CoreError::StepNotHalfHourly { got } => anyhow::anyhow!(
            "{}: step is {got} min, expected 30 (resample first)",
            path.display()
        ),
        other => anyhow::anyhow!(other),
    })?;
    validate_values(ts, kind)
}

/// Loads a single-column (or `weight`-column) profile CSV of bare numbers.
pub fn load_profile_csv(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("open {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = headers.iter().position(|h| h == "weight").unwrap_or(0);
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let cell = record.get(col).unwrap_or("");
        let v: f64 = cell.parse().map_err(|_| {
            anyhow::anyhow!(
                "{}: row {}: non-numeric weight '{cell}'",
                path.display(),
                i + 2
            )
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Writes the per-interval balance ledger for `window` (half-open interval
/// index range): one row per interval with per-region columns
/// `<region>_{demand,vre_used,storage_charge,storage_discharge,hydro_bio,
/// ev_charge,net_import,spill,unserved}` followed by per-link
/// `flow_<id>`/`loss_<id>`. Values are full-precision.
pub fn write_dispatch_csv(
    dr: &DispatchResult,
    topo: &Topology,
    start: Timestamp,
    window: (usize, usize),
    path: &Path,
) -> Result<()> {
    let Some(records) = dr.intervals.as_ref() else {
        bail!("dispatch result does not carry interval records");
    };
    let (from, to) = window;
    if from >= to || to > dr.horizon {
        bail!(
            "window {from}..{to} out of range for horizon {}",
            dr.horizon
        );
    }
    let offset = dr.horizon - records.len(); // burn-in intervals are not recorded
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("create {}", path.display()))?;

    let mut header = vec!["timestamp".to_string()];
    for rid in &topo.region_ids {
        for field in [
            "demand",
            "vre_used",
            "storage_charge",
            "storage_discharge",
            "hydro_bio",
            "ev_charge",
            "net_import",
            "spill",
            "unserved",
        ] {
            header.push(format!("{rid}_{field}"));
        }
    }
    for link in &topo.links {
        header.push(format!("flow_{}", link.id));
        header.push(format!("loss_{}", link.id));
    }
    w.write_record(&header)?;

    for t in from.max(offset)..to {
        let rec = &records[t - offset];
        let mut row = Vec::with_capacity(header.len());
        row.push(start.add_intervals(rec.index as i64).to_string());
        for region in &rec.regions {
            for v in [
                region.demand,
                region.vre_used,
                region.storage_charge,
                region.storage_discharge,
                region.hydro_bio,
                region.ev_charge,
                region.net_import,
                region.spill,
                region.unserved,
            ] {
                row.push(format!("{v}"));
            }
        }
        for (f, l) in rec.link_flow_gw.iter().zip(&rec.link_loss_gw) {
            row.push(format!("{f}"));
            row.push(format!("{l}"));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Spot-checks the per-region balance identity on every row of a dispatch
/// CSV. Returns the number of data rows checked.
pub fn verify_dispatch_csv(path: &Path, tolerance_gw: f64) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    // Region blocks are groups of 9 columns after the timestamp.
    let mut regions: Vec<(String, usize)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(rid) = h.strip_suffix("_demand") {
            regions.push((rid.to_string(), i));
        }
    }
    if regions.is_empty() {
        bail!("{}: no region columns found", path.display());
    }
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let get = |idx: usize| -> Result<f64> {
            record
                .get(idx)
                .unwrap_or("")
                .parse()
                .map_err(|_| anyhow::anyhow!("{}: row {}: bad number", path.display(), i + 2))
        };
        for (rid, base) in &regions {
            let demand = get(*base)?;
            let vre = get(base + 1)?;
            let sc = get(base + 2)?;
            let sd = get(base + 3)?;
            let hb = get(base + 4)?;
            let ev = get(base + 5)?;
            let ni = get(base + 6)?;
            let spill = get(base + 7)?;
            let unserved = get(base + 8)?;
            let residual = vre + sd + hb + ni - sc - ev - spill - (demand - unserved);
            if residual.abs() > tolerance_gw {
                bail!(
                    "{}: row {}: balance identity off by {residual} GW in region {rid}",
                    path.display(),
                    i + 2
                );
            }
        }
        rows += 1;
    }
    Ok(rows)
}
