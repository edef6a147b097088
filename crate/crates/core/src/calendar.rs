//! Half-hourly simulation calendar: timestamps, interval arithmetic and
//! per-interval calendar indexing.
//!
//! All series in the model run on a fixed 30-minute step over a real civil
//! calendar (leap days kept). Timestamps are naive (no timezone); trace
//! files are expected to be on a single consistent calendar.

use crate::error::CoreError;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Length of one simulation interval in minutes.
pub const INTERVAL_MINUTES: i64 = 30;
/// Length of one simulation interval in hours.
pub const HOURS_PER_INTERVAL: f64 = 0.5;
/// Intervals per civil day.
pub const INTERVALS_PER_DAY: usize = 48;
/// Mean hours per year (365.25 days), used to normalise multi-year spans
/// to "per-year" quantities.
pub const MEAN_HOURS_PER_YEAR: f64 = 8766.0;

/// A naive civil timestamp with minute resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp {
    /// Minutes since 1970-01-01T00:00.
    minutes: i64,
}

impl Timestamp {
    pub fn from_ymd_hm(
        year: i32,
        month: u32,
        day: u32,
        hour: u32,
        minute: u32,
    ) -> Result<Self, CoreError> {
        if month == 0 || month > 12 {
            return Err(CoreError::InvalidTimestamp(format!(
                "month {month} out of range"
            )));
        }
        if day == 0 || day > days_in_month(year, month) {
            return Err(CoreError::InvalidTimestamp(format!(
                "day {day} out of range for {year}-{month:02}"
            )));
        }
        if hour > 23 || minute > 59 {
            return Err(CoreError::InvalidTimestamp(format!(
                "time {hour:02}:{minute:02} out of range"
            )));
        }
        let days = days_from_civil(year, month, day);
        Ok(Timestamp {
            minutes: days * 24 * 60 + (hour as i64) * 60 + minute as i64,
        })
    }

    /// Parses `YYYY-MM-DDTHH:MM`, with an optional `:SS` (which must be zero
    /// seconds) and optional trailing `Z`. A space is accepted in place of `T`.
    pub fn parse_iso(text: &str) -> Result<Self, CoreError> {
        let bad = |msg: &str| CoreError::InvalidTimestamp(format!("'{text}': {msg}"));
        let s = text.trim().trim_end_matches(['Z', 'z']);
        if s.len() < 16 {
            return Err(bad("expected YYYY-MM-DDTHH:MM"));
        }
        let (date, time) = s.split_at(10);
        let sep = &time[..1];
        if sep != "T" && sep != " " {
            return Err(bad("expected 'T' or ' ' between date and time"));
        }
        let time = &time[1..];
        let mut dparts = date.split('-');
        let year: i32 = dparts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| bad("bad year"))?;
        let month: u32 = dparts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| bad("bad month"))?;
        let day: u32 = dparts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| bad("bad day"))?;
        let mut tparts = time.split(':');
        let hour: u32 = tparts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| bad("bad hour"))?;
        let minute: u32 = tparts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| bad("bad minute"))?;
        if let Some(sec) = tparts.next() {
            if sec.parse::<u32>() != Ok(0) {
                return Err(bad("sub-minute timestamps are not supported"));
            }
        }
        Self::from_ymd_hm(year, month, day, hour, minute)
    }

    pub fn minutes_since_epoch(&self) -> i64 {
        self.minutes
    }

    pub fn add_minutes(&self, m: i64) -> Self {
        Timestamp {
            minutes: self.minutes + m,
        }
    }

    pub fn add_intervals(&self, n: i64) -> Self {
        self.add_minutes(n * INTERVAL_MINUTES)
    }

    fn civil(&self) -> (i32, u32, u32) {
        civil_from_days(self.minutes.div_euclid(24 * 60))
    }

    pub fn year(&self) -> i32 {
        self.civil().0
    }

    pub fn month(&self) -> u32 {
        self.civil().1
    }

    pub fn day(&self) -> u32 {
        self.civil().2
    }

    pub fn hour(&self) -> u32 {
        (self.minutes.rem_euclid(24 * 60) / 60) as u32
    }

    pub fn minute(&self) -> u32 {
        (self.minutes.rem_euclid(60)) as u32
    }

    /// Half-hour slot within the day, `0..48`.
    pub fn day_slot(&self) -> usize {
        (self.minutes.rem_euclid(24 * 60) / INTERVAL_MINUTES) as usize
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (y, m, d) = self.civil();
        write!(
            f,
            "{y:04}-{m:02}-{d:02}T{:02}:{:02}",
            self.hour(),
            self.minute()
        )
    }
}

pub fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_year(year: i32) -> u32 {
    if is_leap_year(year) {
        366
    } else {
        365
    }
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap_year(year) => 29,
        2 => 28,
        _ => 0,
    }
}

/// Number of half-hour intervals in the span of whole calendar years
/// starting at `first_year` (inclusive) and covering `years` years.
pub fn intervals_in_years(first_year: i32, years: u32) -> usize {
    (0..years)
        .map(|k| days_in_year(first_year + k as i32) as usize * INTERVALS_PER_DAY)
        .sum()
}

// Days since 1970-01-01 for a civil date (Gregorian, proleptic).
fn days_from_civil(year: i32, month: u32, day: u32) -> i64 {
    let y = i64::from(year) - i64::from(month <= 2);
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = (y - era * 400) as u64;
    let mp = if month > 2 { month - 3 } else { month + 9 } as u64;
    let doy = (153 * mp + 2) / 5 + day as u64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe as i64 - 719468
}

// Inverse of `days_from_civil`.
fn civil_from_days(days: i64) -> (i32, u32, u32) {
    let z = days + 719468;
    let era = if z >= 0 { z } else { z - 146096 } / 146097;
    let doe = (z - era * 146097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    ((y + i64::from(m <= 2)) as i32, m, d)
}

/// Precomputed per-interval calendar lookups for one simulation horizon.
#[derive(Debug, Clone)]
pub struct CalendarIndex {
    pub start: Timestamp,
    /// Calendar year of each interval.
    pub year_of: Vec<i32>,
    /// Half-hour slot within the day, `0..48`.
    pub slot_of: Vec<u16>,
    /// Row index into a 365-day (17,520-row) annual profile; Feb 29 maps to
    /// Feb 28 rows.
    pub annual_row_of: Vec<u32>,
    /// `(year, first interval index)` for every calendar year touched.
    pub year_starts: Vec<(i32, usize)>,
}

impl CalendarIndex {
    pub fn new(start: Timestamp, intervals: usize) -> Self {
        let mut year_of = Vec::with_capacity(intervals);
        let mut slot_of = Vec::with_capacity(intervals);
        let mut annual_row_of = Vec::with_capacity(intervals);
        let mut year_starts: Vec<(i32, usize)> = Vec::new();
        let mut ts = start;
        for t in 0..intervals {
            let (y, m, d) = ts.civil();
            if year_starts.last().map(|&(ly, _)| ly) != Some(y) {
                year_starts.push((y, t));
            }
            let slot = ts.day_slot();
            let (m_nl, d_nl) = if m == 2 && d == 29 { (2, 28) } else { (m, d) };
            let day_index = NONLEAP_CUMDAYS[m_nl as usize - 1] + d_nl - 1;
            year_of.push(y);
            slot_of.push(slot as u16);
            annual_row_of.push(day_index * INTERVALS_PER_DAY as u32 + slot as u32);
            ts = ts.add_intervals(1);
        }
        CalendarIndex {
            start,
            year_of,
            slot_of,
            annual_row_of,
            year_starts,
        }
    }

    pub fn len(&self) -> usize {
        self.year_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.year_of.is_empty()
    }

    /// Interval count of every calendar year in horizon order, with the
    /// first/last year possibly partial.
    pub fn year_lengths(&self) -> Vec<(i32, usize)> {
        let mut out = Vec::with_capacity(self.year_starts.len());
        for (i, &(y, t0)) in self.year_starts.iter().enumerate() {
            let t1 = self
                .year_starts
                .get(i + 1)
                .map(|&(_, t)| t)
                .unwrap_or(self.len());
            out.push((y, t1 - t0));
        }
        out
    }
}

// Cumulative days before each month in a non-leap year.
const NONLEAP_CUMDAYS: [u32; 12] = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334];
