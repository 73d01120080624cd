//! Proleptic Gregorian calendar helpers: pentads, meteorological seasons and
//! time-axis step inference.
//!
//! A pentad year has 73 pentads of five days. In leap years the last pentad
//! absorbs day 366 and spans six days.

use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PENTADS_PER_YEAR: u32 = 73;

pub fn is_leap_year(year: i32) -> bool {
    NaiveDate::from_ymd_opt(year, 2, 29).is_some()
}

pub fn days_in_year(year: i32) -> u32 {
    if is_leap_year(year) {
        366
    } else {
        365
    }
}

/// Pentad number (1..=73) containing `date`.
pub fn pentad_of(date: NaiveDate) -> u32 {
    ((date.ordinal() - 1) / 5 + 1).min(PENTADS_PER_YEAR)
}

pub fn pentad_start(year: i32, pentad: u32) -> Option<NaiveDate> {
    if !(1..=PENTADS_PER_YEAR).contains(&pentad) {
        return None;
    }
    NaiveDate::from_yo_opt(year, (pentad - 1) * 5 + 1)
}

/// Number of days in the given pentad: 5, or 6 for pentad 73 of a leap year.
pub fn pentad_len(year: i32, pentad: u32) -> u32 {
    if pentad == PENTADS_PER_YEAR && is_leap_year(year) {
        6
    } else {
        5
    }
}

pub fn pentad_days(year: i32, pentad: u32) -> Vec<NaiveDate> {
    let Some(start) = pentad_start(year, pentad) else {
        return Vec::new();
    };
    start.iter_days().take(pentad_len(year, pentad) as usize).collect()
}

/// 1 January of `year`, the date label of annual layers.
pub fn year_start(year: i32) -> NaiveDate {
    ymd(year, 1, 1)
}

pub fn year_days(year: i32) -> impl Iterator<Item = NaiveDate> {
    NaiveDate::from_ymd_opt(year, 1, 1)
        .expect("valid year")
        .iter_days()
        .take(days_in_year(year) as usize)
}

/// Meteorological seasons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Season {
    Djf,
    Mam,
    Jja,
    Son,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Djf, Season::Mam, Season::Jja, Season::Son];

    /// Season of a date and the year it is attributed to. December belongs
    /// to the following year's DJF.
    pub fn of(date: NaiveDate) -> (i32, Season) {
        match date.month() {
            12 => (date.year() + 1, Season::Djf),
            1 | 2 => (date.year(), Season::Djf),
            3..=5 => (date.year(), Season::Mam),
            6..=8 => (date.year(), Season::Jja),
            _ => (date.year(), Season::Son),
        }
    }

    /// All calendar days of the season attributed to `year`.
    pub fn days(self, year: i32) -> Vec<NaiveDate> {
        let (start, end) = match self {
            Season::Djf => (ymd(year - 1, 12, 1), ymd(year, 3, 1)),
            Season::Mam => (ymd(year, 3, 1), ymd(year, 6, 1)),
            Season::Jja => (ymd(year, 6, 1), ymd(year, 9, 1)),
            Season::Son => (ymd(year, 9, 1), ymd(year, 12, 1)),
        };
        start.iter_days().take_while(|d| *d < end).collect()
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Season::Djf => "DJF",
            Season::Mam => "MAM",
            Season::Jja => "JJA",
            Season::Son => "SON",
        };
        f.write_str(s)
    }
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

/// Calendar step of a field's time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeStep {
    /// Zero or one time step; no step to check.
    Single,
    Daily,
    /// Consecutive pentad start dates (73 per year).
    Pentad,
    /// Consecutive 1 January dates.
    Annual,
}

fn next_pentad(date: NaiveDate) -> NaiveDate {
    let p = pentad_of(date);
    if p == PENTADS_PER_YEAR {
        ymd(date.year() + 1, 1, 1)
    } else {
        pentad_start(date.year(), p + 1).expect("valid pentad")
    }
}

fn is_pentad_start(date: NaiveDate) -> bool {
    pentad_start(date.year(), pentad_of(date)) == Some(date)
}

/// Infer the calendar step of `times`, rejecting axes that are not strictly
/// increasing or not uniform in one of the supported calendars.
pub fn infer_step(times: &[NaiveDate]) -> Result<TimeStep> {
    if times.len() < 2 {
        return Ok(TimeStep::Single);
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidTimeAxis("times not strictly increasing".into()));
    }
    let all = |f: &dyn Fn(NaiveDate, NaiveDate) -> bool| times.windows(2).all(|w| f(w[0], w[1]));
    if all(&|a, b| (b - a).num_days() == 1) {
        return Ok(TimeStep::Daily);
    }
    if times.iter().all(|d| d.ordinal() == 1) && all(&|a, b| b.year() == a.year() + 1) {
        return Ok(TimeStep::Annual);
    }
    if times.iter().all(|d| is_pentad_start(*d)) && all(&|a, b| next_pentad(a) == b) {
        return Ok(TimeStep::Pentad);
    }
    Err(Error::InvalidTimeAxis(
        "times are not uniformly daily, pentad or annual".into(),
    ))
}

/// Pentad start dates for every pentad of `year`.
pub fn pentad_axis(year: i32) -> Vec<NaiveDate> {
    (1..=PENTADS_PER_YEAR)
        .map(|p| pentad_start(year, p).expect("valid pentad"))
        .collect()
}

pub fn annual_axis(first_year: i32, last_year: i32) -> Vec<NaiveDate> {
    (first_year..=last_year).map(|y| ymd(y, 1, 1)).collect()
}

pub fn daily_axis(first_year: i32, last_year: i32) -> Vec<NaiveDate> {
    (first_year..=last_year).flat_map(year_days).collect()
}
