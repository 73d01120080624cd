//! Station observations and the gauge CSV format.
//!
//! Columns: `station_id, lat, lon, date, value, variable` where `variable`
//! is one of `wet_bulb_K`, `precip_mm` or `phase`. For `phase` rows the
//! value column holds `snow`, `rain` or `mixed`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::calendar::days_in_year;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Snow,
    Rain,
    Mixed,
}

impl Phase {
    /// Whether any snow fell.
    pub fn has_snow(self) -> bool {
        matches!(self, Phase::Snow | Phase::Mixed)
    }
}

impl FromStr for Phase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "snow" => Ok(Phase::Snow),
            "rain" => Ok(Phase::Rain),
            "mixed" => Ok(Phase::Mixed),
            other => Err(Error::InvalidInput(format!("unknown phase `{other}`"))),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Snow => "snow",
            Phase::Rain => "rain",
            Phase::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    WetBulbK(f64),
    PrecipMm(f64),
    Phase(Phase),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeRecord {
    pub station_id: String,
    pub lat: f64,
    pub lon: f64,
    pub date: NaiveDate,
    pub observation: Observation,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    station_id: String,
    lat: f64,
    lon: f64,
    date: NaiveDate,
    value: String,
    variable: String,
}

pub fn read_gauges_from(reader: impl Read) -> Result<Vec<GaugeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::GaugeParse {
                line,
                reason: e.to_string(),
            }
        })?;
        let line = out.len() as u64 + 2;
        let num = |v: &str| {
            v.parse::<f64>().map_err(|_| Error::GaugeParse {
                line,
                reason: format!("value `{v}` is not a number"),
            })
        };
        let observation = match row.variable.as_str() {
            "wet_bulb_K" => Observation::WetBulbK(num(&row.value)?),
            "precip_mm" => Observation::PrecipMm(num(&row.value)?),
            "phase" => Observation::Phase(row.value.parse().map_err(|e: Error| {
                Error::GaugeParse {
                    line,
                    reason: e.to_string(),
                }
            })?),
            other => {
                return Err(Error::GaugeParse {
                    line,
                    reason: format!("unknown variable `{other}`"),
                })
            }
        };
        if !(-90.0..=90.0).contains(&row.lat) || !row.lon.is_finite() {
            return Err(Error::GaugeParse {
                line,
                reason: "station coordinates out of range".into(),
            });
        }
        out.push(GaugeRecord {
            station_id: row.station_id,
            lat: row.lat,
            lon: row.lon,
            date: row.date,
            observation,
        });
    }
    Ok(out)
}

pub fn read_gauges(path: impl AsRef<Path>) -> Result<Vec<GaugeRecord>> {
    read_gauges_from(std::fs::File::open(path)?)
}

pub fn write_gauges_to(records: &[GaugeRecord], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        let (value, variable) = match r.observation {
            Observation::WetBulbK(v) => (v.to_string(), "wet_bulb_K"),
            Observation::PrecipMm(v) => (v.to_string(), "precip_mm"),
            Observation::Phase(p) => (p.to_string(), "phase"),
        };
        w.serialize(Row {
            station_id: r.station_id.clone(),
            lat: r.lat,
            lon: r.lon,
            date: r.date,
            value,
            variable: variable.to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Drop precipitation and phase records of station-years with more than
/// `max_missing_days` days lacking a precipitation report. Phase is only
/// reported on wet days, so completeness is judged on precipitation alone.
/// Wet-bulb records pass through.
pub fn completeness_filter(records: &[GaugeRecord], max_missing_days: u32) -> Vec<GaugeRecord> {
    let mut days: BTreeMap<(&str, i32), BTreeSet<NaiveDate>> = BTreeMap::new();
    for r in records {
        if let Observation::PrecipMm(_) = r.observation {
            days.entry((r.station_id.as_str(), r.date.year()))
                .or_default()
                .insert(r.date);
        }
    }
    let complete = |key: (&str, i32)| {
        let need = days_in_year(key.1).saturating_sub(max_missing_days) as usize;
        days.get(&key).map_or(0, |s| s.len()) >= need
    };
    records
        .iter()
        .filter(|r| match r.observation {
            Observation::WetBulbK(_) => true,
            _ => complete((r.station_id.as_str(), r.date.year())),
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "station_id,lat,lon,date,value,variable
A,45.0,10.0,2011-01-01,271.5,wet_bulb_K
A,45.0,10.0,2011-01-01,3.2,precip_mm
A,45.0,10.0,2011-01-01,snow,phase
";

    #[test]
    fn parse_and_write_back() {
        let recs = read_gauges_from(SAMPLE.as_bytes()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].observation, Observation::WetBulbK(271.5));
        assert_eq!(recs[2].observation, Observation::Phase(Phase::Snow));
        let mut buf = Vec::new();
        write_gauges_to(&recs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), SAMPLE);
    }

    #[test]
    fn bad_rows_are_named() {
        let bad = "station_id,lat,lon,date,value,variable\nA,1,2,2011-01-01,x,wet_bulb_K\n";
        assert!(matches!(read_gauges_from(bad.as_bytes()), Err(Error::GaugeParse { line: 2, .. })));
        let bad = "station_id,lat,lon,date,value,variable\nA,1,2,2011-01-01,hail,phase\n";
        assert!(read_gauges_from(bad.as_bytes()).is_err());
        let bad = "station_id,lat,lon,date,value,variable\nA,1,2,2011-01-01,1,temp\n";
        assert!(read_gauges_from(bad.as_bytes()).is_err());
        let bad = "station_id,lat,lon,date,value,variable\nA,95,2,2011-01-01,1,precip_mm\n";
        assert!(read_gauges_from(bad.as_bytes()).is_err());
    }

    #[test]
    fn completeness_drops_sparse_station_years() {
        let mut recs = Vec::new();
        for (station, days) in [("full", 360), ("sparse", 300)] {
            for d in NaiveDate::from_ymd_opt(2011, 1, 1).unwrap().iter_days().take(days) {
                for obs in [Observation::PrecipMm(1.0), Observation::Phase(Phase::Rain)] {
                    recs.push(GaugeRecord {
                        station_id: station.into(),
                        lat: 0.0,
                        lon: 0.0,
                        date: d,
                        observation: obs,
                    });
                }
            }
        }
        let kept = completeness_filter(&recs, 10);
        assert!(kept.iter().all(|r| r.station_id == "full"));
        assert_eq!(kept.len(), 720);
    }
}
