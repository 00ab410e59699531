use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use crate::error::{Error, Result};
use crate::localizer::StatusSeries;

use super::PowerSeries;

/// One house as read from disk: the aggregate and, when present, the
/// appliance sub-meter on the same timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseRecording {
    pub aggregate: PowerSeries,
    pub appliance: Option<PowerSeries>,
}

/// Epoch seconds (integer or fractional, floored), RFC 3339, or a naive
/// `YYYY-MM-DD[ T]HH:MM:SS` taken as UTC.
pub fn parse_timestamp(raw: &str) -> Result<i64> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Ok(v);
    }
    if let Ok(v) = s.parse::<f64>() {
        if v.is_finite() {
            return Ok(v.floor() as i64);
        }
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc().timestamp());
        }
    }
    Err(Error::Format(format!("unrecognised timestamp {raw:?}")))
}

fn parse_power(raw: &str) -> Result<f64> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        return Ok(f64::NAN);
    }
    s.parse::<f64>().map_err(|_| Error::Format(format!("unparseable power value {raw:?}")))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Reads a CSV with columns `timestamp`, `aggregate_w` and optionally
/// `appliance_w`. Rows must be in strictly increasing time order.
pub fn read_house_csv(path: &Path, house_id: &str) -> Result<HouseRecording> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ts_col), Some(agg_col)) = (col("timestamp"), col("aggregate_w")) else {
        return Err(Error::Format(format!("{}: need columns timestamp and aggregate_w", path.display())));
    };
    let app_col = col("appliance_w");
    let mut ts = Vec::new();
    let mut agg = Vec::new();
    let mut app = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let field = |c: usize| {
            rec.get(c).ok_or_else(|| Error::Format(format!("{}: row {} is short", path.display(), line + 2)))
        };
        ts.push(parse_timestamp(field(ts_col)?)?);
        agg.push(parse_power(field(agg_col)?)?);
        if let Some(c) = app_col {
            app.push(parse_power(field(c)?)?);
        }
    }
    let aggregate = PowerSeries::new(house_id, ts.clone(), agg, None)?;
    let appliance = match app_col {
        Some(_) => Some(PowerSeries::new(house_id, ts, app, None)?),
        None => None,
    };
    Ok(HouseRecording { aggregate, appliance })
}

fn fmt_power(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Writes the layout [`read_house_csv`] reads, timestamps as epoch seconds.
pub fn write_house_csv(path: &Path, aggregate: &PowerSeries, appliance: Option<&PowerSeries>) -> Result<()> {
    if let Some(a) = appliance {
        if a.timestamps != aggregate.timestamps {
            return Err(Error::Shape("appliance and aggregate timestamps differ".into()));
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["timestamp", "aggregate_w"];
    if appliance.is_some() {
        header.push("appliance_w");
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, t) in aggregate.timestamps.iter().enumerate() {
        let mut row = vec![t.to_string(), fmt_power(aggregate.values[i])];
        if let Some(a) = appliance {
            row.push(fmt_power(a.values[i]));
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `timestamp,status` rows.
pub fn write_status_csv(path: &Path, timestamps: &[i64], status: &StatusSeries) -> Result<()> {
    if timestamps.len() != status.len() {
        return Err(Error::Shape(format!("{} timestamps for {} status values", timestamps.len(), status.len())));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["timestamp", "status"]).map_err(|e| csv_err(path, e))?;
    for (t, s) in timestamps.iter().zip(&status.values) {
        w.write_record([t.to_string(), s.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
