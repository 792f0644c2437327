//! Simulation time: integer seconds since the Unix epoch (UTC).

use chrono::{DateTime, Datelike, NaiveDateTime, Timelike};
use thiserror::Error;

pub type Time = i64;

pub const MINUTE: Time = 60;
pub const HOUR: Time = 3600;
pub const DAY: Time = 86_400;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid time '{0}': expected integer seconds or YYYY-MM-DDThh:mm:ss")]
pub struct TimeParseError(pub String);

/// Parses either integer seconds or an ISO-8601 `YYYY-MM-DDThh:mm:ss` stamp (UTC).
pub fn parse_time(s: &str) -> Result<Time, TimeParseError> {
    let s = s.trim();
    if let Ok(secs) = s.parse::<i64>() {
        return Ok(secs);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt.and_utc().timestamp());
        }
    }
    Err(TimeParseError(s.to_string()))
}

pub fn format_time(t: Time) -> String {
    match DateTime::from_timestamp(t, 0) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%S").to_string(),
        None => t.to_string(),
    }
}

/// Day of year (1-based) and fractional UTC hour for `t`.
pub fn day_and_hour(t: Time) -> (u32, f64) {
    let dt = DateTime::from_timestamp(t, 0).unwrap_or_default();
    let hour = dt.hour() as f64 + dt.minute() as f64 / 60.0 + dt.second() as f64 / 3600.0;
    (dt.ordinal(), hour)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_forms() {
        assert_eq!(parse_time("3600").unwrap(), 3600);
        assert_eq!(parse_time("1970-01-02T00:00:00").unwrap(), DAY);
        assert!(parse_time("yesterday").is_err());
        assert_eq!(format_time(DAY), "1970-01-02T00:00:00");
    }

    #[test]
    fn day_of_year() {
        let t = parse_time("2021-02-01T06:30:00").unwrap();
        assert_eq!(day_and_hour(t), (32, 6.5));
    }
}
