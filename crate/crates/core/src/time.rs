//! UTC timestamps with nanosecond resolution.

use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

/// Nanoseconds since the Unix epoch, UTC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    /// Sentinel for "no time" (ray slots that were never measured).
    pub const NAT: Timestamp = Timestamp(i64::MIN);

    pub const fn from_nanos(ns: i64) -> Self {
        Timestamp(ns)
    }

    pub fn from_seconds(s: i64) -> Self {
        Timestamp(s * 1_000_000_000)
    }

    pub const fn nanos(self) -> i64 {
        self.0
    }

    pub fn is_nat(self) -> bool {
        self == Self::NAT
    }

    pub fn parse_rfc3339(text: &str) -> Result<Self, chrono::ParseError> {
        let dt = DateTime::parse_from_rfc3339(text.trim())?;
        Ok(Self::from_datetime(dt.with_timezone(&Utc)))
    }

    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        // Out-of-range dates saturate; the archive never sees them.
        Timestamp(dt.timestamp_nanos_opt().unwrap_or(i64::MAX))
    }

    pub fn now() -> Self {
        Self::from_datetime(Utc::now())
    }

    pub fn to_rfc3339(self) -> String {
        if self.is_nat() {
            return "NaT".to_string();
        }
        DateTime::<Utc>::from_timestamp_nanos(self.0).to_rfc3339_opts(SecondsFormat::AutoSi, true)
    }

    /// Signed difference `self - earlier` in seconds.
    pub fn seconds_since(self, earlier: Timestamp) -> f64 {
        (self.0 - earlier.0) as f64 / 1e9
    }

    pub fn add_millis(self, ms: i64) -> Option<Timestamp> {
        ms.checked_mul(1_000_000)
            .and_then(|d| self.0.checked_add(d))
            .map(Timestamp)
    }

    pub fn add_seconds_f64(self, s: f64) -> Timestamp {
        Timestamp(self.0 + (s * 1e9).round() as i64)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

/// Closed time interval; either bound may be open-ended.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TimeRange {
    pub start: Option<Timestamp>,
    pub end: Option<Timestamp>,
}

impl TimeRange {
    pub const ALL: TimeRange = TimeRange { start: None, end: None };

    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        TimeRange { start: Some(start), end: Some(end) }
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start.map_or(true, |s| t >= s) && self.end.map_or(true, |e| t <= e)
    }

    /// Index range `[lo, hi)` of `times` (sorted ascending) inside the interval.
    pub fn select(&self, times: &[Timestamp]) -> std::ops::Range<usize> {
        let lo = match self.start {
            Some(s) => times.partition_point(|t| *t < s),
            None => 0,
        };
        let hi = match self.end {
            Some(e) => times.partition_point(|t| *t <= e),
            None => times.len(),
        };
        lo..hi.max(lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfc3339_roundtrip() {
        let t = Timestamp::parse_rfc3339("2011-05-20T12:34:56Z").unwrap();
        assert_eq!(t.0, 1_305_894_896_000_000_000);
        assert_eq!(t.to_rfc3339(), "2011-05-20T12:34:56Z");
        let frac = Timestamp(t.0 + 1_500_000);
        assert_eq!(Timestamp::parse_rfc3339(&frac.to_rfc3339()).unwrap(), frac);
    }

    #[test]
    fn select_is_inclusive() {
        let times: Vec<_> = (0..5).map(Timestamp::from_seconds).collect();
        let r = TimeRange::new(Timestamp::from_seconds(1), Timestamp::from_seconds(3));
        assert_eq!(r.select(&times), 1..4);
        assert_eq!(TimeRange::ALL.select(&times), 0..5);
        let empty = TimeRange::new(Timestamp::from_seconds(10), Timestamp::from_seconds(20));
        assert!(empty.select(&times).is_empty());
    }
}
