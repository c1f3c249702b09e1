//! ISO-8601 week identifiers.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc, Weekday};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An ISO week, rendered as `YYYY-Www`.
///
/// Derived ordering is `(iso_year, iso_week)`, which is chronological and
/// agrees with lexicographic order of the canonical string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeekId {
    pub iso_year: i32,
    pub iso_week: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid ISO week identifier `{0}`")]
pub struct ParseWeekError(pub String);

impl WeekId {
    pub fn new(iso_year: i32, iso_week: u32) -> Option<Self> {
        NaiveDate::from_isoywd_opt(iso_year, iso_week, Weekday::Mon).map(|_| Self { iso_year, iso_week })
    }

    pub fn from_date(date: NaiveDate) -> Self {
        let iw = date.iso_week();
        Self {
            iso_year: iw.year(),
            iso_week: iw.week(),
        }
    }

    pub fn from_timestamp(ts: &DateTime<Utc>) -> Self {
        Self::from_date(ts.date_naive())
    }

    /// Monday of this week.
    pub fn monday(self) -> NaiveDate {
        NaiveDate::from_isoywd_opt(self.iso_year, self.iso_week, Weekday::Mon)
            .expect("WeekId is always constructed valid")
    }

    pub fn succ(self) -> Self {
        Self::from_date(self.monday() + Duration::days(7))
    }

    pub fn pred(self) -> Self {
        Self::from_date(self.monday() - Duration::days(7))
    }

    pub fn offset(self, weeks: i64) -> Self {
        Self::from_date(self.monday() + Duration::days(7 * weeks))
    }

    /// Signed number of weeks from `earlier` to `self`.
    pub fn weeks_since(self, earlier: WeekId) -> i64 {
        (self.monday() - earlier.monday()).num_days() / 7
    }

    /// Inclusive range of consecutive weeks.
    pub fn range_inclusive(first: WeekId, last: WeekId) -> Vec<WeekId> {
        let n = last.weeks_since(first);
        if n < 0 {
            return Vec::new();
        }
        (0..=n).map(|k| first.offset(k)).collect()
    }
}

/// Maps a timestamp to its ISO week (Monday is the first day).
pub fn to_iso_week(ts: &DateTime<Utc>) -> WeekId {
    WeekId::from_timestamp(ts)
}

impl fmt::Display for WeekId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-W{:02}", self.iso_year, self.iso_week)
    }
}

impl FromStr for WeekId {
    type Err = ParseWeekError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseWeekError(s.to_string());
        let (year, week) = s.split_once("-W").ok_or_else(err)?;
        if week.len() != 2 {
            return Err(err());
        }
        let year: i32 = year.parse().map_err(|_| err())?;
        let week: u32 = week.parse().map_err(|_| err())?;
        WeekId::new(year, week).ok_or_else(err)
    }
}

impl Serialize for WeekId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WeekId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn utc(y: i32, m: u32, d: u32, h: u32, min: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, h, min, 0).unwrap()
    }

    #[test]
    fn calendar_table() {
        // 2011-06-09 is a Thursday in ISO week 23.
        assert_eq!(to_iso_week(&utc(2011, 6, 9, 10, 0)).to_string(), "2011-W23");
        // Jan 1 2011 is a Saturday, so it belongs to the last week of 2010.
        assert_eq!(to_iso_week(&utc(2011, 1, 1, 0, 0)).to_string(), "2010-W52");
        // 2009 has 53 ISO weeks; Jan 1 2010 (Friday) falls in 2009-W53.
        assert_eq!(to_iso_week(&utc(2010, 1, 1, 12, 0)).to_string(), "2009-W53");
        // Dec 31 2012 is a Monday and starts 2013-W01.
        assert_eq!(to_iso_week(&utc(2012, 12, 31, 0, 0)).to_string(), "2013-W01");
    }

    #[test]
    fn monday_through_sunday_share_a_week() {
        let mon = utc(2011, 6, 6, 0, 0);
        let sun = utc(2011, 6, 12, 23, 59);
        assert_eq!(to_iso_week(&mon), to_iso_week(&sun));
        assert_ne!(to_iso_week(&sun), to_iso_week(&utc(2011, 6, 13, 0, 0)));
    }

    #[test]
    fn parse_and_order() {
        let a: WeekId = "2010-W52".parse().unwrap();
        let b: WeekId = "2011-W01".parse().unwrap();
        assert!(a < b);
        assert!(a.to_string() < b.to_string());
        assert_eq!(a.succ(), b);
        assert_eq!(b.pred(), a);
        assert_eq!(b.weeks_since(a), 1);
        assert!("2011-W54".parse::<WeekId>().is_err());
        assert!("2011-23".parse::<WeekId>().is_err());
        assert!("2010-W53".parse::<WeekId>().is_err());
    }

    #[test]
    fn range_spans_year_boundary() {
        let a: WeekId = "2009-W52".parse().unwrap();
        let b: WeekId = "2010-W02".parse().unwrap();
        let r: Vec<String> = WeekId::range_inclusive(a, b).iter().map(|w| w.to_string()).collect();
        assert_eq!(r, ["2009-W52", "2009-W53", "2010-W01", "2010-W02"]);
    }
}
