//! Daily precipitation series and the seasonal calendar.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("series {site}: dates not strictly increasing at {date}")]
    UnorderedDates { site: String, date: NaiveDate },
    #[error("series {site}: invalid value {value} on {date}")]
    InvalidValue { site: String, date: NaiveDate, value: f64 },
    #[error("unknown season {0:?} (expected DJF, MAM, JJA or SON)")]
    UnknownSeason(String),
    #[error("invalid year range {first}..={last}")]
    YearRange { first: i32, last: i32 },
}

/// Meteorological season. December belongs to the winter of the following year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Season {
    Djf,
    Mam,
    Jja,
    Son,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Djf, Season::Mam, Season::Jja, Season::Son];

    /// Average season length in days; winter amortizes leap days.
    pub fn length_days(self) -> f64 {
        match self {
            Season::Djf => 90.25,
            Season::Mam => 92.0,
            Season::Jja => 92.0,
            Season::Son => 91.0,
        }
    }

    pub fn of_month(month: u32) -> Season {
        match month {
            12 | 1 | 2 => Season::Djf,
            3..=5 => Season::Mam,
            6..=8 => Season::Jja,
            _ => Season::Son,
        }
    }

    /// Season and season-year of a calendar date.
    pub fn of_date(date: NaiveDate) -> (Season, i32) {
        let season = Season::of_month(date.month());
        let year = if date.month() == 12 { date.year() + 1 } else { date.year() };
        (season, year)
    }

    /// First and last calendar day of this season in `season_year`.
    pub fn bounds(self, season_year: i32) -> (NaiveDate, NaiveDate) {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid calendar date");
        match self {
            Season::Djf => {
                let end = d(season_year, 3, 1).pred_opt().expect("valid date");
                (d(season_year - 1, 12, 1), end)
            }
            Season::Mam => (d(season_year, 3, 1), d(season_year, 5, 31)),
            Season::Jja => (d(season_year, 6, 1), d(season_year, 8, 31)),
            Season::Son => (d(season_year, 9, 1), d(season_year, 11, 30)),
        }
    }

    /// Exact number of calendar days in this season over a range of season-years.
    pub fn days_in(self, years: YearRange) -> usize {
        years
            .iter()
            .map(|y| {
                let (a, b) = self.bounds(y);
                (b - a).num_days() as usize + 1
            })
            .sum()
    }

    pub fn code(self) -> &'static str {
        match self {
            Season::Djf => "DJF",
            Season::Mam => "MAM",
            Season::Jja => "JJA",
            Season::Son => "SON",
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Season {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DJF" | "WINTER" => Ok(Season::Djf),
            "MAM" | "SPRING" => Ok(Season::Mam),
            "JJA" | "SUMMER" => Ok(Season::Jja),
            "SON" | "FALL" | "AUTUMN" => Ok(Season::Son),
            _ => Err(SeriesError::UnknownSeason(s.to_string())),
        }
    }
}

/// Inclusive range of season-years.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearRange {
    pub first: i32,
    pub last: i32,
}

impl YearRange {
    pub fn new(first: i32, last: i32) -> Result<Self, SeriesError> {
        if first > last {
            return Err(SeriesError::YearRange { first, last });
        }
        Ok(YearRange { first, last })
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.first..=self.last).contains(&year)
    }

    pub fn len(&self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = i32> {
        self.first..=self.last
    }
}

/// One day of a series; `None` marks a missing observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub value: Option<f64>,
}

/// Daily precipitation (tenths of mm) at a station or grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub site_id: String,
    pub lat: f64,
    pub lon: f64,
    pub elev: Option<f64>,
    records: Vec<DailyRecord>,
}

impl DailySeries {
    pub fn new(
        site_id: impl Into<String>,
        lat: f64,
        lon: f64,
        elev: Option<f64>,
        records: Vec<DailyRecord>,
    ) -> Result<Self, SeriesError> {
        let site_id = site_id.into();
        for pair in records.windows(2) {
            if pair[1].date <= pair[0].date {
                return Err(SeriesError::UnorderedDates { site: site_id, date: pair[1].date });
            }
        }
        for r in &records {
            if let Some(v) = r.value {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(SeriesError::InvalidValue { site: site_id, date: r.date, value: v });
                }
            }
        }
        Ok(DailySeries { site_id, lat, lon, elev, records })
    }

    /// Builds a series from consecutive days starting at `start`.
    pub fn from_values(
        site_id: impl Into<String>,
        lat: f64,
        lon: f64,
        elev: Option<f64>,
        start: NaiveDate,
        values: &[Option<f64>],
    ) -> Result<Self, SeriesError> {
        let records = start
            .iter_days()
            .zip(values)
            .map(|(date, &value)| DailyRecord { date, value })
            .collect();
        DailySeries::new(site_id, lat, lon, elev, records)
    }

    pub fn records(&self) -> &[DailyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Non-missing values in date order.
    pub fn observed_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().filter_map(|r| r.value)
    }

    pub fn observed_count(&self) -> usize {
        self.records.iter().filter(|r| r.value.is_some()).count()
    }

    /// Copy of this series keeping only records accepted by `keep`.
    pub(crate) fn filtered(&self, keep: impl Fn(&DailyRecord) -> bool) -> DailySeries {
        DailySeries {
            site_id: self.site_id.clone(),
            lat: self.lat,
            lon: self.lon,
            elev: self.elev,
            records: self.records.iter().copied().filter(|r| keep(r)).collect(),
        }
    }
}
