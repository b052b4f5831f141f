use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{fmt_opt, IoError};
use crate::series::{DailyRecord, DailySeries};

pub const STATIONS_HEADER: [&str; 4] = ["station_id", "lat_deg", "lon_deg", "elev_m"];
pub const DAILY_HEADER: [&str; 3] = ["station_id", "date", "precip_tenths_mm"];
pub const GRID_HEADER: [&str; 5] = ["cell_id", "lat_deg", "lon_deg", "date", "precip_tenths_mm"];

/// A row dropped during loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRow {
    /// 1-based line number including the header.
    pub line: u64,
    pub reason: String,
}

/// Bookkeeping from one load: total rows seen, rejects and warnings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows: u64,
    pub accepted: u64,
    pub rejected: Vec<RejectedRow>,
    pub warnings: Vec<String>,
}

impl LoadReport {
    fn reject(&mut self, line: u64, reason: impl Into<String>) {
        self.rejected.push(RejectedRow { line, reason: reason.into() });
    }

    pub fn merge(&mut self, other: LoadReport) {
        self.rows += other.rows;
        self.accepted += other.accepted;
        self.rejected.extend(other.rejected);
        self.warnings.extend(other.warnings);
    }
}

/// Station metadata row.
#[derive(Debug, Clone, PartialEq)]
pub struct StationMeta {
    pub station_id: String,
    pub lat: f64,
    pub lon: f64,
    pub elev: Option<f64>,
}

fn reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| IoError::csv(path, e))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<(), IoError> {
    let found: Vec<String> = rdr.headers().map_err(|e| IoError::csv(path, e))?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(IoError::Header { path: path.to_path_buf(), expected: expected.join(","), found: found.join(",") });
    }
    Ok(())
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_coord(s: &str, lo: f64, hi: f64) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("bad coordinate '{s}'"))?;
    if !(lo..=hi).contains(&v) {
        return Err(format!("coordinate {v} outside [{lo}, {hi}]"));
    }
    Ok(v)
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("bad date '{s}'"))
}

/// Empty or `NA` is missing; otherwise a non-negative integer.
fn parse_value(s: &str) -> Result<Option<f64>, String> {
    if s.is_empty() || s == "NA" {
        return Ok(None);
    }
    let v: i64 = s.parse().map_err(|_| format!("value '{s}' is not an integer"))?;
    if v < 0 {
        return Err(format!("negative precipitation {v}"));
    }
    Ok(Some(v as f64))
}

pub fn load_station_metadata(path: &Path) -> Result<(Vec<StationMeta>, LoadReport), IoError> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &STATIONS_HEADER)?;
    let mut report = LoadReport::default();
    let mut out: Vec<StationMeta> = Vec::new();
    let mut seen = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::csv(path, e))?;
        report.rows += 1;
        let line = line_of(&rec);
        if rec.len() != 4 {
            report.reject(line, format!("expected 4 fields, found {}", rec.len()));
            continue;
        }
        let parsed = (|| -> Result<StationMeta, String> {
            let elev = match &rec[3] {
                "" | "NA" => None,
                s => Some(s.parse::<f64>().map_err(|_| format!("bad elevation '{s}'"))?),
            };
            Ok(StationMeta {
                station_id: rec[0].to_string(),
                lat: parse_coord(&rec[1], -90.0, 90.0)?,
                lon: parse_coord(&rec[2], -180.0, 360.0)?,
                elev,
            })
        })();
        match parsed {
            Ok(m) if m.station_id.is_empty() => report.reject(line, "empty station id"),
            Ok(m) => {
                if seen.insert(m.station_id.clone(), line).is_some() {
                    report.reject(line, format!("duplicate station {}", m.station_id));
                    report.warnings.push(format!("line {line}: duplicate metadata for {} ignored", m.station_id));
                } else {
                    report.accepted += 1;
                    out.push(m);
                }
            }
            Err(reason) => report.reject(line, reason),
        }
    }
    Ok((out, report))
}

/// Joins metadata with daily observations. Series come back in metadata
/// order; stations without any daily rows are skipped with a warning.
pub fn load_station_data(meta_path: &Path, daily_path: &Path) -> Result<(Vec<DailySeries>, LoadReport), IoError> {
    let (meta, mut report) = load_station_metadata(meta_path)?;
    let index: HashMap<&str, usize> = meta.iter().enumerate().map(|(i, m)| (m.station_id.as_str(), i)).collect();
    let mut days: Vec<BTreeMap<NaiveDate, Option<f64>>> = vec![BTreeMap::new(); meta.len()];

    let mut rdr = reader(daily_path)?;
    check_header(daily_path, &mut rdr, &DAILY_HEADER)?;
    let mut daily = LoadReport::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::csv(daily_path, e))?;
        daily.rows += 1;
        let line = line_of(&rec);
        if rec.len() != 3 {
            daily.reject(line, format!("expected 3 fields, found {}", rec.len()));
            continue;
        }
        let Some(&si) = index.get(&rec[0]) else {
            daily.reject(line, format!("station {} not in metadata", &rec[0]));
            continue;
        };
        let (date, value) = match parse_date(&rec[1]).and_then(|d| parse_value(&rec[2]).map(|v| (d, v))) {
            Ok(dv) => dv,
            Err(reason) => {
                daily.reject(line, reason);
                continue;
            }
        };
        if days[si].contains_key(&date) {
            daily.reject(line, format!("duplicate {} {date}", &rec[0]));
            daily.warnings.push(format!("line {line}: duplicate {} {date}; first value kept", &rec[0]));
            continue;
        }
        days[si].insert(date, value);
        daily.accepted += 1;
    }
    report.merge(daily);

    let mut out = Vec::new();
    for (m, d) in meta.into_iter().zip(days) {
        if d.is_empty() {
            report.warnings.push(format!("station {} has no daily rows", m.station_id));
            continue;
        }
        let records = d.into_iter().map(|(date, value)| DailyRecord { date, value }).collect();
        out.push(DailySeries::new(m.station_id, m.lat, m.lon, m.elev, records)?);
    }
    Ok((out, report))
}

/// One series per cell, sorted by cell id, spanning the first to last date
/// with gaps filled as missing days.
pub fn load_grid_data(path: &Path) -> Result<(Vec<DailySeries>, LoadReport), IoError> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &GRID_HEADER)?;
    let mut report = LoadReport::default();
    let mut cells: BTreeMap<String, ((f64, f64), BTreeMap<NaiveDate, Option<f64>>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::csv(path, e))?;
        report.rows += 1;
        let line = line_of(&rec);
        if rec.len() != 5 {
            report.reject(line, format!("expected 5 fields, found {}", rec.len()));
            continue;
        }
        let parsed = (|| -> Result<_, String> {
            Ok((
                parse_coord(&rec[1], -90.0, 90.0)?,
                parse_coord(&rec[2], -180.0, 360.0)?,
                parse_date(&rec[3])?,
                parse_value(&rec[4])?,
            ))
        })();
        let (lat, lon, date, value) = match parsed {
            Ok(p) => p,
            Err(reason) => {
                report.reject(line, reason);
                continue;
            }
        };
        let id = rec[0].to_string();
        let entry = cells.entry(id.clone()).or_insert_with(|| ((lat, lon), BTreeMap::new()));
        if entry.0 != (lat, lon) {
            return Err(IoError::InconsistentCell { cell_id: id, line, first: entry.0, found: (lat, lon) });
        }
        if entry.1.contains_key(&date) {
            report.reject(line, format!("duplicate {id} {date}"));
            report.warnings.push(format!("line {line}: duplicate {id} {date}; first value kept"));
            continue;
        }
        entry.1.insert(date, value);
        report.accepted += 1;
    }
    let mut out = Vec::with_capacity(cells.len());
    for (id, ((lat, lon), days)) in cells {
        let (first, last) = (*days.keys().next().expect("nonempty"), *days.keys().next_back().expect("nonempty"));
        let records = first
            .iter_days()
            .take_while(|d| *d <= last)
            .map(|date| DailyRecord { date, value: days.get(&date).copied().flatten() })
            .collect();
        out.push(DailySeries::new(id, lat, lon, None, records)?);
    }
    Ok((out, report))
}

fn writer(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|e| IoError::io(path, e))
}

fn value_field(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NA".into(),
    }
}

pub fn write_station_data(meta_path: &Path, daily_path: &Path, series: &[DailySeries]) -> Result<(), IoError> {
    let mut w = writer(meta_path)?;
    let put = |w: &mut BufWriter<File>, s: String| writeln!(w, "{s}").map_err(|e| IoError::io(meta_path, e));
    put(&mut w, STATIONS_HEADER.join(","))?;
    for s in series {
        put(&mut w, format!("{},{},{},{}", s.site_id, s.lat, s.lon, s.elev.map_or(String::new(), |e| format!("{e}"))))?;
    }
    w.flush().map_err(|e| IoError::io(meta_path, e))?;

    let mut w = writer(daily_path)?;
    let err = |e| IoError::io(daily_path, e);
    writeln!(w, "{}", DAILY_HEADER.join(",")).map_err(err)?;
    for s in series {
        for r in s.records() {
            writeln!(w, "{},{},{}", s.site_id, r.date, value_field(r.value)).map_err(err)?;
        }
    }
    w.flush().map_err(err)
}

pub fn write_grid_data(path: &Path, cells: &[DailySeries]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    let err = |e| IoError::io(path, e);
    writeln!(w, "{}", GRID_HEADER.join(",")).map_err(err)?;
    for c in cells {
        for r in c.records() {
            writeln!(w, "{},{},{},{},{}", c.site_id, c.lat, c.lon, r.date, value_field(r.value)).map_err(err)?;
        }
    }
    w.flush().map_err(err)
}

/// Writes a header plus rows of already-formatted fields.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    let err = |e| IoError::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(err)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        writeln!(w, "{}", row.join(",")).map_err(err)?;
    }
    w.flush().map_err(err)
}

/// Fixed six-decimal formatting; `NA` for absent or non-finite values.
pub fn fmt_num(x: f64) -> String {
    fmt_opt(Some(x))
}
