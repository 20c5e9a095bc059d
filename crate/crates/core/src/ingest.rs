//! Strict comma-delimited readers and writers for the five input formats.
//!
//! Every file has a mandatory header row; columns are located by name so
//! their order is free, and extra columns are ignored. Fields are not
//! quoted. All row errors in a file are collected before the parse fails,
//! with at most one error per row, so `rows = records + errors` always
//! holds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use crate::datamodel::{
    AddressRecord, BookingRecord, CapacityEntry, FacilityId, GeoPoint, ModelError,
    NeighborhoodId, OccupancySample, RoomId, SurveyCell,
};
use crate::scalar::Scalar;

pub const SURVEY_HEADER: [&str; 4] = ["facility", "neighborhood", "visits", "problems"];
pub const OCCUPANCY_HEADER: [&str; 3] = ["facility", "timestamp", "occupied"];
pub const CAPACITY_HEADER: [&str; 2] = ["facility", "capacity"];
pub const BOOKINGS_HEADER: [&str; 4] = ["facility", "room", "start", "end"];
pub const ADDRESS_HEADER: [&str; 4] = ["neighborhood", "lat", "lon", "developed"];
pub const FACILITY_GEO_HEADER: [&str; 3] = ["facility", "lat", "lon"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub file: PathBuf,
    /// 1-based; the header is line 1.
    pub line: u64,
    pub column_name: String,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file.display(), self.line)?;
        if !self.column_name.is_empty() {
            write!(f, " [{}]", self.column_name)?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}", format_errors(.0))]
    Parse(Vec<ParseError>),
}

impl IngestError {
    pub fn parse_errors(&self) -> &[ParseError] {
        match self {
            IngestError::Parse(errors) => errors,
            IngestError::Io { .. } => &[],
        }
    }
}

fn format_errors(errors: &[ParseError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

struct Row {
    line: u64,
    fields: csv::StringRecord,
}

struct Table<'a> {
    file: &'a Path,
    columns: BTreeMap<&'static str, usize>,
    width: usize,
    rows: Vec<Row>,
}

impl<'a> Table<'a> {
    fn read(file: &'a Path, text: &str, required: &[&'static str]) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .quoting(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());

        let header_error = |column: &str, message: String| ParseError {
            file: file.to_path_buf(),
            line: 1,
            column_name: column.to_string(),
            message,
        };

        let header = match reader.headers() {
            Ok(h) if !h.is_empty() && !(h.len() == 1 && h[0].is_empty()) => h.clone(),
            _ => {
                return Err(IngestError::Parse(vec![header_error(
                    "",
                    "missing header row".into(),
                )]))
            }
        };

        let mut columns = BTreeMap::new();
        let mut errors = Vec::new();
        for &name in required {
            match header.iter().position(|h| h == name) {
                Some(idx) => {
                    columns.insert(name, idx);
                }
                None => errors.push(header_error(name, format!("missing column '{name}'"))),
            }
        }
        if !errors.is_empty() {
            return Err(IngestError::Parse(errors));
        }

        let mut rows = Vec::new();
        for record in reader.records() {
            match record {
                Ok(fields) => {
                    let line = fields.position().map_or(0, |p| p.line());
                    rows.push(Row { line, fields });
                }
                Err(err) => {
                    let line = err.position().map_or(0, |p| p.line());
                    errors.push(ParseError {
                        file: file.to_path_buf(),
                        line: line.max(1),
                        column_name: String::new(),
                        message: format!("malformed row: {err}"),
                    });
                }
            }
        }
        if !errors.is_empty() {
            return Err(IngestError::Parse(errors));
        }

        Ok(Self {
            file,
            columns,
            width: header.len(),
            rows,
        })
    }

    /// Applies `parse` to every row, collecting one error per failing row.
    fn parse_rows<T>(
        &self,
        mut parse: impl FnMut(&Cells<'_>) -> Result<T, (String, String)>,
    ) -> (Vec<(u64, T)>, Vec<ParseError>) {
        let mut records = Vec::with_capacity(self.rows.len());
        let mut errors = Vec::new();
        for row in &self.rows {
            let outcome = if row.fields.len() != self.width {
                Err((
                    String::new(),
                    format!(
                        "expected {} fields, found {}",
                        self.width,
                        row.fields.len()
                    ),
                ))
            } else {
                parse(&Cells { table: self, row })
            };
            match outcome {
                Ok(value) => records.push((row.line, value)),
                Err((column_name, message)) => errors.push(self.error(row.line, column_name, message)),
            }
        }
        (records, errors)
    }

    fn error(&self, line: u64, column_name: String, message: String) -> ParseError {
        ParseError {
            file: self.file.to_path_buf(),
            line,
            column_name,
            message,
        }
    }
}

struct Cells<'a> {
    table: &'a Table<'a>,
    row: &'a Row,
}

type CellResult<T> = Result<T, (String, String)>;

fn fail<T>(column: &str, message: impl Into<String>) -> CellResult<T> {
    Err((column.to_string(), message.into()))
}

impl Cells<'_> {
    fn get(&self, column: &'static str) -> &str {
        &self.row.fields[self.table.columns[column]]
    }

    fn id<I: FromStr>(&self, column: &'static str) -> CellResult<I> {
        self.get(column)
            .parse()
            .or_else(|_| fail(column, format!("empty {column}")))
    }

    fn facility(&self) -> CellResult<FacilityId> {
        self.id("facility")
    }

    fn neighborhood(&self) -> CellResult<NeighborhoodId> {
        self.id("neighborhood")
    }

    fn count(&self, column: &'static str) -> CellResult<u64> {
        let raw = self.get(column);
        match raw.parse::<i64>() {
            Ok(v) if v < 0 => fail(column, format!("negative {column}")),
            Ok(v) => Ok(v as u64),
            Err(_) => fail(column, format!("non-integer {column}: '{raw}'")),
        }
    }

    fn timestamp(&self, column: &'static str) -> CellResult<DateTime<Utc>> {
        let raw = self.get(column);
        DateTime::parse_from_rfc3339(raw)
            .map(|t| t.with_timezone(&Utc))
            .or_else(|_| fail(column, format!("unparseable timestamp: '{raw}'")))
    }

    fn real<T: Scalar>(&self, column: &'static str) -> CellResult<T> {
        let raw = self.get(column);
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(T::lit(v)),
            _ => fail(column, format!("non-numeric {column}: '{raw}'")),
        }
    }

    fn boolean(&self, column: &'static str) -> CellResult<bool> {
        match self.get(column) {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            raw => fail(column, format!("unparseable boolean: '{raw}'")),
        }
    }

    fn geo<T: Scalar>(&self) -> CellResult<GeoPoint<T>> {
        let lat = self.real("lat")?;
        let lon = self.real("lon")?;
        GeoPoint::new(lat, lon).or_else(|e| match e {
            ModelError::LatitudeOutOfRange(_) => fail("lat", "latitude out of range"),
            _ => fail("lon", "longitude out of range"),
        })
    }
}

fn read_file(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn finish<T>(records: Vec<(u64, T)>, errors: Vec<ParseError>) -> Result<Vec<T>, IngestError> {
    if errors.is_empty() {
        Ok(records.into_iter().map(|(_, r)| r).collect())
    } else {
        Err(IngestError::Parse(errors))
    }
}

pub fn parse_survey(path: &Path) -> Result<Vec<SurveyCell>, IngestError> {
    parse_survey_str(path, &read_file(path)?)
}

pub fn parse_survey_str(file: &Path, text: &str) -> Result<Vec<SurveyCell>, IngestError> {
    let table = Table::read(file, text, &SURVEY_HEADER)?;
    let (records, errors) = table.parse_rows(|c| {
        let facility = c.facility()?;
        let neighborhood = c.neighborhood()?;
        let visits = c.count("visits")?;
        let problems = c.count("problems")?;
        SurveyCell::new(facility, neighborhood, visits, problems)
            .or_else(|_| fail("problems", "problems exceed visits"))
    });
    finish(records, errors)
}

/// Output is grouped by facility and sorted by timestamp within each.
pub fn parse_occupancy(path: &Path) -> Result<Vec<OccupancySample>, IngestError> {
    parse_occupancy_str(path, &read_file(path)?)
}

pub fn parse_occupancy_str(file: &Path, text: &str) -> Result<Vec<OccupancySample>, IngestError> {
    let table = Table::read(file, text, &OCCUPANCY_HEADER)?;
    let mut seen = BTreeSet::new();
    let (mut records, mut errors) = table.parse_rows(|c| {
        let facility = c.facility()?;
        let timestamp = c.timestamp("timestamp")?;
        let occupied = c.count("occupied")?;
        if !seen.insert((facility.clone(), timestamp)) {
            return fail("timestamp", "duplicate timestamp");
        }
        Ok(OccupancySample {
            facility,
            timestamp,
            occupied,
        })
    });
    errors.sort_by_key(|e| e.line);
    records.sort_by(|(_, a), (_, b)| {
        (&a.facility, a.timestamp).cmp(&(&b.facility, b.timestamp))
    });
    finish(records, errors)
}

pub fn parse_capacity(path: &Path) -> Result<Vec<CapacityEntry>, IngestError> {
    parse_capacity_str(path, &read_file(path)?)
}

pub fn parse_capacity_str(file: &Path, text: &str) -> Result<Vec<CapacityEntry>, IngestError> {
    let table = Table::read(file, text, &CAPACITY_HEADER)?;
    let mut seen = BTreeSet::new();
    let (records, errors) = table.parse_rows(|c| {
        let facility = c.facility()?;
        let raw = c.get("capacity");
        let capacity = match raw.parse::<i64>() {
            Ok(v) if v <= 0 => return fail("capacity", "capacity must be positive"),
            Ok(v) => v as u64,
            Err(_) => return fail("capacity", format!("non-integer capacity: '{raw}'")),
        };
        if !seen.insert(facility.clone()) {
            return fail("facility", "duplicate facility");
        }
        CapacityEntry::new(facility, capacity).or_else(|_| fail("capacity", "capacity must be positive"))
    });
    finish(records, errors)
}

pub fn parse_bookings(path: &Path) -> Result<Vec<BookingRecord>, IngestError> {
    parse_bookings_str(path, &read_file(path)?)
}

pub fn parse_bookings_str(file: &Path, text: &str) -> Result<Vec<BookingRecord>, IngestError> {
    let table = Table::read(file, text, &BOOKINGS_HEADER)?;
    let (records, errors) = table.parse_rows(|c| {
        let facility = c.facility()?;
        let room = c.id::<RoomId>("room")?;
        let start = c.timestamp("start")?;
        let end = c.timestamp("end")?;
        if end == start {
            return fail("end", "empty booking");
        }
        if end < start {
            return fail("end", "negative duration");
        }
        BookingRecord::new(facility, room, start, end).or_else(|_| fail("end", "empty booking"))
    });
    finish(records, errors)
}

pub type FacilityLocations<T> = BTreeMap<FacilityId, GeoPoint<T>>;

/// Reads pre-geocoded neighborhood addresses and facility locations. Errors
/// from both files are reported together.
pub fn parse_geo<T: Scalar>(
    addresses_path: &Path,
    facilities_path: &Path,
) -> Result<(Vec<AddressRecord<T>>, FacilityLocations<T>), IngestError> {
    let addresses = read_file(addresses_path)?;
    let facilities = read_file(facilities_path)?;
    parse_geo_str(addresses_path, &addresses, facilities_path, &facilities)
}

pub fn parse_geo_str<T: Scalar>(
    addresses_file: &Path,
    addresses: &str,
    facilities_file: &Path,
    facilities: &str,
) -> Result<(Vec<AddressRecord<T>>, FacilityLocations<T>), IngestError> {
    let mut errors = Vec::new();

    let mut out_addr = Vec::new();
    match Table::read(addresses_file, addresses, &ADDRESS_HEADER) {
        Ok(table) => {
            let (records, errs) = table.parse_rows(|c| {
                Ok(AddressRecord {
                    neighborhood: c.neighborhood()?,
                    location: c.geo()?,
                    developed: c.boolean("developed")?,
                })
            });
            errors.extend(errs);
            out_addr = records.into_iter().map(|(_, r)| r).collect();
        }
        Err(err) => errors.extend(err.parse_errors().iter().cloned()),
    }

    let mut out_fac = BTreeMap::new();
    match Table::read(facilities_file, facilities, &FACILITY_GEO_HEADER) {
        Ok(table) => {
            let mut seen = BTreeSet::new();
            let (records, errs) = table.parse_rows(|c| {
                let facility = c.facility()?;
                let point = c.geo()?;
                if !seen.insert(facility.clone()) {
                    return fail("facility", "duplicate facility");
                }
                Ok((facility, point))
            });
            errors.extend(errs);
            out_fac = records.into_iter().map(|(_, r)| r).collect();
        }
        Err(err) => errors.extend(err.parse_errors().iter().cloned()),
    }

    if errors.is_empty() {
        Ok((out_addr, out_fac))
    } else {
        Err(IngestError::Parse(errors))
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn write_survey<W: Write>(mut out: W, cells: &[SurveyCell]) -> io::Result<()> {
    writeln!(out, "{}", SURVEY_HEADER.join(","))?;
    for c in cells {
        writeln!(out, "{},{},{},{}", c.facility, c.neighborhood, c.visits, c.problems)?;
    }
    Ok(())
}

pub fn write_occupancy<W: Write>(mut out: W, samples: &[OccupancySample]) -> io::Result<()> {
    writeln!(out, "{}", OCCUPANCY_HEADER.join(","))?;
    for s in samples {
        writeln!(
            out,
            "{},{},{}",
            s.facility,
            format_timestamp(&s.timestamp),
            s.occupied
        )?;
    }
    Ok(())
}

pub fn write_capacity<W: Write>(mut out: W, entries: &[CapacityEntry]) -> io::Result<()> {
    writeln!(out, "{}", CAPACITY_HEADER.join(","))?;
    for e in entries {
        writeln!(out, "{},{}", e.facility, e.capacity())?;
    }
    Ok(())
}

pub fn write_bookings<W: Write>(mut out: W, bookings: &[BookingRecord]) -> io::Result<()> {
    writeln!(out, "{}", BOOKINGS_HEADER.join(","))?;
    for b in bookings {
        writeln!(
            out,
            "{},{},{},{}",
            b.facility,
            b.room,
            format_timestamp(&b.start()),
            format_timestamp(&b.end())
        )?;
    }
    Ok(())
}

pub fn write_addresses<W: Write, T: Scalar>(mut out: W, records: &[AddressRecord<T>]) -> io::Result<()> {
    writeln!(out, "{}", ADDRESS_HEADER.join(","))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{}",
            r.neighborhood,
            r.location.lat(),
            r.location.lon(),
            r.developed
        )?;
    }
    Ok(())
}

pub fn write_facility_locations<W: Write, T: Scalar>(
    mut out: W,
    locations: &FacilityLocations<T>,
) -> io::Result<()> {
    writeln!(out, "{}", FACILITY_GEO_HEADER.join(","))?;
    for (fac, p) in locations {
        writeln!(out, "{},{},{}", fac, p.lat(), p.lon())?;
    }
    Ok(())
}
