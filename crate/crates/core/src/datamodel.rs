//! Domain types shared by every analysis stage, plus dataset-level
//! validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, NaiveTime, Utc};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("identifier must be non-empty")]
    EmptyId,
    #[error("problems ({problems}) exceed visits ({visits})")]
    ProblemsExceedVisits { visits: u64, problems: u64 },
    #[error("capacity must be positive")]
    NonPositiveCapacity,
    #[error("booking must end after it starts")]
    EmptyBooking,
    #[error("schedule window must open before it closes")]
    InvalidWindow,
    #[error("facility must have at least one room")]
    NoRooms,
    #[error("latitude out of range: {0}")]
    LatitudeOutOfRange(f64),
    #[error("longitude out of range: {0}")]
    LongitudeOutOfRange(f64),
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(String);

        impl $name {
            pub fn new(code: impl Into<String>) -> Result<Self, ModelError> {
                let code = code.into();
                if code.is_empty() {
                    return Err(ModelError::EmptyId);
                }
                Ok(Self(code))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::str::FromStr for $name {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }
    };
}

string_id!(
    /// Facility code such as `YC` or `CRC`. Compared case-sensitively.
    FacilityId
);
string_id!(
    /// Neighborhood label. Letter codes are a convention only.
    NeighborhoodId
);
string_id!(RoomId);

/// Visit and problem counts for one facility-neighborhood pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyCell {
    pub facility: FacilityId,
    pub neighborhood: NeighborhoodId,
    pub visits: u64,
    pub problems: u64,
}

impl SurveyCell {
    pub fn new(
        facility: FacilityId,
        neighborhood: NeighborhoodId,
        visits: u64,
        problems: u64,
    ) -> Result<Self, ModelError> {
        if problems > visits {
            return Err(ModelError::ProblemsExceedVisits { visits, problems });
        }
        Ok(Self {
            facility,
            neighborhood,
            visits,
            problems,
        })
    }

    pub fn non_problems(&self) -> u64 {
        self.visits.saturating_sub(self.problems)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancySample {
    pub facility: FacilityId,
    pub timestamp: DateTime<Utc>,
    pub occupied: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityEntry {
    pub facility: FacilityId,
    capacity: u64,
}

impl CapacityEntry {
    pub fn new(facility: FacilityId, capacity: u64) -> Result<Self, ModelError> {
        if capacity == 0 {
            return Err(ModelError::NonPositiveCapacity);
        }
        Ok(Self { facility, capacity })
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BookingRecord {
    pub facility: FacilityId,
    pub room: RoomId,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
}

impl BookingRecord {
    pub fn new(
        facility: FacilityId,
        room: RoomId,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    ) -> Result<Self, ModelError> {
        if start >= end {
            return Err(ModelError::EmptyBooking);
        }
        Ok(Self {
            facility,
            room,
            start,
            end,
        })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.end
    }
}

/// Daily bookable window for a facility with `rooms` identical rooms.
/// Times of day are local to the dataset's configured timezone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleWindow {
    pub facility: FacilityId,
    rooms: u32,
    daily_open: NaiveTime,
    daily_close: NaiveTime,
}

impl ScheduleWindow {
    pub fn new(
        facility: FacilityId,
        rooms: u32,
        daily_open: NaiveTime,
        daily_close: NaiveTime,
    ) -> Result<Self, ModelError> {
        if rooms == 0 {
            return Err(ModelError::NoRooms);
        }
        if daily_open >= daily_close {
            return Err(ModelError::InvalidWindow);
        }
        Ok(Self {
            facility,
            rooms,
            daily_open,
            daily_close,
        })
    }

    pub fn rooms(&self) -> u32 {
        self.rooms
    }

    pub fn daily_open(&self) -> NaiveTime {
        self.daily_open
    }

    pub fn daily_close(&self) -> NaiveTime {
        self.daily_close
    }
}

/// Latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint<T> {
    lat: T,
    lon: T,
}

impl<T: Scalar> GeoPoint<T> {
    pub fn new(lat: T, lon: T) -> Result<Self, ModelError> {
        let lat_f = lat.to_f64().unwrap_or(f64::NAN);
        let lon_f = lon.to_f64().unwrap_or(f64::NAN);
        if !(lat >= T::lit(-90.0) && lat <= T::lit(90.0)) {
            return Err(ModelError::LatitudeOutOfRange(lat_f));
        }
        if !(lon >= T::lit(-180.0) && lon <= T::lit(180.0)) {
            return Err(ModelError::LongitudeOutOfRange(lon_f));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> T {
        self.lat
    }

    pub fn lon(&self) -> T {
        self.lon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AddressRecord<T> {
    pub neighborhood: NeighborhoodId,
    pub location: GeoPoint<T>,
    pub developed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ProblemsExceedVisits {
        facility: FacilityId,
        neighborhood: NeighborhoodId,
        visits: u64,
        problems: u64,
    },
    DuplicateSurveyCell {
        facility: FacilityId,
        neighborhood: NeighborhoodId,
    },
    DuplicateCapacity(FacilityId),
    NonPositiveCapacity(FacilityId),
    /// Occupancy refers to a facility the survey never mentions.
    UnknownFacility(FacilityId),
    MissingCapacity(FacilityId),
    NonMonotoneTimestamps {
        facility: FacilityId,
        at: DateTime<Utc>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ProblemsExceedVisits {
                facility,
                neighborhood,
                visits,
                problems,
            } => write!(
                f,
                "{facility}/{neighborhood}: problems exceed visits ({problems} > {visits})"
            ),
            Violation::DuplicateSurveyCell {
                facility,
                neighborhood,
            } => write!(f, "{facility}/{neighborhood}: duplicate survey cell"),
            Violation::DuplicateCapacity(fac) => write!(f, "{fac}: duplicate capacity entry"),
            Violation::NonPositiveCapacity(fac) => write!(f, "{fac}: capacity must be positive"),
            Violation::UnknownFacility(fac) => {
                write!(f, "{fac}: unknown facility in occupancy")
            }
            Violation::MissingCapacity(fac) => write!(f, "{fac}: missing capacity"),
            Violation::NonMonotoneTimestamps { facility, at } => write!(
                f,
                "{facility}: non-monotone timestamps at {}",
                at.to_rfc3339()
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks cross-record invariants of a dataset. Never fails; every finding
/// is recorded in the report.
///
/// Occupancy timestamps are checked in input order and must be strictly
/// increasing per facility. The unknown-facility check only applies when
/// the survey is non-empty.
pub fn validate_dataset(
    survey: &[SurveyCell],
    capacities: &[CapacityEntry],
    occupancy: &[OccupancySample],
) -> ValidationReport {
    let mut violations = Vec::new();

    let mut seen_cells = BTreeSet::new();
    for cell in survey {
        if cell.problems > cell.visits {
            violations.push(Violation::ProblemsExceedVisits {
                facility: cell.facility.clone(),
                neighborhood: cell.neighborhood.clone(),
                visits: cell.visits,
                problems: cell.problems,
            });
        }
        if !seen_cells.insert((&cell.facility, &cell.neighborhood)) {
            violations.push(Violation::DuplicateSurveyCell {
                facility: cell.facility.clone(),
                neighborhood: cell.neighborhood.clone(),
            });
        }
    }
    let surveyed: BTreeSet<&FacilityId> = survey.iter().map(|c| &c.facility).collect();

    let mut capacity_of = BTreeMap::new();
    for entry in capacities {
        if entry.capacity == 0 {
            violations.push(Violation::NonPositiveCapacity(entry.facility.clone()));
        }
        if capacity_of.insert(&entry.facility, entry.capacity).is_some() {
            violations.push(Violation::DuplicateCapacity(entry.facility.clone()));
        }
    }

    let mut last_seen: BTreeMap<&FacilityId, DateTime<Utc>> = BTreeMap::new();
    let mut reported = BTreeSet::new();
    for sample in occupancy {
        let fac = &sample.facility;
        if reported.insert(fac) {
            if !surveyed.is_empty() && !surveyed.contains(fac) {
                violations.push(Violation::UnknownFacility(fac.clone()));
            }
            if !capacity_of.contains_key(fac) {
                violations.push(Violation::MissingCapacity(fac.clone()));
            }
        }
        if let Some(prev) = last_seen.insert(fac, sample.timestamp) {
            if sample.timestamp <= prev {
                violations.push(Violation::NonMonotoneTimestamps {
                    facility: fac.clone(),
                    at: sample.timestamp,
                });
            }
        }
    }

    ValidationReport { violations }
}
