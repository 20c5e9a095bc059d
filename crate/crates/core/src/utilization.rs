//! Piecewise-constant utilization traces and their exact time-weighted
//! survival functions.
//!
//! Durations are accumulated as integer milliseconds, so exceedance
//! fractions are a single rounding of an exact rational.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use thiserror::Error;

use crate::datamodel::{BookingRecord, CapacityEntry, FacilityId, OccupancySample, RoomId, ScheduleWindow};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UtilizationError {
    #[error("insufficient samples: at least 2 are needed to attribute duration")]
    InsufficientSamples,
    #[error("samples must be strictly increasing in time")]
    UnsortedSamples,
    #[error("sample for {found} does not belong to facility {expected}")]
    ForeignRecord { expected: FacilityId, found: FacilityId },
    #[error("segment {0} is invalid (empty, out of order, or negative utilization)")]
    InvalidSegment(usize),
    #[error("no observations")]
    NoObservations,
    #[error("facility must have at least one room")]
    NoRooms,
    #[error("booking period is empty")]
    EmptyPeriod,
    #[error("{booked} distinct rooms booked but only {rooms} schedulable")]
    TooManyRooms { booked: usize, rooms: u32 },
    #[error("invalid survival curve: {0}")]
    InvalidCurve(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub u: T,
}

impl<T> Segment<T> {
    pub fn duration(&self) -> Duration {
        self.end - self.start
    }

    fn millis(&self) -> i64 {
        self.duration().num_milliseconds()
    }
}

/// Utilization over time for one facility. Segments are ordered and
/// non-overlapping; gaps between them are unobserved time and do not count
/// toward any duration.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilizationTrace<T> {
    facility: FacilityId,
    segments: Vec<Segment<T>>,
}

impl<T: Scalar> UtilizationTrace<T> {
    pub fn new(facility: FacilityId, segments: Vec<Segment<T>>) -> Result<Self, UtilizationError> {
        for (i, seg) in segments.iter().enumerate() {
            let ordered = i == 0 || segments[i - 1].end <= seg.start;
            if seg.start >= seg.end || !ordered || !seg.u.is_finite() || seg.u < T::zero() {
                return Err(UtilizationError::InvalidSegment(i));
            }
        }
        Ok(Self { facility, segments })
    }

    pub fn facility(&self) -> &FacilityId {
        &self.facility
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// First start and last end, if any segment exists.
    pub fn span(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        Some((self.segments.first()?.start, self.segments.last()?.end))
    }

    /// Observed time, excluding gaps.
    pub fn total_duration(&self) -> Duration {
        Duration::milliseconds(self.total_millis())
    }

    fn total_millis(&self) -> i64 {
        self.segments.iter().map(Segment::millis).sum()
    }

    /// Time-weighted mean utilization.
    pub fn time_average(&self) -> Option<T> {
        let total = self.total_millis();
        if total == 0 {
            return None;
        }
        let weighted = self
            .segments
            .iter()
            .fold(T::zero(), |acc, s| acc + s.u * T::from_millis(s.millis()));
        Some(weighted / T::from_millis(total))
    }

    /// Utilization in effect at `t`, or `None` when `t` is unobserved.
    pub fn value_at(&self, t: DateTime<Utc>) -> Option<T> {
        let idx = self.segments.partition_point(|s| s.end <= t);
        self.segments.get(idx).filter(|s| s.start <= t).map(|s| s.u)
    }
}

/// Step trace from occupancy counts: each sample holds until the next one,
/// and the last sample only closes the trace.
pub fn utilization_trace<T: Scalar>(
    samples: &[OccupancySample],
    capacity: &CapacityEntry,
) -> Result<UtilizationTrace<T>, UtilizationError> {
    if samples.len() < 2 {
        return Err(UtilizationError::InsufficientSamples);
    }
    if let Some(s) = samples.iter().find(|s| s.facility != capacity.facility) {
        return Err(UtilizationError::ForeignRecord {
            expected: capacity.facility.clone(),
            found: s.facility.clone(),
        });
    }
    let cap = T::from_count(capacity.capacity());
    let segments = samples
        .windows(2)
        .map(|pair| {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(UtilizationError::UnsortedSamples);
            }
            Ok(Segment {
                start: pair[0].timestamp,
                end: pair[1].timestamp,
                u: T::from_count(pair[0].occupied) / cap,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    UtilizationTrace::new(capacity.facility.clone(), segments)
}

/// Inter-sample gaps longer than `limit`, as (from, to) pairs.
pub fn long_gaps(samples: &[OccupancySample], limit: Duration) -> Vec<(DateTime<Utc>, DateTime<Utc>)> {
    samples
        .windows(2)
        .filter(|p| p[1].timestamp - p[0].timestamp > limit)
        .map(|p| (p[0].timestamp, p[1].timestamp))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BookingWarning {
    /// Part of the booking fell outside the schedulable window and was cut.
    Clipped { room: RoomId, start: DateTime<Utc>, end: DateTime<Utc> },
    /// The booking never intersects a schedulable window.
    OutsideWindow { room: RoomId, start: DateTime<Utc>, end: DateTime<Utc> },
    /// Two bookings for the same room overlap; they were merged.
    Overlap { room: RoomId, at: DateTime<Utc> },
    /// A local window boundary does not exist in the timezone (DST gap).
    SkippedDay(NaiveDate),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BookingTrace<T> {
    pub trace: UtilizationTrace<T>,
    pub warnings: Vec<BookingWarning>,
}

type Interval = (DateTime<Utc>, DateTime<Utc>);

fn schedulable_windows<Tz: TimeZone>(
    window: &ScheduleWindow,
    period: (NaiveDate, NaiveDate),
    tz: &Tz,
    warnings: &mut Vec<BookingWarning>,
) -> Vec<Interval> {
    let mut out = Vec::new();
    for day in period.0.iter_days().take_while(|d| *d <= period.1) {
        let open = tz.from_local_datetime(&day.and_time(window.daily_open())).earliest();
        let close = tz.from_local_datetime(&day.and_time(window.daily_close())).latest();
        match (open, close) {
            (Some(o), Some(c)) if o < c => out.push((o.with_timezone(&Utc), c.with_timezone(&Utc))),
            _ => warnings.push(BookingWarning::SkippedDay(day)),
        }
    }
    out
}

/// Meeting-space utilization: at each schedulable instant, the fraction of
/// the facility's rooms that are booked. Time outside the daily window is
/// not part of the trace. `period` is an inclusive date range in `tz`.
pub fn booking_utilization<T: Scalar, Tz: TimeZone>(
    bookings: &[BookingRecord],
    window: &ScheduleWindow,
    period: (NaiveDate, NaiveDate),
    tz: &Tz,
) -> Result<BookingTrace<T>, UtilizationError> {
    if window.rooms() == 0 {
        return Err(UtilizationError::NoRooms);
    }
    if period.1 < period.0 {
        return Err(UtilizationError::EmptyPeriod);
    }
    if let Some(b) = bookings.iter().find(|b| b.facility != window.facility) {
        return Err(UtilizationError::ForeignRecord {
            expected: window.facility.clone(),
            found: b.facility.clone(),
        });
    }
    let booked_rooms: BTreeSet<&RoomId> = bookings.iter().map(|b| &b.room).collect();
    if booked_rooms.len() > window.rooms() as usize {
        return Err(UtilizationError::TooManyRooms {
            booked: booked_rooms.len(),
            rooms: window.rooms(),
        });
    }

    let mut warnings = Vec::new();
    let windows = schedulable_windows(window, period, tz, &mut warnings);
    if windows.is_empty() {
        return Err(UtilizationError::EmptyPeriod);
    }

    // Clip each booking to the windows, then union intervals per room.
    let mut per_room: BTreeMap<&RoomId, Vec<Interval>> = BTreeMap::new();
    for b in bookings {
        let mut kept = Duration::zero();
        for &(ws, we) in &windows {
            let (s, e) = (b.start().max(ws), b.end().min(we));
            if s < e {
                per_room.entry(&b.room).or_default().push((s, e));
                kept += e - s;
            }
        }
        let room = b.room.clone();
        if kept.is_zero() {
            warnings.push(BookingWarning::OutsideWindow { room, start: b.start(), end: b.end() });
        } else if kept < b.end() - b.start() {
            warnings.push(BookingWarning::Clipped { room, start: b.start(), end: b.end() });
        }
    }
    let mut events: Vec<(DateTime<Utc>, i64)> = Vec::new();
    for (room, mut intervals) in per_room {
        intervals.sort();
        let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match merged.last_mut() {
                Some(last) if iv.0 <= last.1 => {
                    if iv.0 < last.1 {
                        warnings.push(BookingWarning::Overlap { room: room.clone(), at: iv.0 });
                    }
                    last.1 = last.1.max(iv.1);
                }
                _ => merged.push(iv),
            }
        }
        for (s, e) in merged {
            events.push((s, 1));
            events.push((e, -1));
        }
    }
    events.sort();

    let rooms = T::from_count(u64::from(window.rooms()));
    let mut segments: Vec<Segment<T>> = Vec::new();
    let mut push = |start: DateTime<Utc>, end: DateTime<Utc>, booked: i64| {
        if start >= end {
            return;
        }
        let u = T::from_count(booked as u64) / rooms;
        match segments.last_mut() {
            Some(last) if last.end == start && last.u == u => last.end = end,
            _ => segments.push(Segment { start, end, u }),
        }
    };
    let mut ev = events.iter().peekable();
    for &(ws, we) in &windows {
        let mut booked = 0i64;
        // Bookings are clipped to windows, so no interval straddles a boundary.
        while let Some(&&(t, d)) = ev.peek() {
            if t > ws {
                break;
            }
            booked += d;
            ev.next();
        }
        let mut cursor = ws;
        while let Some(&&(t, d)) = ev.peek() {
            if t > we {
                break;
            }
            push(cursor, t, booked);
            cursor = t;
            booked += d;
            ev.next();
        }
        push(cursor, we, booked);
    }

    Ok(BookingTrace {
        trace: UtilizationTrace::new(window.facility.clone(), segments)?,
        warnings,
    })
}

/// Exceedance probabilities `P(U >= level)` at each distinct observed level.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve<T> {
    facility: FacilityId,
    levels: Vec<T>,
    exceedance: Vec<T>,
    total_duration: Duration,
}

impl<T: Scalar> SurvivalCurve<T> {
    /// Builds a curve from explicit points, e.g. for fixtures. Levels must be
    /// strictly increasing, exceedance non-increasing in [0, 1] and equal to
    /// 1 at the first level.
    pub fn from_points(
        facility: FacilityId,
        levels: Vec<T>,
        exceedance: Vec<T>,
        total_duration: Duration,
    ) -> Result<Self, UtilizationError> {
        use UtilizationError::InvalidCurve;
        if levels.is_empty() {
            return Err(InvalidCurve("no levels"));
        }
        if levels.len() != exceedance.len() {
            return Err(InvalidCurve("levels and exceedance differ in length"));
        }
        if levels.iter().any(|l| !l.is_finite()) || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(InvalidCurve("levels must be finite and strictly increasing"));
        }
        if exceedance.iter().any(|e| !(*e >= T::zero() && *e <= T::one())) {
            return Err(InvalidCurve("exceedance outside [0, 1]"));
        }
        if exceedance.windows(2).any(|w| w[1] > w[0]) {
            return Err(InvalidCurve("exceedance must be non-increasing"));
        }
        if exceedance[0] != T::one() {
            return Err(InvalidCurve("exceedance at the minimum level must be 1"));
        }
        Ok(Self { facility, levels, exceedance, total_duration })
    }

    pub fn facility(&self) -> &FacilityId {
        &self.facility
    }

    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    pub fn exceedance(&self) -> &[T] {
        &self.exceedance
    }

    pub fn total_duration(&self) -> Duration {
        self.total_duration
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn min_level(&self) -> T {
        self.levels[0]
    }

    pub fn max_level(&self) -> T {
        self.levels[self.levels.len() - 1]
    }

    /// `P(U >= u)`: the exceedance of the smallest level not below `u`.
    pub fn eval(&self, u: T) -> T {
        let idx = self.levels.partition_point(|l| *l < u);
        self.exceedance.get(idx).copied().unwrap_or_else(T::zero)
    }

    pub fn points(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.levels.iter().copied().zip(self.exceedance.iter().copied())
    }
}

/// Exact empirical survival function of a piecewise-constant trace.
pub fn survival_function<T: Scalar>(trace: &UtilizationTrace<T>) -> Result<SurvivalCurve<T>, UtilizationError> {
    let total = trace.total_millis();
    if trace.is_empty() || total <= 0 {
        return Err(UtilizationError::NoObservations);
    }
    let mut by_level: Vec<(T, i64)> = trace.segments().iter().map(|s| (s.u, s.millis())).collect();
    by_level.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    let mut levels: Vec<T> = Vec::new();
    let mut durations: Vec<i64> = Vec::new();
    for (u, ms) in by_level {
        if levels.last() == Some(&u) {
            *durations.last_mut().expect("parallel vectors") += ms;
        } else {
            levels.push(u);
            durations.push(ms);
        }
    }

    let mut exceedance = vec![T::zero(); levels.len()];
    let mut above = 0i64;
    let denom = T::from_millis(total);
    for i in (0..levels.len()).rev() {
        above += durations[i];
        exceedance[i] = T::from_millis(above) / denom;
    }

    Ok(SurvivalCurve {
        facility: trace.facility().clone(),
        levels,
        exceedance,
        total_duration: Duration::milliseconds(total),
    })
}

pub fn survival_eval<T: Scalar>(curve: &SurvivalCurve<T>, u: T) -> T {
    curve.eval(u)
}
