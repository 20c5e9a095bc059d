//! Perceived problem rates and their inversion through a survival curve
//! into behavioral tolerance thresholds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::datamodel::{FacilityId, NeighborhoodId, SurveyCell};
use crate::scalar::Scalar;
use crate::utilization::SurvivalCurve;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CalibrationError {
    #[error("PPR undefined: total visits is zero")]
    PprUndefined,
    #[error("PPR must lie in [0, 1]")]
    PprOutOfRange,
    #[error("survey cell for {found} does not match curve facility {expected}")]
    FacilityMismatch { expected: FacilityId, found: FacilityId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum InversionMethod {
    /// Smallest observed level whose exceedance is at most the PPR.
    #[default]
    Step,
    /// Linear interpolation of the exceedance between bracketing levels.
    Interpolated,
}

impl InversionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            InversionMethod::Step => "step",
            InversionMethod::Interpolated => "interpolated",
        }
    }
}

impl fmt::Display for InversionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown inversion method '{0}' (expected step or interpolated)")]
pub struct UnknownMethod(pub String);

impl FromStr for InversionMethod {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "step" => Ok(InversionMethod::Step),
            "interpolated" => Ok(InversionMethod::Interpolated),
            other => Err(UnknownMethod(other.to_string())),
        }
    }
}

/// Pooled problem rate: total problems over total visits.
pub fn ppr<'a, T: Scalar>(cells: impl IntoIterator<Item = &'a SurveyCell>) -> Result<T, CalibrationError> {
    let (visits, problems) = cells
        .into_iter()
        .fold((0u64, 0u64), |(v, p), c| (v + c.visits, p + c.problems));
    if visits == 0 {
        return Err(CalibrationError::PprUndefined);
    }
    Ok(T::from_count(problems) / T::from_count(visits))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold<T> {
    pub threshold_u: T,
    /// The PPR is below every observed exceedance; the true threshold lies
    /// at or beyond the maximum observed level.
    pub saturated: bool,
    pub method: InversionMethod,
}

/// Solves `S(u*) = ppr` on the curve.
pub fn invert_threshold<T: Scalar>(
    curve: &SurvivalCurve<T>,
    ppr: T,
    method: InversionMethod,
) -> Result<Threshold<T>, CalibrationError> {
    if !(ppr >= T::zero() && ppr <= T::one()) {
        return Err(CalibrationError::PprOutOfRange);
    }
    let levels = curve.levels();
    let exceedance = curve.exceedance();
    // Exceedance is non-increasing, so the qualifying levels form a suffix.
    let idx = exceedance.partition_point(|e| *e > ppr);
    if idx == levels.len() {
        return Ok(Threshold { threshold_u: curve.max_level(), saturated: true, method });
    }
    let threshold_u = match method {
        InversionMethod::Step => levels[idx],
        InversionMethod::Interpolated if idx == 0 || exceedance[idx] == ppr => levels[idx],
        InversionMethod::Interpolated => {
            let (u0, u1) = (levels[idx - 1], levels[idx]);
            let (e0, e1) = (exceedance[idx - 1], exceedance[idx]);
            let u = u0 + (e0 - ppr) / (e0 - e1) * (u1 - u0);
            u.max(u0).min(u1)
        }
    };
    Ok(Threshold { threshold_u, saturated: false, method })
}

/// Exceedance of the piecewise-linear curve through the observed points;
/// 1 below the first level and 0 above the last.
pub fn interpolated_exceedance<T: Scalar>(curve: &SurvivalCurve<T>, u: T) -> T {
    let levels = curve.levels();
    let exceedance = curve.exceedance();
    if u <= levels[0] {
        return T::one();
    }
    let idx = levels.partition_point(|l| *l < u);
    if idx == levels.len() {
        return T::zero();
    }
    if levels[idx] == u {
        return exceedance[idx];
    }
    let (u0, u1) = (levels[idx - 1], levels[idx]);
    let (e0, e1) = (exceedance[idx - 1], exceedance[idx]);
    e0 + (u - u0) / (u1 - u0) * (e1 - e0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult<T> {
    pub facility: FacilityId,
    /// `None` for the pooled, facility-wide result.
    pub neighborhood: Option<NeighborhoodId>,
    pub ppr: T,
    pub threshold_u: T,
    pub saturated: bool,
    pub method: InversionMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacilityCalibration<T> {
    pub overall: CalibrationResult<T>,
    /// One entry per neighborhood with at least one visit, sorted by code.
    pub neighborhoods: Vec<CalibrationResult<T>>,
}

fn calibrate_cells<'a, T: Scalar>(
    facility: &FacilityId,
    neighborhood: Option<NeighborhoodId>,
    cells: impl IntoIterator<Item = &'a SurveyCell>,
    curve: &SurvivalCurve<T>,
    method: InversionMethod,
) -> Result<CalibrationResult<T>, CalibrationError> {
    let rate = ppr(cells)?;
    let t = invert_threshold(curve, rate, method)?;
    Ok(CalibrationResult {
        facility: facility.clone(),
        neighborhood,
        ppr: rate,
        threshold_u: t.threshold_u,
        saturated: t.saturated,
        method,
    })
}

/// Facility-wide calibration from pooled counts, plus one calibration per
/// neighborhood against the same facility-level curve.
pub fn calibrate_facility<T: Scalar>(
    survey: &[SurveyCell],
    curve: &SurvivalCurve<T>,
    method: InversionMethod,
) -> Result<FacilityCalibration<T>, CalibrationError> {
    let facility = curve.facility();
    if let Some(c) = survey.iter().find(|c| &c.facility != facility) {
        return Err(CalibrationError::FacilityMismatch {
            expected: facility.clone(),
            found: c.facility.clone(),
        });
    }
    let overall = calibrate_cells(facility, None, survey, curve, method)?;

    let mut by_hood: BTreeMap<&NeighborhoodId, Vec<&SurveyCell>> = BTreeMap::new();
    for c in survey {
        by_hood.entry(&c.neighborhood).or_default().push(c);
    }
    let neighborhoods = by_hood
        .into_iter()
        .filter(|(_, cells)| cells.iter().any(|c| c.visits > 0))
        .map(|(hood, cells)| calibrate_cells(facility, Some(hood.clone()), cells, curve, method))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(FacilityCalibration { overall, neighborhoods })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RowKind {
    Curve,
    /// Horizontal PPR line; `u` is the curve's minimum level.
    Ppr,
    /// Calibration point `(u*, PPR)`, the foot of the vertical line.
    Threshold,
}

impl RowKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowKind::Curve => "curve",
            RowKind::Ppr => "ppr",
            RowKind::Threshold => "threshold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExportRow<T> {
    pub u: T,
    pub exceedance: T,
    pub kind: RowKind,
    /// Set on marker rows of a saturated calibration.
    pub saturated: bool,
}

pub const EXPORT_HEADER: &str = "u,exceedance,kind,saturated";

/// Plot data for one calibration: the full step curve plus PPR and
/// threshold marker rows, ascending in `u` (curve rows first on ties).
pub fn calibration_curve_export<T: Scalar>(
    curve: &SurvivalCurve<T>,
    result: &CalibrationResult<T>,
) -> Vec<ExportRow<T>> {
    let mut rows: Vec<ExportRow<T>> = curve
        .points()
        .map(|(u, exceedance)| ExportRow { u, exceedance, kind: RowKind::Curve, saturated: false })
        .collect();
    rows.push(ExportRow {
        u: curve.min_level(),
        exceedance: result.ppr,
        kind: RowKind::Ppr,
        saturated: result.saturated,
    });
    rows.push(ExportRow {
        u: result.threshold_u,
        exceedance: result.ppr,
        kind: RowKind::Threshold,
        saturated: result.saturated,
    });
    rows.sort_by(|a, b| {
        a.u.partial_cmp(&b.u)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.kind.cmp(&b.kind))
    });
    rows
}

pub fn write_export<W: std::io::Write, T: Scalar>(mut out: W, rows: &[ExportRow<T>]) -> std::io::Result<()> {
    writeln!(out, "{EXPORT_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.u, r.exceedance, r.kind.as_str(), r.saturated)?;
    }
    Ok(())
}
