//! Names and headers of every report file.

pub const CALIBRATION: &str = "calibration.csv";
pub const CALIBRATION_HEADER: &[&str] = &["facility", "ppr", "threshold", "saturated", "method"];

pub const CALIBRATION_NEIGHBORHOODS: &str = "calibration_neighborhoods.csv";
pub const CALIBRATION_NEIGHBORHOODS_HEADER: &[&str] =
    &["facility", "neighborhood", "ppr", "threshold", "saturated", "method"];

/// `curve_<facility>.csv`
pub const CURVE_PREFIX: &str = "curve_";
pub const CURVE_HEADER: &[&str] = &["u", "exceedance", "kind", "saturated"];

pub const CHISQ: &str = "chisq.csv";
pub const CHISQ_HEADER: &[&str] = &[
    "facility",
    "neighborhoods",
    "statistic",
    "df",
    "p_value",
    "expected_min",
    "low_expected_warning",
    "status",
];

pub const DECAY_FITS: &str = "decay_fits.csv";
pub const DECAY_FITS_HEADER: &[&str] =
    &["facility", "alpha", "beta", "rss", "n_points", "iterations", "converged", "status"];

pub const DISTANCES: &str = "distances.csv";
pub const DISTANCES_HEADER: &[&str] = &["neighborhood", "facility", "distance_km"];

pub const CENTRAL_ACCESS: &str = "central_access.csv";
pub const CENTRAL_ACCESS_HEADER: &[&str] = &["neighborhood", "ca", "total_engagement"];

/// `decay_points_<facility>.csv`
pub const DECAY_POINTS_PREFIX: &str = "decay_points_";
pub const DECAY_POINTS_HEADER: &[&str] = &["neighborhood", "distance_km", "visits"];

pub const ROUNDTRIP: &str = "roundtrip.csv";
pub const ROUNDTRIP_HEADER: &[&str] = &[
    "scenario",
    "seed",
    "facility",
    "true_threshold",
    "recovered",
    "abs_error",
    "ppr",
    "saturated",
    "method",
];

pub const SIM_SURVEY: &str = "sim_survey.csv";
pub const SIM_OCCUPANCY: &str = "sim_occupancy.csv";
pub const SIM_CAPACITY: &str = "sim_capacity.csv";
/// Config that runs `calibrate` on the simulated files.
pub const SIM_CONFIG: &str = "sim_calibrate.toml";

/// Expected header for a report file name, if it is one of ours.
pub fn header_for(file_name: &str) -> Option<&'static [&'static str]> {
    use capcal_core::ingest::{CAPACITY_HEADER, OCCUPANCY_HEADER, SURVEY_HEADER};
    Some(match file_name {
        CALIBRATION => CALIBRATION_HEADER,
        CALIBRATION_NEIGHBORHOODS => CALIBRATION_NEIGHBORHOODS_HEADER,
        CHISQ => CHISQ_HEADER,
        DECAY_FITS => DECAY_FITS_HEADER,
        DISTANCES => DISTANCES_HEADER,
        CENTRAL_ACCESS => CENTRAL_ACCESS_HEADER,
        ROUNDTRIP => ROUNDTRIP_HEADER,
        SIM_SURVEY => &SURVEY_HEADER,
        SIM_OCCUPANCY => &OCCUPANCY_HEADER,
        SIM_CAPACITY => &CAPACITY_HEADER,
        f if f.starts_with(CURVE_PREFIX) => CURVE_HEADER,
        f if f.starts_with(DECAY_POINTS_PREFIX) => DECAY_POINTS_HEADER,
        _ => return None,
    })
}
