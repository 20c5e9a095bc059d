//! Survey-to-utilization calibration for shared facilities.
//!
//! Survey problem rates are read as exceedance probabilities of a
//! facility's utilization distribution; inverting the empirical survival
//! function yields the behavioral threshold at which users start to report
//! congestion. Supporting modules cover ingestion, chi-square and
//! correlation statistics, distance-decay fitting, prospect-theory values
//! and a seeded simulator for round-trip checks.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). The `*64`
//! and `*32` aliases below fix the scalar type.

pub mod behavioral;
pub mod calibration;
pub mod datamodel;
pub mod ingest;
pub mod scalar;
pub mod simulate;
pub mod spatial;
pub mod stats;
pub mod utilization;

pub use calibration::InversionMethod;
pub use datamodel::{FacilityId, NeighborhoodId, RoomId, SurveyCell};
pub use scalar::Scalar;

pub type GeoPoint64 = datamodel::GeoPoint<f64>;
pub type AddressRecord64 = datamodel::AddressRecord<f64>;
pub type UtilizationTrace64 = utilization::UtilizationTrace<f64>;
pub type UtilizationTrace32 = utilization::UtilizationTrace<f32>;
pub type SurvivalCurve64 = utilization::SurvivalCurve<f64>;
pub type SurvivalCurve32 = utilization::SurvivalCurve<f32>;
pub type CalibrationResult64 = calibration::CalibrationResult<f64>;
pub type CalibrationResult32 = calibration::CalibrationResult<f32>;
pub type ChiSquareResult64 = stats::ChiSquareResult<f64>;
pub type DecayFit64 = spatial::DecayFit<f64>;
pub type CentralAccess64 = spatial::CentralAccess<f64>;
pub type ProspectParams64 = behavioral::ProspectParams<f64>;
pub type UtilityWeights64 = behavioral::UtilityWeights<f64>;
pub type DemandProcess64 = simulate::DemandProcess<f64>;
pub type AgentPopulation64 = simulate::AgentPopulation<f64>;
