//! Synthetic ground truth: demand traces and survey outcomes produced by
//! visitors with a known tolerance threshold.
//!
//! All randomness comes from ChaCha8 seeded with `seed_from_u64`, which is
//! portable across platforms, so seeded runs are reproducible bit for bit.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::behavioral::{prospect_value, ProspectParams};
use crate::calibration::{invert_threshold, ppr, CalibrationError, InversionMethod};
use crate::datamodel::{FacilityId, NeighborhoodId, OccupancySample, SurveyCell};
use crate::scalar::Scalar;
use crate::utilization::{survival_function, Segment, UtilizationError, UtilizationTrace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid demand process: {0}")]
    InvalidProcess(&'static str),
    #[error("invalid agent population: {0}")]
    InvalidPopulation(&'static str),
    #[error("trace has no observed time")]
    EmptyTrace,
    #[error(transparent)]
    Utilization(#[from] UtilizationError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// Daily sinusoid plus i.i.d. Gaussian noise, floored at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandProcess<T> {
    pub facility: FacilityId,
    pub start: DateTime<Utc>,
    pub mean_u: T,
    pub amplitude: T,
    pub noise_sd: T,
    pub step_minutes: u32,
    pub days: u32,
    pub seed: u64,
}

impl<T: Scalar> DemandProcess<T> {
    /// A process starting at 2025-01-01T00:00:00Z.
    pub fn new(facility: FacilityId, mean_u: T, amplitude: T, noise_sd: T, step_minutes: u32, days: u32, seed: u64) -> Self {
        Self {
            facility,
            start: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
            mean_u,
            amplitude,
            noise_sd,
            step_minutes,
            days,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !self.mean_u.is_finite() || self.mean_u < T::zero() {
            return Err(SimError::InvalidProcess("mean_u must be a finite value >= 0"));
        }
        if !self.amplitude.is_finite() {
            return Err(SimError::InvalidProcess("amplitude must be finite"));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < T::zero() {
            return Err(SimError::InvalidProcess("noise_sd must be a finite value >= 0"));
        }
        if self.step_minutes < 1 {
            return Err(SimError::InvalidProcess("step_minutes must be >= 1"));
        }
        if self.days < 1 {
            return Err(SimError::InvalidProcess("days must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VisitTimeDist {
    /// Uniform over observed time.
    #[default]
    Uniform,
    /// Probability of visiting during a step is proportional to
    /// `(1 + u) * duration`.
    PeakBiased,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ReportingRule<T> {
    /// A problem is reported exactly when utilization is at or above the
    /// visitor's threshold.
    #[default]
    Exceedance,
    /// A problem is reported with probability `1 / (1 + exp(k * v))`, where
    /// `v` is the prospect value of the headroom `threshold - u` and `k` the
    /// sharpness. Losses (u above threshold) make reports likely.
    LossAverse { params: ProspectParams<T>, sharpness: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentPopulation<T> {
    pub neighborhood: NeighborhoodId,
    pub n_visits: u64,
    pub threshold: T,
    /// Standard deviation of per-visit thresholds; 0 gives one shared
    /// threshold, otherwise thresholds are drawn from a normal mixture.
    pub threshold_sd: T,
    pub visit_time: VisitTimeDist,
    pub reporting: ReportingRule<T>,
    pub seed: u64,
}

impl<T: Scalar> AgentPopulation<T> {
    pub fn new(neighborhood: NeighborhoodId, n_visits: u64, threshold: T, visit_time: VisitTimeDist, seed: u64) -> Self {
        Self {
            neighborhood,
            n_visits,
            threshold,
            threshold_sd: T::zero(),
            visit_time,
            reporting: ReportingRule::Exceedance,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_visits < 1 {
            return Err(SimError::InvalidPopulation("n_visits must be >= 1"));
        }
        if !self.threshold.is_finite() || self.threshold < T::zero() {
            return Err(SimError::InvalidPopulation("threshold must be a finite value >= 0"));
        }
        if !self.threshold_sd.is_finite() || self.threshold_sd < T::zero() {
            return Err(SimError::InvalidPopulation("threshold_sd must be a finite value >= 0"));
        }
        Ok(())
    }
}

fn standard_normal<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    let z: f64 = rng.sample(StandardNormal);
    T::lit(z)
}

pub fn gen_utilization_trace<T: Scalar>(process: &DemandProcess<T>) -> Result<UtilizationTrace<T>, SimError> {
    process.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(process.seed);
    let step = i64::from(process.step_minutes);
    let steps = (i64::from(process.days) * 24 * 60 / step).max(1);
    let tau = T::lit(2.0 * std::f64::consts::PI);
    let day_minutes = T::lit(24.0 * 60.0);
    let add_noise = process.noise_sd > T::zero();

    let segments = (0..steps)
        .map(|k| {
            let minute = k * step;
            let phase = tau * T::lit(minute as f64) / day_minutes;
            let mut u = process.mean_u + process.amplitude * phase.sin();
            if add_noise {
                u = u + process.noise_sd * standard_normal::<T>(&mut rng);
            }
            Segment {
                start: process.start + Duration::minutes(minute),
                end: process.start + Duration::minutes(minute + step),
                u: u.max(T::zero()),
            }
        })
        .collect();
    Ok(UtilizationTrace::new(process.facility.clone(), segments)?)
}

/// Cumulative weights over segments; a uniform draw on `[0, total)` picks a
/// segment by binary search.
struct SegmentSampler {
    cumulative: Vec<f64>,
}

impl SegmentSampler {
    fn new<T: Scalar>(trace: &UtilizationTrace<T>, dist: VisitTimeDist) -> Self {
        let mut acc = 0.0;
        let cumulative = trace
            .segments()
            .iter()
            .map(|s| {
                let ms = s.duration().num_milliseconds() as f64;
                acc += match dist {
                    VisitTimeDist::Uniform => ms,
                    VisitTimeDist::PeakBiased => (1.0 + s.u.to_f64().unwrap_or(0.0)) * ms,
                };
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty trace");
        let x = rng.random_range(0.0..total);
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

/// Samples visit times over the trace and counts the visits that run into
/// a problem.
pub fn simulate_visits<T: Scalar>(trace: &UtilizationTrace<T>, pop: &AgentPopulation<T>) -> Result<SurveyCell, SimError> {
    pop.validate()?;
    if trace.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let sampler = SegmentSampler::new(trace, pop.visit_time);
    let mut rng = ChaCha8Rng::seed_from_u64(pop.seed);
    let mixed = pop.threshold_sd > T::zero();
    let mut problems = 0u64;
    for _ in 0..pop.n_visits {
        let u = trace.segments()[sampler.draw(&mut rng)].u;
        let threshold = if mixed {
            pop.threshold + pop.threshold_sd * standard_normal::<T>(&mut rng)
        } else {
            pop.threshold
        };
        let problem = match pop.reporting {
            ReportingRule::Exceedance => u >= threshold,
            ReportingRule::LossAverse { params, sharpness } => {
                let v = prospect_value(threshold - u, &params);
                let p = T::one() / (T::one() + (sharpness * v).exp());
                rng.random::<f64>() < p.to_f64().unwrap_or(0.0)
            }
        };
        problems += u64::from(problem);
    }
    SurveyCell::new(trace.facility().clone(), pop.neighborhood.clone(), pop.n_visits, problems)
        .map_err(|_| unreachable!("problems never exceed visits"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrip<T> {
    pub true_threshold: T,
    pub recovered: T,
    pub abs_error: T,
    pub ppr: T,
    pub saturated: bool,
    pub cell: SurveyCell,
}

/// Generates a trace and survey, then recovers the threshold through the
/// calibration pipeline.
pub fn roundtrip_check<T: Scalar>(
    process: &DemandProcess<T>,
    pop: &AgentPopulation<T>,
    method: InversionMethod,
) -> Result<RoundTrip<T>, SimError> {
    let trace = gen_utilization_trace(process)?;
    let cell = simulate_visits(&trace, pop)?;
    let curve = survival_function(&trace)?;
    let rate: T = ppr([&cell])?;
    let t = invert_threshold(&curve, rate, method)?;
    Ok(RoundTrip {
        true_threshold: pop.threshold,
        recovered: t.threshold_u,
        abs_error: (t.threshold_u - pop.threshold).abs(),
        ppr: rate,
        saturated: t.saturated,
        cell,
    })
}

/// Occupancy counts that reproduce a contiguous trace at the given
/// capacity, rounded to whole units. A closing sample carries the last
/// value to the trace end.
pub fn trace_to_occupancy<T: Scalar>(trace: &UtilizationTrace<T>, capacity: u64) -> Vec<OccupancySample> {
    let cap = T::from_count(capacity);
    let count = |u: T| (u * cap).round().to_u64().unwrap_or(0);
    let mut out: Vec<OccupancySample> = trace
        .segments()
        .iter()
        .map(|s| OccupancySample { facility: trace.facility().clone(), timestamp: s.start, occupied: count(s.u) })
        .collect();
    if let Some(last) = trace.segments().last() {
        out.push(OccupancySample { facility: trace.facility().clone(), timestamp: last.end, occupied: count(last.u) });
    }
    out
}
