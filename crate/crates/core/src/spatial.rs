//! Neighborhood centroids, great-circle distances, exponential distance
//! decay fits and the central-access index.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::datamodel::{AddressRecord, FacilityId, GeoPoint, NeighborhoodId};
use crate::scalar::Scalar;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpatialError {
    #[error("empty neighborhood {0}: no developed addresses")]
    EmptyNeighborhood(NeighborhoodId),
    #[error("degenerate design: need at least 2 points with distinct distances")]
    DegenerateDesign,
    #[error("no signal: all visit frequencies are zero")]
    NoSignal,
    #[error("point {0} has a negative or non-finite value")]
    InvalidPoint(usize),
    #[error("fit failed: normal equations are singular")]
    Singular,
    #[error("incomplete facility set: no weight or distance for {0}")]
    IncompleteFacilitySet(FacilityId),
}

/// Mean latitude and longitude of the developed addresses in `neighborhood`.
pub fn neighborhood_centroid<T: Scalar>(
    addresses: &[AddressRecord<T>],
    neighborhood: &NeighborhoodId,
) -> Result<GeoPoint<T>, SpatialError> {
    let (mut lat, mut lon, mut n) = (T::zero(), T::zero(), 0u64);
    for a in addresses.iter().filter(|a| a.developed && &a.neighborhood == neighborhood) {
        lat = lat + a.location.lat();
        lon = lon + a.location.lon();
        n += 1;
    }
    if n == 0 {
        return Err(SpatialError::EmptyNeighborhood(neighborhood.clone()));
    }
    let n = T::from_count(n);
    // A mean of in-range coordinates is in range.
    Ok(GeoPoint::new(lat / n, lon / n).expect("mean of valid coordinates"))
}

/// Great-circle distance in km on a sphere of radius 6371 km.
pub fn haversine_distance<T: Scalar>(a: &GeoPoint<T>, b: &GeoPoint<T>) -> T {
    let (lat1, lat2) = (a.lat().to_radians(), b.lat().to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon() - a.lon()).to_radians();
    let half = T::lit(0.5);
    let s1 = (dlat * half).sin();
    let s2 = (dlon * half).sin();
    let h = (s1 * s1 + lat1.cos() * lat2.cos() * s2 * s2).max(T::zero()).min(T::one());
    T::lit(2.0 * EARTH_RADIUS_KM) * h.sqrt().asin()
}

/// Fitted `V = alpha * exp(-beta * d)` for one facility.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit<T> {
    pub facility: FacilityId,
    pub alpha: T,
    /// Per km. Negative values mean visits grow with distance.
    pub beta: T,
    pub rss: T,
    pub n_points: usize,
    pub iterations: usize,
    /// The last step was below tolerance, or no step could reduce the RSS.
    pub converged: bool,
    /// RSS at the start and after each accepted iteration.
    pub rss_history: Vec<T>,
}

impl<T: Scalar> DecayFit<T> {
    pub fn predict(&self, distance: T) -> T {
        self.alpha * (-self.beta * distance).exp()
    }
}

const MAX_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 60;
const STEP_TOL: f64 = 1e-10;

fn rss<T: Scalar>(points: &[(T, T)], alpha: T, beta: T) -> T {
    points.iter().fold(T::zero(), |acc, &(d, v)| {
        let r = v - alpha * (-beta * d).exp();
        acc + r * r
    })
}

fn initial_guess<T: Scalar>(points: &[(T, T)]) -> (T, T) {
    if points.iter().all(|&(_, v)| v > T::zero()) {
        let n = T::from_count(points.len() as u64);
        let (sd, sl) = points
            .iter()
            .fold((T::zero(), T::zero()), |(a, b), &(d, v)| (a + d, b + v.ln()));
        let (md, ml) = (sd / n, sl / n);
        let (mut sxy, mut sxx) = (T::zero(), T::zero());
        for &(d, v) in points {
            sxy = sxy + (d - md) * (v.ln() - ml);
            sxx = sxx + (d - md) * (d - md);
        }
        let slope = sxy / sxx;
        ((ml - slope * md).exp(), -slope)
    } else {
        let vmax = points.iter().fold(T::zero(), |m, &(_, v)| m.max(v));
        (vmax, T::zero())
    }
}

/// Least-squares fit on the original scale by Gauss-Newton with step
/// halving, started from a log-linear regression when every value is
/// positive.
pub fn fit_distance_decay<T: Scalar>(points: &[(T, T)], facility: FacilityId) -> Result<DecayFit<T>, SpatialError> {
    if let Some(i) = points
        .iter()
        .position(|&(d, v)| !d.is_finite() || !v.is_finite() || v < T::zero())
    {
        return Err(SpatialError::InvalidPoint(i));
    }
    let first = points.first().map(|p| p.0);
    if points.len() < 2 || points.iter().all(|p| Some(p.0) == first) {
        return Err(SpatialError::DegenerateDesign);
    }
    if points.iter().all(|p| p.1 == T::zero()) {
        return Err(SpatialError::NoSignal);
    }

    let (mut alpha, mut beta) = initial_guess(points);
    let mut current = rss(points, alpha, beta);
    let mut history = vec![current];
    let mut converged = false;
    let mut iterations = 0;
    let tol = T::lit(STEP_TOL);

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // Normal equations J^T J delta = J^T r for the model's Jacobian.
        let (mut aa, mut ab, mut bb, mut ga, mut gb) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
        for &(d, v) in points {
            let e = (-beta * d).exp();
            let r = v - alpha * e;
            let ja = e;
            let jb = -alpha * d * e;
            aa = aa + ja * ja;
            ab = ab + ja * jb;
            bb = bb + jb * jb;
            ga = ga + ja * r;
            gb = gb + jb * r;
        }
        let det = aa * bb - ab * ab;
        if !det.is_finite() || det <= T::zero() {
            if current == T::zero() {
                converged = true;
                break;
            }
            return Err(SpatialError::Singular);
        }
        let step_a = (bb * ga - ab * gb) / det;
        let step_b = (aa * gb - ab * ga) / det;

        let mut scale = T::one();
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let (na, nb) = (alpha + scale * step_a, beta + scale * step_b);
            if na > T::zero() {
                let trial = rss(points, na, nb);
                if trial <= current {
                    accepted = Some((na, nb, trial));
                    break;
                }
            }
            scale = scale * T::lit(0.5);
        }
        let Some((na, nb, trial)) = accepted else {
            converged = true;
            break;
        };
        let step_norm = ((na - alpha).powi(2) + (nb - beta).powi(2)).sqrt();
        alpha = na;
        beta = nb;
        current = trial;
        history.push(current);
        if step_norm < tol {
            converged = true;
            break;
        }
    }

    Ok(DecayFit {
        facility,
        alpha,
        beta,
        rss: current,
        n_points: points.len(),
        iterations,
        converged,
        rss_history: history,
    })
}

/// `CA_n = sum_f W_f * exp(-beta_f * d_nf)` over the fitted facilities.
pub fn central_access_index<T: Scalar>(
    fits: &[DecayFit<T>],
    weights: &BTreeMap<FacilityId, T>,
    distances: &BTreeMap<FacilityId, T>,
) -> Result<T, SpatialError> {
    fits.iter().try_fold(T::zero(), |acc, fit| {
        let missing = || SpatialError::IncompleteFacilitySet(fit.facility.clone());
        let w = *weights.get(&fit.facility).ok_or_else(missing)?;
        let d = *distances.get(&fit.facility).ok_or_else(missing)?;
        Ok(acc + w * (-fit.beta * d).exp())
    })
}

/// `V_n = sum_f V_nf`.
pub fn total_engagement<T: Scalar>(visits_by_facility: &BTreeMap<FacilityId, T>) -> T {
    visits_by_facility.values().fold(T::zero(), |acc, &v| acc + v)
}

/// Default facility weights: mean visit frequency across neighborhoods.
pub fn mean_visit_weights<T: Scalar>(visits: &BTreeMap<FacilityId, Vec<T>>) -> BTreeMap<FacilityId, T> {
    visits
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(f, v)| {
            let sum = v.iter().fold(T::zero(), |a, &x| a + x);
            (f.clone(), sum / T::from_count(v.len() as u64))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralAccess<T> {
    pub neighborhood: NeighborhoodId,
    pub ca: T,
    pub total_engagement: T,
}
