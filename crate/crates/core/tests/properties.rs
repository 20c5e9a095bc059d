use std::collections::BTreeMap;

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;

use capcal_core::behavioral::{prospect_value, utility_combined, ProspectParams, UtilityWeights};
use capcal_core::calibration::{interpolated_exceedance, invert_threshold, ppr};
use capcal_core::datamodel::{AddressRecord, GeoPoint};
use capcal_core::simulate::{gen_utilization_trace, simulate_visits, AgentPopulation, DemandProcess, VisitTimeDist};
use capcal_core::spatial::{central_access_index, fit_distance_decay, haversine_distance, neighborhood_centroid};
use capcal_core::stats::{chi_square_independence, chi_square_pvalue, pearson_correlation};
use capcal_core::utilization::{survival_function, Segment, SurvivalCurve, UtilizationTrace};
use capcal_core::{FacilityId, InversionMethod, NeighborhoodId, SurveyCell};

fn fac() -> FacilityId {
    FacilityId::new("F").unwrap()
}

/// Contiguous trace from (minutes, level index) pairs; levels are multiples of 0.05.
fn trace(pieces: &[(i64, u32)]) -> UtilizationTrace<f64> {
    let mut t = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let segments = pieces
        .iter()
        .map(|&(m, k)| {
            let s = Segment { start: t, end: t + Duration::minutes(m), u: f64::from(k) * 0.05 };
            t = s.end;
            s
        })
        .collect();
    UtilizationTrace::new(fac(), segments).unwrap()
}

fn pieces() -> impl Strategy<Value = Vec<(i64, u32)>> {
    prop::collection::vec((1i64..240, 0u32..25), 1..40)
}

/// Random valid curve: strictly increasing levels with exceedance starting at 1.
fn curve() -> impl Strategy<Value = SurvivalCurve<f64>> {
    prop::collection::vec((0.001f64..0.2, 0.0f64..1.0), 1..20).prop_map(|steps| {
        let mut levels = Vec::new();
        let mut exceedance = Vec::new();
        let (mut u, mut e) = (0.0, 1.0);
        for (i, (du, shrink)) in steps.into_iter().enumerate() {
            u += du;
            if i > 0 {
                e *= shrink;
            }
            levels.push(u);
            exceedance.push(e);
        }
        SurvivalCurve::from_points(fac(), levels, exceedance, Duration::hours(1)).unwrap()
    })
}

proptest! {
    #[test]
    fn survival_is_a_valid_curve(p in pieces()) {
        let c = survival_function(&trace(&p)).unwrap();
        prop_assert_eq!(c.exceedance()[0], 1.0);
        prop_assert!(c.levels().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(c.exceedance().windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(c.exceedance().iter().all(|e| *e > 0.0 && *e <= 1.0));
    }

    #[test]
    fn survival_conserves_time(p in pieces()) {
        let c = survival_function(&trace(&p)).unwrap();
        let total: i64 = p.iter().map(|x| x.0).sum();
        prop_assert_eq!(c.total_duration(), Duration::minutes(total));
        // Time at each level is the drop between neighbouring exceedances.
        let e = c.exceedance();
        let mass: f64 = (0..e.len()).map(|i| e[i] - e.get(i + 1).copied().unwrap_or(0.0)).sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn survival_invariant_under_refinement(p in pieces(), cut in 1i64..1000) {
        let refined: Vec<(i64, u32)> = p
            .iter()
            .flat_map(|&(m, k)| {
                let a = 1 + cut % m.max(2);
                if m > 1 && a < m { vec![(a, k), (m - a, k)] } else { vec![(m, k)] }
            })
            .collect();
        prop_assert_eq!(survival_function(&trace(&p)).unwrap(), survival_function(&trace(&refined)).unwrap());
    }

    #[test]
    fn survival_matches_minute_ticks(p in pieces()) {
        let c = survival_function(&trace(&p)).unwrap();
        let ticks: Vec<u32> = p.iter().flat_map(|&(m, k)| std::iter::repeat_n(k, m as usize)).collect();
        for probe in 0..=26u32 {
            let u = f64::from(probe) * 0.05;
            let above = ticks.iter().filter(|&&k| f64::from(k) * 0.05 >= u).count();
            let expected = above as f64 / ticks.len() as f64;
            prop_assert_eq!(c.eval(u), expected);
        }
    }

    #[test]
    fn step_inversion_is_smallest_qualifying_level(c in curve(), q in 0.0f64..=1.0) {
        let t = invert_threshold(&c, q, InversionMethod::Step).unwrap();
        match c.exceedance().iter().position(|e| *e <= q) {
            Some(i) => {
                prop_assert!(!t.saturated);
                prop_assert_eq!(t.threshold_u, c.levels()[i]);
                prop_assert!(c.eval(t.threshold_u) <= q);
            }
            None => {
                prop_assert!(t.saturated);
                prop_assert_eq!(t.threshold_u, c.max_level());
            }
        }
    }

    #[test]
    fn interpolated_inversion_hits_ppr(c in curve(), q in 0.0f64..=1.0) {
        let t = invert_threshold(&c, q, InversionMethod::Interpolated).unwrap();
        if !t.saturated {
            prop_assert!((interpolated_exceedance(&c, t.threshold_u) - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn inversion_is_monotone(c in curve(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for m in [InversionMethod::Step, InversionMethod::Interpolated] {
            let ulo = invert_threshold(&c, lo, m).unwrap().threshold_u;
            let uhi = invert_threshold(&c, hi, m).unwrap().threshold_u;
            prop_assert!(uhi <= ulo);
        }
    }

    #[test]
    fn ppr_pools_counts(cells in prop::collection::vec((1u64..10_000, 0.0f64..=1.0), 1..10)) {
        let cells: Vec<SurveyCell> = cells
            .iter()
            .enumerate()
            .map(|(i, &(v, f))| SurveyCell::new(fac(), NeighborhoodId::new(format!("N{i}")).unwrap(), v, (v as f64 * f) as u64).unwrap())
            .collect();
        let p: u64 = cells.iter().map(|c| c.problems).sum();
        let v: u64 = cells.iter().map(|c| c.visits).sum();
        prop_assert_eq!(ppr::<f64>(&cells).unwrap(), p as f64 / v as f64);
    }

    #[test]
    fn pvalue_decreases_in_statistic(df in 1u32..30, a in 0.0f64..80.0, b in 0.0f64..80.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(chi_square_pvalue(hi, df) <= chi_square_pvalue(lo, df) + 1e-15);
    }

    #[test]
    fn chi_square_ignores_row_order(rows in prop::collection::vec([1u64..500, 1u64..500], 2..8), seed in any::<u64>()) {
        let base: ChiSq = chi_square_independence(&rows).unwrap().into();
        let mut shuffled = rows.clone();
        let n = shuffled.len();
        shuffled.rotate_left((seed as usize) % n);
        shuffled.swap(0, n - 1);
        let other: ChiSq = chi_square_independence(&shuffled).unwrap().into();
        prop_assert!((base.0 - other.0).abs() <= 1e-9 * base.0.max(1.0));
        prop_assert_eq!(base.1, other.1);
    }

    #[test]
    fn correlation_is_affine_invariant(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
        a in 0.1f64..10.0, b in -50.0f64..50.0, c in 0.1f64..10.0, d in -50.0f64..50.0,
    ) {
        if let Ok(r) = pearson_correlation(&pairs) {
            prop_assert!((-1.0..=1.0).contains(&r));
            let mapped: Vec<_> = pairs.iter().map(|&(x, y)| (a * x + b, c * y + d)).collect();
            prop_assert!((pearson_correlation(&mapped).unwrap() - r).abs() < 1e-9);
            let flipped: Vec<_> = pairs.iter().map(|&(x, y)| (-x, y)).collect();
            prop_assert!((pearson_correlation(&flipped).unwrap() + r).abs() < 1e-9);
        }
    }

    #[test]
    fn decay_fit_never_raises_rss(
        alpha in 0.5f64..50.0, beta in -0.2f64..1.0,
        noise in prop::collection::vec(-0.1f64..0.1, 8),
    ) {
        let pts: Vec<(f64, f64)> = noise
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let d = 0.5 + i as f64 * 0.7;
                (d, (alpha * (-beta * d).exp() * (1.0 + z)).max(0.0))
            })
            .collect();
        let fit = fit_distance_decay(&pts, fac()).unwrap();
        prop_assert!(fit.rss_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(fit.alpha > 0.0);
    }

    #[test]
    fn centroid_ignores_order(pts in prop::collection::vec((-60.0f64..60.0, -170.0f64..170.0, any::<bool>()), 1..20), k in 0usize..20) {
        let n = NeighborhoodId::new("A").unwrap();
        let mut addrs: Vec<AddressRecord<f64>> = pts
            .iter()
            .map(|&(lat, lon, dev)| AddressRecord { neighborhood: n.clone(), location: GeoPoint::new(lat, lon).unwrap(), developed: dev })
            .collect();
        let a = neighborhood_centroid(&addrs, &n);
        addrs.rotate_left(k % pts.len());
        addrs.reverse();
        let b = neighborhood_centroid(&addrs, &n);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.lat() - b.lat()).abs() < 1e-9);
                prop_assert!((a.lon() - b.lon()).abs() < 1e-9);
            }
            (Err(_), Err(_)) => prop_assert!(pts.iter().all(|p| !p.2)),
            _ => prop_assert!(false, "order changed the outcome"),
        }
    }

    #[test]
    fn haversine_is_a_metric(
        a in (-89.0f64..89.0, -179.0f64..179.0),
        b in (-89.0f64..89.0, -179.0f64..179.0),
        c in (-89.0f64..89.0, -179.0f64..179.0),
    ) {
        let p = |x: (f64, f64)| GeoPoint::new(x.0, x.1).unwrap();
        let (a, b, c) = (p(a), p(b), p(c));
        let ab = haversine_distance(&a, &b);
        prop_assert!(ab >= 0.0);
        prop_assert!(haversine_distance(&a, &a).abs() < 1e-9);
        prop_assert!((ab - haversine_distance(&b, &a)).abs() < 1e-9);
        prop_assert!(haversine_distance(&a, &c) <= ab + haversine_distance(&b, &c) + 1e-6);
        prop_assert!(ab <= std::f64::consts::PI * 6371.0 + 1e-6);
    }

    #[test]
    fn central_access_falls_with_distance(w in 0.1f64..100.0, beta in 0.0f64..2.0, d in 0.0f64..50.0, extra in 0.0f64..50.0) {
        let mut fit = fit_distance_decay(&[(1.0, 2.0), (2.0, 1.0), (3.0, 0.5)], fac()).unwrap();
        fit.beta = beta;
        let weights = BTreeMap::from([(fac(), w)]);
        let near = central_access_index(&[fit.clone()], &weights, &BTreeMap::from([(fac(), d)])).unwrap();
        let far = central_access_index(&[fit], &weights, &BTreeMap::from([(fac(), d + extra)])).unwrap();
        prop_assert!(far <= near);
        prop_assert!(near <= w + 1e-12);
    }

    #[test]
    fn prospect_value_shape(
        lambda in 1.0f64..5.0, ga in 0.1f64..1.0, la in 0.1f64..1.0, r in -5.0f64..5.0,
        x in -20.0f64..20.0, y in -20.0f64..20.0, z in 0.0f64..10.0,
    ) {
        let p = ProspectParams::new(lambda, ga, la, r).unwrap();
        prop_assert_eq!(prospect_value(r, &p), 0.0);
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(prospect_value(lo, &p) <= prospect_value(hi, &p));
        prop_assert_eq!(prospect_value(x, &p) >= 0.0, x >= r);
        // Equal exponents: a loss outweighs the matching gain by lambda.
        let sym = ProspectParams::new(lambda, ga, ga, r).unwrap();
        let (gain, loss) = (prospect_value(r + z, &sym), prospect_value(r - z, &sym));
        prop_assert!((loss + lambda * gain).abs() <= 1e-9 * gain.max(1.0));
        // Concave over gains, convex over losses.
        let mid = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| f((a + b) / 2.0) - (f(a) + f(b)) / 2.0;
        let v = |t: f64| prospect_value(t, &p);
        prop_assert!(mid(&v, r + z, r + 2.0 * z + 1.0) >= -1e-9);
        prop_assert!(mid(&v, r - z, r - 2.0 * z - 1.0) <= 1e-9);
    }

    #[test]
    fn combined_utility_is_linear(wc in 0.0f64..1.0, c in -10.0f64..10.0, q in -10.0f64..10.0, c2 in -10.0f64..10.0, q2 in -10.0f64..10.0, k in -5.0f64..5.0) {
        let w = UtilityWeights::new(wc, 1.0 - wc).unwrap();
        let lhs = utility_combined(c + k * c2, q + k * q2, &w);
        let rhs = utility_combined(c, q, &w) + k * utility_combined(c2, q2, &w);
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }
}

struct ChiSq(f64, u32);

impl From<capcal_core::stats::ChiSquareResult<f64>> for ChiSq {
    fn from(r: capcal_core::stats::ChiSquareResult<f64>) -> Self {
        ChiSq(r.statistic, r.df)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulator_is_deterministic(seed in any::<u64>(), threshold in 0.5f64..1.0) {
        let process = DemandProcess::new(fac(), 0.7, 0.2, 0.05, 30, 3, seed);
        let pop = AgentPopulation::new(NeighborhoodId::new("SIM").unwrap(), 500, threshold, VisitTimeDist::PeakBiased, seed ^ 1);
        let t1 = gen_utilization_trace(&process).unwrap();
        let t2 = gen_utilization_trace(&process).unwrap();
        prop_assert_eq!(&t1, &t2);
        prop_assert_eq!(simulate_visits(&t1, &pop).unwrap(), simulate_visits(&t2, &pop).unwrap());
    }
}
