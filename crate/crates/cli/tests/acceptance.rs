//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Run with `cargo test -p capcal-cli --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration as Elapsed, Instant};

use chrono::{Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use capcal_cli::commands::{cmd_calibrate, cmd_simulate, Options};
use capcal_cli::config::LoadedConfig;
use capcal_core::behavioral::{prospect_value, ProspectParams};
use capcal_core::calibration::invert_threshold;
use capcal_core::simulate::{roundtrip_check, AgentPopulation, DemandProcess, VisitTimeDist};
use capcal_core::spatial::fit_distance_decay;
use capcal_core::stats::{chi_square_independence, chi_square_pvalue};
use capcal_core::utilization::{survival_eval, survival_function, Segment, SurvivalCurve, UtilizationTrace};
use capcal_core::{FacilityId, InversionMethod, NeighborhoodId};

const TABLE1_TOL: f64 = 1e-3;
const ROUNDTRIP_TOL: f64 = 0.03;
const ROUNDTRIP_MIN_PASS: usize = 28;
const PVALUE_TOL: f64 = 1e-10;
const STATISTIC_TOL: f64 = 1e-12;
const REFERENCE_P: f64 = 4.07e-4;
const REFERENCE_P_TOL: f64 = 1e-7;
const DECAY_RSS_TOL: f64 = 1e-9;
const DECAY_PARAM_TOL: f64 = 1e-6;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Option<Elapsed>);

fn fac(code: &str) -> FacilityId {
    FacilityId::new(code).unwrap()
}

fn trace_from(facility: FacilityId, pieces: &[(i64, f64)]) -> UtilizationTrace<f64> {
    let mut t = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let segments = pieces
        .iter()
        .map(|&(minutes, u)| {
            let s = Segment { start: t, end: t + Duration::minutes(minutes), u };
            t = s.end;
            s
        })
        .collect();
    UtilizationTrace::new(facility, segments).unwrap()
}

/// A trace on levels 0.40..=1.10 whose linearised exceedance passes through
/// `(threshold, ppr)`.
fn table1_trace(code: &str, ppr: f64, threshold: f64) -> UtilizationTrace<f64> {
    let levels: Vec<f64> = (0..15).map(|i| 0.40 + 0.05 * f64::from(i)).collect();
    let hi = levels.iter().position(|&l| l > threshold).unwrap();
    let lo = hi - 1;
    let slope = ppr / 0.1;
    let e_lo = ppr + slope * (threshold - levels[lo]);
    let e_hi = ppr - slope * (levels[hi] - threshold);
    let exceedance: Vec<f64> = (0..levels.len())
        .map(|i| match i {
            0 => 1.0,
            i if i < lo => 1.0 - (1.0 - e_lo) * i as f64 / lo as f64,
            i if i == lo => e_lo,
            i => e_hi * 0.5f64.powi((i - hi) as i32),
        })
        .collect();
    let total = 10_000_000.0;
    let pieces: Vec<(i64, f64)> = (0..levels.len())
        .map(|i| {
            let next = exceedance.get(i + 1).copied().unwrap_or(0.0);
            (((exceedance[i] - next) * total).round() as i64, levels[i])
        })
        .collect();
    // Interleave levels so the trace is not sorted by utilization.
    let mut order: Vec<usize> = (0..pieces.len()).collect();
    order.sort_by_key(|&i| (i * 7) % pieces.len());
    let shuffled: Vec<(i64, f64)> = order.into_iter().map(|i| pieces[i]).collect();
    trace_from(fac(code), &shuffled)
}

fn table1_fixture() -> Check {
    let rows = [("YC", 0.2854, 0.827), ("WC", 0.1449, 0.935), ("CRC", 0.2808, 0.989), ("TGB", 0.1894, 0.988)];
    let mut worst = 0.0f64;
    for (code, ppr, threshold) in rows {
        let curve = survival_function(&table1_trace(code, ppr, threshold)).map_err(|e| e.to_string())?;
        let t = invert_threshold(&curve, ppr, InversionMethod::Interpolated).map_err(|e| e.to_string())?;
        let err = (t.threshold_u - threshold).abs();
        if t.saturated || err > TABLE1_TOL {
            return Err(format!("{code}: recovered {:.4} for {threshold}", t.threshold_u));
        }
        worst = worst.max(err);
    }
    Ok(format!("4 facilities, max error {worst:.2e} (tol {TABLE1_TOL})"))
}

fn roundtrip_recovery() -> Check {
    let mut passed = 0;
    let mut worst = 0.0f64;
    for threshold in [0.70, 0.85, 0.95] {
        for s in 0..10u64 {
            let process = DemandProcess::new(fac("SIM"), 0.7, 0.2, 0.05, 10, 28, s);
            let pop = AgentPopulation::new(NeighborhoodId::new("SIM").unwrap(), 5000, threshold, VisitTimeDist::Uniform, 1000 + s);
            let rt = roundtrip_check(&process, &pop, InversionMethod::Interpolated).map_err(|e| e.to_string())?;
            worst = worst.max(rt.abs_error);
            passed += usize::from(rt.abs_error <= ROUNDTRIP_TOL);
        }
    }
    let msg = format!("{passed}/30 runs within {ROUNDTRIP_TOL}, max error {worst:.4}");
    if passed >= ROUNDTRIP_MIN_PASS {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn survival_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20_250_101);
    let mut checked = 0;
    for case in 0..100 {
        let n = rng.random_range(1..60);
        let pieces: Vec<(i64, f64)> =
            (0..n).map(|_| (rng.random_range(1..300), f64::from(rng.random_range(0u32..30)) / 20.0)).collect();
        let curve = survival_function(&trace_from(fac("F"), &pieces)).map_err(|e| e.to_string())?;
        let ticks: Vec<f64> = pieces.iter().flat_map(|&(m, u)| std::iter::repeat_n(u, m as usize)).collect();
        for &level in curve.levels() {
            let above = ticks.iter().filter(|&&u| u >= level).count();
            let brute = above as f64 / ticks.len() as f64;
            let got = survival_eval(&curve, level);
            if got != brute {
                return Err(format!("trace {case}, level {level}: {got} != {brute}"));
            }
            checked += 1;
        }
    }
    Ok(format!("100 traces, {checked} levels exact"))
}

fn chi_square_oracles() -> Check {
    let mut worst = 0.0f64;
    for i in 0..500 {
        let x = 50.0 * f64::from(i) / 499.0;
        let e1 = (chi_square_pvalue(x, 1) - libm::erfc((x / 2.0).sqrt())).abs();
        let e2 = (chi_square_pvalue(x, 2) - (-x / 2.0).exp()).abs();
        worst = worst.max(e1).max(e2);
    }
    if worst > PVALUE_TOL {
        return Err(format!("p-value grid error {worst:.2e}"));
    }
    let r = chi_square_independence::<f64, _>(&[[10u64, 90], [30, 70]]).map_err(|e| e.to_string())?;
    if (r.statistic - 12.5).abs() > STATISTIC_TOL || r.df != 1 || (r.p_value - REFERENCE_P).abs() > REFERENCE_P_TOL {
        return Err(format!("reference table: statistic {}, df {}, p {:.6e}", r.statistic, r.df, r.p_value));
    }
    Ok(format!("grid error {worst:.2e}; reference statistic {}, p {:.5e}", r.statistic, r.p_value))
}

fn decay_recovery() -> Check {
    let distances = [0.5f64, 1.0, 2.0, 3.0, 5.0, 7.5, 10.0, 15.0];
    let (mut worst_rss, mut worst_param) = (0.0f64, 0.0f64);
    for alpha in [1.0f64, 10.0, 100.0] {
        for beta in [-0.3f64, 0.0, 0.2, 1.0] {
            let pts: Vec<(f64, f64)> = distances.iter().map(|&d| (d, alpha * (-beta * d).exp())).collect();
            let fit = fit_distance_decay(&pts, fac("F")).map_err(|e| e.to_string())?;
            let param = (fit.alpha - alpha).abs().max((fit.beta - beta).abs());
            if fit.rss > DECAY_RSS_TOL || param > DECAY_PARAM_TOL {
                return Err(format!("alpha {alpha}, beta {beta}: rss {:.2e}, param error {param:.2e}", fit.rss));
            }
            worst_rss = worst_rss.max(fit.rss);
            worst_param = worst_param.max(param);
        }
    }
    Ok(format!("12 fits, max rss {worst_rss:.2e}, max param error {worst_param:.2e}"))
}

fn prospect_properties() -> Check {
    let p = ProspectParams::<f64>::default();
    let r = p.reference();
    let v = |x: f64| prospect_value(x, &p);
    if v(r) != 0.0 {
        return Err(format!("V(r) = {}", v(r)));
    }
    let grid: Vec<f64> = (0..1000).map(|i| -10.0 + 20.0 * f64::from(i) / 999.0).collect();
    if let Some(w) = grid.windows(2).find(|w| v(w[1]) <= v(w[0])) {
        return Err(format!("not strictly increasing at {}", w[0]));
    }
    let deltas: Vec<f64> = (1..=1000).map(|i| 0.01 * f64::from(i)).collect();
    if let Some(d) = deltas.iter().find(|&&d| v(r - d).abs() <= v(r + d)) {
        return Err(format!("loss aversion fails at delta {d}"));
    }
    for pair in deltas.windows(2) {
        let (a, b) = (pair[0], pair[1] * 2.0);
        if v(r + (a + b) / 2.0) <= (v(r + a) + v(r + b)) / 2.0 {
            return Err(format!("gain concavity fails on [{a}, {b}]"));
        }
    }
    Ok("zero at reference, monotone on 1000 points, loss aversion and concavity on 1000 deltas".into())
}

fn random_curve(rng: &mut ChaCha8Rng) -> SurvivalCurve<f64> {
    let n = rng.random_range(1..25);
    let (mut u, mut e) = (0.0, 1.0);
    let (mut levels, mut exceedance) = (Vec::new(), Vec::new());
    for i in 0..n {
        u += rng.random_range(0.001..0.2);
        if i > 0 {
            e *= rng.random_range(0.0..1.0);
        }
        levels.push(u);
        exceedance.push(e);
    }
    SurvivalCurve::from_points(fac("F"), levels, exceedance, Duration::days(1)).unwrap()
}

fn inversion_monotonicity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..50 {
        let curve = random_curve(&mut rng);
        let mut pprs: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..=1.0)).collect();
        pprs.extend(curve.exceedance());
        pprs.sort_by(f64::total_cmp);
        for method in [InversionMethod::Step, InversionMethod::Interpolated] {
            let us: Vec<f64> =
                pprs.iter().map(|&q| invert_threshold(&curve, q, method).map(|t| t.threshold_u)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
            if let Some(i) = us.windows(2).position(|w| w[1] > w[0]) {
                return Err(format!("curve {case}, {method}: u* rises between ppr {} and {}", pprs[i], pprs[i + 1]));
            }
        }
    }
    Ok("50 curves, both methods non-increasing".into())
}

const SIM_CONFIG: &str = r#"
[run]
method = "interpolated"
output_dir = "out"

[[scenario]]
name = "REC"
mean_u = 0.7
amplitude = 0.2
noise_sd = 0.05
days = 7
seeds = [0, 1, 2]
threshold = 0.85
n_visits = 2000

[[scenario]]
name = "LA"
mean_u = 0.6
amplitude = 0.25
noise_sd = 0.05
days = 7
threshold = 0.8
threshold_sd = 0.05
n_visits = 2000
visit_time = "peak_biased"
reporting = "loss_averse"
"#;

fn collect(dir: &Path, rel: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in fs::read_dir(dir.join(rel)).unwrap() {
        let entry = entry.unwrap();
        let rel = rel.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            collect(dir, &rel, out);
        } else {
            out.insert(rel.display().to_string(), fs::read(dir.join(&rel)).unwrap());
        }
    }
}

fn end_to_end_run() -> Result<BTreeMap<String, Vec<u8>>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = dir.path().join("run.toml");
    fs::write(&cfg_path, SIM_CONFIG).map_err(|e| e.to_string())?;
    let cfg = LoadedConfig::load(&cfg_path).map_err(|e| e.to_string())?;
    cmd_simulate(&cfg, &Options::default()).map_err(|(e, _)| e.to_string())?;
    let sim = LoadedConfig::load(&dir.path().join("out/sim_calibrate.toml")).map_err(|e| e.to_string())?;
    cmd_calibrate(&sim, &Options::default()).map_err(|(e, _)| e.to_string())?;
    let mut files = BTreeMap::new();
    collect(&dir.path().join("out"), Path::new(""), &mut files);
    Ok(files)
}

fn end_to_end_determinism() -> Check {
    let (a, b) = (end_to_end_run()?, end_to_end_run()?);
    if a.keys().ne(b.keys()) {
        return Err("runs wrote different file sets".into());
    }
    if let Some(name) = a.keys().find(|k| a[*k] != b[*k]) {
        return Err(format!("{name} differs"));
    }
    if !a.contains_key("calibrated/calibration.csv") {
        return Err("calibration report missing".into());
    }
    Ok(format!("{} files byte-identical", a.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("fixture thresholds", table1_fixture, Some(Elapsed::from_secs(1))),
        ("round-trip recovery", roundtrip_recovery, Some(Elapsed::from_secs(30))),
        ("survival exactness", survival_exactness, Some(Elapsed::from_secs(10))),
        ("chi-square oracles", chi_square_oracles, None),
        ("decay-fit recovery", decay_recovery, Some(Elapsed::from_secs(1))),
        ("prospect properties", prospect_properties, None),
        ("inversion monotonicity", inversion_monotonicity, None),
        ("end-to-end determinism", end_to_end_determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let (Ok(msg), Some(limit)) = (&result, budget) {
            if elapsed > *limit {
                result = Err(format!("{msg}; took {elapsed:.2?}, budget {limit:?}"));
            }
        }
        let (status, msg) = match &result {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        failed += usize::from(result.is_err());
        println!("{status} [{}] {name}: {msg} ({elapsed:.2?})", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
