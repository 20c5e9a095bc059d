use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::Duration;

use capcal_core::calibration::{calibrate_facility, calibration_curve_export, write_export, CalibrationResult};
use capcal_core::datamodel::{validate_dataset, CapacityEntry, GeoPoint, OccupancySample};
use capcal_core::ingest::{
    self, parse_bookings, parse_capacity, parse_geo, parse_occupancy, parse_survey, IngestError,
};
use capcal_core::simulate::{
    gen_utilization_trace, roundtrip_check, trace_to_occupancy, AgentPopulation, DemandProcess, ReportingRule,
    VisitTimeDist,
};
use capcal_core::spatial::{
    central_access_index, fit_distance_decay, haversine_distance, mean_visit_weights, neighborhood_centroid,
    total_engagement, DecayFit,
};
use capcal_core::stats::{chi_square_independence, problem_table, ChiSquareResult};
use capcal_core::utilization::{booking_utilization, long_gaps, survival_function, utilization_trace, SurvivalCurve};
use capcal_core::{FacilityId, InversionMethod, NeighborhoodId, SurveyCell};

use crate::config::{LoadedConfig, ScenarioConfig};
use crate::output::{file_stem, write_atomic, write_table};
use crate::schema;
use crate::CliError;

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub method: Option<InversionMethod>,
}

/// Files written and non-fatal findings of one command.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Runs `f` and, on error, keeps whatever the command managed to report.
struct Run {
    out_dir: PathBuf,
    outcome: Outcome,
    failures: Vec<String>,
}

impl Run {
    fn new(cfg: &LoadedConfig, opts: &Options) -> Self {
        Self {
            out_dir: cfg.output_dir(opts.out.as_deref()),
            outcome: Outcome::default(),
            failures: Vec::new(),
        }
    }

    fn warn(&mut self, msg: impl Into<String>) {
        self.outcome.warnings.push(msg.into());
    }

    fn fail(&mut self, msg: impl Into<String>) {
        self.failures.push(msg.into());
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = write_table(&self.out_dir.join(name), header, rows)?;
        self.outcome.files.push(path);
        Ok(())
    }

    fn finish(self, command: &str) -> Result<Outcome, (CliError, Outcome)> {
        if self.failures.is_empty() {
            Ok(self.outcome)
        } else {
            let msg = format!("{command}: {}", self.failures.join("; "));
            Err((CliError::Analysis(msg), self.outcome))
        }
    }
}

pub type CommandResult = Result<Outcome, (CliError, Outcome)>;

fn early(e: CliError) -> (CliError, Outcome) {
    (e, Outcome::default())
}

fn num(x: f64) -> String {
    x.to_string()
}

/// Parses several inputs and reports every failure together.
fn gather_errors(results: &[Option<&IngestError>]) -> Result<(), CliError> {
    let msgs: Vec<String> = results.iter().flatten().map(|e| e.to_string()).collect();
    if msgs.is_empty() {
        Ok(())
    } else {
        Err(CliError::Input(msgs.join("\n")))
    }
}

fn group_by_facility<T: Clone>(items: &[T], key: impl Fn(&T) -> &FacilityId) -> BTreeMap<FacilityId, Vec<T>> {
    let mut out: BTreeMap<FacilityId, Vec<T>> = BTreeMap::new();
    for item in items {
        out.entry(key(item).clone()).or_default().push(item.clone());
    }
    out
}

fn result_row(r: &CalibrationResult<f64>, with_hood: bool) -> Vec<String> {
    let mut row = vec![r.facility.to_string()];
    if with_hood {
        row.push(r.neighborhood.as_ref().map(ToString::to_string).unwrap_or_default());
    }
    row.extend([num(r.ppr), num(r.threshold_u), r.saturated.to_string(), r.method.to_string()]);
    row
}

/// Per-facility thresholds from survey counts and occupancy or booking
/// utilization.
pub fn cmd_calibrate(cfg: &LoadedConfig, opts: &Options) -> CommandResult {
    let method = cfg.method(opts.method).map_err(early)?;
    let mut run = Run::new(cfg, opts);
    let inputs = &cfg.config.inputs;

    let survey_path = cfg.require("survey", &inputs.survey).map_err(early)?;
    let occupancy_path = cfg.optional(&inputs.occupancy);
    let bookings_path = cfg.optional(&inputs.bookings);
    if occupancy_path.is_none() && bookings_path.is_none() {
        return Err(early(CliError::Input(
            "calibrate needs an occupancy or bookings input".into(),
        )));
    }
    let capacity_path = match (&occupancy_path, cfg.optional(&inputs.capacity)) {
        (Some(_), None) => return Err(early(CliError::Input("occupancy input requires a capacity input".into()))),
        (_, p) => p,
    };

    let survey = parse_survey(&survey_path);
    let occupancy = occupancy_path.as_deref().map(parse_occupancy).transpose();
    let capacity = capacity_path.as_deref().map(parse_capacity).transpose();
    let bookings = bookings_path.as_deref().map(parse_bookings).transpose();
    gather_errors(&[survey.as_ref().err(), occupancy.as_ref().err(), capacity.as_ref().err(), bookings.as_ref().err()])
        .map_err(early)?;
    let survey = survey.expect("checked");
    let occupancy: Vec<OccupancySample> = occupancy.expect("checked").unwrap_or_default();
    let capacities: Vec<CapacityEntry> = capacity.expect("checked").unwrap_or_default();
    let bookings = bookings.expect("checked").unwrap_or_default();

    let report = validate_dataset(&survey, &capacities, &occupancy);
    if !report.passed() {
        let msgs: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        return Err(early(CliError::Input(msgs.join("\n"))));
    }

    let mut curves: BTreeMap<FacilityId, SurvivalCurve<f64>> = BTreeMap::new();
    let capacity_of: BTreeMap<&FacilityId, &CapacityEntry> = capacities.iter().map(|c| (&c.facility, c)).collect();
    let gap_limit = cfg.config.run.max_gap_minutes.map(Duration::minutes);
    for (facility, samples) in group_by_facility(&occupancy, |s| &s.facility) {
        if let Some(limit) = gap_limit {
            for (from, to) in long_gaps(&samples, limit) {
                run.warn(format!(
                    "{facility}: occupancy gap from {} to {} exceeds {} minutes",
                    ingest::format_timestamp(&from),
                    ingest::format_timestamp(&to),
                    limit.num_minutes()
                ));
            }
        }
        let curve = utilization_trace::<f64>(&samples, capacity_of[&facility])
            .and_then(|trace| survival_function(&trace));
        match curve {
            Ok(c) => {
                curves.insert(facility, c);
            }
            Err(e) => run.fail(format!("{facility}: {e}")),
        }
    }

    let tz = cfg.timezone().map_err(early)?;
    let schedules = cfg.schedules().map_err(early)?;
    let mut bookings_by_facility = group_by_facility(&bookings, |b| &b.facility);
    for (window, period) in schedules {
        let facility = window.facility.clone();
        if curves.contains_key(&facility) {
            return Err(early(CliError::Input(format!(
                "{facility}: both occupancy and bookings given"
            ))));
        }
        let records = bookings_by_facility.remove(&facility).unwrap_or_default();
        match booking_utilization::<f64, _>(&records, &window, period, &tz) {
            Ok(out) => {
                for w in &out.warnings {
                    run.warn(format!("{facility}: {w:?}"));
                }
                match survival_function(&out.trace) {
                    Ok(c) => {
                        curves.insert(facility, c);
                    }
                    Err(e) => run.fail(format!("{facility}: {e}")),
                }
            }
            Err(e) => run.fail(format!("{facility}: {e}")),
        }
    }
    for facility in bookings_by_facility.keys() {
        run.warn(format!("{facility}: bookings ignored, no [[schedule]] entry"));
    }

    let survey_by_facility = group_by_facility(&survey, |c| &c.facility);
    let mut overall_rows = Vec::new();
    let mut hood_rows = Vec::new();
    for (facility, curve) in &curves {
        let Some(cells) = survey_by_facility.get(facility) else {
            run.warn(format!("{facility}: no survey cells, not calibrated"));
            continue;
        };
        match calibrate_facility(cells, curve, method) {
            Ok(cal) => {
                let rows = calibration_curve_export(curve, &cal.overall);
                let path = run.out_dir.join(format!("{}{}.csv", schema::CURVE_PREFIX, file_stem(facility)));
                let written = write_atomic(&path, |w| write_export(w, &rows)).map_err(early)?;
                run.outcome.files.push(written);
                overall_rows.push(result_row(&cal.overall, false));
                hood_rows.extend(cal.neighborhoods.iter().map(|r| result_row(r, true)));
            }
            Err(e) => run.fail(format!("{facility}: {e}")),
        }
    }
    run.table(schema::CALIBRATION, schema::CALIBRATION_HEADER, &overall_rows).map_err(early)?;
    run.table(schema::CALIBRATION_NEIGHBORHOODS, schema::CALIBRATION_NEIGHBORHOODS_HEADER, &hood_rows)
        .map_err(early)?;
    run.finish("calibrate")
}

/// Chi-square test of problems against neighborhood, per facility.
pub fn cmd_chisq(cfg: &LoadedConfig, opts: &Options) -> CommandResult {
    let mut run = Run::new(cfg, opts);
    let survey_path = cfg.require("survey", &cfg.config.inputs.survey).map_err(early)?;
    let survey = parse_survey(&survey_path).map_err(|e| early(e.into()))?;

    let mut rows = Vec::new();
    let mut testable = 0;
    for (facility, cells) in group_by_facility(&survey, |c| &c.facility) {
        let table = problem_table(&cells);
        let hoods = table.neighborhoods.len().to_string();
        match chi_square_independence::<f64, _>(&table.rows) {
            Ok(ChiSquareResult { statistic, df, p_value, expected_min, low_expected_warning }) => {
                testable += 1;
                if low_expected_warning {
                    run.warn(format!("{facility}: expected count below 5 (min {expected_min})"));
                }
                rows.push(vec![
                    facility.to_string(),
                    hoods,
                    num(statistic),
                    df.to_string(),
                    num(p_value),
                    num(expected_min),
                    low_expected_warning.to_string(),
                    "ok".into(),
                ]);
            }
            Err(e) => {
                run.warn(format!("{facility}: {e}"));
                rows.push(vec![
                    facility.to_string(),
                    hoods,
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "degenerate".into(),
                ]);
            }
        }
    }
    if testable == 0 {
        run.warn("no facility has a testable table");
    }
    run.table(schema::CHISQ, schema::CHISQ_HEADER, &rows).map_err(early)?;
    run.finish("chisq")
}

/// Distance-decay fits, neighborhood distances and central-access index.
pub fn cmd_spatial(cfg: &LoadedConfig, opts: &Options) -> CommandResult {
    let mut run = Run::new(cfg, opts);
    let inputs = &cfg.config.inputs;
    let survey_path = cfg.require("survey", &inputs.survey).map_err(early)?;
    let addresses_path = cfg.require("addresses", &inputs.addresses).map_err(early)?;
    let facilities_path = cfg.require("facilities", &inputs.facilities).map_err(early)?;
    let survey = parse_survey(&survey_path);
    let geo = parse_geo::<f64>(&addresses_path, &facilities_path);
    gather_errors(&[survey.as_ref().err(), geo.as_ref().err()]).map_err(early)?;
    let survey = survey.expect("checked");
    let (addresses, locations) = geo.expect("checked");

    // Visits pooled per (neighborhood, facility).
    let mut visits: BTreeMap<NeighborhoodId, BTreeMap<FacilityId, f64>> = BTreeMap::new();
    for c in &survey {
        *visits.entry(c.neighborhood.clone()).or_default().entry(c.facility.clone()).or_default() += c.visits as f64;
    }

    let mut centroids: BTreeMap<NeighborhoodId, GeoPoint<f64>> = BTreeMap::new();
    for hood in visits.keys() {
        match neighborhood_centroid(&addresses, hood) {
            Ok(p) => {
                centroids.insert(hood.clone(), p);
            }
            Err(e) => run.fail(e.to_string()),
        }
    }

    let mut distance_rows = Vec::new();
    let mut distances: BTreeMap<NeighborhoodId, BTreeMap<FacilityId, f64>> = BTreeMap::new();
    for (hood, centroid) in &centroids {
        for (facility, loc) in &locations {
            let d = haversine_distance(centroid, loc);
            distance_rows.push(vec![hood.to_string(), facility.to_string(), num(d)]);
            distances.entry(hood.clone()).or_default().insert(facility.clone(), d);
        }
    }

    let surveyed: BTreeSet<&FacilityId> = survey.iter().map(|c| &c.facility).collect();
    let mut fits: Vec<DecayFit<f64>> = Vec::new();
    let mut fit_rows = Vec::new();
    let mut observed: BTreeMap<FacilityId, Vec<f64>> = BTreeMap::new();
    for facility in surveyed {
        if !locations.contains_key(facility) {
            run.fail(format!("{facility}: no facility location"));
            continue;
        }
        let mut point_rows = Vec::new();
        let mut points = Vec::new();
        for (hood, by_facility) in &visits {
            let (Some(v), Some(d)) = (by_facility.get(facility), distances.get(hood).and_then(|m| m.get(facility)))
            else {
                continue;
            };
            points.push((*d, *v));
            point_rows.push(vec![hood.to_string(), num(*d), num(*v)]);
        }
        observed.insert(facility.clone(), points.iter().map(|p| p.1).collect());
        let name = format!("{}{}.csv", schema::DECAY_POINTS_PREFIX, file_stem(facility));
        run.table(&name, schema::DECAY_POINTS_HEADER, &point_rows).map_err(early)?;

        match fit_distance_decay(&points, facility.clone()) {
            Ok(fit) => {
                fit_rows.push(vec![
                    facility.to_string(),
                    num(fit.alpha),
                    num(fit.beta),
                    num(fit.rss),
                    fit.n_points.to_string(),
                    fit.iterations.to_string(),
                    fit.converged.to_string(),
                    "ok".into(),
                ]);
                fits.push(fit);
            }
            Err(e) => {
                run.fail(format!("{facility}: {e}"));
                let mut row = vec![facility.to_string()];
                row.extend(std::iter::repeat_n(String::new(), 3));
                row.push(points.len().to_string());
                row.extend([String::new(), String::new()]);
                row.push(e.to_string().replace(',', ";"));
                fit_rows.push(row);
            }
        }
    }

    let mut weights = mean_visit_weights(&observed);
    for (code, w) in &cfg.config.spatial.weights {
        let facility = FacilityId::new(code.clone())
            .map_err(|_| early(CliError::Input("[spatial.weights]: empty facility code".into())))?;
        weights.insert(facility, *w);
    }

    let mut access_rows = Vec::new();
    for (hood, dists) in &distances {
        let by_facility = visits.get(hood).cloned().unwrap_or_default();
        match central_access_index(&fits, &weights, dists) {
            Ok(ca) => access_rows.push(vec![hood.to_string(), num(ca), num(total_engagement(&by_facility))]),
            Err(e) => run.fail(format!("{hood}: {e}")),
        }
    }

    run.table(schema::DECAY_FITS, schema::DECAY_FITS_HEADER, &fit_rows).map_err(early)?;
    run.table(schema::DISTANCES, schema::DISTANCES_HEADER, &distance_rows).map_err(early)?;
    run.table(schema::CENTRAL_ACCESS, schema::CENTRAL_ACCESS_HEADER, &access_rows).map_err(early)?;
    run.finish("spatial")
}

fn scenario_facility(sc: &ScenarioConfig, seed: u64) -> String {
    if sc.seeds.len() > 1 {
        format!("{}-s{seed}", sc.name)
    } else {
        sc.name.clone()
    }
}

/// Seed for visit sampling, distinct from the demand seed.
pub fn visit_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Synthetic occupancy and survey files plus a threshold-recovery report.
pub fn cmd_simulate(cfg: &LoadedConfig, opts: &Options) -> CommandResult {
    let method = cfg.method(opts.method).map_err(early)?;
    let mut run = Run::new(cfg, opts);
    let scenarios = &cfg.config.scenario;
    if scenarios.is_empty() {
        return Err(early(CliError::Input("simulate needs at least one [[scenario]]".into())));
    }
    let prospect = cfg.prospect().map_err(early)?;

    let mut survey: Vec<SurveyCell> = Vec::new();
    let mut occupancy: Vec<OccupancySample> = Vec::new();
    let mut capacities: Vec<CapacityEntry> = Vec::new();
    let mut rows = Vec::new();
    let mut names = BTreeSet::new();

    for sc in scenarios {
        let bad = |msg: String| early(CliError::Input(format!("scenario {}: {msg}", sc.name)));
        let visit_time = match sc.visit_time.as_str() {
            "uniform" => VisitTimeDist::Uniform,
            "peak_biased" => VisitTimeDist::PeakBiased,
            other => return Err(bad(format!("unknown visit_time '{other}'"))),
        };
        let reporting = match sc.reporting.as_str() {
            "exceedance" => ReportingRule::Exceedance,
            "loss_averse" => ReportingRule::LossAverse { params: prospect, sharpness: sc.sharpness },
            other => return Err(bad(format!("unknown reporting '{other}'"))),
        };
        let neighborhood = NeighborhoodId::new(sc.neighborhood.clone()).map_err(|e| bad(e.to_string()))?;
        let start = sc.start_time().map_err(early)?;

        for &seed in &sc.seeds {
            let name = scenario_facility(sc, seed);
            if !names.insert(name.clone()) {
                return Err(bad(format!("duplicate facility name '{name}'")));
            }
            let facility = FacilityId::new(name).map_err(|e| bad(e.to_string()))?;
            let capacity = CapacityEntry::new(facility.clone(), sc.capacity).map_err(|e| bad(e.to_string()))?;
            let mut process =
                DemandProcess::new(facility.clone(), sc.mean_u, sc.amplitude, sc.noise_sd, sc.step_minutes, sc.days, seed);
            if let Some(t) = start {
                process.start = t;
            }
            let pop = AgentPopulation {
                threshold_sd: sc.threshold_sd,
                reporting,
                ..AgentPopulation::new(neighborhood.clone(), sc.n_visits, sc.threshold, visit_time, visit_seed(seed))
            };

            let outcome = gen_utilization_trace(&process).and_then(|trace| {
                let rt = roundtrip_check(&process, &pop, method)?;
                Ok((trace, rt))
            });
            let (trace, rt) = match outcome {
                Ok(v) => v,
                Err(e) => {
                    run.fail(format!("scenario {} seed {seed}: {e}", sc.name));
                    continue;
                }
            };
            rows.push(vec![
                sc.name.clone(),
                seed.to_string(),
                facility.to_string(),
                num(rt.true_threshold),
                num(rt.recovered),
                num(rt.abs_error),
                num(rt.ppr),
                rt.saturated.to_string(),
                method.to_string(),
            ]);
            occupancy.extend(trace_to_occupancy(&trace, sc.capacity));
            capacities.push(capacity);
            survey.push(rt.cell);
        }
    }

    let out = run.out_dir.clone();
    let mut write = |name: &str, f: &dyn Fn(&mut dyn std::io::Write) -> std::io::Result<()>| {
        write_atomic(&out.join(name), f).map(|p| run.outcome.files.push(p))
    };
    write(schema::SIM_SURVEY, &|w| ingest::write_survey(w, &survey)).map_err(early)?;
    write(schema::SIM_OCCUPANCY, &|w| ingest::write_occupancy(w, &occupancy)).map_err(early)?;
    write(schema::SIM_CAPACITY, &|w| ingest::write_capacity(w, &capacities)).map_err(early)?;
    write(schema::SIM_CONFIG, &|w| {
        writeln!(w, "[run]\nmethod = \"{method}\"\noutput_dir = \"calibrated\"\n")?;
        writeln!(
            w,
            "[inputs]\nsurvey = \"{}\"\noccupancy = \"{}\"\ncapacity = \"{}\"",
            schema::SIM_SURVEY,
            schema::SIM_OCCUPANCY,
            schema::SIM_CAPACITY
        )
    })
    .map_err(early)?;
    run.table(schema::ROUNDTRIP, schema::ROUNDTRIP_HEADER, &rows).map_err(early)?;
    run.finish("simulate")
}

/// Runs every command whose inputs are configured. The worst exit status
/// wins; a failing command does not stop the others.
pub fn cmd_report(cfg: &LoadedConfig, opts: &Options) -> CommandResult {
    let inputs = &cfg.config.inputs;
    let has = |p: &Option<PathBuf>| p.is_some();
    type Command = fn(&LoadedConfig, &Options) -> CommandResult;
    let mut plan: Vec<(&str, Command)> = Vec::new();
    if has(&inputs.survey) && (has(&inputs.occupancy) || has(&inputs.bookings)) {
        plan.push(("calibrate", cmd_calibrate));
    }
    if has(&inputs.survey) {
        plan.push(("chisq", cmd_chisq));
    }
    if has(&inputs.survey) && has(&inputs.addresses) && has(&inputs.facilities) {
        plan.push(("spatial", cmd_spatial));
    }
    if !cfg.config.scenario.is_empty() {
        plan.push(("simulate", cmd_simulate));
    }
    if plan.is_empty() {
        return Err(early(CliError::Input("report: nothing configured to run".into())));
    }

    let mut combined = Outcome::default();
    let mut worst: Option<CliError> = None;
    for (name, command) in plan {
        let (err, outcome) = match command(cfg, opts) {
            Ok(o) => (None, o),
            Err((e, o)) => (Some(e), o),
        };
        combined.files.extend(outcome.files);
        combined.warnings.extend(outcome.warnings.into_iter().map(|w| format!("{name}: {w}")));
        if let Some(e) = err {
            combined.warnings.push(format!("{name} failed: {e}"));
            if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                worst = Some(e);
            }
        }
    }
    match worst {
        None => Ok(combined),
        Some(e) => Err((e, combined)),
    }
}
