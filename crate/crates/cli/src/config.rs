//! TOML run configuration. Relative paths resolve against the directory
//! holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use chrono_tz::Tz;
use serde::Deserialize;

use capcal_core::behavioral::ProspectParams;
use capcal_core::datamodel::ScheduleWindow;
use capcal_core::{FacilityId, InversionMethod};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub schedule: Vec<ScheduleConfig>,
    #[serde(default)]
    pub prospect: ProspectConfig,
    #[serde(default)]
    pub spatial: SpatialConfig,
    #[serde(default)]
    pub scenario: Vec<ScenarioConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// IANA name used to interpret daily schedule windows. Defaults to UTC.
    pub timezone: Option<String>,
    pub method: Option<String>,
    pub output_dir: Option<PathBuf>,
    /// Occupancy gaps longer than this are reported as warnings.
    pub max_gap_minutes: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub survey: Option<PathBuf>,
    pub occupancy: Option<PathBuf>,
    pub capacity: Option<PathBuf>,
    pub bookings: Option<PathBuf>,
    pub addresses: Option<PathBuf>,
    pub facilities: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub facility: String,
    pub rooms: u32,
    /// `HH:MM` local time.
    pub open: String,
    pub close: String,
    pub start_date: String,
    pub end_date: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProspectConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_exponent")]
    pub gain_exp: f64,
    #[serde(default = "default_exponent")]
    pub loss_exp: f64,
    #[serde(default)]
    pub reference: f64,
}

impl Default for ProspectConfig {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            gain_exp: default_exponent(),
            loss_exp: default_exponent(),
            reference: 0.0,
        }
    }
}

fn default_lambda() -> f64 {
    capcal_core::behavioral::DEFAULT_LOSS_AVERSION
}

fn default_exponent() -> f64 {
    capcal_core::behavioral::DEFAULT_EXPONENT
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialConfig {
    /// Overrides for facility weights in the central-access index.
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub mean_u: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default = "default_step")]
    pub step_minutes: u32,
    #[serde(default = "default_days")]
    pub days: u32,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub threshold: f64,
    #[serde(default)]
    pub threshold_sd: f64,
    pub n_visits: u64,
    #[serde(default = "default_visit_time")]
    pub visit_time: String,
    /// `exceedance` or `loss_averse`.
    #[serde(default = "default_reporting")]
    pub reporting: String,
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
    /// Capacity used when writing integer occupancy counts.
    #[serde(default = "default_capacity")]
    pub capacity: u64,
    #[serde(default = "default_neighborhood")]
    pub neighborhood: String,
    pub start: Option<String>,
}

fn default_step() -> u32 {
    10
}
fn default_days() -> u32 {
    28
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_visit_time() -> String {
    "uniform".into()
}
fn default_reporting() -> String {
    "exceedance".into()
}
fn default_sharpness() -> f64 {
    10.0
}
fn default_capacity() -> u64 {
    1000
}
fn default_neighborhood() -> String {
    "SIM".into()
}

impl ScenarioConfig {
    pub fn start_time(&self) -> Result<Option<DateTime<Utc>>, CliError> {
        self.start
            .as_deref()
            .map(|s| {
                DateTime::parse_from_rfc3339(s)
                    .map(|t| t.with_timezone(&Utc))
                    .map_err(|_| CliError::Input(format!("scenario {}: unparseable start '{s}'", self.name)))
            })
            .transpose()
    }
}

/// Inclusive first and last local dates of a schedule.
pub type SchedulePeriod = (NaiveDate, NaiveDate);

/// A parsed config together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    pub fn from_config(config: RunConfig, base_dir: impl Into<PathBuf>) -> Self {
        Self { config, base_dir: base_dir.into() }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The configured path for `name`, resolved, or an input error.
    pub fn require(&self, name: &str, value: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        value
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| CliError::Input(format!("config [inputs] has no '{name}' path")))
    }

    pub fn optional(&self, value: &Option<PathBuf>) -> Option<PathBuf> {
        value.as_deref().map(|p| self.resolve(p))
    }

    pub fn method(&self, flag: Option<InversionMethod>) -> Result<InversionMethod, CliError> {
        if let Some(m) = flag {
            return Ok(m);
        }
        self.config
            .run
            .method
            .as_deref()
            .map(|m| m.parse().map_err(|e| CliError::Input(format!("{e}"))))
            .unwrap_or(Ok(InversionMethod::Step))
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        match flag {
            Some(dir) => dir.to_path_buf(),
            None => self.resolve(self.config.run.output_dir.as_deref().unwrap_or(Path::new("out"))),
        }
    }

    pub fn timezone(&self) -> Result<Tz, CliError> {
        match self.config.run.timezone.as_deref() {
            None => Ok(Tz::UTC),
            Some(name) => name
                .parse()
                .map_err(|_| CliError::Input(format!("unknown timezone '{name}'"))),
        }
    }

    pub fn prospect(&self) -> Result<ProspectParams<f64>, CliError> {
        let p = &self.config.prospect;
        ProspectParams::new(p.lambda, p.gain_exp, p.loss_exp, p.reference)
            .map_err(|e| CliError::Input(format!("[prospect]: {e}")))
    }

    pub fn schedules(&self) -> Result<Vec<(ScheduleWindow, SchedulePeriod)>, CliError> {
        self.config
            .schedule
            .iter()
            .map(|s| {
                let bad = |what: &str| CliError::Input(format!("[[schedule]] {}: invalid {what}", s.facility));
                let time = |v: &str| NaiveTime::parse_from_str(v, "%H:%M").map_err(|_| bad("time of day"));
                let date = |v: &str| NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| bad("date"));
                let facility = FacilityId::new(s.facility.clone()).map_err(|_| bad("facility"))?;
                let window = ScheduleWindow::new(facility, s.rooms, time(&s.open)?, time(&s.close)?)
                    .map_err(|e| CliError::Input(format!("[[schedule]] {}: {e}", s.facility)))?;
                Ok((window, (date(&s.start_date)?, date(&s.end_date)?)))
            })
            .collect()
    }
}
