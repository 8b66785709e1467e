//! Run settings: a flat TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use busplan::cluster::ClusterConfig;
use busplan::model::parse_hms;
use busplan::pipeline::PipelineParams;
use busplan::sim::{periodic_starts, SimConfig};
use busplan::snap::SnapConfig;
use busplan::waiting::Protocol;
use busplan::Direction;
use chrono::NaiveDate;
use serde::Deserialize;

use crate::CliError;

/// Every key is optional; missing keys take the defaults below.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub stops: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub route: Option<String>,
    pub direction: Option<String>,
    pub protocol: Option<String>,
    pub events: Option<bool>,

    pub radius_m: Option<f64>,
    pub min_trip_stops: Option<usize>,
    pub trip_gap_s: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<usize>,
    pub t1_grid: Option<Vec<f64>>,
    pub slot_minutes: Option<u32>,
    pub sample_every: Option<u32>,

    pub seed: Option<u64>,
    pub sim_stops: Option<u32>,
    pub sim_spacing_m: Option<f64>,
    pub sim_leg_s: Option<f64>,
    pub sim_first_start: Option<String>,
    pub sim_last_start: Option<String>,
    pub sim_headway_s: Option<f64>,
    pub sim_start_date: Option<DateValue>,
    pub sim_days: Option<usize>,
    pub sigma_start: Option<f64>,
    pub sigma_travel_base: Option<f64>,
    pub sigma_growth: Option<f64>,
    pub gps_noise_m: Option<f64>,
    pub sample_period_s: Option<u32>,
}

/// A date given either as a bare TOML date or as a quoted string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DateValue {
    Toml(toml::value::Datetime),
    Text(String),
}

impl DateValue {
    fn to_date(&self) -> Result<NaiveDate, CliError> {
        let text = match self {
            DateValue::Toml(d) => d.to_string(),
            DateValue::Text(s) => s.clone(),
        };
        NaiveDate::parse_from_str(&text, "%Y-%m-%d").map_err(|_| {
            CliError::validation(format!("invalid date {text:?}, expected YYYY-MM-DD"))
        })
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: {}", path.display(), e.message())))
    }
}

/// Which protocols `evaluate` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolChoice {
    One(Protocol),
    All,
}

impl ProtocolChoice {
    pub fn parse(s: &str) -> Result<ProtocolChoice, CliError> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(ProtocolChoice::All);
        }
        Protocol::from_letter(s)
            .map(ProtocolChoice::One)
            .ok_or_else(|| {
                CliError::validation(format!("unknown protocol {s:?}, expected A, B, C or all"))
            })
    }

    pub fn protocols(self) -> Vec<Protocol> {
        match self {
            ProtocolChoice::One(p) => vec![p],
            ProtocolChoice::All => Protocol::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub stops: PathBuf,
    pub trace: PathBuf,
    pub out: PathBuf,
    pub route: Option<String>,
    pub direction: Direction,
    pub protocol: ProtocolChoice,
    pub events: bool,
    pub params: PipelineParams,
    pub seed: u64,
    sim: FileConfig,
}

impl Settings {
    pub fn resolve(file: FileConfig) -> Result<Settings, CliError> {
        let direction = match &file.direction {
            Some(d) => d.parse().map_err(CliError::validation)?,
            None => Direction::Up,
        };
        let protocol = ProtocolChoice::parse(file.protocol.as_deref().unwrap_or("all"))?;
        let snap_default = SnapConfig::default();
        let cluster_default = ClusterConfig::default();
        let defaults = PipelineParams::default();
        let params = PipelineParams {
            snap: SnapConfig {
                radius_m: file.radius_m.unwrap_or(snap_default.radius_m),
                min_trip_stops: file.min_trip_stops.unwrap_or(snap_default.min_trip_stops),
                trip_gap_s: file.trip_gap_s.unwrap_or(snap_default.trip_gap_s),
            },
            cluster: ClusterConfig {
                t1: file.t1.unwrap_or(cluster_default.t1),
                t2: file.t2.unwrap_or(cluster_default.t2),
                t1_grid: file.t1_grid.clone().unwrap_or_default(),
            },
            slot_minutes: file.slot_minutes.unwrap_or(defaults.slot_minutes),
            sample_every: file.sample_every.unwrap_or(defaults.sample_every),
        };
        params.snap.validate().map_err(CliError::from)?;
        params.cluster.validate().map_err(CliError::from)?;
        Ok(Settings {
            stops: file.stops.clone().unwrap_or_else(|| "stops.csv".into()),
            trace: file.trace.clone().unwrap_or_else(|| "trace.csv".into()),
            out: file.out.clone().unwrap_or_else(|| "out".into()),
            route: file.route.clone(),
            direction,
            protocol,
            events: file.events.unwrap_or(false),
            params,
            seed: file.seed.unwrap_or(0),
            sim: file,
        })
    }

    /// Simulator configuration. Defaults: 10 stops 500 m apart, 2 min legs,
    /// a bus every 30 min from 06:00 to 21:30 over 61 days from 2018-10-01,
    /// 3 min start jitter and leg noise growing by 15 s per hour.
    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let f = &self.sim;
        let hms = |v: &Option<String>, default: &str| {
            let s = v.as_deref().unwrap_or(default);
            parse_hms(s).ok_or_else(|| CliError::validation(format!("invalid time of day {s:?}")))
        };
        let first = hms(&f.sim_first_start, "06:00:00")?;
        let last = hms(&f.sim_last_start, "21:30:00")?;
        let headway = f.sim_headway_s.unwrap_or(1800.0);
        if !(headway > 0.0) || last < first {
            return Err(CliError::validation(
                "simulated service needs a positive headway and last start >= first start",
            ));
        }
        let route = self.route.clone().unwrap_or_else(|| "S1".to_string());
        let mut cfg = SimConfig::straight_route(
            &route,
            f.sim_stops.unwrap_or(10),
            f.sim_spacing_m.unwrap_or(500.0),
            f.sim_leg_s.unwrap_or(120.0),
            periodic_starts(first, last, headway),
        );
        for s in &mut cfg.stops {
            s.direction = self.direction;
        }
        cfg.direction = self.direction;
        cfg.start_date = match &f.sim_start_date {
            Some(d) => d.to_date()?,
            None => NaiveDate::from_ymd_opt(2018, 10, 1).expect("valid date"),
        };
        cfg.days = f.sim_days.unwrap_or(61);
        cfg.sigma_start = f.sigma_start.unwrap_or(180.0);
        cfg.sigma_travel_base = f.sigma_travel_base.unwrap_or(0.0);
        cfg.sigma_growth = f.sigma_growth.unwrap_or(15.0);
        cfg.gps_noise_m = f.gps_noise_m.unwrap_or(0.0);
        cfg.sample_period_s = f.sample_period_s.unwrap_or(10);
        cfg.seed = self.seed;
        cfg.validate().map_err(CliError::from)?;
        Ok(cfg)
    }
}
