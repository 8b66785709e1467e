use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use busplan::cluster::ClusterState;
use busplan::ingest::{
    parse_stops, parse_trace, write_events, write_stops, write_timetable, write_trace,
    DatasetManifest,
};
use busplan::model::{validate_dataset, ArrivalMatrix};
use busplan::pipeline::{fit, run_protocol};
use busplan::snap::matrix_from_points;
use busplan::timetable::write_slots;
use busplan::waiting::{write_plotdata, write_report, EvalReport, Protocol};
use busplan::{Error, RawPoint, Stop};
use clap::{Args, Parser, Subcommand};
use log::info;

mod config;

use config::{FileConfig, Settings};

pub const CLUSTERS_HEADER: &str = "T1,cluster_index,centroid,count";

#[derive(Debug, Parser)]
#[command(
    name = "busplan",
    version,
    about = "Infer bus timetables from GPS traces and score them"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML settings file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    route: Option<String>,
    /// up or down
    #[arg(long, global = true)]
    direction: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
struct Inputs {
    #[arg(long)]
    stops: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a dataset and print a summary.
    Ingest(Inputs),
    /// Build a timetable from a trace.
    Timetable {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        t1: Option<f64>,
        /// Also write the snapped stop events.
        #[arg(long)]
        events: bool,
    },
    /// Score waiting times under a train/test protocol.
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        /// A, B, C or all
        #[arg(long)]
        protocol: Option<String>,
        #[arg(long)]
        t1: Option<f64>,
    },
    /// Write a synthetic dataset with its true timetable.
    Simulate,
    /// Simulate, build a timetable and evaluate it in one go.
    All {
        #[arg(long)]
        protocol: Option<String>,
    },
}

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> CliError {
        CliError {
            code: 3,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> CliError {
        let code = if e.kind() == std::io::ErrorKind::NotFound {
            2
        } else {
            1
        };
        CliError {
            code,
            message: format!("{}: {e}", path.display()),
        }
    }

    fn no_trips(detail: impl fmt::Display) -> CliError {
        CliError {
            code: 4,
            message: format!("no viable trips: {detail}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        let code = match &e {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Config(_)
            | Error::MonthSpan { .. }
            | Error::Csv(_) => 3,
            Error::NoClusters | Error::NoViableT1 | Error::EmptyValidation => {
                return CliError::no_trips(e)
            }
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T> = Result<T, CliError>;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(&path, e))
}

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> busplan::Result<()>,
) -> CliResult<()> {
    let mut w = create(dir, name)?;
    body(&mut w)?;
    w.flush().map_err(|e| CliError::io(&dir.join(name), e))?;
    info!("wrote {}", dir.join(name).display());
    Ok(())
}

fn load_inputs(s: &Settings) -> CliResult<(Vec<Stop>, Vec<RawPoint>)> {
    // Check both paths before parsing either, so a missing file is reported
    // as such rather than as a parse error.
    for p in [&s.stops, &s.trace] {
        if !p.exists() {
            return Err(CliError {
                code: 2,
                message: format!("{}: file not found", p.display()),
            });
        }
    }
    let stops = parse_stops(open(&s.stops)?)
        .map_err(|e| CliError::validation(format!("{}: {e}", s.stops.display())))?;
    let trace = parse_trace(open(&s.trace)?)
        .map_err(|e| CliError::validation(format!("{}: {e}", s.trace.display())))?;
    Ok((stops, trace))
}

fn route_of(s: &Settings, stops: &[Stop]) -> CliResult<String> {
    if let Some(r) = &s.route {
        return Ok(r.clone());
    }
    stops
        .iter()
        .find(|st| st.direction == s.direction)
        .map(|st| st.route_id.clone())
        .ok_or_else(|| {
            CliError::validation(format!("no {} stops in {}", s.direction, s.stops.display()))
        })
}

fn extract(s: &Settings) -> CliResult<(ArrivalMatrix, Vec<busplan::StopEvent>)> {
    let (stops, trace) = load_inputs(s)?;
    let route = route_of(s, &stops)?;
    let ex = matrix_from_points(
        &trace,
        &stops,
        &route,
        s.direction,
        &s.params.snap,
        s.params.sample_every,
    )?;
    info!(
        "route {route} {}: {} trips over {} days",
        s.direction,
        ex.matrix.trip_count(),
        ex.matrix.day_count()
    );
    if ex.matrix.trip_count() == 0 {
        return Err(CliError::no_trips(format!(
            "route {route} {} has no complete trips",
            s.direction
        )));
    }
    Ok((ex.matrix, ex.events))
}

fn ensure_out(s: &Settings) -> CliResult<()> {
    std::fs::create_dir_all(&s.out).map_err(|e| CliError::io(&s.out, e))
}

fn write_clusters<W: Write>(t1: f64, state: &ClusterState, mut w: W) -> busplan::Result<()> {
    writeln!(w, "{CLUSTERS_HEADER}")?;
    for (i, c) in state.clusters.iter().enumerate() {
        writeln!(w, "{t1},{},{:.3},{}", i + 1, c.centroid, c.count())?;
    }
    Ok(())
}

fn cmd_ingest(s: &Settings) -> CliResult<()> {
    let (stops, trace) = load_inputs(s)?;
    let manifest = DatasetManifest::from_points(&s.trace.display().to_string(), &trace);
    let summary = validate_dataset(&stops, &trace);
    println!("points: {}", manifest.point_count);
    println!("routes: {}", manifest.routes.join(" "));
    if let Some((a, b)) = manifest.date_range {
        println!("dates: {a} to {b}");
    }
    println!("route-days: {}", summary.points_per_route_day.len());
    println!("gaps over 100 s: {}", summary.gaps.len());
    if let Some(v) = summary.seq_violations.first() {
        return Err(CliError::validation(format!(
            "route {} {}: {}",
            v.route_id, v.direction, v.detail
        )));
    }
    Ok(())
}

fn cmd_timetable(s: &Settings) -> CliResult<()> {
    let (matrix, events) = extract(s)?;
    let fitted = fit(&matrix, &s.params)?;
    ensure_out(s)?;
    let b = &fitted.build;
    write_file(&s.out, "timetable.csv", |w| {
        write_timetable(&b.timetable, w)
    })?;
    write_file(&s.out, "slots.csv", |w| write_slots(&b.slots, w))?;
    write_file(&s.out, "clusters.csv", |w| {
        write_clusters(fitted.t1, &fitted.clusters, w)
    })?;
    if s.events {
        write_file(&s.out, "events.csv", |w| write_events(&events, w))?;
    }
    println!(
        "timetable: {} departures at T1 = {} s, {} stops published",
        b.timetable.rows.len(),
        fitted.t1,
        b.timetable.published_stops.len()
    );
    Ok(())
}

fn cmd_evaluate(s: &Settings) -> CliResult<()> {
    let (matrix, _) = extract(s)?;
    let mut reports: Vec<(Protocol, EvalReport)> = Vec::new();
    for p in s.protocol.protocols() {
        let run = run_protocol(&matrix, p, &s.params)?;
        let pre = run.report.mean_over_stops(|w| w.pre_wt_mean);
        let post = run.report.mean_over_stops(|w| w.post_wt_mean);
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2}"));
        println!(
            "protocol {}: train {} days, test {} days, preWT {} min, postWT {} min",
            p.letter(),
            run.split.train.day_count(),
            run.split.test.day_count(),
            fmt(pre),
            fmt(post)
        );
        reports.push((p, run.report));
    }
    ensure_out(s)?;
    let refs: Vec<(Protocol, &EvalReport)> = reports.iter().map(|(p, r)| (*p, r)).collect();
    write_file(&s.out, "report.csv", |w| write_report(&refs, w))?;
    write_file(&s.out, "plotdata.csv", |w| write_plotdata(&refs, w))?;
    Ok(())
}

fn cmd_simulate(s: &Settings) -> CliResult<(PathBuf, PathBuf)> {
    let cfg = s.sim_config()?;
    let out = busplan::sim::simulate(&cfg)?;
    ensure_out(s)?;
    write_file(&s.out, "stops.csv", |w| write_stops(&cfg.stops, w))?;
    write_file(&s.out, "trace.csv", |w| write_trace(&out.trace, w))?;
    write_file(&s.out, "truth_timetable.csv", |w| {
        write_timetable(&out.truth, w)
    })?;
    println!(
        "simulated {} fixes for route {} {} over {} days",
        out.trace.len(),
        cfg.route_id,
        cfg.direction,
        cfg.days
    );
    Ok((s.out.join("stops.csv"), s.out.join("trace.csv")))
}

fn cmd_all(s: &Settings) -> CliResult<()> {
    let (stops, trace) = cmd_simulate(s)?;
    let mut s = s.clone();
    s.stops = stops;
    s.trace = trace;
    if s.route.is_none() {
        s.route = Some(s.sim_config()?.route_id);
    }
    cmd_timetable(&s)?;
    cmd_evaluate(&s)
}

fn settings(cli: &Cli) -> CliResult<Settings> {
    let mut file = match &cli.common.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError {
                    code: 2,
                    message: format!("{}: file not found", path.display()),
                });
            }
            FileConfig::load(path)?
        }
        None => FileConfig::default(),
    };
    let c = &cli.common;
    file.out = c.out.clone().or(file.out);
    file.route = c.route.clone().or(file.route);
    file.direction = c.direction.clone().or(file.direction);
    file.seed = c.seed.or(file.seed);
    let inputs = match &cli.command {
        Command::Ingest(i) => Some(i),
        Command::Timetable { inputs, t1, events } => {
            file.t1 = t1.or(file.t1);
            if t1.is_some() {
                file.t1_grid = None;
            }
            file.events = Some(*events || file.events.unwrap_or(false));
            Some(inputs)
        }
        Command::Evaluate {
            inputs,
            protocol,
            t1,
        } => {
            file.protocol = protocol.clone().or(file.protocol);
            file.t1 = t1.or(file.t1);
            if t1.is_some() {
                file.t1_grid = None;
            }
            Some(inputs)
        }
        Command::All { protocol } => {
            file.protocol = protocol.clone().or(file.protocol);
            None
        }
        Command::Simulate => None,
    };
    if let Some(i) = inputs {
        file.stops = i.stops.clone().or(file.stops);
        file.trace = i.trace.clone().or(file.trace);
    }
    Settings::resolve(file)
}

fn run(cli: &Cli) -> CliResult<()> {
    let s = settings(cli)?;
    match &cli.command {
        Command::Ingest(_) => cmd_ingest(&s),
        Command::Timetable { .. } => cmd_timetable(&s),
        Command::Evaluate { .. } => cmd_evaluate(&s),
        Command::Simulate => cmd_simulate(&s).map(|_| ()),
        Command::All { .. } => cmd_all(&s),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message.replace('\n', " "));
            ExitCode::from(e.code)
        }
    }
}
