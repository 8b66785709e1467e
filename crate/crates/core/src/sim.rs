//! Synthetic GPS traces with a known ground-truth timetable.
//!
//! Each scheduled start departs with Gaussian start jitter. Every inter-stop
//! leg adds its nominal travel time plus Gaussian noise whose standard
//! deviation grows linearly with the hours elapsed since the first scheduled
//! start of the day. Buses move in straight lines between stops and report a
//! fix every `sample_period_s` seconds, with optional isotropic position
//! noise. Every bus runs exactly one trip per day.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate, NaiveDateTime, NaiveTime};
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geo::offset;
use crate::model::{
    ArrivalMatrix, DayTrips, Direction, RawPoint, Stop, Timetable, Trip, SECONDS_PER_DAY,
};

const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub route_id: String,
    pub direction: Direction,
    pub stops: Vec<Stop>,
    /// Nominal travel time of each leg; one fewer entry than `stops`.
    pub travel_s: Vec<f64>,
    /// Scheduled departures from the first stop, seconds of day, ascending.
    pub true_starts: Vec<f64>,
    pub start_date: NaiveDate,
    pub days: usize,
    pub sigma_start: f64,
    /// Leg-time noise at the first scheduled start of the day.
    pub sigma_travel_base: f64,
    /// Growth of the leg-time noise per elapsed hour.
    pub sigma_growth: f64,
    pub gps_noise_m: f64,
    pub sample_period_s: u32,
    pub seed: u64,
}

impl SimConfig {
    /// Noise-free configuration on a straight west-to-east route with evenly
    /// spaced stops and equal leg times.
    pub fn straight_route(
        route_id: &str,
        n_stops: u32,
        spacing_m: f64,
        leg_s: f64,
        true_starts: Vec<f64>,
    ) -> SimConfig {
        let origin = (28.6139, 77.2090);
        let stops = (1..=n_stops)
            .map(|seq| {
                let (lat, lon) = offset(origin, spacing_m * f64::from(seq - 1), 0.0);
                Stop {
                    route_id: route_id.to_string(),
                    direction: Direction::Up,
                    seq,
                    lat,
                    lon,
                    name: format!("Stop {seq}"),
                }
            })
            .collect();
        SimConfig {
            route_id: route_id.to_string(),
            direction: Direction::Up,
            stops,
            travel_s: vec![leg_s; n_stops.saturating_sub(1) as usize],
            true_starts,
            start_date: NaiveDate::from_ymd_opt(2018, 10, 1).expect("valid date"),
            days: 30,
            sigma_start: 0.0,
            sigma_travel_base: 0.0,
            sigma_growth: 0.0,
            gps_noise_m: 0.0,
            sample_period_s: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.stops.len() < 2 {
            return bad("simulation needs at least two stops");
        }
        if self.travel_s.len() + 1 != self.stops.len() {
            return bad("travel_s needs one entry per leg");
        }
        if self.travel_s.iter().any(|t| !(*t > 0.0)) {
            return bad("leg travel times must be positive");
        }
        if [
            self.sigma_start,
            self.sigma_travel_base,
            self.sigma_growth,
            self.gps_noise_m,
        ]
        .iter()
        .any(|s| !(*s >= 0.0))
        {
            return bad("noise parameters must be non-negative");
        }
        if self.sample_period_s == 0 {
            return bad("sample_period_s must be positive");
        }
        if self.true_starts.windows(2).any(|w| w[0] > w[1]) {
            return bad("true_starts must be ascending");
        }
        if self
            .true_starts
            .iter()
            .any(|s| !(0.0..SECONDS_PER_DAY).contains(s))
        {
            return bad("true_starts must be within the day");
        }
        Ok(())
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.days)
            .map(|d| self.start_date + Days::new(d as u64))
            .collect()
    }

    fn cumulative_travel(&self) -> Vec<f64> {
        let mut acc = vec![0.0];
        for t in &self.travel_s {
            acc.push(acc.last().expect("non-empty") + t);
        }
        acc
    }

    /// Scheduled times at every stop: start plus nominal cumulative travel.
    pub fn truth_timetable(&self) -> Timetable {
        let cum = self.cumulative_travel();
        let seqs: Vec<u32> = self.stops.iter().map(|s| s.seq).collect();
        let mut t = Timetable::new(&self.route_id, self.direction, seqs.clone());
        for s in &self.true_starts {
            t.rows
                .push(seqs.iter().zip(&cum).map(|(&q, c)| (q, s + c)).collect());
        }
        t
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: Vec<RawPoint>,
    pub truth: Timetable,
    /// Actual (continuous) arrival times at every stop.
    pub truth_arrivals: ArrivalMatrix,
}

/// Independent generator for one (day, purpose) pair, so that days and noise
/// sources never share a stream.
fn stream_rng(seed: u64, day: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((day as u64) << 2) | purpose);
    rng
}

const START_STREAM: u64 = 0;
const TRAVEL_STREAM: u64 = 1;
const GPS_STREAM: u64 = 2;

/// Standard normal draw scaled by `sigma`. One draw is consumed even when
/// `sigma` is zero, so runs that differ only in a noise level see the same
/// underlying random numbers.
fn gaussian(rng: &mut impl Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

fn position_at(stops: &[Stop], arrivals: &[f64], t: f64) -> (f64, f64) {
    if t <= arrivals[0] {
        return stops[0].position();
    }
    let last = arrivals.len() - 1;
    if t >= arrivals[last] {
        return stops[last].position();
    }
    let j = arrivals.partition_point(|&a| a <= t) - 1;
    let f = (t - arrivals[j]) / (arrivals[j + 1] - arrivals[j]);
    let (a, b) = (stops[j].position(), stops[j + 1].position());
    (a.0 + (b.0 - a.0) * f, a.1 + (b.1 - a.1) * f)
}

/// Generates one day's trips; `None` entries are trips dropped for crossing
/// midnight.
fn simulate_day(cfg: &SimConfig, day: usize) -> Vec<Option<Vec<f64>>> {
    let mut start_rng = stream_rng(cfg.seed, day, START_STREAM);
    let mut travel_rng = stream_rng(cfg.seed, day, TRAVEL_STREAM);
    let first_start = cfg.true_starts.first().copied().unwrap_or(0.0);
    cfg.true_starts
        .iter()
        .map(|&s| {
            let mut arrivals = vec![s + gaussian(&mut start_rng, cfg.sigma_start)];
            for leg in &cfg.travel_s {
                let prev = *arrivals.last().expect("non-empty");
                let hours = ((prev - first_start) / 3600.0).max(0.0);
                let sigma = cfg.sigma_travel_base + cfg.sigma_growth * hours;
                let mut next = None;
                for _ in 0..MAX_RESAMPLES {
                    let cand = prev + leg + gaussian(&mut travel_rng, sigma);
                    if cand > prev {
                        next = Some(cand);
                        break;
                    }
                }
                arrivals.push(next.unwrap_or(prev + 1.0));
            }
            let first = arrivals[0];
            let last = *arrivals.last().expect("non-empty");
            (first >= 0.0 && last.ceil() < SECONDS_PER_DAY).then_some(arrivals)
        })
        .collect()
}

pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let mut stops = cfg.stops.clone();
    stops.sort_by_key(|s| s.seq);
    let seqs: Vec<u32> = stops.iter().map(|s| s.seq).collect();
    let period = f64::from(cfg.sample_period_s);

    let mut trace = Vec::new();
    let mut days = Vec::new();
    for (d, date) in cfg.dates().into_iter().enumerate() {
        let midnight = NaiveDateTime::new(date, NaiveTime::MIN);
        let mut noise_rng = stream_rng(cfg.seed, d, GPS_STREAM);
        let mut trips = Vec::new();
        for (i, arrivals) in simulate_day(cfg, d).into_iter().enumerate() {
            let bus_id = format!("SIM{:03}", i + 1);
            let Some(arrivals) = arrivals else {
                warn!("{date} trip {}: crosses midnight, dropped", i + 1);
                continue;
            };
            // Fixes on a whole-second grid from the last whole second before
            // departure (bus still at the first stop) up to the first grid
            // time at or after the terminus arrival.
            let mut t = arrivals[0].floor();
            let end = *arrivals.last().expect("non-empty");
            while t < end + period {
                let (mut lat, mut lon) = position_at(&stops, &arrivals, t);
                if cfg.gps_noise_m > 0.0 {
                    let east = gaussian(&mut noise_rng, cfg.gps_noise_m);
                    let north = gaussian(&mut noise_rng, cfg.gps_noise_m);
                    (lat, lon) = offset((lat, lon), east, north);
                }
                trace.push(RawPoint {
                    route_id: cfg.route_id.clone(),
                    bus_id: bus_id.clone(),
                    direction: cfg.direction,
                    timestamp: midnight + chrono::Duration::seconds(t as i64),
                    lat,
                    lon,
                });
                t += period;
            }
            trips.push(Trip {
                bus_id,
                arrivals: seqs
                    .iter()
                    .copied()
                    .zip(arrivals)
                    .collect::<BTreeMap<_, _>>(),
            });
        }
        trips.sort_by(|a, b| a.arrivals[&seqs[0]].total_cmp(&b.arrivals[&seqs[0]]));
        days.push(DayTrips { date, trips });
    }
    trace.sort_by(|a, b| (&a.bus_id, a.timestamp).cmp(&(&b.bus_id, b.timestamp)));

    Ok(SimOutput {
        trace,
        truth: cfg.truth_timetable(),
        truth_arrivals: ArrivalMatrix {
            route_id: cfg.route_id.clone(),
            direction: cfg.direction,
            stops: seqs,
            days,
        },
    })
}

/// Evenly spaced departures from `first` to `last` inclusive.
pub fn periodic_starts(first: f64, last: f64, headway: f64) -> Vec<f64> {
    let n = ((last - first) / headway).floor() as usize;
    (0..=n).map(|i| first + headway * i as f64).collect()
}
