//! Shared domain types: stops, GPS fixes, stop events, arrival matrices and
//! timetables.
//!
//! Times of day are real-valued seconds since local midnight. Calendar dates
//! are carried separately, so nothing here ever crosses midnight.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Nominal sampling period of the live feed.
pub const NOMINAL_SAMPLE_PERIOD_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "UP",
            Direction::Down => "DOWN",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("up") {
            Ok(Direction::Up)
        } else if s.eq_ignore_ascii_case("down") {
            Ok(Direction::Down)
        } else {
            Err(format!("unknown direction {s:?} (expected UP or DOWN)"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub route_id: String,
    pub direction: Direction,
    /// 1-based position along the route.
    pub seq: u32,
    pub lat: f64,
    pub lon: f64,
    pub name: String,
}

impl Stop {
    pub fn stop_id(&self) -> String {
        format!("{}:{}:{}", self.route_id, self.direction, self.seq)
    }

    pub fn position(&self) -> (f64, f64) {
        (self.lat, self.lon)
    }
}

pub fn coordinates_in_range(lat: f64, lon: f64) -> bool {
    (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)
}

/// One timestamped GPS fix.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPoint {
    pub route_id: String,
    pub bus_id: String,
    pub direction: Direction,
    pub timestamp: NaiveDateTime,
    pub lat: f64,
    pub lon: f64,
}

impl RawPoint {
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }

    pub fn seconds_of_day(&self) -> f64 {
        seconds_of_day(&self.timestamp)
    }

    pub fn position(&self) -> (f64, f64) {
        (self.lat, self.lon)
    }
}

pub fn seconds_of_day(ts: &NaiveDateTime) -> f64 {
    f64::from(ts.num_seconds_from_midnight())
}

/// Formats seconds-of-day as `hh:mm:ss`, rounding to the nearest second.
/// Hours past 23 are written as-is.
pub fn format_hms(t: f64) -> String {
    let total = t.round().max(0.0) as u64;
    format!(
        "{:02}:{:02}:{:02}",
        total / 3600,
        (total / 60) % 60,
        total % 60
    )
}

pub fn parse_hms(s: &str) -> Option<f64> {
    let mut parts = s.split(':');
    let h: u64 = parts.next()?.parse().ok()?;
    let m: u64 = parts.next()?.parse().ok()?;
    let sec: u64 = parts.next()?.parse().ok()?;
    if parts.next().is_some() || m >= 60 || sec >= 60 {
        return None;
    }
    Some((h * 3600 + m * 60 + sec) as f64)
}

/// A bus observed at a known stop.
#[derive(Debug, Clone, PartialEq)]
pub struct StopEvent {
    pub day: NaiveDate,
    pub bus_id: String,
    pub direction: Direction,
    pub stop_seq: u32,
    /// Seconds of day, in `[0, 86400)`.
    pub arrival: f64,
}

/// One traversal of a route: arrival seconds-of-day keyed by stop seq.
#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub bus_id: String,
    pub arrivals: BTreeMap<u32, f64>,
}

impl Trip {
    pub fn start(&self, first_stop: u32) -> Option<f64> {
        self.arrivals.get(&first_stop).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayTrips {
    pub date: NaiveDate,
    pub trips: Vec<Trip>,
}

/// Arrival times indexed by (day, trip, stop) for one route and direction.
///
/// Days are in ascending date order. Within a day, trips are ordered by
/// arrival at the first retained stop. Public accessors use 1-based closed
/// index ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalMatrix {
    pub route_id: String,
    pub direction: Direction,
    /// Retained stop seqs in route order.
    pub stops: Vec<u32>,
    pub days: Vec<DayTrips>,
}

impl ArrivalMatrix {
    pub fn empty(route_id: &str, direction: Direction, stops: Vec<u32>) -> Self {
        ArrivalMatrix {
            route_id: route_id.to_string(),
            direction,
            stops,
            days: Vec::new(),
        }
    }

    pub fn day_count(&self) -> usize {
        self.days.len()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days.iter().map(|d| d.date).collect()
    }

    /// x^k for every day.
    pub fn trips_per_day(&self) -> Vec<usize> {
        self.days.iter().map(|d| d.trips.len()).collect()
    }

    pub fn trip_count(&self) -> usize {
        self.days.iter().map(|d| d.trips.len()).sum()
    }

    pub fn first_stop(&self) -> Option<u32> {
        self.stops.first().copied()
    }

    /// Entry t^k_{i,j} with 1-based day `k`, trip `i`, and stop seq `j`.
    pub fn get(&self, k: usize, i: usize, j: u32) -> Option<f64> {
        let day = self.days.get(k.checked_sub(1)?)?;
        let trip = day.trips.get(i.checked_sub(1)?)?;
        trip.arrivals.get(&j).copied()
    }

    /// Sorted arrivals at stop `seq` for one day (0-based day index).
    pub fn arrivals_at(&self, day_index: usize, seq: u32) -> Vec<f64> {
        let mut out: Vec<f64> = self.days[day_index]
            .trips
            .iter()
            .filter_map(|t| t.arrivals.get(&seq).copied())
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    /// Trip start times (arrival at the first retained stop) as clustering input.
    pub fn start_times(&self) -> Vec<crate::cluster::StartTime> {
        let Some(first) = self.first_stop() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (k, day) in self.days.iter().enumerate() {
            for (i, trip) in day.trips.iter().enumerate() {
                if let Some(time) = trip.start(first) {
                    out.push(crate::cluster::StartTime {
                        day: k + 1,
                        trip: i + 1,
                        time,
                    });
                }
            }
        }
        out
    }

    /// Keeps only the days for which `keep` returns true.
    pub fn filter_days(&self, mut keep: impl FnMut(NaiveDate) -> bool) -> ArrivalMatrix {
        ArrivalMatrix {
            route_id: self.route_id.clone(),
            direction: self.direction,
            stops: self.stops.clone(),
            days: self.days.iter().filter(|d| keep(d.date)).cloned().collect(),
        }
    }

    /// Restricts the matrix to a subset of its stops.
    pub fn restrict_stops(&self, stops: &[u32]) -> ArrivalMatrix {
        let kept: Vec<u32> = self
            .stops
            .iter()
            .copied()
            .filter(|s| stops.contains(s))
            .collect();
        let days = self
            .days
            .iter()
            .map(|d| DayTrips {
                date: d.date,
                trips: d
                    .trips
                    .iter()
                    .map(|t| Trip {
                        bus_id: t.bus_id.clone(),
                        arrivals: t
                            .arrivals
                            .iter()
                            .filter(|(s, _)| kept.contains(s))
                            .map(|(s, a)| (*s, *a))
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        ArrivalMatrix {
            route_id: self.route_id.clone(),
            direction: self.direction,
            stops: kept,
            days,
        }
    }

    /// Checks strict in-trip monotonicity, start ordering and index ranges.
    pub fn check_invariants(&self) -> Result<()> {
        for pair in self.days.windows(2) {
            if pair[0].date >= pair[1].date {
                return Err(Error::Validation(format!(
                    "days out of order: {} then {}",
                    pair[0].date, pair[1].date
                )));
            }
        }
        let first = self.first_stop();
        for day in &self.days {
            let mut prev_start = f64::NEG_INFINITY;
            for (i, trip) in day.trips.iter().enumerate() {
                if let Some(start) = first.and_then(|f| trip.start(f)) {
                    if start < prev_start {
                        return Err(Error::Validation(format!(
                            "{} trip {} starts before its predecessor",
                            day.date,
                            i + 1
                        )));
                    }
                    prev_start = start;
                }
                let mut prev = f64::NEG_INFINITY;
                for seq in &self.stops {
                    if let Some(&t) = trip.arrivals.get(seq) {
                        if t <= prev {
                            return Err(Error::Validation(format!(
                                "{} trip {}: arrival at stop {} not after previous stop",
                                day.date,
                                i + 1,
                                seq
                            )));
                        }
                        prev = t;
                    }
                }
                if let Some(seq) = trip.arrivals.keys().find(|s| !self.stops.contains(s)) {
                    return Err(Error::Validation(format!(
                        "{} trip {}: stop {} is not a retained stop",
                        day.date,
                        i + 1,
                        seq
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Scheduled times per trip at the published stops.
#[derive(Debug, Clone, PartialEq)]
pub struct Timetable {
    pub route_id: String,
    pub direction: Direction,
    pub published_stops: Vec<u32>,
    /// One row per trip, in start-time order. A row may omit a stop that had
    /// no usable samples.
    pub rows: Vec<BTreeMap<u32, f64>>,
}

impl Timetable {
    pub fn new(route_id: &str, direction: Direction, published_stops: Vec<u32>) -> Self {
        Timetable {
            route_id: route_id.to_string(),
            direction,
            published_stops,
            rows: Vec::new(),
        }
    }

    /// Sorted scheduled times at one stop across all trips.
    pub fn times_at(&self, seq: u32) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .rows
            .iter()
            .filter_map(|r| r.get(&seq).copied())
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    pub fn start_times(&self) -> Vec<f64> {
        match self.published_stops.first() {
            Some(first) => self.times_at(*first),
            None => Vec::new(),
        }
    }

    /// Checks that times strictly increase along the published stops in
    /// every row and, when `min_separation` is given, that trip starts are at
    /// least that far apart.
    pub fn check_invariants(&self, min_separation: Option<f64>) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            let mut prev = f64::NEG_INFINITY;
            for seq in &self.published_stops {
                if let Some(&t) = row.get(seq) {
                    if t <= prev {
                        return Err(Error::Validation(format!(
                            "trip {}: time at stop {seq} does not increase",
                            i + 1
                        )));
                    }
                    prev = t;
                }
            }
        }
        if let Some(sep) = min_separation {
            let starts = self.start_times();
            if let Some(w) = starts.windows(2).find(|w| w[1] - w[0] < sep) {
                return Err(Error::Validation(format!(
                    "trip starts {} and {} closer than {sep} s",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

/// Route/day point counts and data-quality flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationSummary {
    pub total_points: usize,
    pub points_per_route_day: BTreeMap<(String, NaiveDate), usize>,
    pub gaps: Vec<GapFlag>,
    pub seq_violations: Vec<SeqViolation>,
}

impl ValidationSummary {
    pub fn is_clean(&self) -> bool {
        self.gaps.is_empty() && self.seq_violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapFlag {
    pub route_id: String,
    pub bus_id: String,
    pub after: NaiveDateTime,
    pub gap_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqViolation {
    pub route_id: String,
    pub direction: Direction,
    pub detail: String,
}

/// Groups stops by (route, direction) and reports any group whose seqs are
/// not exactly `1..=N`.
pub fn seq_violations(stops: &[Stop]) -> Vec<SeqViolation> {
    let mut groups: BTreeMap<(&str, Direction), Vec<u32>> = BTreeMap::new();
    for s in stops {
        groups
            .entry((s.route_id.as_str(), s.direction))
            .or_default()
            .push(s.seq);
    }
    let mut out = Vec::new();
    for ((route, direction), mut seqs) in groups {
        seqs.sort_unstable();
        let expected = 1..=seqs.len() as u32;
        if !seqs.iter().copied().eq(expected) {
            out.push(SeqViolation {
                route_id: route.to_string(),
                direction,
                detail: format!("seq values {seqs:?} are not contiguous from 1"),
            });
        }
    }
    out
}

pub fn validate_dataset(stops: &[Stop], points: &[RawPoint]) -> ValidationSummary {
    let max_gap = 10.0 * NOMINAL_SAMPLE_PERIOD_S;
    let mut summary = ValidationSummary {
        total_points: points.len(),
        seq_violations: seq_violations(stops),
        ..Default::default()
    };
    for p in points {
        *summary
            .points_per_route_day
            .entry((p.route_id.clone(), p.date()))
            .or_default() += 1;
    }

    let mut per_bus: BTreeMap<(&str, &str, NaiveDate), Vec<&NaiveDateTime>> = BTreeMap::new();
    for p in points {
        per_bus
            .entry((p.route_id.as_str(), p.bus_id.as_str(), p.date()))
            .or_default()
            .push(&p.timestamp);
    }
    for ((route, bus, _), mut stamps) in per_bus {
        stamps.sort();
        for w in stamps.windows(2) {
            let gap = (*w[1] - *w[0]).num_milliseconds() as f64 / 1000.0;
            if gap > max_gap {
                summary.gaps.push(GapFlag {
                    route_id: route.to_string(),
                    bus_id: bus.to_string(),
                    after: *w[0],
                    gap_s: gap,
                });
            }
        }
    }
    summary
}
