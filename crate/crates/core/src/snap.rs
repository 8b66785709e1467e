//! Stop snapping, trip segmentation and arrival-matrix assembly.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::haversine_m;
use crate::model::{ArrivalMatrix, DayTrips, Direction, RawPoint, Stop, StopEvent, Trip};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapConfig {
    pub radius_m: f64,
    /// Trips touching fewer distinct stops are discarded.
    pub min_trip_stops: usize,
    /// A silence longer than this starts a new trip.
    pub trip_gap_s: f64,
}

impl Default for SnapConfig {
    fn default() -> Self {
        SnapConfig {
            radius_m: 50.0,
            min_trip_stops: 3,
            trip_gap_s: 1800.0,
        }
    }
}

impl SnapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m > 0.0) {
            return Err(Error::Config("radius_m must be positive".into()));
        }
        if self.min_trip_stops < 2 {
            return Err(Error::Config("min_trip_stops must be at least 2".into()));
        }
        if !(self.trip_gap_s > 0.0) {
            return Err(Error::Config("trip_gap_s must be positive".into()));
        }
        Ok(())
    }
}

/// Nearest stop within the radius; equidistant stops resolve to the lower seq.
fn nearest_stop(pos: (f64, f64), stops: &[Stop], radius_m: f64) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for s in stops {
        let d = haversine_m(pos, s.position());
        if d > radius_m {
            continue;
        }
        match best {
            Some((seq, bd)) if d > bd || (d == bd && seq < s.seq) => {}
            _ => best = Some((s.seq, d)),
        }
    }
    best
}

/// Maps time-sorted points of one bus, day and direction onto stops.
///
/// Each maximal run of consecutive points whose nearest in-radius stop is the
/// same produces one event, timed at the run's closest point (earliest on
/// ties).
pub fn snap_points(points: &[RawPoint], stops: &[Stop], cfg: &SnapConfig) -> Vec<StopEvent> {
    struct Run<'a> {
        seq: u32,
        best: &'a RawPoint,
        best_d: f64,
    }

    let mut events = Vec::new();
    let mut run: Option<Run> = None;
    let mut close = |run: Run| {
        events.push(StopEvent {
            day: run.best.date(),
            bus_id: run.best.bus_id.clone(),
            direction: run.best.direction,
            stop_seq: run.seq,
            arrival: run.best.seconds_of_day(),
        });
    };

    for p in points {
        let hit = nearest_stop(p.position(), stops, cfg.radius_m);
        run = match (run.take(), hit) {
            (Some(mut r), Some((seq, d))) if r.seq == seq && r.best.date() == p.date() => {
                if d < r.best_d {
                    r.best = p;
                    r.best_d = d;
                }
                Some(r)
            }
            (prev, hit) => {
                if let Some(r) = prev {
                    close(r);
                }
                hit.map(|(seq, d)| Run {
                    seq,
                    best: p,
                    best_d: d,
                })
            }
        };
    }
    if let Some(r) = run {
        close(r);
    }
    events
}

/// A trip as cut from one bus's event stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedTrip {
    pub day: NaiveDate,
    pub trip: Trip,
}

/// Cuts a time-ordered event stream into trips.
///
/// A trip ends when the stop seq drops below the highest seq seen in the trip
/// so far, or when the silence since the previous event exceeds
/// `trip_gap_s`. Only the first arrival per stop is kept, and trips touching
/// fewer than `min_trip_stops` stops are dropped. Events beyond `n_stops`
/// are ignored.
pub fn segment_trips(events: &[StopEvent], n_stops: u32, cfg: &SnapConfig) -> Vec<SegmentedTrip> {
    let mut trips = Vec::new();
    let mut current: Option<(SegmentedTrip, u32, f64)> = None;

    let mut finish = |seg: SegmentedTrip| {
        if seg.trip.arrivals.len() >= cfg.min_trip_stops {
            trips.push(seg);
        }
    };

    for e in events
        .iter()
        .filter(|e| e.stop_seq >= 1 && e.stop_seq <= n_stops)
    {
        let starts_new = match &current {
            None => true,
            Some((seg, max_seq, last_t)) => {
                e.stop_seq < *max_seq
                    || e.arrival - last_t > cfg.trip_gap_s
                    || seg.day != e.day
                    || seg.trip.bus_id != e.bus_id
            }
        };
        if starts_new {
            if let Some((seg, _, _)) = current.take() {
                finish(seg);
            }
            current = Some((
                SegmentedTrip {
                    day: e.day,
                    trip: Trip {
                        bus_id: e.bus_id.clone(),
                        arrivals: BTreeMap::new(),
                    },
                },
                e.stop_seq,
                e.arrival,
            ));
        }
        let (seg, max_seq, last_t) = current.as_mut().expect("set above");
        seg.trip.arrivals.entry(e.stop_seq).or_insert(e.arrival);
        *max_seq = (*max_seq).max(e.stop_seq);
        *last_t = e.arrival;
    }
    if let Some((seg, _, _)) = current {
        finish(seg);
    }
    trips
}

/// Stops kept under every-`sample_every`-th sampling: seq ≡ 1 (mod
/// `sample_every`), plus the terminus.
pub fn retained_stops(n_stops: u32, sample_every: u32) -> Vec<u32> {
    let step = sample_every.max(1);
    let mut out: Vec<u32> = (1..=n_stops).filter(|s| (s - 1) % step == 0).collect();
    if n_stops > 0 && out.last() != Some(&n_stops) {
        out.push(n_stops);
    }
    out
}

/// Assembles the arrival matrix for one route and direction.
///
/// Arrivals at non-retained stops are discarded, trips without an arrival at
/// the first retained stop are dropped, and any arrival that does not come
/// strictly after the previous kept stop of its trip is dropped with a
/// warning.
pub fn build_matrix(
    route_id: &str,
    direction: Direction,
    trips: &[SegmentedTrip],
    n_stops: u32,
    sample_every: u32,
) -> ArrivalMatrix {
    let stops = retained_stops(n_stops, sample_every);
    let Some(&first) = stops.first() else {
        return ArrivalMatrix::empty(route_id, direction, stops);
    };

    let mut by_day: BTreeMap<NaiveDate, Vec<Trip>> = BTreeMap::new();
    for seg in trips {
        let mut arrivals = BTreeMap::new();
        let mut prev = f64::NEG_INFINITY;
        for seq in &stops {
            if let Some(&t) = seg.trip.arrivals.get(seq) {
                if t > prev {
                    arrivals.insert(*seq, t);
                    prev = t;
                } else {
                    warn!(
                        "{} bus {}: dropping non-increasing arrival at stop {seq}",
                        seg.day, seg.trip.bus_id
                    );
                }
            }
        }
        if !arrivals.contains_key(&first) {
            continue;
        }
        by_day.entry(seg.day).or_default().push(Trip {
            bus_id: seg.trip.bus_id.clone(),
            arrivals,
        });
    }

    let days = by_day
        .into_iter()
        .map(|(date, mut trips)| {
            trips.sort_by(|a, b| {
                a.arrivals[&first]
                    .total_cmp(&b.arrivals[&first])
                    .then_with(|| a.bus_id.cmp(&b.bus_id))
            });
            DayTrips { date, trips }
        })
        .collect();

    ArrivalMatrix {
        route_id: route_id.to_string(),
        direction,
        stops,
        days,
    }
}

/// Output of [`matrix_from_points`]: the matrix plus the intermediate events.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub matrix: ArrivalMatrix,
    pub events: Vec<StopEvent>,
}

/// Runs snapping, segmentation and matrix assembly for one route and
/// direction over a whole trace. Work is split per (bus, day).
pub fn matrix_from_points(
    points: &[RawPoint],
    stops: &[Stop],
    route_id: &str,
    direction: Direction,
    cfg: &SnapConfig,
    sample_every: u32,
) -> Result<Extraction> {
    cfg.validate()?;
    if sample_every == 0 {
        return Err(Error::Config("sample_every must be at least 1".into()));
    }
    let mut route_stops: Vec<Stop> = stops
        .iter()
        .filter(|s| s.route_id == route_id && s.direction == direction)
        .cloned()
        .collect();
    route_stops.sort_by_key(|s| s.seq);
    let seqs: BTreeSet<u32> = route_stops.iter().map(|s| s.seq).collect();
    if route_stops.is_empty() {
        return Err(Error::Validation(format!(
            "no stops for route {route_id} {direction}"
        )));
    }
    if !seqs.iter().copied().eq(1..=route_stops.len() as u32) {
        return Err(Error::Validation(format!(
            "route {route_id} {direction}: stop seqs are not contiguous"
        )));
    }
    let n_stops = route_stops.len() as u32;

    let mut units: BTreeMap<(&str, NaiveDate), Vec<RawPoint>> = BTreeMap::new();
    for p in points
        .iter()
        .filter(|p| p.route_id == route_id && p.direction == direction)
    {
        units
            .entry((p.bus_id.as_str(), p.date()))
            .or_default()
            .push(p.clone());
    }

    let results: Vec<(Vec<StopEvent>, Vec<SegmentedTrip>)> = units
        .into_par_iter()
        .map(|(_, mut pts)| {
            pts.sort_by_key(|p| p.timestamp);
            let events = snap_points(&pts, &route_stops, cfg);
            let trips = segment_trips(&events, n_stops, cfg);
            (events, trips)
        })
        .collect();

    let mut events = Vec::new();
    let mut trips = Vec::new();
    for (e, t) in results {
        events.extend(e);
        trips.extend(t);
    }
    let matrix = build_matrix(route_id, direction, &trips, n_stops, sample_every);
    matrix.check_invariants()?;
    Ok(Extraction { matrix, events })
}
