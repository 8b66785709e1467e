//! Timetable construction.
//!
//! Each cluster centroid becomes a scheduled departure. Downstream stops get
//! the departure plus the mean travel offset observed for trips departing in
//! the same time slot (15 minutes by default). Slot means are the
//! least-squares estimate of the offset, which is what keeps the scheduled
//! times at the centre of the arrival distribution.

use std::collections::BTreeMap;
use std::io::Write;

use log::warn;

use crate::cluster::{assign, ClusterState};
use crate::error::{Error, Result};
use crate::model::{ArrivalMatrix, Timetable, SECONDS_PER_DAY};

pub const DEFAULT_SLOT_MINUTES: u32 = 15;
pub const SLOTS_HEADER: &str = "slot,stop_seq,mean_offset,n,variance";

/// Index of the half-open `slot_minutes` bin containing `t`.
pub fn slot_of(t: f64, slot_minutes: u32) -> usize {
    let width = 60.0 * f64::from(slot_minutes.max(1));
    (t.max(0.0) / width).floor() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotStats {
    pub slot: usize,
    pub stop_seq: u32,
    pub mean_offset: f64,
    pub n: usize,
    /// Population variance of the offsets, seconds².
    pub variance: f64,
}

/// Offsets (arrival minus scheduled departure) grouped per (slot, stop).
pub type SlotSamples = BTreeMap<(usize, u32), Vec<f64>>;

/// Scheduled departure for every cluster, whole seconds.
pub fn scheduled_starts(starts: &ClusterState) -> Vec<f64> {
    starts.centroids().iter().map(|c| c.round()).collect()
}

/// Attributes every training trip to its nearest cluster and collects its
/// downstream offsets under the slot of that cluster's departure.
pub fn collect_offsets(
    matrix: &ArrivalMatrix,
    starts: &ClusterState,
    slot_minutes: u32,
) -> SlotSamples {
    let mut samples = SlotSamples::new();
    let Some(first) = matrix.first_stop() else {
        return samples;
    };
    let departures = scheduled_starts(starts);
    for day in &matrix.days {
        for trip in &day.trips {
            let Some(cluster) = trip.start(first).and_then(|tp| assign(tp, starts)) else {
                continue;
            };
            let dep = departures[cluster];
            let slot = slot_of(dep, slot_minutes);
            for seq in matrix.stops.iter().skip(1) {
                if let Some(&t) = trip.arrivals.get(seq) {
                    samples.entry((slot, *seq)).or_default().push(t - dep);
                }
            }
        }
    }
    samples
}

fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

pub fn slot_stats(samples: &SlotSamples) -> Vec<SlotStats> {
    samples
        .iter()
        .filter(|(_, xs)| !xs.is_empty())
        .map(|(&(slot, stop_seq), xs)| {
            let (mean_offset, variance) = mean_and_variance(xs);
            SlotStats {
                slot,
                stop_seq,
                mean_offset,
                n: xs.len(),
                variance,
            }
        })
        .collect()
}

/// Result of [`build_timetable`].
#[derive(Debug, Clone)]
pub struct TimetableBuild {
    pub timetable: Timetable,
    pub slots: Vec<SlotStats>,
    /// Coverage and monotonicity repairs, one line each.
    pub warnings: Vec<String>,
}

/// Builds a timetable from a training matrix and the clustered departures.
///
/// Scheduled times are rounded to whole seconds. A stop without samples in a
/// row's slot falls back to the all-day mean offset for that stop; without
/// any samples at all it is left out of the row.
pub fn build_timetable(
    matrix: &ArrivalMatrix,
    starts: &ClusterState,
    slot_minutes: u32,
) -> Result<TimetableBuild> {
    if starts.is_empty() {
        return Err(Error::NoClusters);
    }
    if slot_minutes == 0 || 60.0 * f64::from(slot_minutes) > SECONDS_PER_DAY {
        return Err(Error::Config(format!(
            "invalid slot length {slot_minutes} min"
        )));
    }
    let Some(&first) = matrix.stops.first() else {
        return Err(Error::Validation("arrival matrix has no stops".into()));
    };

    let samples = collect_offsets(matrix, starts, slot_minutes);
    let slots = slot_stats(&samples);
    let by_key: BTreeMap<(usize, u32), f64> = slots
        .iter()
        .map(|s| ((s.slot, s.stop_seq), s.mean_offset))
        .collect();

    let mut all_day: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for ((_, seq), xs) in &samples {
        all_day.entry(*seq).or_default().extend(xs);
    }
    let fallback: BTreeMap<u32, f64> = all_day
        .into_iter()
        .map(|(seq, xs)| (seq, mean_and_variance(&xs).0))
        .collect();

    let mut timetable = Timetable::new(&matrix.route_id, matrix.direction, matrix.stops.clone());
    let mut warnings = Vec::new();
    for dep in scheduled_starts(starts) {
        let slot = slot_of(dep, slot_minutes);
        let mut row = BTreeMap::from([(first, dep)]);
        let mut prev = dep;
        for &seq in matrix.stops.iter().skip(1) {
            let offset = match by_key.get(&(slot, seq)) {
                Some(m) => *m,
                None => match fallback.get(&seq) {
                    Some(m) => {
                        warnings.push(format!(
                            "departure {dep}: no samples for stop {seq} in slot {slot}, using all-day mean"
                        ));
                        *m
                    }
                    None => {
                        warnings.push(format!(
                            "departure {dep}: stop {seq} has no samples, omitted"
                        ));
                        continue;
                    }
                },
            };
            let t = (dep + offset).round();
            if t <= prev {
                warnings.push(format!(
                    "departure {dep}: stop {seq} would not follow the previous stop, omitted"
                ));
                continue;
            }
            row.insert(seq, t);
            prev = t;
        }
        timetable.rows.push(row);
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(TimetableBuild {
        timetable,
        slots,
        warnings,
    })
}

pub fn write_slots<W: Write>(slots: &[SlotStats], mut sink: W) -> Result<()> {
    writeln!(sink, "{SLOTS_HEADER}")?;
    for s in slots {
        writeln!(
            sink,
            "{},{},{:.3},{},{:.3}",
            s.slot, s.stop_seq, s.mean_offset, s.n, s.variance
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{cluster_starts, ClusterConfig};
    use crate::model::{DayTrips, Direction, Trip};
    use chrono::NaiveDate;

    fn matrix(trips_per_day: Vec<Vec<(f64, f64)>>) -> ArrivalMatrix {
        let base = NaiveDate::from_ymd_opt(2018, 10, 1).unwrap();
        ArrivalMatrix {
            route_id: "425".into(),
            direction: Direction::Up,
            stops: vec![1, 4],
            days: trips_per_day
                .into_iter()
                .enumerate()
                .map(|(k, trips)| DayTrips {
                    date: base + chrono::Days::new(k as u64),
                    trips: trips
                        .into_iter()
                        .map(|(s, e)| Trip {
                            bus_id: "A".into(),
                            arrivals: BTreeMap::from([(1, s), (4, e)]),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn clustered(m: &ArrivalMatrix, t1: f64) -> ClusterState {
        cluster_starts(
            &m.start_times(),
            &ClusterConfig {
                t1,
                t2: 1,
                t1_grid: vec![],
            },
        )
    }

    #[test]
    fn slot_boundaries() {
        assert_eq!(slot_of(0.0, 15), 0);
        assert_eq!(slot_of(899.0, 15), 0);
        assert_eq!(slot_of(900.0, 15), 1);
        assert_eq!(slot_of(25_200.0, 15), 28);
    }

    #[test]
    fn mean_offset_per_slot() {
        let m = matrix(vec![
            vec![(25_200.0, 25_800.0)],
            vec![(25_200.0, 25_920.0)],
            vec![(25_200.0, 26_040.0)],
        ]);
        let b = build_timetable(&m, &clustered(&m, 600.0), 15).unwrap();
        assert_eq!(b.timetable.rows.len(), 1);
        assert_eq!(b.timetable.rows[0][&4], 25_200.0 + 720.0);
        assert_eq!(b.slots.len(), 1);
        assert_eq!(b.slots[0].n, 3);
        assert_eq!(b.slots[0].mean_offset, 720.0);
        assert!(b.warnings.is_empty());
    }

    #[test]
    fn constant_offsets_have_zero_variance() {
        let m = matrix(vec![vec![(25_200.0, 25_800.0)], vec![(25_200.0, 25_800.0)]]);
        let b = build_timetable(&m, &clustered(&m, 600.0), 15).unwrap();
        assert_eq!(b.timetable.rows[0][&4], 25_800.0);
        assert_eq!(b.slots[0].variance, 0.0);
    }

    #[test]
    fn slots_keep_their_own_means() {
        // Morning trips take 600 s, evening trips 1200 s.
        let m = matrix(vec![
            vec![(25_200.0, 25_800.0), (61_200.0, 62_400.0)],
            vec![(25_200.0, 25_800.0), (61_200.0, 62_400.0)],
        ]);
        let b = build_timetable(&m, &clustered(&m, 600.0), 15).unwrap();
        let rows = &b.timetable.rows;
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0][&4] - rows[0][&1], 600.0);
        assert_eq!(rows[1][&4] - rows[1][&1], 1200.0);
    }

    #[test]
    fn no_clusters_is_an_error() {
        let m = matrix(vec![]);
        assert!(matches!(
            build_timetable(&m, &ClusterState::default(), 15),
            Err(Error::NoClusters)
        ));
    }

    #[test]
    fn stop_without_samples_is_omitted_with_warning() {
        let mut m = matrix(vec![vec![(25_200.0, 25_800.0)]]);
        m.days[0].trips[0].arrivals.remove(&4);
        let b = build_timetable(&m, &clustered(&m, 600.0), 15).unwrap();
        assert_eq!(b.timetable.rows[0].len(), 1);
        assert_eq!(b.warnings.len(), 1);
    }

    #[test]
    fn empty_slot_falls_back_to_all_day_mean() {
        // The 10:00 departure never reaches stop 4, so its slot has no samples.
        let mut m = matrix(vec![vec![(25_200.0, 25_800.0), (36_000.0, 36_900.0)]]);
        m.days[0].trips[1].arrivals.remove(&4);
        let b = build_timetable(&m, &clustered(&m, 600.0), 15).unwrap();
        assert_eq!(b.timetable.rows[1][&4], 36_000.0 + 600.0);
        assert_eq!(b.warnings.len(), 1);
        assert!(b.warnings[0].contains("all-day mean"));
    }
}
