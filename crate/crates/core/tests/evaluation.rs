use std::collections::BTreeMap;

use busplan::model::{ArrivalMatrix, DayTrips};
use busplan::pipeline::{run_protocol, PipelineParams};
use busplan::sim::{periodic_starts, simulate, SimConfig};
use busplan::snap::{matrix_from_points, SnapConfig};
use busplan::waiting::{evaluate, ipost_wt, parse_report, split, write_report, Protocol};
use busplan::{Direction, Error, Timetable, Trip};
use chrono::{Datelike, NaiveDate};
use proptest::prelude::*;

fn calendar_matrix(first: NaiveDate, days: u64) -> ArrivalMatrix {
    ArrivalMatrix {
        route_id: "534".into(),
        direction: Direction::Down,
        stops: vec![1, 4],
        days: (0..days)
            .map(|d| DayTrips {
                date: first + chrono::Days::new(d),
                trips: vec![Trip {
                    bus_id: "A".into(),
                    arrivals: BTreeMap::from([(1, 21_600.0), (4, 22_200.0)]),
                }],
            })
            .collect(),
    }
}

#[test]
fn split_sizes_follow_the_calendar() {
    let m = calendar_matrix(NaiveDate::from_ymd_opt(2018, 10, 1).unwrap(), 61);
    let c = split(&m, Protocol::InterMonth).unwrap();
    assert_eq!((c.train.day_count(), c.test.day_count()), (31, 30));
    let b = split(&m, Protocol::AlternateDays).unwrap();
    assert_eq!((b.train.day_count(), b.test.day_count()), (31, 30));
    assert!(b.train.dates().iter().all(|d| d.day() % 2 == 1));
    let a = split(&m, Protocol::FirstNode).unwrap();
    assert_eq!(a.train.stops, vec![1]);
    for s in [a, b, c] {
        let train = s.train.dates();
        assert!(s.test.dates().iter().all(|d| !train.contains(d)));
    }
}

#[test]
fn single_month_cannot_be_split_by_month() {
    let m = calendar_matrix(NaiveDate::from_ymd_opt(2018, 10, 1).unwrap(), 31);
    assert!(matches!(
        split(&m, Protocol::InterMonth),
        Err(Error::MonthSpan {
            protocol: 'C',
            months: 1
        })
    ));
}

proptest! {
    #[test]
    fn ipost_is_strictly_positive(
        t in 0.0f64..86_400.0,
        mut sched in prop::collection::vec(0.0f64..86_400.0, 0..30),
    ) {
        sched.sort_by(f64::total_cmp);
        if let Some(w) = ipost_wt(t, &sched) {
            prop_assert!(w > 0.0);
            prop_assert!(sched.iter().any(|s| (t - s - w).abs() < 1e-9));
        } else {
            prop_assert!(sched.iter().all(|s| *s >= t));
        }
    }

    #[test]
    fn evaluated_and_skipped_cover_every_arrival(
        arrivals in prop::collection::vec(18_000.0f64..80_000.0, 1..60),
        first in 18_000u32..40_000,
    ) {
        let mut tt = Timetable::new("534", Direction::Down, vec![1]);
        for i in 0..10 {
            tt.rows.push(BTreeMap::from([(1, f64::from(first + 1800 * i))]));
        }
        let mut sorted = arrivals.clone();
        sorted.sort_by(f64::total_cmp);
        let m = ArrivalMatrix {
            route_id: "534".into(),
            direction: Direction::Down,
            stops: vec![1],
            days: vec![DayTrips {
                date: NaiveDate::from_ymd_opt(2018, 10, 1).unwrap(),
                trips: sorted
                    .iter()
                    .map(|&t| Trip { bus_id: "A".into(), arrivals: BTreeMap::from([(1, t)]) })
                    .collect(),
            }],
        };
        let r = evaluate(&tt, &m).unwrap();
        let w = &r.per_stop[&1];
        prop_assert_eq!(w.n_post + w.n_skipped, arrivals.len());
        if let Some(p) = w.post_wt_mean {
            prop_assert!(p >= 0.0);
        }
    }
}

fn noisy_month_pair() -> ArrivalMatrix {
    let starts = periodic_starts(21_600.0, 64_800.0, 1800.0);
    let mut cfg = SimConfig::straight_route("534", 10, 500.0, 120.0, starts);
    cfg.start_date = NaiveDate::from_ymd_opt(2018, 10, 1).unwrap();
    cfg.days = 61;
    cfg.sigma_start = 120.0;
    cfg.sigma_travel_base = 20.0;
    cfg.sigma_growth = 5.0;
    cfg.gps_noise_m = 5.0;
    cfg.seed = 21;
    let out = simulate(&cfg).unwrap();
    matrix_from_points(
        &out.trace,
        &cfg.stops,
        "534",
        cfg.direction,
        &SnapConfig::default(),
        3,
    )
    .unwrap()
    .matrix
}

#[test]
fn noisy_timetables_are_monotone_and_reports_parse_back() {
    let m = noisy_month_pair();
    let params = PipelineParams::default();
    let mut runs = Vec::new();
    for p in Protocol::ALL {
        let run = run_protocol(&m, p, &params).unwrap();
        run.fit
            .build
            .timetable
            .check_invariants(Some(params.cluster.t1))
            .unwrap();
        for w in run.report.per_stop.values() {
            assert!(w.pre_wt_mean.unwrap() >= 0.0);
            assert!(w.post_wt_mean.unwrap() >= 0.0);
        }
        runs.push((p, run.report));
    }
    let refs: Vec<_> = runs.iter().map(|(p, r)| (*p, r)).collect();
    let mut buf = Vec::new();
    write_report(&refs, &mut buf).unwrap();
    let rows = parse_report(buf.as_slice()).unwrap();
    let per_stop_rows = rows.iter().filter(|r| r.slot.is_none()).count();
    // A scores stop 1 only; B and C score the four retained stops.
    assert_eq!(per_stop_rows, 1 + 4 + 4);
}

#[test]
fn zero_noise_timetable_matches_truth_under_every_protocol() {
    let starts = periodic_starts(21_600.0, 36_000.0, 1800.0);
    let mut cfg = SimConfig::straight_route("534", 7, 450.0, 100.0, starts);
    cfg.start_date = NaiveDate::from_ymd_opt(2018, 10, 1).unwrap();
    cfg.days = 61;
    let out = simulate(&cfg).unwrap();
    let m = matrix_from_points(
        &out.trace,
        &cfg.stops,
        "534",
        cfg.direction,
        &SnapConfig::default(),
        3,
    )
    .unwrap()
    .matrix;
    for p in Protocol::ALL {
        let run = run_protocol(&m, p, &PipelineParams::default()).unwrap();
        let built = &run.fit.build.timetable;
        for seq in &built.published_stops {
            assert_eq!(
                built.times_at(*seq),
                out.truth.times_at(*seq),
                "protocol {p:?} stop {seq}"
            );
        }
        assert!(run
            .report
            .per_stop
            .values()
            .all(|w| w.post_wt_mean == Some(0.0)));
    }
}
