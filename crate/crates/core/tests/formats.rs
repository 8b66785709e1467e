use std::collections::BTreeMap;

use busplan::ingest::{
    parse_stops, parse_timetable, parse_trace, write_stops, write_timetable, write_trace,
    DatasetManifest,
};
use busplan::{Direction, RawPoint, Stop, Timetable};
use chrono::{Duration, NaiveDate, NaiveDateTime};
use proptest::prelude::*;

fn micro(v: i64) -> f64 {
    v as f64 / 1e6
}

fn direction() -> impl Strategy<Value = Direction> {
    prop_oneof![Just(Direction::Up), Just(Direction::Down)]
}

fn stops_strategy() -> impl Strategy<Value = Vec<Stop>> {
    (
        "[0-9]{1,4}",
        direction(),
        prop::collection::vec(
            (
                -90_000_000i64..=90_000_000,
                -180_000_000i64..=180_000_000,
                "[A-Za-z ]{0,12}",
            ),
            1..12,
        ),
    )
        .prop_map(|(route, dir, rows)| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (lat, lon, name))| Stop {
                    route_id: route.clone(),
                    direction: dir,
                    seq: i as u32 + 1,
                    lat: micro(lat),
                    lon: micro(lon),
                    name,
                })
                .collect()
        })
}

fn base_time() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2018, 10, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

fn trace_strategy() -> impl Strategy<Value = Vec<RawPoint>> {
    prop::collection::btree_set(("[A-C]", 0i64..5 * 86_400), 0..40).prop_flat_map(|keys| {
        let n = keys.len();
        (
            Just(keys),
            prop::collection::vec(
                (
                    direction(),
                    -90_000_000i64..=90_000_000,
                    -180_000_000i64..=180_000_000,
                ),
                n,
            ),
        )
            .prop_map(|(keys, vals)| {
                keys.into_iter()
                    .zip(vals)
                    .map(|((bus, secs), (dir, lat, lon))| RawPoint {
                        route_id: "425".into(),
                        bus_id: bus,
                        direction: dir,
                        timestamp: base_time() + Duration::seconds(secs),
                        lat: micro(lat),
                        lon: micro(lon),
                    })
                    .collect()
            })
    })
}

fn timetable_strategy() -> impl Strategy<Value = Timetable> {
    (
        direction(),
        prop::collection::btree_set(1u32..40, 1..6),
        prop::collection::vec((0u32..80_000, prop::collection::vec(1u32..600, 6)), 0..8),
    )
        .prop_map(|(dir, stops, rows)| {
            let published: Vec<u32> = stops.into_iter().collect();
            let rows = rows
                .into_iter()
                .map(|(start, gaps)| {
                    let mut t = f64::from(start);
                    let mut row = BTreeMap::new();
                    for (seq, gap) in published.iter().zip(gaps) {
                        row.insert(*seq, t);
                        t += f64::from(gap);
                    }
                    row
                })
                .collect();
            Timetable {
                route_id: "534".into(),
                direction: dir,
                published_stops: published,
                rows,
            }
        })
}

proptest! {
    #[test]
    fn stops_round_trip(stops in stops_strategy()) {
        let mut buf = Vec::new();
        write_stops(&stops, &mut buf).unwrap();
        prop_assert_eq!(parse_stops(buf.as_slice()).unwrap(), stops);
    }

    #[test]
    fn trace_round_trip(points in trace_strategy()) {
        let mut buf = Vec::new();
        write_trace(&points, &mut buf).unwrap();
        let parsed = parse_trace(buf.as_slice()).unwrap();
        // The strategy emits (bus, timestamp) order already.
        prop_assert_eq!(parsed, points);
    }

    #[test]
    fn trace_parsing_ignores_line_order(points in trace_strategy(), seed in any::<u64>()) {
        let mut buf = Vec::new();
        write_trace(&points, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().skip(1).collect();
        // Deterministic shuffle driven by the seed.
        let mut state = seed | 1;
        for i in (1..lines.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            lines.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let shuffled = format!("{}\n{}\n", busplan::ingest::TRACE_HEADER, lines.join("\n"));
        let shuffled = if lines.is_empty() { format!("{}\n", busplan::ingest::TRACE_HEADER) } else { shuffled };
        prop_assert_eq!(parse_trace(shuffled.as_bytes()).unwrap(), points);
    }

    #[test]
    fn timetable_round_trip(t in timetable_strategy()) {
        let mut buf = Vec::new();
        write_timetable(&t, &mut buf).unwrap();
        let parsed = parse_timetable(buf.as_slice()).unwrap();
        if t.rows.is_empty() {
            prop_assert!(parsed.is_empty());
        } else {
            prop_assert_eq!(parsed, vec![t]);
        }
    }
}

#[test]
fn shuffled_trace_matches_sorted_oracle() {
    let rows = [
        "2018-10-01T06:00:20,425,B,UP,28.600000,77.200000",
        "2018-10-01T06:00:10,425,A,UP,28.600000,77.200000",
        "2018-10-01T06:00:00,425,B,UP,28.600000,77.200000",
        "2018-10-01T06:00:30,425,A,UP,28.600000,77.200000",
        "2018-10-01T06:00:00,425,A,UP,28.600000,77.200000",
    ];
    let text = format!("{}\n{}\n", busplan::ingest::TRACE_HEADER, rows.join("\n"));
    let got: Vec<(String, String)> = parse_trace(text.as_bytes())
        .unwrap()
        .into_iter()
        .map(|p| (p.bus_id, p.timestamp.format("%H:%M:%S").to_string()))
        .collect();
    let mut oracle: Vec<(String, String)> = rows
        .iter()
        .map(|r| {
            let f: Vec<&str> = r.split(',').collect();
            (f[2].to_string(), f[0][11..].to_string())
        })
        .collect();
    oracle.sort();
    assert_eq!(got, oracle);
}

#[test]
fn manifest_counts_points() {
    let text = format!(
        "{}\n2018-10-01T06:00:00,425,A,UP,28.6,77.2\n2018-10-03T06:00:00,534,B,DOWN,28.6,77.2\n",
        busplan::ingest::TRACE_HEADER
    );
    let pts = parse_trace(text.as_bytes()).unwrap();
    let m = DatasetManifest::from_points("sample", &pts);
    assert_eq!(m.point_count, 2);
    assert_eq!(m.routes, vec!["425".to_string(), "534".to_string()]);
    let (first, last) = m.date_range.unwrap();
    assert_eq!(
        (first.to_string(), last.to_string()),
        ("2018-10-01".into(), "2018-10-03".into())
    );
}

#[test]
fn empty_stream_parses_to_nothing() {
    assert!(parse_trace("".as_bytes()).unwrap().is_empty());
    assert!(parse_stops("".as_bytes()).unwrap().is_empty());
}
