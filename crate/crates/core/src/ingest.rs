//! Canonical text formats: `stops.csv`, `trace.csv`, `timetable.csv` and the
//! `events.csv` debug dump.
//!
//! All files are UTF-8 with `\n` line endings and unquoted fields. Identifiers
//! must not contain commas. Coordinates are written with six fraction digits
//! and times with whole-second resolution, so anything the writers emit
//! parses back to the same values and rewrites byte-identically.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime};
use csv::{ReaderBuilder, StringRecord};

use crate::error::{Error, Result};
use crate::model::{
    coordinates_in_range, format_hms, parse_hms, seq_violations, Direction, RawPoint, Stop,
    StopEvent, Timetable,
};

pub const STOPS_HEADER: &str = "route_id,direction,seq,lat,lon,name";
pub const TRACE_HEADER: &str = "timestamp,route_id,bus_id,direction,lat,lon";
pub const TIMETABLE_HEADER: &str = "route_id,direction,trip_index,stop_seq,scheduled_time";
pub const EVENTS_HEADER: &str = "day,bus_id,direction,stop_seq,arrival";

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Summary of a parsed extract.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub routes: Vec<String>,
    pub date_range: Option<(NaiveDate, NaiveDate)>,
    pub point_count: usize,
}

impl DatasetManifest {
    pub fn from_points(name: &str, points: &[RawPoint]) -> Self {
        let mut routes: Vec<String> = points.iter().map(|p| p.route_id.clone()).collect();
        routes.sort();
        routes.dedup();
        let first = points.iter().map(|p| p.date()).min();
        let last = points.iter().map(|p| p.date()).max();
        DatasetManifest {
            name: name.to_string(),
            routes,
            date_range: first.zip(last),
            point_count: points.len(),
        }
    }
}

/// Yields `(line number, record)` pairs after checking the header line.
fn records<R: Read>(reader: R, header: &str) -> Result<Vec<(u64, StringRecord)>> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let expected: Vec<&str> = header.split(',').collect();
    let found = rdr.headers()?.clone();
    if found.iter().ne(expected.iter().copied()) {
        // An empty stream has no header at all; treat that as empty input.
        if found.is_empty() {
            return Ok(Vec::new());
        }
        return Err(Error::parse(1, format!("expected header `{header}`")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != expected.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", expected.len(), rec.len()),
            ));
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(rec: &StringRecord, idx: usize, line: u64, what: &str) -> Result<T> {
    rec[idx]
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} {:?}", &rec[idx])))
}

fn direction(rec: &StringRecord, idx: usize, line: u64) -> Result<Direction> {
    rec[idx].parse().map_err(|e: String| Error::parse(line, e))
}

fn coordinates(rec: &StringRecord, lat_idx: usize, line: u64) -> Result<(f64, f64)> {
    let lat: f64 = field(rec, lat_idx, line, "latitude")?;
    let lon: f64 = field(rec, lat_idx + 1, line, "longitude")?;
    if !coordinates_in_range(lat, lon) {
        return Err(Error::parse(
            line,
            format!("coordinates ({lat}, {lon}) out of range"),
        ));
    }
    Ok((lat, lon))
}

/// Parses `stops.csv`. Output is grouped per (route, direction) in order of
/// first appearance and sorted by seq within each group.
pub fn parse_stops<R: Read>(reader: R) -> Result<Vec<Stop>> {
    let mut groups: Vec<((String, Direction), Vec<Stop>)> = Vec::new();
    for (line, rec) in records(reader, STOPS_HEADER)? {
        let dir = direction(&rec, 1, line)?;
        let seq: u32 = field(&rec, 2, line, "seq")?;
        if seq == 0 {
            return Err(Error::parse(line, "seq must be >= 1"));
        }
        let (lat, lon) = coordinates(&rec, 3, line)?;
        let stop = Stop {
            route_id: rec[0].to_string(),
            direction: dir,
            seq,
            lat,
            lon,
            name: rec[5].to_string(),
        };
        let key = (stop.route_id.clone(), dir);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(stop),
            None => groups.push((key, vec![stop])),
        }
    }
    let mut stops = Vec::new();
    for (_, mut group) in groups {
        group.sort_by_key(|s| s.seq);
        stops.extend(group);
    }
    if let Some(v) = seq_violations(&stops).into_iter().next() {
        return Err(Error::Validation(format!(
            "route {} {}: {}",
            v.route_id, v.direction, v.detail
        )));
    }
    Ok(stops)
}

pub fn write_stops<W: Write>(stops: &[Stop], mut sink: W) -> Result<()> {
    writeln!(sink, "{STOPS_HEADER}")?;
    for s in stops {
        writeln!(
            sink,
            "{},{},{},{:.6},{:.6},{}",
            s.route_id, s.direction, s.seq, s.lat, s.lon, s.name
        )?;
    }
    Ok(())
}

/// Parses `trace.csv`, sorts by (bus, timestamp) and collapses repeated
/// (bus, timestamp) records keeping the first.
pub fn parse_trace<R: Read>(reader: R) -> Result<Vec<RawPoint>> {
    let mut points = Vec::new();
    for (line, rec) in records(reader, TRACE_HEADER)? {
        let timestamp = NaiveDateTime::parse_from_str(&rec[0], TIMESTAMP_FORMAT)
            .map_err(|e| Error::parse(line, format!("invalid timestamp {:?}: {e}", &rec[0])))?;
        let dir = direction(&rec, 3, line)?;
        let (lat, lon) = coordinates(&rec, 4, line)?;
        points.push(RawPoint {
            route_id: rec[1].to_string(),
            bus_id: rec[2].to_string(),
            direction: dir,
            timestamp,
            lat,
            lon,
        });
    }
    // Stable sort keeps input order among duplicates, so dedup keeps the first.
    points.sort_by(|a, b| (&a.bus_id, a.timestamp).cmp(&(&b.bus_id, b.timestamp)));
    points.dedup_by(|b, a| a.bus_id == b.bus_id && a.timestamp == b.timestamp);
    Ok(points)
}

/// Rows come out in the same (bus, timestamp) order that [`parse_trace`]
/// produces, so a written file parses back to itself.
pub fn write_trace<W: Write>(points: &[RawPoint], mut sink: W) -> Result<()> {
    writeln!(sink, "{TRACE_HEADER}")?;
    let mut order: Vec<&RawPoint> = points.iter().collect();
    order.sort_by(|a, b| (&a.bus_id, a.timestamp).cmp(&(&b.bus_id, b.timestamp)));
    for p in order {
        writeln!(
            sink,
            "{},{},{},{},{:.6},{:.6}",
            p.timestamp.format(TIMESTAMP_FORMAT),
            p.route_id,
            p.bus_id,
            p.direction,
            p.lat,
            p.lon
        )?;
    }
    Ok(())
}

/// Writes one row per (trip, published stop) present in the timetable.
/// Trip indices are 1-based in row order.
pub fn write_timetable<W: Write>(t: &Timetable, mut sink: W) -> Result<()> {
    writeln!(sink, "{TIMETABLE_HEADER}")?;
    write_timetable_rows(t, &mut sink)
}

/// Writes several timetables into one file under a single header.
pub fn write_timetables<W: Write>(tables: &[Timetable], mut sink: W) -> Result<()> {
    writeln!(sink, "{TIMETABLE_HEADER}")?;
    for t in tables {
        write_timetable_rows(t, &mut sink)?;
    }
    Ok(())
}

fn write_timetable_rows<W: Write>(t: &Timetable, sink: &mut W) -> Result<()> {
    for (i, row) in t.rows.iter().enumerate() {
        for seq in &t.published_stops {
            if let Some(&time) = row.get(seq) {
                writeln!(
                    sink,
                    "{},{},{},{},{}",
                    t.route_id,
                    t.direction,
                    i + 1,
                    seq,
                    format_hms(time)
                )?;
            }
        }
    }
    Ok(())
}

/// Parses `timetable.csv` into one timetable per (route, direction), in order
/// of first appearance. Published stops are the seqs that occur, ascending.
pub fn parse_timetable<R: Read>(reader: R) -> Result<Vec<Timetable>> {
    type Rows = BTreeMap<u32, BTreeMap<u32, f64>>;
    let mut groups: Vec<((String, Direction), Rows)> = Vec::new();
    for (line, rec) in records(reader, TIMETABLE_HEADER)? {
        let dir = direction(&rec, 1, line)?;
        let trip: u32 = field(&rec, 2, line, "trip_index")?;
        let seq: u32 = field(&rec, 3, line, "stop_seq")?;
        let time = parse_hms(&rec[4])
            .ok_or_else(|| Error::parse(line, format!("invalid time {:?}", &rec[4])))?;
        if trip == 0 || seq == 0 {
            return Err(Error::parse(line, "trip_index and stop_seq are 1-based"));
        }
        let key = (rec[0].to_string(), dir);
        let rows = match groups.iter_mut().position(|(k, _)| *k == key) {
            Some(i) => &mut groups[i].1,
            None => {
                groups.push((key, BTreeMap::new()));
                &mut groups.last_mut().expect("just pushed").1
            }
        };
        if rows.entry(trip).or_default().insert(seq, time).is_some() {
            return Err(Error::parse(
                line,
                format!("duplicate entry for trip {trip} stop {seq}"),
            ));
        }
    }
    Ok(groups
        .into_iter()
        .map(|((route, dir), rows)| {
            let mut published: Vec<u32> = rows.values().flat_map(|r| r.keys().copied()).collect();
            published.sort_unstable();
            published.dedup();
            Timetable {
                route_id: route,
                direction: dir,
                published_stops: published,
                rows: rows.into_values().collect(),
            }
        })
        .collect())
}

pub fn write_events<W: Write>(events: &[StopEvent], mut sink: W) -> Result<()> {
    writeln!(sink, "{EVENTS_HEADER}")?;
    for e in events {
        writeln!(
            sink,
            "{},{},{},{},{}",
            e.day, e.bus_id, e.direction, e.stop_seq, e.arrival
        )?;
    }
    Ok(())
}
