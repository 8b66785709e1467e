//! Waiting-time metrics and the evaluation protocols.
//!
//! The pre-timetable figure assumes a passenger turns up uniformly at random
//! within a headway of `N0` whole minutes and so waits `(N0 + 1) / 2` on
//! average; it is averaged over headways without length weighting. The
//! post-timetable figure assumes the passenger turns up at the latest
//! scheduled time strictly before the bus actually arrives.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::model::{ArrivalMatrix, Direction, Timetable};
use crate::timetable::{slot_of, DEFAULT_SLOT_MINUTES};

pub const REPORT_HEADER: &str =
    "protocol,stop_seq,slot,pre_wt_min,post_wt_min,n_pre,n_post,n_skipped";
pub const PLOTDATA_HEADER: &str = "figure,x_kind,x,pre_wt_min,post_wt_min,pre_wt_length_biased_min";

/// Shift applied to arrivals that coincide with a scheduled time.
pub const TIE_SHIFT_S: f64 = 1.0;

/// Headway in whole minutes, rounded half-up.
fn headway_minutes(prev: f64, next: f64) -> f64 {
    (next - prev + 0.5).floor()
}

/// Expected wait for one headway of `n0` whole minutes.
pub fn headway_wait(n0: f64) -> f64 {
    (n0 + 1.0) / 2.0
}

/// Mean pre-timetable wait in minutes over the consecutive headways of one
/// day's sorted arrivals (minutes of day). `None` with fewer than two
/// arrivals.
pub fn pre_wt(arrivals_min: &[f64]) -> Option<f64> {
    if arrivals_min.len() < 2 {
        return None;
    }
    let waits: Vec<f64> = arrivals_min
        .windows(2)
        .map(|w| headway_wait(headway_minutes(w[0], w[1])))
        .collect();
    Some(waits.iter().sum::<f64>() / waits.len() as f64)
}

/// Wait behind the latest scheduled time strictly before `t`; `None` when no
/// scheduled time precedes it. `scheduled` must be sorted.
pub fn ipost_wt(t: f64, scheduled: &[f64]) -> Option<f64> {
    let idx = scheduled.partition_point(|&s| s < t);
    idx.checked_sub(1).map(|i| t - scheduled[i])
}

/// [`ipost_wt`] with exact ties shifted by [`TIE_SHIFT_S`] so that an
/// on-time bus scores zero.
pub fn post_wait_shifted(t: f64, scheduled: &[f64]) -> Option<f64> {
    if scheduled.binary_search_by(|s| s.total_cmp(&t)).is_ok() {
        ipost_wt(t + TIE_SHIFT_S, scheduled).map(|w| w - TIE_SHIFT_S)
    } else {
        ipost_wt(t, scheduled)
    }
}

/// Aggregated waiting-time statistics for one stop or one (slot, stop) cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WaitStats {
    /// Minutes.
    pub pre_wt_mean: Option<f64>,
    /// Minutes.
    pub post_wt_mean: Option<f64>,
    /// Length-biased random-arrival wait `E[H²] / 2E[H]`, minutes. Reported
    /// alongside the headline figure for comparison only.
    pub pre_wt_length_biased: Option<f64>,
    pub n_pre: usize,
    pub n_post: usize,
    pub n_skipped: usize,
}

#[derive(Debug, Clone, Default)]
struct Accum {
    pre_sum: f64,
    n_pre: usize,
    h_sum: f64,
    h_sq_sum: f64,
    post_sum: f64,
    n_post: usize,
    n_skipped: usize,
}

impl Accum {
    fn headway(&mut self, minutes_exact: f64) {
        self.pre_sum += headway_wait((minutes_exact + 0.5).floor());
        self.n_pre += 1;
        self.h_sum += minutes_exact;
        self.h_sq_sum += minutes_exact * minutes_exact;
    }

    fn wait(&mut self, w: Option<f64>) {
        match w {
            Some(s) => {
                self.post_sum += s / 60.0;
                self.n_post += 1;
            }
            None => self.n_skipped += 1,
        }
    }

    fn stats(&self) -> WaitStats {
        WaitStats {
            pre_wt_mean: (self.n_pre > 0).then(|| self.pre_sum / self.n_pre as f64),
            post_wt_mean: (self.n_post > 0).then(|| self.post_sum / self.n_post as f64),
            pre_wt_length_biased: (self.h_sum > 0.0).then(|| self.h_sq_sum / (2.0 * self.h_sum)),
            n_pre: self.n_pre,
            n_post: self.n_post,
            n_skipped: self.n_skipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub route_id: String,
    pub direction: Direction,
    pub slot_minutes: u32,
    pub per_stop: BTreeMap<u32, WaitStats>,
    pub per_slot: BTreeMap<(usize, u32), WaitStats>,
}

impl EvalReport {
    /// Unweighted mean over stops of a per-stop figure.
    pub fn mean_over_stops(&self, pick: impl Fn(&WaitStats) -> Option<f64>) -> Option<f64> {
        let vals: Vec<f64> = self.per_stop.values().filter_map(pick).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Scores a timetable against held-out arrivals at every shared stop.
///
/// Headways are taken within a day only and counted in the slot of the later
/// arrival. Arrivals earlier than every scheduled time are counted as
/// skipped.
pub fn evaluate(timetable: &Timetable, test: &ArrivalMatrix) -> Result<EvalReport> {
    evaluate_with_slots(timetable, test, DEFAULT_SLOT_MINUTES)
}

pub fn evaluate_with_slots(
    timetable: &Timetable,
    test: &ArrivalMatrix,
    slot_minutes: u32,
) -> Result<EvalReport> {
    if timetable.route_id != test.route_id || timetable.direction != test.direction {
        return Err(Error::Validation(format!(
            "timetable is for {} {}, test data for {} {}",
            timetable.route_id, timetable.direction, test.route_id, test.direction
        )));
    }
    let stops: Vec<u32> = timetable
        .published_stops
        .iter()
        .copied()
        .filter(|s| test.stops.contains(s))
        .collect();
    if stops.is_empty() {
        return Err(Error::NoStopOverlap);
    }

    let mut per_stop = BTreeMap::new();
    let mut per_slot: BTreeMap<(usize, u32), Accum> = BTreeMap::new();
    for seq in stops {
        let schedule = timetable.times_at(seq);
        let mut stop_acc = Accum::default();
        for k in 0..test.day_count() {
            let arrivals = test.arrivals_at(k, seq);
            for w in arrivals.windows(2) {
                let h = (w[1] - w[0]) / 60.0;
                stop_acc.headway(h);
                per_slot
                    .entry((slot_of(w[1], slot_minutes), seq))
                    .or_default()
                    .headway(h);
            }
            for &t in &arrivals {
                let wait = post_wait_shifted(t, &schedule);
                stop_acc.wait(wait);
                per_slot
                    .entry((slot_of(t, slot_minutes), seq))
                    .or_default()
                    .wait(wait);
            }
        }
        per_stop.insert(seq, stop_acc.stats());
    }

    Ok(EvalReport {
        route_id: timetable.route_id.clone(),
        direction: timetable.direction,
        slot_minutes,
        per_stop,
        per_slot: per_slot.into_iter().map(|(k, a)| (k, a.stats())).collect(),
    })
}

/// Evaluation protocols: first-node (A), alternate days (B), inter-month (C).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    FirstNode,
    AlternateDays,
    InterMonth,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [
        Protocol::FirstNode,
        Protocol::AlternateDays,
        Protocol::InterMonth,
    ];

    pub fn letter(self) -> char {
        match self {
            Protocol::FirstNode => 'A',
            Protocol::AlternateDays => 'B',
            Protocol::InterMonth => 'C',
        }
    }

    pub fn from_letter(s: &str) -> Option<Protocol> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Some(Protocol::FirstNode),
            "B" => Some(Protocol::AlternateDays),
            "C" => Some(Protocol::InterMonth),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub protocol: Protocol,
    pub train: ArrivalMatrix,
    pub test: ArrivalMatrix,
}

fn months(dates: &[NaiveDate]) -> Vec<(i32, u32)> {
    let mut m: Vec<(i32, u32)> = dates.iter().map(|d| (d.year(), d.month())).collect();
    m.sort_unstable();
    m.dedup();
    m
}

/// Splits a matrix into train and test sets for one protocol.
///
/// A and C train on the first calendar month present and test on the second;
/// A also restricts both sides to the first stop. B trains on odd days of the
/// month and tests on even days.
pub fn split(matrix: &ArrivalMatrix, protocol: Protocol) -> Result<Split> {
    let (train, test) = match protocol {
        Protocol::AlternateDays => (
            matrix.filter_days(|d| d.day() % 2 == 1),
            matrix.filter_days(|d| d.day() % 2 == 0),
        ),
        Protocol::FirstNode | Protocol::InterMonth => {
            let ms = months(&matrix.dates());
            if ms.len() < 2 {
                return Err(Error::MonthSpan {
                    protocol: protocol.letter(),
                    months: ms.len(),
                });
            }
            let (first, second) = (ms[0], ms[1]);
            let train = matrix.filter_days(|d| (d.year(), d.month()) == first);
            let test = matrix.filter_days(|d| (d.year(), d.month()) == second);
            if protocol == Protocol::FirstNode {
                let stop = matrix.first_stop().into_iter().collect::<Vec<_>>();
                (train.restrict_stops(&stop), test.restrict_stops(&stop))
            } else {
                (train, test)
            }
        }
    };
    Ok(Split {
        protocol,
        train,
        test,
    })
}

/// All three protocol splits.
pub fn split_protocols(matrix: &ArrivalMatrix) -> Result<Vec<Split>> {
    Protocol::ALL.iter().map(|&p| split(matrix, p)).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// Writes per-stop rows (`slot` = `all`) followed by per-slot rows.
pub fn write_report<W: Write>(reports: &[(Protocol, &EvalReport)], mut sink: W) -> Result<()> {
    writeln!(sink, "{REPORT_HEADER}")?;
    for (protocol, report) in reports {
        let p = protocol.letter();
        for (seq, s) in &report.per_stop {
            writeln!(
                sink,
                "{p},{seq},all,{},{},{},{},{}",
                opt(s.pre_wt_mean),
                opt(s.post_wt_mean),
                s.n_pre,
                s.n_post,
                s.n_skipped
            )?;
        }
        for ((slot, seq), s) in &report.per_slot {
            writeln!(
                sink,
                "{p},{seq},{slot},{},{},{},{},{}",
                opt(s.pre_wt_mean),
                opt(s.post_wt_mean),
                s.n_pre,
                s.n_post,
                s.n_skipped
            )?;
        }
    }
    Ok(())
}

/// One parsed `report.csv` row. `slot` is `None` for per-stop rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub protocol: Protocol,
    pub stop_seq: u32,
    pub slot: Option<usize>,
    pub pre_wt_min: Option<f64>,
    pub post_wt_min: Option<f64>,
    pub n_pre: usize,
    pub n_post: usize,
    pub n_skipped: usize,
}

pub fn parse_report<R: Read>(reader: R) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    if rdr.headers()?.iter().ne(REPORT_HEADER.split(',')) {
        return Err(Error::parse(
            1,
            format!("expected header `{REPORT_HEADER}`"),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::parse(line, format!("invalid {what}"));
        let num = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                rec[i].parse().map(Some).map_err(|_| bad("number"))
            }
        };
        rows.push(ReportRow {
            protocol: Protocol::from_letter(&rec[0]).ok_or_else(|| bad("protocol"))?,
            stop_seq: rec[1].parse().map_err(|_| bad("stop_seq"))?,
            slot: match &rec[2] {
                "all" => None,
                s => Some(s.parse().map_err(|_| bad("slot"))?),
            },
            pre_wt_min: num(3)?,
            post_wt_min: num(4)?,
            n_pre: rec[5].parse().map_err(|_| bad("n_pre"))?,
            n_post: rec[6].parse().map_err(|_| bad("n_post"))?,
            n_skipped: rec[7].parse().map_err(|_| bad("n_skipped"))?,
        });
    }
    Ok(rows)
}

/// Bar-chart data: per-stop bars for every protocol, plus per-slot bars
/// (pooled over stops, weighted by sample counts) for B and C.
pub fn write_plotdata<W: Write>(reports: &[(Protocol, &EvalReport)], mut sink: W) -> Result<()> {
    writeln!(sink, "{PLOTDATA_HEADER}")?;
    for (protocol, report) in reports {
        let fig = match protocol {
            Protocol::FirstNode => "first_node",
            Protocol::AlternateDays => "alternate_days",
            Protocol::InterMonth => "inter_month",
        };
        for (seq, s) in &report.per_stop {
            writeln!(
                sink,
                "{fig}_by_stop,stop,{seq},{},{},{}",
                opt(s.pre_wt_mean),
                opt(s.post_wt_mean),
                opt(s.pre_wt_length_biased)
            )?;
        }
        if *protocol == Protocol::FirstNode {
            continue;
        }
        let mut pooled: BTreeMap<usize, (f64, usize, f64, usize)> = BTreeMap::new();
        for ((slot, _), s) in &report.per_slot {
            let e = pooled.entry(*slot).or_default();
            if let Some(p) = s.pre_wt_mean {
                e.0 += p * s.n_pre as f64;
                e.1 += s.n_pre;
            }
            if let Some(p) = s.post_wt_mean {
                e.2 += p * s.n_post as f64;
                e.3 += s.n_post;
            }
        }
        for (slot, (pre, n_pre, post, n_post)) in pooled {
            let pre = (n_pre > 0).then(|| pre / n_pre as f64);
            let post = (n_post > 0).then(|| post / n_post as f64);
            let start = slot as f64 * 60.0 * f64::from(report.slot_minutes);
            writeln!(
                sink,
                "{fig}_by_slot,slot,{},{},{},",
                crate::model::format_hms(start),
                opt(pre),
                opt(post)
            )?;
        }
    }
    Ok(())
}
