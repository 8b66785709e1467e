//! Start-time discovery by sequential constrained k-means.
//!
//! Departures at the first stop are visited once, in ascending time order.
//! Each joins the nearest centroid when it lies strictly within `t1` of it,
//! updating the centroid as a running mean; otherwise it opens a new cluster.
//! Centroids must stay more than `t1` apart, so a merge that drags two
//! centroids too close fuses those clusters, repeating until stable. Clusters
//! with fewer than `t2` members are dropped as outliers once the pass ends.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ArrivalMatrix;
use crate::waiting::post_wait_shifted;

/// One observed departure: 1-based day `k`, trip `i`, time of day in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartTime {
    pub day: usize,
    pub trip: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub centroid: f64,
    pub members: Vec<StartTime>,
}

impl Cluster {
    pub fn count(&self) -> usize {
        self.members.len()
    }

    /// Mean recomputed from scratch, for consistency checks.
    pub fn member_mean(&self) -> f64 {
        self.members.iter().map(|m| m.time).sum::<f64>() / self.members.len() as f64
    }
}

/// Clusters sorted by ascending centroid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterState {
    pub clusters: Vec<Cluster>,
}

impl ClusterState {
    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn centroids(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.centroid).collect()
    }

    /// Smallest gap between adjacent centroids; a bunching diagnostic.
    pub fn min_gap(&self) -> Option<f64> {
        self.clusters
            .windows(2)
            .map(|w| w[1].centroid - w[0].centroid)
            .min_by(f64::total_cmp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    /// Minimum centroid separation in seconds (the nominal bus frequency).
    pub t1: f64,
    /// Minimum member count for a cluster to survive.
    pub t2: usize,
    /// Candidate `t1` values for [`grid_search_t1`].
    pub t1_grid: Vec<f64>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            t1: 900.0,
            t2: 10,
            t1_grid: Vec::new(),
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1 > 0.0) {
            return Err(Error::Config("T1 must be positive".into()));
        }
        if self.t2 < 1 {
            return Err(Error::Config("T2 must be at least 1".into()));
        }
        if self.t1_grid.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("every T1 grid value must be positive".into()));
        }
        Ok(())
    }
}

/// Index of the centroid nearest to `tp`; ties go to the earlier centroid.
pub fn assign(tp: f64, state: &ClusterState) -> Option<usize> {
    nearest(tp, &state.clusters)
}

fn nearest(tp: f64, clusters: &[Cluster]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in clusters.iter().enumerate() {
        let d = (tp - c.centroid).abs();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Fuses adjacent clusters until every centroid gap exceeds `t1`.
fn enforce_separation(clusters: &mut Vec<Cluster>, t1: f64) {
    while let Some(i) = clusters
        .windows(2)
        .position(|w| w[1].centroid - w[0].centroid <= t1)
    {
        let right = clusters.remove(i + 1);
        let left = &mut clusters[i];
        let (ml, mr) = (left.count() as f64, right.count() as f64);
        left.centroid = (left.centroid * ml + right.centroid * mr) / (ml + mr);
        left.members.extend(right.members);
    }
}

/// Runs the sequential constrained clustering over `start_times`.
///
/// Input is sorted by time (then day, trip) first, so the result does not
/// depend on the order of the slice.
pub fn cluster_starts(start_times: &[StartTime], cfg: &ClusterConfig) -> ClusterState {
    let mut points = start_times.to_vec();
    points.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.day.cmp(&b.day))
            .then(a.trip.cmp(&b.trip))
    });

    let mut clusters: Vec<Cluster> = Vec::new();
    for tp in points {
        match nearest(tp.time, &clusters) {
            Some(i) if (tp.time - clusters[i].centroid).abs() < cfg.t1 => {
                let c = &mut clusters[i];
                let m = c.count() as f64;
                c.centroid = (c.centroid * m + tp.time) / (m + 1.0);
                c.members.push(tp);
            }
            _ => {
                let at = clusters.partition_point(|c| c.centroid <= tp.time);
                clusters.insert(
                    at,
                    Cluster {
                        centroid: tp.time,
                        members: vec![tp],
                    },
                );
            }
        }
        clusters.sort_by(|a, b| a.centroid.total_cmp(&b.centroid));
        enforce_separation(&mut clusters, cfg.t1);
    }

    clusters.retain(|c| c.count() >= cfg.t2);
    ClusterState { clusters }
}

/// Score of one grid candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub t1: f64,
    pub clusters: usize,
    /// Mean post-timetable wait at the first stop, seconds. `None` when the
    /// candidate produced no clusters or every arrival was skipped.
    pub mean_post_wait_s: Option<f64>,
    /// Bunching diagnostic: smallest centroid gap.
    pub min_gap_s: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GridSearch {
    pub best_t1: f64,
    pub state: ClusterState,
    pub candidates: Vec<CandidateScore>,
}

/// Picks the `t1` whose first-stop schedule minimizes the mean waiting time
/// on `validation`. Ties go to the smaller `t1`.
pub fn grid_search_t1(
    start_times: &[StartTime],
    t1_grid: &[f64],
    validation: &ArrivalMatrix,
    t2: usize,
) -> Result<GridSearch> {
    if t1_grid.is_empty() {
        return Err(Error::Config("T1 grid is empty".into()));
    }
    let first = validation.first_stop().ok_or(Error::EmptyValidation)?;
    let observed: Vec<f64> = (0..validation.day_count())
        .flat_map(|k| validation.arrivals_at(k, first))
        .collect();
    if observed.is_empty() {
        return Err(Error::EmptyValidation);
    }

    let mut grid = t1_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let runs: Vec<(CandidateScore, ClusterState)> = grid
        .par_iter()
        .map(|&t1| {
            let cfg = ClusterConfig {
                t1,
                t2,
                t1_grid: Vec::new(),
            };
            let state = cluster_starts(start_times, &cfg);
            let mut schedule: Vec<f64> = state.centroids().iter().map(|c| c.round()).collect();
            schedule.dedup();
            let waits: Vec<f64> = observed
                .iter()
                .filter_map(|&t| post_wait_shifted(t, &schedule))
                .collect();
            let mean = if state.is_empty() || waits.is_empty() {
                None
            } else {
                Some(waits.iter().sum::<f64>() / waits.len() as f64)
            };
            let score = CandidateScore {
                t1,
                clusters: state.len(),
                mean_post_wait_s: mean,
                min_gap_s: state.min_gap(),
            };
            (score, state)
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, (score, _)) in runs.iter().enumerate() {
        let Some(m) = score.mean_post_wait_s else {
            continue;
        };
        // Grid is ascending, so strict improvement keeps the smaller T1 on ties.
        if best.is_none_or(|b| m < runs[b].0.mean_post_wait_s.expect("scored")) {
            best = Some(i);
        }
    }
    let best = best.ok_or(Error::NoViableT1)?;
    let best_t1 = runs[best].0.t1;
    let candidates = runs.iter().map(|(s, _)| s.clone()).collect();
    let state = runs.into_iter().nth(best).expect("index in range").1;
    Ok(GridSearch {
        best_t1,
        state,
        candidates,
    })
}
