//! End-to-end fitting and evaluation over an arrival matrix.

use crate::cluster::{cluster_starts, grid_search_t1, CandidateScore, ClusterConfig, ClusterState};
use crate::error::{Error, Result};
use crate::model::ArrivalMatrix;
use crate::snap::SnapConfig;
use crate::timetable::{build_timetable, TimetableBuild, DEFAULT_SLOT_MINUTES};
use crate::waiting::{evaluate_with_slots, split, EvalReport, Protocol, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub snap: SnapConfig,
    pub cluster: ClusterConfig,
    pub slot_minutes: u32,
    pub sample_every: u32,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            snap: SnapConfig::default(),
            cluster: ClusterConfig::default(),
            slot_minutes: DEFAULT_SLOT_MINUTES,
            sample_every: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub t1: f64,
    pub clusters: ClusterState,
    pub build: TimetableBuild,
    /// Grid-search scores when a T1 grid was configured.
    pub grid: Vec<CandidateScore>,
}

/// Clusters the training departures and builds the timetable.
///
/// With two or more T1 candidates, T1 is chosen on a held-out half of the
/// training days (every second day), then the clustering is rerun on all
/// training days with the chosen value.
pub fn fit(train: &ArrivalMatrix, params: &PipelineParams) -> Result<Fit> {
    params.cluster.validate()?;
    let mut t1 = params.cluster.t1;
    let mut grid = Vec::new();
    if params.cluster.t1_grid.len() > 1 {
        let dates = train.dates();
        let held_out: Vec<_> = dates.iter().skip(1).step_by(2).copied().collect();
        let fit_part = train.filter_days(|d| !held_out.contains(&d));
        let validation = train.filter_days(|d| held_out.contains(&d));
        let search = grid_search_t1(
            &fit_part.start_times(),
            &params.cluster.t1_grid,
            &validation,
            params.cluster.t2,
        )?;
        t1 = search.best_t1;
        grid = search.candidates;
    } else if let Some(&only) = params.cluster.t1_grid.first() {
        t1 = only;
    }

    let cfg = ClusterConfig {
        t1,
        ..params.cluster.clone()
    };
    let clusters = cluster_starts(&train.start_times(), &cfg);
    if clusters.is_empty() {
        return Err(Error::NoClusters);
    }
    let build = build_timetable(train, &clusters, params.slot_minutes)?;
    Ok(Fit {
        t1,
        clusters,
        build,
        grid,
    })
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub split: Split,
    pub fit: Fit,
    pub report: EvalReport,
}

/// Splits by protocol, fits on the training side and scores the test side.
pub fn run_protocol(
    matrix: &ArrivalMatrix,
    protocol: Protocol,
    params: &PipelineParams,
) -> Result<ProtocolRun> {
    let split = split(matrix, protocol)?;
    let fit = fit(&split.train, params)?;
    let report = evaluate_with_slots(&fit.build.timetable, &split.test, params.slot_minutes)?;
    Ok(ProtocolRun { split, fit, report })
}
