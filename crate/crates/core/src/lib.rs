//! Timetable inference for bus routes from raw GPS traces.
//!
//! The pipeline snaps GPS fixes to stops, cuts them into trips, clusters the
//! first-stop departures into scheduled start times, fills in downstream
//! stops from slot-averaged travel offsets, and scores the result by
//! passenger waiting time before and after the timetable. A seeded simulator
//! produces traces with a known ground truth for end-to-end checks.

pub mod cluster;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod sim;
pub mod snap;
pub mod timetable;
pub mod waiting;

pub use error::{Error, Result};
pub use model::{ArrivalMatrix, Direction, RawPoint, Stop, StopEvent, Timetable, Trip};
