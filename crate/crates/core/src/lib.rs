//! Discrete-time simulation of malware spreading between mobile devices that
//! move through a city occupancy grid, with a per-device counter-measure that
//! sanitises infected devices after a response time.
//!
//! The pipeline is: grayscale map → [`mapgrid`] occupancy and attraction grids →
//! [`mapgraph`] weighted road graph → [`mobility`] shortest-path traces →
//! [`epidemic`] contact graph and packet transfer, driven step by step by
//! [`engine`]. [`sweep`] runs parameter grids with replications.

pub mod engine;
pub mod epidemic;
pub mod error;
pub mod mapgraph;
pub mod mapgrid;
pub mod mobility;
pub mod rng;
pub mod sweep;
pub mod synth;

pub use engine::{
    classify_outcome, simulate, simulate_on, CityMap, Event, EventKind, Outcome, OutcomeKind,
    Record, Run, SimulationConfig, TimeSeries,
};
pub use error::{Error, Result};
