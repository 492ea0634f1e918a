//! Closed-loop navigation benchmark for trajectory planners on occupancy
//! grids.
//!
//! The crate covers the full pipeline: encoding floorplan images into grids
//! ([`encode`]), sampling shortest-path-labelled episodes ([`dataset`]),
//! pluggable planners including a remote chat-model client ([`planners`]),
//! a deterministic tick simulator with stop/collision handling and
//! multi-turn refinement ([`sim`]), aggregate metrics with significance
//! testing ([`metrics`]), reproducible results files ([`manifest`]), and SVG
//! visualisation ([`render`]).

pub mod dataset;
pub mod encode;
pub mod env;
pub mod manifest;
pub mod metrics;
pub mod planners;
pub mod render;
pub mod sim;

pub use env::{CellCoord, OccupancyGrid, Position, Trajectory};
