//! Forward solver for a coupled micro/macro two-pressure system with
//! distributed microstructures, plus an identification toolkit for the
//! micro/macro Robin transfer coefficient from accessible-boundary
//! measurements.

pub mod context;
pub mod coupled;
pub mod elliptic;
pub mod error;
pub mod field;
pub mod grid;
pub mod micro;
pub mod model;
pub mod norms;
pub mod sparse;

pub use context::{Context, Tolerances};
pub use error::{Error, Result};
