//! Neural ruin-and-recreate toolkit for the capacitated vehicle routing
//! problem.

pub mod bench;
pub mod construct;
pub mod error;
pub mod io;
pub mod model;
pub mod recreate;
pub mod scoring;
pub mod search;
pub mod sg;

pub use error::{Error, OperatorFailure, Result};
pub use model::{validate, Instance, Point, Rounding, Solution, Tour, Violation, DEPOT};
