//! Sharp and smoothed bounds on principal-strata treatment effects when the
//! outcome is observed only for a selected sample.
//!
//! The crate covers population bounds ([`identification`], [`smoothing`]),
//! their influence functions ([`influence`]), nuisance estimation
//! ([`nuisance`]), the trim/switch/smooth estimators ([`estimation`]) and a
//! Monte Carlo harness for the benchmark design ([`simulation`]).

pub mod data;
pub mod error;
pub mod estimation;
pub mod identification;
pub mod influence;
pub mod io;
pub mod law;
pub mod nuisance;
pub mod numeric;
pub mod plan;
pub mod simulation;
pub mod smoothing;

pub use data::{
    classify_partition, validate, Arm, BoundsEstimate, Method, ObservationTable, Partition,
    PartitionLabel, Side, SmoothingConfig, Stratum, StratumSpec,
};
pub use error::{Error, Result};
