//! Reduced-order surrogates for quasi-static Mode I fracture of a
//! pre-cracked brittle sample.
//!
//! Five predictors share one crack-network representation:
//!
//! * [`spa`]: shortest tip-to-body path between the lateral boundaries.
//! * [`op`]: horizontal projections grown by a learned `da(a)` law.
//! * [`mcpic`]: crack-pair coalescence classifier plus timing regressor.
//! * [`nfpz`]: process-zone overlap clusters steering a constrained
//!   shortest path.
//! * [`epz`]: elliptical process zones evolving on a tip graph.
//!
//! [`oracle`] supplies the reference simulations used as labels and ground
//! truth, and [`harness`] runs the generate/train/evaluate pipeline.

pub mod dsu;
pub mod epz;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod harness;
pub mod mcpic;
pub mod ml;
pub mod nfpz;
pub mod op;
pub mod oracle;
pub mod scenario;
pub mod spa;

pub use error::{Error, Result};
pub use geometry::Point;
pub use scenario::{Crack, CrackKind, FailurePath, MaterialParams, SampleGeometry, Scenario, Side};
