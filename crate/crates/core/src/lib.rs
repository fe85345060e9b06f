//! Dictionary-based dynamic upsampling of smoke simulations.
//!
//! A coarse simulation is upsampled patch by patch: each coarse patch is
//! linearly enlarged and a learned sparse combination of residual atoms is
//! added on top. The sparse codes come from an unrolled shrinkage network
//! trained jointly with the residual dictionary on paired coarse/fine runs.

pub mod error;
pub mod experiment;
pub mod fields;
pub mod metrics;
pub mod network;
pub mod patching;
pub mod solver;
pub mod sparse;
pub mod synthesis;

pub use error::{Error, Result};
pub use fields::{GridShape, ScalarField, VectorField};
