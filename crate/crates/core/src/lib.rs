//! Cone-beam CT scan-trajectory optimization.
//!
//! Candidate views of a voxel specimen are simulated, scored with
//! projection-domain metrics (70 % quantile intensity, CNR and Tuy-style data
//! completeness), and a `k`-view subset is chosen either by a sequential GRU
//! selector or by a greedy coverage baseline. Subsets are reconstructed with
//! ART and compared with a circular trajectory of the same size.

pub mod completeness;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod metrics;
pub mod raytrace;
pub mod reconstruction;
pub mod selector;
pub mod simulation;
pub mod volume;

pub use error::{Error, Result};
