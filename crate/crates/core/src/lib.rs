//! Interaction recognition from tracked 2D body joints.
//!
//! The crate turns per-frame multi-person pose estimates into fixed-length
//! feature sequences and classifies them with a two-level recurrent model:
//!
//! * [`skeleton`] converts 18-joint pose output into 15-joint, five-part
//!   skeletons, repairs short joint dropouts and tracks identities.
//! * [`features`] computes per-part velocity, acceleration, joint angles and
//!   joint-anchored patch embeddings.
//! * [`attention`] weights body parts by how the distance to the other
//!   person changes over time.
//! * [`cooccurrence`] builds the cumulative codeword co-occurrence descriptor
//!   from segment-level appearance vectors.
//! * [`sequence_model`] holds the recurrent cells, training and gradient
//!   verification.
//! * [`pipeline`] ties everything together: file formats, sample assembly,
//!   synthetic data, training and evaluation.

pub mod attention;
pub mod cooccurrence;
pub mod error;
pub mod features;
pub mod geometry;
pub mod pipeline;
pub mod sequence_model;
pub mod skeleton;

pub use error::{Error, Result};
pub use geometry::Point;
