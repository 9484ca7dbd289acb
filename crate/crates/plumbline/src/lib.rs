//! Gravity-direction calibration toolkit.
//!
//! The pipeline runs end to end on the desk: a complementary attitude
//! filter turns raw IMU streams into gravity priors, an orthogonal
//! Procrustes fit aligns them to the camera frame, pose streams provide
//! ground-truth labels, and a small gated network learns to correct the
//! prior from feature vectors, with an evaluation protocol for angular
//! error summaries, tilt breakdowns, and gate diagnostics.
//!
//! Start with the runnable programs under `examples/`; the `plumbline`
//! binary exposes the same pipeline as subcommands.

pub mod calibnet;
pub mod error;
pub mod evalkit;
pub mod geom3;
pub mod ingest;
pub mod labels;
pub mod losses;
pub mod mahony;
pub mod procrustes;
pub mod cli;

pub mod trainer;

pub use error::{Error, Result};
