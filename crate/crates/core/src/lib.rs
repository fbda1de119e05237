//! Simulation and reconstruction toolkit for robotic GPR pipe surveys.
//!
//! The pipeline: a parametric underground scene is scanned along straight
//! survey lines by an omnidirectional robot ([`kinematics`]), producing
//! pose-tagged B-scan radargrams ([`scene`], [`bscan`]). Each B-scan is
//! migrated into a cross-section occupancy image, either by deterministic
//! back-projection or by a learned encoder/decoder ([`migration`]). The
//! cross-sections are registered into a sparse 3D point cloud ([`cloud`])
//! and completed into a dense pipe-surface model by a point-cloud
//! completion network trained under Chamfer loss ([`gprnet`]). All learned
//! components run on the in-crate reverse-mode autodiff engine
//! ([`autodiff`]).

pub mod autodiff;
pub mod bscan;
pub mod cloud;
pub mod cross_section;
pub mod dataset;
pub mod error;
pub mod gprnet;
pub mod kinematics;
pub mod migration;
pub mod rng;
pub mod scene;

pub use error::{Error, Result};
