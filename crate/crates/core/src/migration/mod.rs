//! B-scan → cross-section migration: a deterministic back-projection
//! oracle and a learned encoder/decoder network.

pub mod bpa;
pub mod net;
pub mod train;

pub use bpa::{backproject, threshold_to_cross_section, MigratedImage};
pub use net::{bscan_to_input, pixel_accuracy, MigrationNet, MigrationNetConfig};
pub use train::{train_migrationnet, MigrationTrainConfig};
