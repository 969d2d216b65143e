//! Measuring how augmentations concentrate latent classes, training small
//! contrastive encoders, and checking generalization bounds against the
//! measured quantities.
//!
//! Modules build on each other in this order: [`data`] (samples, generator,
//! files), [`augment`] (transforms, views, augmented distance),
//! [`concentration`] (threshold graphs, cliques, sigma), [`losses`] and
//! [`encoder`] (objectives, model, training), [`eval`] (class centers,
//! classifier, alignment) and [`bounds`] (closed-form bounds and reports).

pub mod augment;
pub mod bounds;
pub mod concentration;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod losses;

pub use error::{Error, Result};
