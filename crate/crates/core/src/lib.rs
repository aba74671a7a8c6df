pub mod autoencoder;
pub mod checkpoint;
pub mod editor;
pub mod error;
pub mod jointspace;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod shapeworld;

pub use error::{Error, Result};
