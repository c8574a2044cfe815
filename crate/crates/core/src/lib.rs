pub mod datagen;
pub mod dataio;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod rng;
pub mod sampling;
pub mod solvers;
pub mod suite;
pub mod verify;

pub use error::{Error, Result};
