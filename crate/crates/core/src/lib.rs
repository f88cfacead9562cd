pub mod autoencoder;
pub mod cli;
pub mod config;
pub mod detector;
pub mod distance;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod hybrid;
pub mod ingest;
pub mod io;
pub mod kv;
pub mod linalg;
pub mod pca;
pub mod stream;
pub mod synth;

pub use error::{Error, Result};
