//! Skeleton-based human action recognition with spatio-temporal graph
//! convolution models, plus transfer learning with layer freezing and
//! transfer metrics, verifiable at desk scale on synthetic motion data.

pub mod data;
pub mod error;
pub mod experiment;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod real;

pub use rand_chacha::ChaCha8Rng;
pub mod rng;
pub mod selfcheck;
pub mod skelgraph;
pub mod tensor;
pub mod training;
pub mod transfer;

pub use error::{Error, Result};
pub use real::Real;
