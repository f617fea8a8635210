//! Latent space roadmaps.
//!
//! Training tuples of latent points are clustered into ε-connected valid
//! regions; the regions become roadmap nodes and observed transitions become
//! edges. Plans are sequences of region representatives along all shortest
//! roadmap paths, and an action proposal network labels each step. A symbolic
//! box-stacking world supplies an exact validity oracle for the whole pipeline.

pub mod action;
pub mod apn;
pub mod boxworld;
pub mod embedder;
pub mod epsilon;
pub mod error;
pub mod eval;
pub mod io;
pub mod latent;
pub mod losslab;
pub mod lsr;
pub mod metric;
pub mod seed;
pub mod tuple;

pub use action::{ActionSpec, Cell};
pub use boxworld::{BoxState, StateSpace};
pub use embedder::{Embedder, EmbedderConfig, EmbedderMode};
pub use epsilon::estimate_epsilon;
pub use error::{Error, Result};
pub use latent::LatentPoint;
pub use lsr::Roadmap;
pub use metric::{distance, Metric};
pub use tuple::{ClassLabel, SymbolicTuple, TransitionTuple};
