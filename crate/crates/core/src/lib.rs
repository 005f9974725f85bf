//! Joint embedding of jobs, level-1 taxonomy nodes (SOCs) and level-2 nodes
//! (Carotenes) into one latent space.
//!
//! The crate covers the whole training pipeline: dataset ingestion and
//! validation ([`taxonomy`]), a frozen text encoder ([`encoder`]), triplet
//! mining ([`triplet`]), the trainable model and its losses ([`model`]), an
//! Adam training loop with early stopping ([`trainer`]), metrics and PCA
//! export ([`eval`]) and a synthetic corpus generator ([`synth`]).
//! [`pipeline`] wires these together for the CLI and the Python bindings.

pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod taxonomy;
pub mod trainer;
pub mod triplet;

pub use encoder::{concat_features, cosine, EncoderConfig, HashedTfEncoder, JobVector, TextEncoder};
pub use error::{Error, Result};
pub use eval::{Decoding, MetricsReport};
pub use model::{InitMode, LossBreakdown, LossWeights, ModelParams};
pub use synth::{generate, SynthConfig};
pub use taxonomy::{Dataset, JobRecord, SimilarityGraph, Taxonomy};
pub use trainer::{TrainConfig, TrainState};
pub use triplet::{MineMode, MinerConfig, Relation, Triplet};
