//! Supervised binary semantic embedding.
//!
//! Learns compact ±1 codes from labelled feature vectors by alternating
//! closed-form updates under orthogonality, bit-balance and
//! bit-decorrelation constraints, then encodes unseen samples with a linear
//! projection followed by `sgn`. Retrieval and kNN classification run on
//! bit-packed codes by exact Hamming scan.
//!
//! ```no_run
//! use lbse::{data::synth_clusters, encoder::encode, trainer::{train, LbseConfig}};
//!
//! let data = synth_clusters(50, 4, 16, 0.1, 7)?;
//! let (model, stats) = train(&data, &LbseConfig::default())?;
//! let codes = encode(&model, data.features())?;
//! println!("{} codes, converged at {:?}", codes.len(), stats.converged_at);
//! # Ok::<(), lbse::LbseError>(())
//! ```

mod binio;
mod error;
mod linalg;

pub mod data;
pub mod encoder;
pub mod eval;
pub mod index;
pub mod metrics;
pub mod similarity;
pub mod trainer;

pub use data::{Dataset, DatasetFormat, LabelMatrix, SplitSpec};
pub use encoder::{CodeFile, CodeMatrix};
pub use error::{LbseError, Result};
pub use index::{HammingIndex, Neighbors};
pub use linalg::sign;
pub use metrics::MetricsReport;
pub use similarity::SimilarityOracle;
pub use trainer::{LbseConfig, LbseModel, TrainState, TrainStats};
