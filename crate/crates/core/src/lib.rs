//! Learning phone categories from MFCC frames with error-correction
//! (Widrow-Hoff, temporal difference) and memory-based (kNN) learners.

pub mod cluster;
pub mod corpus;
pub mod ecl;
pub mod eval;
pub mod experiment;
pub mod mbl;
pub mod mfcc;
pub mod regimes;
pub mod seed;

pub use cluster::{ClusterError, Dendrogram, PhoneProfileMatrix};
pub use corpus::{
    CorpusError, Cues, FrameDataset, LabeledFrame, PhoneId, PhoneInventory, PhoneSegment, N_CUES,
    N_PHONES,
};
pub use ecl::{EclConfig, EclError, Rule, WeightMatrix};
pub use eval::{EvalError, Learner, PredictionRecord, Regime, SuccessTable};
pub use mbl::{ExemplarStore, MblConfig, MblError};
pub use mfcc::{MfccConfig, MfccError};
pub use regimes::{GaussianConfig, RegimeError, SessionConfig};
pub use seed::derive_seed;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Mfcc(#[from] MfccError),
    #[error(transparent)]
    Ecl(#[from] EclError),
    #[error(transparent)]
    Mbl(#[from] MblError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}
