//! Answer type prediction model: type embeddings initialized from word
//! vectors, a BiLSTM question encoder with attention aggregation, dot
//! product scoring against the type embeddings, and weighted cross-entropy
//! training under a sampled softmax.

use thiserror::Error;

pub mod checkpoint;
pub mod encoder;
pub mod gradcheck;
pub mod matrix;
pub mod model;
pub mod train;
pub mod typeembed;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use encoder::{EncoderParams, LstmParams, QuestionEncoding};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use matrix::Matrix;
pub use model::{
    rank_desc, score_types_nn, softmax, weighted_ce_loss, AnswerTypeModel, Params, PredictionList,
    TrainingSample,
};
pub use train::{train, OptimizerKind, TrainConfig, TrainOutcome};
pub use typeembed::{init_type_embedding, type_name_tokens, RowProvenance, TypeEmbeddingMatrix};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("question has no tokens")]
    EmptyQuestion,
    #[error("dataset has no usable examples")]
    EmptyDataset,
    #[error("index {0} out of range")]
    UnknownIndex(usize),
    #[error("type `{0}` is not in the vocabulary")]
    UnknownType(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("bad tensor shapes: {0}")]
    Shape(String),
    #[error("non-finite loss in epoch {epoch} at example {example}")]
    NonFiniteLoss { epoch: usize, example: usize },
    #[error("unsupported checkpoint `{format}` version {version}")]
    CheckpointVersion { format: String, version: u32 },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, NnError>;
