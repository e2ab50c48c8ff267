//! Type suggestion over a knowledge-graph type system and a distantly
//! supervised answer type predictor.
//!
//! * [`typestore`] holds the type system graph.
//! * [`embedstore`] serves word vectors.
//! * [`typesuggest`] ranks types for a handful of seed terms.
//! * [`answerprep`] turns question–answer pairs into typed training data.
//! * [`neuralnet`] trains and runs the BiLSTM answer type model.
//! * [`cli`] wires everything into the `kgtype` binary.

pub mod answerprep;
pub mod cli;
pub mod embedstore;
pub mod neuralnet;
pub mod text;
pub mod typestore;
pub mod typesuggest;
