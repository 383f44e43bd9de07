//! The generative student: encoder, decoder, training and constrained
//! decoding.

pub mod checkpoint;
pub mod decode;
pub mod network;
pub mod symbols;
pub mod train;
pub mod trie;
pub mod vocab;

pub use decode::{generate, Decoded, Decoder, StudentRetriever};
pub use network::{EncodedExample, Grad, ModelConfig, TinyGenModel};
pub use train::{
    gradient_check, train, train_step, GradCheckReport, Optimizer, OptimizerConfig, TrainConfig,
    TrainReport,
};
pub use trie::DocidTrie;
pub use vocab::Vocab;
