//! A desk-scale generative-retrieval laboratory.
//!
//! The crate pairs classic teachers (BM25 and a projected TF-IDF dense
//! stand-in) with a tiny trainable docid generator, and provides the data
//! construction, probes and metrics needed to compare them:
//!
//! - [`corpus`]: documents, naive and semantic identifiers, segmentation
//! - [`retrieval`]: BM25, dense stand-in, reference scorer, ranked lists
//! - [`data`]: pseudo queries, key-fragment filtering, distillation targets,
//!   multi-task example streams
//! - [`model`]: the encoder-decoder student, its trainer and trie decoding
//! - [`probes`]: exclusivity, completeness and relevance-ordering probes
//! - [`metrics`]: Hits@k, NDCG@10, P@10 and the paired t-test

pub mod binio;
pub mod corpus;
pub mod data;
pub mod error;
pub mod kmeans;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod probes;
pub mod retrieval;
pub mod seed;
pub mod synth;
pub mod text;
pub mod tsv;

pub use corpus::{Corpus, DocId, Document, IdScheme, Segment};
pub use error::{Error, Result};
pub use retrieval::{Bm25Index, Bm25Params, DenseIndex, RankedList, Retriever};
