//! Holistic visual token pruning for multimodal LLM inference.
//!
//! A vision encoder turns an image into a grid of visual tokens, most of
//! which the language model does not need. This crate picks which tokens to
//! keep. It splits the grid into spatial crops, scores every token by how
//! varied its similarities to the rest of its crop are plus the [CLS]
//! attention it receives, hands each crop a share of the budget in
//! proportion to its mean score, and keeps the best tokens of every crop.
//!
//! Around that core sit baseline pruners ([`baselines`]), an analytic FLOPs
//! model ([`cost`]), the FFN key-value memory view used to reinject pruned
//! evidence ([`refetch`]), a synthetic-data lab with empirical checks of the
//! method's guarantees ([`lab`]) and the on-disk formats ([`io`]).
//!
//! The guide in `book/` walks through each stage; its code listings are
//! compiled and run as doctests of this crate.

pub mod allocation;
pub mod baselines;
pub mod cost;
pub mod error;
pub mod io;
pub mod lab;
pub mod model;
pub mod partition;
pub mod refetch;
pub mod rng;
pub mod scoring;

pub use allocation::{crop_weights, greedy_log_allocation, initial_quotas, prune, redistribute, select_topk};
pub use error::{Error, Result};
pub use model::{
    normalize_rows, validate_token_set, CropPartition, PartitionMode, PruneConfig, PruneResult, QuotaPlan, ScoreSheet,
    TokenSet, ValidationReport, Violation,
};
pub use partition::make_partition;
pub use scoring::holistic_scores;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tokens-and-crops.md")]
    mod tokens_and_crops {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/allocation.md")]
    mod allocation {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/cost-model.md")]
    mod cost_model {}
    #[doc = include_str!("../../../book/src/refetching.md")]
    mod refetching {}
    #[doc = include_str!("../../../book/src/lab.md")]
    mod lab {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
}
