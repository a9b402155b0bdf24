//! Desk-scale laboratory for adapting one-shot NAS supernets from balanced
//! to long-tailed datasets.
//!
//! The library trains a weight-sharing supernet over a small cell search
//! space on a balanced source dataset, adapts it to an exponentially
//! imbalanced target with one of four procedures (P0 reuse, P1
//! classifier-only retrain, P2 full fine-tune, P3 full retrain), searches
//! subnets evolutionarily, and analyzes how architecture rankings transfer
//! across imbalance with Kendall-tau grids.
//!
//! Start with the runnable examples, one per capability:
//!
//! ```text
//! cargo run --release --example gradient_check       # autodiff vs finite differences
//! cargo run --release --example longtail_dataset     # exponential imbalance profiles
//! cargo run --release --example effective_weights    # class reweighting and DRW
//! cargo run --release --example search_space_tour    # codec, enumeration, iso-FLOP pools
//! cargo run --release --example train_supernet       # single-path uniform sampling
//! cargo run --release --example evolution_vs_exhaustive
//! cargo run --release --example adapt_procedures     # P0-P3 with cost metering
//! cargo run --release --example rank_transfer        # Kendall-tau grid + heatmap
//! cargo run --release --example full_pipeline        # end to end, library API
//! ```
//!
//! A thin `imbnas` binary exposes the same entry points as subcommands
//! (`dataset gen`, `supernet train`, `adapt`, `search`, `subnet train`,
//! `analyze transfer`, `report`); see the README.

pub mod data;
pub mod loss;
pub mod seeded;
pub mod space;
pub mod tensor;

pub use tensor::{Tensor, TensorError};
