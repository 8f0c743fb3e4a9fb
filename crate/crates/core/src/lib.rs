// SPDX-License-Identifier: MIT OR Apache-2.0

//! # neurotype
//!
//! Cross-lingual analysis of feed-forward neurons from last-token activation traces.
//!
//! Given activations of the same example rendered in several languages, every
//! FFN neuron of every layer is classified as all-shared, partial-shared,
//! specific (to one language) or non-activated. On top of that the crate
//! computes per-layer activation patterns, generation/correctness impact
//! scores, vocabulary projections and deactivation masks, and ships a seeded
//! toy FFN stack that produces ground-truth traces end to end.
//!
//! ```
//! use neurotype::classifier::classify_layer;
//!
//! let en = [0.5, -0.1, 0.2, -0.3];
//! let de = [0.1, -0.2, -0.4, -0.3];
//! let zh = [0.9, 0.3, -0.1, -0.2];
//! let part = classify_layer(&[&en, &de, &zh]).unwrap();
//! assert_eq!(part.all_shared, vec![0]);
//! assert_eq!(part.specific[2], vec![1]);
//! ```

mod binio;
pub mod classifier;
pub mod cli;
pub mod error;
pub mod fsutil;
pub mod impact;
pub mod intervention;
pub mod patterns;
pub mod report;
pub mod toysim;
pub mod trace;

pub use classifier::{classify_layer, classify_trace, ClassificationResult, NeuronPartition, NeuronType};
pub use error::{Error, Result};
pub use intervention::{MaskScope, MaskSet};
pub use toysim::{ToyConfig, ToyModel};
pub use trace::{read_trace, write_trace, ModelSidecar, TraceHeader, TraceSet};
