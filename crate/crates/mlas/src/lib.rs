//! Desk-scale multilingual grapheme attention sequence-to-sequence speech
//! recognizer.
//!
//! One attention encoder-decoder network is trained over a pooled
//! multilingual corpus whose languages share phonetics but use disjoint
//! scripts. The crate covers the whole experiment loop: a differentiable
//! numerics core, language registry and union vocabulary, a synthetic
//! feature corpus generator, the model and its multilingual variants
//! (joint, multitask language-ID, language-conditioned), an SGD trainer,
//! greedy/beam decoding, and the evaluation/probing toolkit.

pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod inference;
pub mod langpack;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
