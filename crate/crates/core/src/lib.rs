//! Adversarial-image detection by reading a classifier's hidden-layer
//! feature maps as a sentence of word vectors and classifying its
//! sentiment, together with the gradient-based attack suite used to
//! craft, train against, and evaluate under those attacks.

pub mod analyzer;
pub mod attacks;
pub mod classifier;
pub mod data;
pub mod detector;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod provenance;
pub mod trainer;

pub use error::{Error, Result};
pub use featsent_nn::Real;
