//! Cross-modal contrastive distillation for next-step instruction anticipation.
//!
//! A text "teacher" and a frame-feature "student" share one causal
//! sequence-to-sequence architecture. The student is trained with a caption
//! loss plus a triplet distillation loss that aligns its intermediate features
//! with the teacher's, using in-batch hard negatives.

pub mod config;
pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod train;

pub use error::{Error, Result};
