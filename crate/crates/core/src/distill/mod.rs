//! Teacher/student feature pairing and the distillation objectives.

mod loss;
mod taps;

pub use loss::{
    ccd_loss_projected, combined_loss, feature_l2_projected, hard_negatives, logits_distill_loss, similarity_matrix,
};
pub use taps::{
    ccd_loss, collect_taps, feature_distill_loss, DistillConfig, DistillMode, Distiller, Projection, ProjectionBank,
    TapBatch, TapGroup, TapKind, TapOrigin,
};
