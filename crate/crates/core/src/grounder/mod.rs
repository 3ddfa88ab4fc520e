//! Toy language-grounded detector: proposal features from a frozen
//! description encoder, cosine query scoring, the detection losses, a
//! contrastive baseline, and AP evaluation.

mod eval;
mod loss;
mod vision;

pub use eval::{
    angle_histogram, average_precision, chain_angles, chain_queries, evaluate, AngleBin, AngleHistogram, Detection,
    Detector, EvalConfig, EvalItem, EvalQuery, Metrics, TierMetrics,
};
pub use loss::{
    apply_deltas_var, contrastive_loss, contrastive_loss_var, focal_loss, focal_loss_var, giou_loss, giou_loss_var,
    l1_box_loss, l1_box_loss_var, score, score_logits_var, FocalParams, LossWeights,
};
pub use vision::{
    description_roles, init_vision_params, proposal_features, Proposal, VisionConfig, VisionEncoder, TOKEN_TABLE,
};
