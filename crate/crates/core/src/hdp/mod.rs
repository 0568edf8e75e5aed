//! Block pruning, head pruning and integer/fraction score approximation.

mod approx;
mod importance;
mod mask;
mod pipeline;
mod stats;
mod threshold;

pub use approx::{approximate_scores, ApproxScores};
pub use importance::{block_importance, integer_score, mask_integer_scores, BlockImportance, RowStats};
pub use mask::BlockMask;
pub use pipeline::{
    av_product, hdp_attention, hdp_attention_head, participating_entries, quantize_probs, softmax_rows, HeadOutcome,
    LayerOutcome,
};
pub use stats::PruneStats;
pub use threshold::{build_mask, head_decision, row_threshold, row_thresholds, HeadDecision, PruneParams, Threshold};
