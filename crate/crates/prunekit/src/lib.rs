//! prunekit: post-training pruning for multi-component model checkpoints.

pub mod calibration;
pub mod container;
pub mod error;
pub mod fixture;
pub mod kernels;
pub mod manifest;
pub mod owl;
pub mod pipeline;
pub mod planner;
pub mod report;

pub use calibration::{
    accumulate_norms, accumulate_norms_parallel, forward, output_divergence, read_calibration,
    read_norms, write_calibration, write_norms, Divergence, LayerActivationStats, Matrix,
    ToyModelSpec,
};
pub use container::{
    read_checkpoint, read_checkpoint_bytes, tensor_stats, write_checkpoint,
    write_checkpoint_bytes, Checkpoint, Tensor, TensorStats,
};
pub use error::{Error, Result};
pub use fixture::{toy_fixture, write_fixture, Fixture, FixtureFiles};
pub use kernels::{
    apply_mask, magnitude_scores, prune_layer, select_prune_mask, wanda_scores, CompareGroup,
    Method, PruneMask, PrunedLayer, ScoreMatrix,
};
pub use manifest::{
    classify_tensors, component_profiles, prunable_set, Classification, Component,
    ComponentProfile, Manifest, PrunablePolicy, Rule,
};
pub use owl::{allocate_layer_sparsities, layer_outlier_ratio, LayerSparsityPlan, OwlConfig};
pub use pipeline::{prune_checkpoint, OwlParams, PruneOptions, PruneOutcome};
pub use planner::{
    allocate_by_ratio, default_thresholds, recommended_config, threshold_sweep, SparsityPlan,
    SweepConfig, SweepRow, Thresholds,
};
pub use report::{mask_export, read_masks, sha256_hex, write_masks, MaskEntry, PruneReport};
