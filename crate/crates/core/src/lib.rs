//! Multi-feature siamese object tracking.
//!
//! Two convolutional backbones embed an exemplar patch and a search patch.
//! The three deepest layers of each are recalibrated channel-wise,
//! cross-correlated layer by layer, and the six response maps are fused
//! into one. The tracker follows the peak of that map across frames and a
//! small scale pyramid.

mod error;

pub mod backbone;
pub mod eval;
pub mod network;
pub mod numkit;
pub mod recal;
pub mod response;
pub mod synth;
pub mod tensor;
pub mod tracker;
pub mod weights;

pub use backbone::{forward_features, Backbone, BackboneSpec, FeatureSet, Layer, Model};
pub use error::{Error, Result};
pub use eval::{
    center_error, iou, precision_at, precision_curve, reset_based_run, success_auc, success_curve,
    ResetOutcome, ResettableTracker, SequenceResult,
};
pub use network::{correlate_layers, LayerResponses, SiameseNetwork};
pub use recal::{SeBlock, SeBlocks};
pub use response::{
    cosine_window, cross_correlate, fuse, hierarchical_fuse, locate_peak, logistic_loss,
    make_label_map, Displacement, FusionPlan, FusionStrategy, LabelMap, Provenance, ResponseMap,
};
pub use synth::{generate_synthetic, Background, SyntheticSequence, SyntheticSpec, Texture};
pub use tensor::{Grid, KernelBank, Matrix, Tensor3};
pub use tracker::{BoundingBox, FrameReport, ResettingTracker, TrackerConfig, TrackerState};
pub use weights::{load_weights, save_weights, seeded_random_weights, NamedTensor, WeightStore};
