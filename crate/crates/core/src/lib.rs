//! Contrastive pretraining between image features and genetic modalities,
//! with gradient attribution back to genetic inputs.

pub mod contrastive;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod explain;
pub mod registry;
pub mod trainer;

pub use contrastive::{
    aggregation_schemes, contrastive_pair, multimodal_loss, multimodal_loss_value, pair_loss, AggregationScheme,
    DenominatorMode, Inner, LossConfig, ModalityBatch, MultimodalLoss, Outer, SkippedTerm,
};
pub use dataset::{build_modalities, Dataset, FeatureOptions, GeneticModality};
pub use encoders::{EncoderConfig, Head, HiddenBlock, HiddenVariant, Linear, Mlp2, ModelParams, Weights};
pub use error::{CoreError, Result};
pub use explain::{
    attribution_tsv, baseline_for, baselines, explainer_gradient, explainer_value, global_attribution,
    integrated_gradients, integrated_gradients_fn, modality_attribution_summary, AttributionMetadata,
    AttributionReport, Baseline, ExplainerConfig, ModalitySummary, Reference, ReferenceMean, Sample, Zeros,
};
pub use registry::Registry;
pub use trainer::{
    auc, cosine_lr, encoder_config_for, epoch_batches, linear_eval, linear_eval_features, pretrain, retrieval_top1,
    trace_tsv, Adam, LinearEvalReport, LinearTask, TrainConfig, TrainOutput, TraceRow,
};
