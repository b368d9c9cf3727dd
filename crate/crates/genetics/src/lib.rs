//! Genotype matrices and the three genetic feature modalities: subsampled
//! raw SNPs, polygenic scores and gene burden indicators. Also hosts the
//! planted-signal synthetic cohort generator and the TSV file formats.

pub mod burden;
pub mod error;
pub mod features;
pub mod genotype;
pub mod io;
pub mod pgs;
pub mod synth;

pub use burden::{compute_burden, BurdenAnnotation, VariantAnnotation, DEFAULT_MAF_CUTOFF};
pub use error::{GeneticsError, Result};
pub use features::{subsample_raw, FeatureMatrix};
pub use genotype::{GenotypeMatrix, SnpInfo, MISSING};
pub use pgs::{compute_pgs, compute_pgs_batch, Coverage, PgsEntry, PgsWeightFile};
pub use synth::{
    attribution_validation_data, synth_generate, AttributionValidationData, GroundTruth, ImageRenderer, ModalityMasks,
    SynthConfig, SynthData,
};
