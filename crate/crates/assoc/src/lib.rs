//! Association scan of learned embeddings against genotypes.

pub mod clump;
pub mod error;
pub mod manhattan;
pub mod pca;
pub mod pipeline;
pub mod regression;
pub mod scan;
pub mod special;
pub mod transform;

pub use clump::{clump, r_squared, Clump, ClumpParams};
pub use error::{AssocError, Result};
pub use manhattan::{display_y, manhattan_svg, P_DISPLAY_FLOOR};
pub use pca::{pca_reduce, Pca};
pub use pipeline::{clump_report_tsv, run_association, summary_tsv, AssocConfig, AssociationResult};
pub use regression::{residualize, Design};
pub use scan::{bonferroni_aggregate, snp_scan, ScanResult, SnpStat};
pub use special::{normal_cdf, normal_quantile, t_two_sided_p};
pub use transform::{average_ranks, inverse_normal_transform, BLOM_OFFSET};
