//! Evaluation harness: image quality metrics (plain and de-shifted),
//! radiomics feature extraction and the t-score / chi-square significance
//! machinery.

mod metrics;
mod radiomics;
mod stats;

pub use metrics::{evaluate_recovery, ms_ssim, psnr, ssim, DeshiftMode, MetricReport};
pub use radiomics::{
    extract_features, first_order_features, gldm_features, glcm_features, non_air_mask,
    FeatureTable, Source, GLCM_OFFSETS,
};
pub use stats::{
    chi_square_stat, paired_t_score, significance_report, FeatureStat, SignificanceReport,
    T_THRESHOLDS,
};
