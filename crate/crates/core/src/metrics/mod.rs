//! Rate and fidelity metrics, Bjøntegaard deltas and corpus evaluation.

pub mod bd_rate;
pub mod corpus;
pub mod ms_ssim;
pub mod psnr;

pub use bd_rate::{bd_rate, Curve, RatePoint};
pub use corpus::{eval_corpus, CorpusModel, MeanRow, Report, ReportRow, TSV_HEADER};
pub use ms_ssim::{ms_ssim, ms_ssim_levels, ms_ssim_weighted, MS_SSIM_WEIGHTS};
pub use psnr::{mse, psnr};
