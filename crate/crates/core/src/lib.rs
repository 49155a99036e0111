//! Exposure-debiased pairwise ranking for implicit feedback.
//!
//! A matrix-factorization backbone trained with BPR, the exposure-reweighted
//! DPR loss (optionally with the UFN anti-false-negative weighting), or the
//! propensity-weighted baselines UBPR, Rel-MF and MFDU. Around it sit the data
//! pipeline, ranking metrics, a closed feedback-loop simulator and a
//! synthetic ground-truth generator.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod exposure;
pub mod losses;
pub mod loopsim;
pub mod model;
pub mod sampler;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};

/// Deterministic child seed for an independent random stream (splitmix64).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x632b_e59b_d9b4_e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
