//! Synthetic ground truth for exposure-bias experiments.
//!
//! True relevance is a low-rank logit plus Gaussian noise squashed through a
//! sigmoid. Items are exposed according to a Zipf law over a random item
//! order, and a user-item pair is observed with probability
//! `P(R = 1) · o_i`, where `o_i` is the exposure vector rescaled so the most
//! exposed item has `o = 1`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ImplicitDataset, SplitDataset};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::eval::top_k_excluding;
use crate::exposure::{ExposureVector, RelevanceMatrix};
use crate::losses::sigmoid;
use crate::model::MFParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Rank of the relevance logit.
    pub rank: usize,
    /// Multiplier on the low-rank logit.
    pub signal: f64,
    pub noise_std: f64,
    /// Constant added to every relevance logit.
    pub offset: f64,
    /// Zipf exponent of the exposure mechanism.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 200,
            num_items: 500,
            rank: 8,
            signal: 8.0,
            noise_std: 0.5,
            offset: -5.0,
            zipf_exponent: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub relevance: RelevanceMatrix,
    pub exposure: ExposureVector,
    /// Observed (MNAR) interactions.
    pub observed: ImplicitDataset,
    seed: u64,
}

pub fn zipf_exposure(num_items: usize, exponent: f64, rng: &mut impl Rng) -> ExposureVector {
    let mut order: Vec<usize> = (0..num_items).collect();
    order.shuffle(rng);
    let mut probs = vec![0.0; num_items];
    for (pos, &item) in order.iter().enumerate() {
        probs[item] = ((pos + 1) as f64).powf(-exponent);
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    ExposureVector::new(probs).expect("normalized")
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    if cfg.num_users == 0 || cfg.num_items == 0 || cfg.rank == 0 {
        return Err(Error::invalid("synthetic dimensions must be > 0"));
    }
    if !(cfg.noise_std >= 0.0 && cfg.zipf_exponent >= 0.0) {
        return Err(Error::invalid("noise_std and zipf_exponent must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let factor = Normal::new(0.0, 1.0 / (cfg.rank as f64).sqrt()).expect("valid std");
    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let users: Vec<f64> = (0..cfg.num_users * cfg.rank).map(|_| factor.sample(&mut rng)).collect();
    let items: Vec<f64> = (0..cfg.num_items * cfg.rank).map(|_| factor.sample(&mut rng)).collect();
    let mut rel = Vec::with_capacity(cfg.num_users * cfg.num_items);
    for u in 0..cfg.num_users {
        let xu = &users[u * cfg.rank..(u + 1) * cfg.rank];
        for i in 0..cfg.num_items {
            let yi = &items[i * cfg.rank..(i + 1) * cfg.rank];
            let logit = cfg.signal * crate::model::dot(xu, yi) * (cfg.rank as f64).sqrt()
                + cfg.offset
                + if cfg.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            rel.push(sigmoid(logit));
        }
    }
    let relevance = RelevanceMatrix::new(cfg.num_users, cfg.num_items, rel)?;
    let exposure = zipf_exposure(cfg.num_items, cfg.zipf_exponent, &mut rng);
    let observed = sample_observations(&relevance, &exposure, &mut rng)?;
    Ok(SyntheticData {
        relevance,
        exposure,
        observed,
        seed: cfg.seed,
    })
}

/// Bernoulli draw of `S_{u,i}` with `P(S = 1) = P(R = 1) · O(i) / max_j O(j)`.
pub fn sample_observations(
    relevance: &RelevanceMatrix,
    exposure: &ExposureVector,
    rng: &mut impl Rng,
) -> Result<ImplicitDataset> {
    let max = exposure.probs().iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::DegenerateExposure);
    }
    let mut pairs = Vec::new();
    for u in 0..relevance.num_users() {
        for (i, (&r, &o)) in relevance.row(u).iter().zip(exposure.probs()).enumerate() {
            if rng.random::<f64>() < r * o / max {
                pairs.push((u, i));
            }
        }
    }
    ImplicitDataset::new(relevance.num_users(), relevance.num_items(), pairs)
}

impl SyntheticData {
    /// One item per user drawn with probability proportional to true relevance
    /// among items that are not observed and not in `exclude`, i.e. feedback
    /// collected under uniform exposure.
    pub fn mar_held_out(&self, stream: u64, exclude: &[Option<usize>]) -> Vec<Option<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, stream));
        (0..self.relevance.num_users())
            .map(|u| {
                let skip = exclude.get(u).copied().flatten();
                let weights: Vec<(usize, f64)> = self
                    .relevance
                    .row(u)
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| !self.observed.contains(u, i) && Some(i) != skip)
                    .map(|(i, &r)| (i, r))
                    .collect();
                let total: f64 = weights.iter().map(|w| w.1).sum();
                if total <= 0.0 {
                    return None;
                }
                let mut x = rng.random::<f64>() * total;
                for &(i, w) in &weights {
                    if x < w {
                        return Some(i);
                    }
                    x -= w;
                }
                weights.last().map(|w| w.0)
            })
            .collect()
    }

    /// Observed data as the training split, with MAR validation and test items.
    pub fn split(&self) -> SplitDataset {
        let validation = self.mar_held_out(1, &[]);
        let test = self.mar_held_out(2, &validation);
        SplitDataset {
            train: self.observed.clone(),
            validation,
            test,
            skipped_users: 0,
            seed: self.seed,
        }
    }

    /// Per user, the `k` unobserved items with the highest true relevance.
    pub fn truth_targets(&self, k: usize) -> Vec<Vec<usize>> {
        (0..self.relevance.num_users())
            .map(|u| top_k_excluding(self.relevance.row(u), k, |i| self.observed.contains(u, i)))
            .collect()
    }
}

/// Mean over users of `|top-k unobserved by model ∩ targets_u| / min(k, |targets_u|)`.
pub fn truth_recall_at_k(
    params: &MFParams,
    train: &ImplicitDataset,
    targets: &[Vec<usize>],
    k: usize,
) -> f64 {
    let mut scores = vec![0.0; params.num_items];
    let mut total = 0.0;
    let mut users = 0;
    for (u, target) in targets.iter().enumerate() {
        if target.is_empty() {
            continue;
        }
        params.score_all_into(u, &mut scores);
        let list = top_k_excluding(&scores, k, |i| train.contains(u, i));
        let hits = list.iter().filter(|i| target.contains(i)).count();
        total += hits as f64 / k.min(target.len()) as f64;
        users += 1;
    }
    if users == 0 {
        0.0
    } else {
        total / users as f64
    }
}
