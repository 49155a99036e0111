//! Leave-one-out ranking metrics: Recall@K, NDCG@K, ARP@K and TAP@K.

use std::cmp::Ordering;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SplitDataset;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::exposure::PopularityTable;
use crate::model::MFParams;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Rank every item except the user's train positives.
    #[default]
    FullRank,
    /// Rank the held-out item against sampled unobserved items.
    Sampled99,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::FullRank => "full_rank",
            Protocol::Sampled99 => "sampled99",
        }
    }
}

pub const SAMPLED_NEGATIVES: usize = 99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub protocol: Protocol,
    pub exclude_train: bool,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 5,
            protocol: Protocol::FullRank,
            exclude_train: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall: f64,
    pub ndcg: f64,
    pub arp: f64,
    pub tap: f64,
    pub users_evaluated: usize,
}

/// Which held-out item of each user is the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeldOut {
    Validation,
    Test,
}

#[inline]
fn by_score_then_id(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Indices of the `k` highest `scores` among items not excluded, best first,
/// ties broken by ascending index.
pub fn top_k_excluding(scores: &[f64], k: usize, exclude: impl Fn(usize) -> bool) -> Vec<usize> {
    let candidates: Vec<usize> = (0..scores.len()).filter(|&i| !exclude(i)).collect();
    top_k_of(scores, candidates, k)
}

fn top_k_of(scores: &[f64], mut candidates: Vec<usize>, k: usize) -> Vec<usize> {
    let cmp = by_score_then_id(scores);
    if k == 0 {
        return Vec::new();
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, &cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(&cmp);
    candidates
}

/// Top-`k` of `candidates` for user `u` by model score.
pub fn rank_topk(params: &MFParams, u: usize, candidates: &[usize], k: usize) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidates to rank"));
    }
    let scores = params.score_all(u)?;
    if let Some(&bad) = candidates.iter().find(|&&i| i >= params.num_items) {
        return Err(Error::IdOutOfRange {
            kind: "item",
            id: bad,
            limit: params.num_items,
        });
    }
    Ok(top_k_of(&scores, candidates.to_vec(), k))
}

/// 1-based position of `target` within the first `k` entries, if present.
fn hit_rank(list: &[usize], target: usize, k: usize) -> Option<usize> {
    list.iter().take(k).position(|&i| i == target).map(|p| p + 1)
}

pub fn recall_at_k(list: &[usize], test_item: usize, k: usize) -> f64 {
    if hit_rank(list, test_item, k).is_some() {
        1.0
    } else {
        0.0
    }
}

/// Single-relevant-item NDCG (IDCG = 1).
pub fn ndcg_at_k(list: &[usize], test_item: usize, k: usize) -> f64 {
    hit_rank(list, test_item, k).map_or(0.0, |r| 1.0 / ((r + 1) as f64).log2())
}

/// Mean over lists of the mean popularity rank of the listed items.
pub fn arp_at_k(lists: &[Vec<usize>], pop: &PopularityTable) -> f64 {
    mean_over_lists(lists, |i| pop.rank[i] as f64)
}

/// Mean over lists of the fraction of listed items in the long tail.
pub fn tap_at_k(lists: &[Vec<usize>], pop: &PopularityTable) -> f64 {
    mean_over_lists(lists, |i| if pop.tail[i] { 1.0 } else { 0.0 })
}

fn mean_over_lists(lists: &[Vec<usize>], f: impl Fn(usize) -> f64) -> f64 {
    let scored: Vec<f64> = lists
        .iter()
        .filter(|l| !l.is_empty())
        .map(|l| l.iter().map(|&i| f(i)).sum::<f64>() / l.len() as f64)
        .collect();
    if scored.is_empty() {
        0.0
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    }
}

/// Candidate set and ranked list for one user under `cfg.protocol`.
pub(crate) fn user_list(
    params: &MFParams,
    split: &SplitDataset,
    u: usize,
    target: usize,
    cfg: &EvalConfig,
    scores: &mut [f64],
) -> Vec<usize> {
    params.score_all_into(u, scores);
    let train = &split.train;
    match cfg.protocol {
        Protocol::FullRank => {
            top_k_excluding(scores, cfg.k, |i| cfg.exclude_train && train.contains(u, i))
        }
        Protocol::Sampled99 => {
            let pool: Vec<usize> = (0..split.num_items())
                .filter(|&i| !split.is_known_positive(u, i) && i != target)
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u as u64));
            let mut candidates: Vec<usize> =
                pool.choose_multiple(&mut rng, SAMPLED_NEGATIVES).copied().collect();
            candidates.push(target);
            top_k_of(scores, candidates, cfg.k)
        }
    }
}

pub fn evaluate(
    params: &MFParams,
    split: &SplitDataset,
    cfg: &EvalConfig,
    pop: &PopularityTable,
) -> Result<EvalReport> {
    evaluate_held_out(params, split, HeldOut::Test, cfg, pop)
}

pub fn evaluate_held_out(
    params: &MFParams,
    split: &SplitDataset,
    which: HeldOut,
    cfg: &EvalConfig,
    pop: &PopularityTable,
) -> Result<EvalReport> {
    if cfg.k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if params.num_users != split.num_users() || params.num_items != split.num_items() {
        return Err(Error::DimensionMismatch {
            what: "model vs dataset items",
            expected: split.num_items(),
            found: params.num_items,
        });
    }
    let targets = match which {
        HeldOut::Validation => &split.validation,
        HeldOut::Test => &split.test,
    };
    let mut scores = vec![0.0; split.num_items()];
    let (mut recall, mut ndcg) = (0.0, 0.0);
    let mut lists = Vec::new();
    for (u, target) in targets.iter().enumerate() {
        let Some(target) = *target else { continue };
        let list = user_list(params, split, u, target, cfg, &mut scores);
        recall += recall_at_k(&list, target, cfg.k);
        ndcg += ndcg_at_k(&list, target, cfg.k);
        lists.push(list);
    }
    if lists.is_empty() {
        return Err(Error::NoEvaluableUsers);
    }
    let n = lists.len() as f64;
    Ok(EvalReport {
        recall: recall / n,
        ndcg: ndcg / n,
        arp: arp_at_k(&lists, pop),
        tap: tap_at_k(&lists, pop),
        users_evaluated: lists.len(),
    })
}
