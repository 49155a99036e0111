//! Per-epoch construction of training triples and labeled points.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ImplicitDataset;
use crate::error::{Error, Result};
use crate::losses::{PointBatch, PointExample, Triple, TripletBatch};
use crate::model::MFParams;
use crate::{derive_seed, eval};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NegStrategy {
    #[default]
    Uniform,
    /// Uniform within the user's top-`pool_size` scoring unobserved items.
    ScoreSorted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Taken from the model settings when training.
    #[serde(skip)]
    pub num_negatives: usize,
    pub resample_each_epoch: bool,
    pub strategy: NegStrategy,
    pub pool_size: usize,
    /// Derived from the model seed when training.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            num_negatives: 10,
            resample_each_epoch: true,
            strategy: NegStrategy::Uniform,
            pool_size: 100,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    fn validate(&self) -> Result<()> {
        if self.num_negatives == 0 {
            return Err(Error::invalid("num_negatives must be >= 1"));
        }
        if self.pool_size == 0 {
            return Err(Error::invalid("pool_size must be >= 1"));
        }
        Ok(())
    }

    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let round = if self.resample_each_epoch { epoch as u64 } else { 0 };
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, round))
    }
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn minibatches(&self, size: usize) -> impl Iterator<Item = TripletBatch> + '_ {
        self.triples.chunks(size.max(1)).map(|c| TripletBatch { triples: c.to_vec() })
    }
}

impl PointBatch {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn minibatches(&self, size: usize) -> impl Iterator<Item = PointBatch> + '_ {
        self.examples.chunks(size.max(1)).map(|c| PointBatch { examples: c.to_vec() })
    }
}

/// Draws `k` negatives for one positive of `u`, distinct when enough unobserved
/// items exist, otherwise with replacement.
struct NegativeDraw<'a> {
    train: &'a ImplicitDataset,
    k: usize,
    short_draws: usize,
}

impl NegativeDraw<'_> {
    fn uniform(&mut self, u: usize, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        let n = self.train.num_items();
        let positives = self.train.user_items(u);
        let free = n - positives.len();
        out.clear();
        if free == 0 {
            return;
        }
        if free >= 4 * self.k {
            while out.len() < self.k {
                let j = rng.random_range(0..n);
                if !out.contains(&j) && positives.binary_search(&j).is_err() {
                    out.push(j);
                }
            }
            return;
        }
        let pool: Vec<usize> = (0..n).filter(|j| positives.binary_search(j).is_err()).collect();
        self.pick_from_pool(&pool, rng, out);
    }

    fn pick_from_pool(&mut self, pool: &[usize], rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        out.clear();
        if pool.len() >= self.k {
            out.extend(pool.choose_multiple(rng, self.k).copied());
        } else {
            self.short_draws += 1;
            out.extend((0..self.k).map(|_| pool[rng.random_range(0..pool.len())]));
        }
    }
}

/// All training triples for one epoch, shuffled: `num_negatives` unobserved
/// items for every train positive. Deterministic given the seed and epoch.
pub fn build_triplets(
    train: &ImplicitDataset,
    cfg: &SamplerConfig,
    params: Option<&MFParams>,
    epoch: usize,
) -> Result<TripletBatch> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("cannot sample from an empty training set"));
    }
    let params = match (cfg.strategy, params) {
        (NegStrategy::ScoreSorted, None) => {
            return Err(Error::invalid("score_sorted sampling needs model parameters"))
        }
        (NegStrategy::ScoreSorted, Some(p)) => Some(p),
        (NegStrategy::Uniform, _) => None,
    };
    let mut rng = cfg.epoch_rng(epoch);
    let mut draw = NegativeDraw { train, k: cfg.num_negatives, short_draws: 0 };
    let mut triples = Vec::with_capacity(train.num_positives() * cfg.num_negatives);
    let mut negs = Vec::with_capacity(cfg.num_negatives);
    let mut scores = vec![0.0; train.num_items()];
    let mut skipped = 0;
    for u in 0..train.num_users() {
        let positives = train.user_items(u);
        if positives.is_empty() {
            continue;
        }
        if positives.len() == train.num_items() {
            skipped += 1;
            continue;
        }
        let pool = params.map(|p| {
            p.score_all_into(u, &mut scores);
            eval::top_k_excluding(&scores, cfg.pool_size, |j| positives.binary_search(&j).is_ok())
        });
        for &i in positives {
            match &pool {
                Some(pool) => draw.pick_from_pool(pool, &mut rng, &mut negs),
                None => draw.uniform(u, &mut rng, &mut negs),
            }
            triples.extend(negs.iter().map(|&j| Triple { user: u, pos: i, neg: j }));
        }
    }
    if draw.short_draws > 0 {
        log::warn!(
            "{} positives had fewer than {} candidate negatives; sampled with replacement",
            draw.short_draws,
            cfg.num_negatives
        );
    }
    if skipped > 0 {
        log::warn!("{skipped} users have no unobserved items; no triples built for them");
    }
    triples.shuffle(&mut rng);
    Ok(TripletBatch { triples })
}

/// Every train positive with label 1 plus `num_negatives` uniform unobserved
/// items per positive with label 0, shuffled.
pub fn build_points(train: &ImplicitDataset, cfg: &SamplerConfig, epoch: usize) -> Result<PointBatch> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("cannot sample from an empty training set"));
    }
    let mut rng = cfg.epoch_rng(epoch);
    let mut draw = NegativeDraw { train, k: cfg.num_negatives, short_draws: 0 };
    let mut examples = Vec::with_capacity(train.num_positives() * (cfg.num_negatives + 1));
    let mut negs = Vec::with_capacity(cfg.num_negatives);
    for u in 0..train.num_users() {
        for &i in train.user_items(u) {
            examples.push(PointExample { user: u, item: i, label: true });
            draw.uniform(u, &mut rng, &mut negs);
            examples.extend(negs.iter().map(|&j| PointExample { user: u, item: j, label: false }));
        }
    }
    if draw.short_draws > 0 {
        log::warn!("{} positives drew negatives with replacement", draw.short_draws);
    }
    examples.shuffle(&mut rng);
    Ok(PointBatch { examples })
}
