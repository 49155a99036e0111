//! Mini-batch training loop with per-epoch negative resampling and early
//! stopping on validation NDCG.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{read_json, write_json, ImplicitDataset, SplitDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate_held_out, EvalConfig, HeldOut, Protocol};
use crate::exposure::{
    gamma_with_mode, popularity, propensities, DEFAULT_PROPENSITY_EXPONENT, DEFAULT_PROPENSITY_FLOOR,
};
use crate::losses::Objective;
use crate::model::{adam_step, Hyperparams, MFParams, OptimizerState};
use crate::sampler::{build_points, build_triplets, SamplerConfig};
use crate::derive_seed;

pub const DEFAULT_PATIENCE: usize = 10;

// seed streams derived from the master seed
const SAMPLER_STREAM: u64 = 0x5a3d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hp: Hyperparams,
    pub sampler: SamplerConfig,
    pub patience: usize,
    /// Validation metric cutoff and protocol used for early stopping.
    pub validation: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hp: Hyperparams::default(),
            sampler: SamplerConfig::default(),
            patience: DEFAULT_PATIENCE,
            validation: EvalConfig {
                k: 5,
                protocol: Protocol::FullRank,
                ..EvalConfig::default()
            },
        }
    }
}

impl TrainConfig {
    pub fn with_hp(hp: Hyperparams) -> Self {
        TrainConfig { hp, ..TrainConfig::default() }
    }

    /// Sampler settings with the negative count and seed taken from the hyperparameters.
    pub fn effective_sampler(&self) -> SamplerConfig {
        SamplerConfig {
            num_negatives: self.hp.num_negatives,
            seed: derive_seed(self.hp.seed, SAMPLER_STREAM),
            ..self.sampler.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_recall: Option<f64>,
    pub val_ndcg: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MFParams,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Builds the loss with its exposure tables computed from `train`.
pub fn objective_for(train: &ImplicitDataset, hp: &Hyperparams) -> Result<Objective> {
    hp.validate()?;
    let pop = popularity(train);
    Ok(Objective {
        kind: hp.loss,
        hp: hp.clone(),
        gamma: gamma_with_mode(&pop, hp.alpha, hp.gamma_mode)?,
        theta: propensities(&pop, DEFAULT_PROPENSITY_EXPONENT, DEFAULT_PROPENSITY_FLOOR)?,
    })
}

/// One pass over freshly sampled examples; returns the mean mini-batch loss.
pub fn run_epoch(
    params: &mut MFParams,
    state: &mut OptimizerState,
    objective: &Objective,
    train: &ImplicitDataset,
    sampler: &SamplerConfig,
    epoch: usize,
) -> Result<f64> {
    let hp = &objective.hp;
    let mut total = 0.0;
    let mut batches = 0usize;
    if objective.kind.is_pairwise() {
        let triples = build_triplets(train, sampler, Some(params), epoch)?;
        for batch in triples.minibatches(hp.batch_size) {
            let out = objective.pairwise(&batch, params)?;
            total += out.value;
            batches += 1;
            adam_step(params, &out.grads, state, hp)?;
        }
    } else {
        let points = build_points(train, sampler, epoch)?;
        for batch in points.minibatches(hp.batch_size) {
            let out = objective.pointwise(&batch, params)?;
            total += out.value;
            batches += 1;
            adam_step(params, &out.grads, state, hp)?;
        }
    }
    let mean = total / batches.max(1) as f64;
    if !mean.is_finite() {
        return Err(Error::Diverged(format!("epoch {epoch}: loss {mean}")));
    }
    if !params.is_finite() {
        return Err(Error::Diverged(format!("epoch {epoch}: non-finite parameters")));
    }
    Ok(mean)
}

/// Trains for `hp.epochs` epochs with no validation.
pub fn fit_dataset(train: &ImplicitDataset, cfg: &TrainConfig) -> Result<MFParams> {
    let objective = objective_for(train, &cfg.hp)?;
    let sampler = cfg.effective_sampler();
    let mut params = MFParams::init(train.num_users(), train.num_items(), &cfg.hp)?;
    let mut state = OptimizerState::new(&params);
    for epoch in 0..cfg.hp.epochs {
        run_epoch(&mut params, &mut state, &objective, train, &sampler, epoch)?;
    }
    Ok(params)
}

/// Trains on `split.train`, keeping the parameters of the epoch with the best
/// validation NDCG and stopping after `patience` epochs without improvement.
/// Without validation items every epoch runs and the last one is kept.
pub fn fit(split: &SplitDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let train = &split.train;
    let objective = objective_for(train, &cfg.hp)?;
    let sampler = cfg.effective_sampler();
    let pop = popularity(train);
    let has_validation = split.validation.iter().any(Option::is_some);
    let mut params = MFParams::init(train.num_users(), train.num_items(), &cfg.hp)?;
    let mut state = OptimizerState::new(&params);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, MFParams)> = None;
    for epoch in 0..cfg.hp.epochs {
        let loss = run_epoch(&mut params, &mut state, &objective, train, &sampler, epoch)?;
        let mut record = EpochRecord {
            epoch: epoch + 1,
            loss,
            val_recall: None,
            val_ndcg: None,
        };
        if has_validation {
            let report = evaluate_held_out(&params, split, HeldOut::Validation, &cfg.validation, &pop)?;
            record.val_recall = Some(report.recall);
            record.val_ndcg = Some(report.ndcg);
            log::debug!("epoch {} loss {loss:.6} val ndcg {:.5}", epoch + 1, report.ndcg);
            if best.as_ref().is_none_or(|(score, _, _)| report.ndcg > *score) {
                best = Some((report.ndcg, epoch + 1, params.clone()));
            }
        }
        history.push(record);
        if let Some((_, best_epoch, _)) = &best {
            if epoch + 1 - best_epoch >= cfg.patience {
                log::info!("early stop at epoch {}, best {}", epoch + 1, best_epoch);
                break;
            }
        }
    }
    let (params, best_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => (params, history.len()),
    };
    Ok(TrainOutcome { params, best_epoch, history })
}

/// Trained model plus the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub hp: Hyperparams,
    pub best_epoch: usize,
    pub params: MFParams,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck: Checkpoint = read_json(path.as_ref())?;
        let p = &ck.params;
        if p.user_factors.len() != p.num_users * p.dim || p.item_factors.len() != p.num_items * p.dim {
            return Err(Error::Format {
                path: path.as_ref().to_path_buf(),
                msg: "factor matrix sizes disagree with header".into(),
            });
        }
        Ok(ck)
    }
}
