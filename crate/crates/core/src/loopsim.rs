//! Closed feedback-loop simulation: train, recommend, let users accept a few
//! recommended items, add them to the data, repeat.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ImplicitDataset;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::eval::{arp_at_k, tap_at_k, top_k_excluding};
use crate::exposure::popularity;
use crate::model::{Hyperparams, MFParams};
use crate::sampler::SamplerConfig;
use crate::train::{fit_dataset, TrainConfig};

const INITIAL_STREAM: u64 = 0x1417;
const ACCEPT_STREAM: u64 = 0xacce;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub init_items_per_user: usize,
    /// Target item degree of the initial data. When it disagrees with the
    /// user side, item degrees are balanced to `num_users * init_items_per_user / num_items`.
    pub init_users_per_item: usize,
    pub accept_k: usize,
    pub rec_top: usize,
    pub loops: usize,
    /// List length for the per-loop TAP and ARP.
    pub metric_k: usize,
    pub epochs_per_loop: usize,
    pub seed: u64,
    /// Let already-interacted items appear in recommendation lists.
    pub allow_seen: bool,
    /// Model settings; filled from the model section of a run configuration.
    #[serde(skip)]
    pub hp: Hyperparams,
    #[serde(skip)]
    pub sampler: SamplerConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_users: 200,
            num_items: 500,
            init_items_per_user: 20,
            init_users_per_item: 20,
            accept_k: 2,
            rec_top: 10,
            loops: 50,
            metric_k: 30,
            epochs_per_loop: 20,
            seed: 0,
            allow_seen: false,
            hp: Hyperparams::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_items == 0 {
            return Err(Error::invalid("simulation needs users and items"));
        }
        if self.accept_k > self.rec_top {
            return Err(Error::invalid(format!(
                "accept_k ({}) exceeds rec_top ({})",
                self.accept_k, self.rec_top
            )));
        }
        if self.rec_top == 0 || self.metric_k == 0 || self.epochs_per_loop == 0 {
            return Err(Error::invalid("rec_top, metric_k and epochs_per_loop must be > 0"));
        }
        self.hp.validate()
    }

    /// Item degrees of the initial data: the requested value when both sides
    /// agree, otherwise an even spread of the user-side edge count.
    fn item_degrees(&self, rng: &mut impl Rng) -> Result<Vec<usize>> {
        let (m, n, du) = (self.num_users, self.num_items, self.init_items_per_user);
        if du > n {
            return Err(Error::InfeasibleDegrees(format!(
                "{du} items per user but only {n} items"
            )));
        }
        let edges = m * du;
        if edges == n * self.init_users_per_item {
            return Ok(vec![self.init_users_per_item; n]);
        }
        log::warn!(
            "{m}x{du} user edges disagree with {n}x{} item edges; balancing item degrees",
            self.init_users_per_item
        );
        let mut degrees = vec![edges / n; n];
        let mut items: Vec<usize> = (0..n).collect();
        items.shuffle(rng);
        for &i in &items[..edges % n] {
            degrees[i] += 1;
        }
        Ok(degrees)
    }
}

/// Random bipartite data with every user holding exactly
/// `init_items_per_user` items, built by shuffled stub matching with
/// collision-resolving swaps.
pub fn gen_initial(cfg: &SimConfig) -> Result<ImplicitDataset> {
    if cfg.num_users == 0 || cfg.num_items == 0 {
        return Err(Error::invalid("simulation needs users and items"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, INITIAL_STREAM));
    let (m, n, du) = (cfg.num_users, cfg.num_items, cfg.init_items_per_user);
    let degrees = cfg.item_degrees(&mut rng)?;
    if let Some(&d) = degrees.iter().find(|&&d| d > m) {
        return Err(Error::InfeasibleDegrees(format!("item degree {d} exceeds {m} users")));
    }
    let mut slots: Vec<usize> = degrees.iter().enumerate().flat_map(|(i, &d)| std::iter::repeat_n(i, d)).collect();
    slots.shuffle(&mut rng);
    let mut held = vec![0u32; m * n];
    for (p, &i) in slots.iter().enumerate() {
        held[(p / du) * n + i] += 1;
    }
    let edges = slots.len();
    for p in 0..edges {
        let u = p / du;
        if held[u * n + slots[p]] <= 1 {
            continue;
        }
        let mut fixed = false;
        for _ in 0..20 * edges {
            let q = rng.random_range(0..edges);
            let v = q / du;
            let (a, b) = (slots[p], slots[q]);
            if v != u && held[u * n + b] == 0 && held[v * n + a] == 0 {
                held[u * n + a] -= 1;
                held[u * n + b] += 1;
                held[v * n + b] -= 1;
                held[v * n + a] += 1;
                slots.swap(p, q);
                fixed = true;
                break;
            }
        }
        if !fixed {
            return Err(Error::InfeasibleDegrees("could not resolve duplicate edges".into()));
        }
    }
    ImplicitDataset::new(m, n, slots.iter().enumerate().map(|(p, &i)| (p / du, i)))
}

/// A model refit once per generation.
pub trait Recommender {
    fn refit(&mut self, data: &ImplicitDataset, generation: usize) -> Result<()>;
    fn score_user(&mut self, user: usize, out: &mut [f64]);
}

/// Matrix factorization retrained from scratch every generation.
#[derive(Debug, Clone)]
pub struct MfRecommender {
    pub hp: Hyperparams,
    pub sampler: SamplerConfig,
    pub epochs: usize,
    pub seed: u64,
    params: Option<MFParams>,
}

impl MfRecommender {
    pub fn new(hp: Hyperparams, sampler: SamplerConfig, epochs: usize, seed: u64) -> Self {
        MfRecommender { hp, sampler, epochs, seed, params: None }
    }

    pub fn from_config(cfg: &SimConfig) -> Self {
        Self::new(cfg.hp.clone(), cfg.sampler.clone(), cfg.epochs_per_loop, cfg.seed)
    }
}

impl Recommender for MfRecommender {
    fn refit(&mut self, data: &ImplicitDataset, generation: usize) -> Result<()> {
        let hp = Hyperparams {
            epochs: self.epochs,
            seed: derive_seed(self.seed, generation as u64),
            ..self.hp.clone()
        };
        let cfg = TrainConfig { sampler: self.sampler.clone(), ..TrainConfig::with_hp(hp) };
        self.params = Some(fit_dataset(data, &cfg)?);
        Ok(())
    }

    fn score_user(&mut self, user: usize, out: &mut [f64]) {
        match &self.params {
            Some(p) => p.score_all_into(user, out),
            None => out.fill(0.0),
        }
    }
}

/// Uniformly random scores; the null model.
#[derive(Debug, Clone)]
pub struct RandomRecommender {
    rng: ChaCha8Rng,
}

impl RandomRecommender {
    pub fn new(seed: u64) -> Self {
        RandomRecommender { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Recommender for RandomRecommender {
    fn refit(&mut self, _: &ImplicitDataset, _: usize) -> Result<()> {
        Ok(())
    }

    fn score_user(&mut self, _: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = self.rng.random());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    /// 1-based generation.
    pub generation: usize,
    pub new_interactions: usize,
    /// Total positives after this generation's additions.
    pub cumulative: usize,
    pub tap: f64,
    pub arp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    /// Completed generations.
    pub generation: usize,
    pub initial_positives: usize,
    pub dataset: ImplicitDataset,
    pub per_loop: Vec<LoopRecord>,
}

/// A simulation stopped by an error, with the generations completed so far.
#[derive(Debug)]
pub struct SimAbort {
    pub partial: Option<Box<LoopState>>,
    pub error: Error,
}

impl fmt::Display for SimAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.partial {
            Some(s) => write!(f, "{} (after {} generations)", self.error, s.generation),
            None => self.error.fmt(f),
        }
    }
}

impl std::error::Error for SimAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<SimAbort> for Error {
    fn from(a: SimAbort) -> Self {
        a.error
    }
}

fn abort(error: Error) -> SimAbort {
    SimAbort { partial: None, error }
}

/// Runs `cfg.loops` generations with a matrix-factorization model.
pub fn run_simulation(cfg: &SimConfig) -> std::result::Result<LoopState, SimAbort> {
    run_simulation_with(cfg, &mut MfRecommender::from_config(cfg))
}

pub fn run_simulation_with(
    cfg: &SimConfig,
    model: &mut dyn Recommender,
) -> std::result::Result<LoopState, SimAbort> {
    cfg.validate().map_err(abort)?;
    let dataset = gen_initial(cfg).map_err(abort)?;
    let mut state = LoopState {
        generation: 0,
        initial_positives: dataset.num_positives(),
        dataset,
        per_loop: Vec::with_capacity(cfg.loops),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, ACCEPT_STREAM));
    let mut scores = vec![0.0; cfg.num_items];
    for t in 1..=cfg.loops {
        if let Err(error) = model.refit(&state.dataset, t) {
            return Err(SimAbort { partial: Some(Box::new(state)), error });
        }
        let data = &state.dataset;
        let pop = popularity(data);
        let mut metric_lists = Vec::with_capacity(cfg.num_users);
        let mut additions = Vec::new();
        for u in 0..cfg.num_users {
            model.score_user(u, &mut scores);
            if scores.iter().any(|s| !s.is_finite()) {
                let error = Error::Diverged(format!("non-finite scores in generation {t}"));
                return Err(SimAbort { partial: Some(Box::new(state)), error });
            }
            let seen = |i: usize| !cfg.allow_seen && data.contains(u, i);
            let list = top_k_excluding(&scores, cfg.rec_top.max(cfg.metric_k), seen);
            let top = &list[..cfg.rec_top.min(list.len())];
            additions.extend(
                top.choose_multiple(&mut rng, cfg.accept_k)
                    .filter(|&&i| !data.contains(u, i))
                    .map(|&i| (u, i)),
            );
            metric_lists.push(list.into_iter().take(cfg.metric_k).collect::<Vec<_>>());
        }
        let before = data.num_positives();
        let dataset = data.with_pairs(additions).map_err(abort)?;
        let record = LoopRecord {
            generation: t,
            new_interactions: dataset.num_positives() - before,
            cumulative: dataset.num_positives(),
            tap: tap_at_k(&metric_lists, &pop),
            arp: arp_at_k(&metric_lists, &pop),
        };
        log::info!(
            "generation {t}: +{} -> {} tap {:.4} arp {:.2}",
            record.new_interactions,
            record.cumulative,
            record.tap,
            record.arp
        );
        state.dataset = dataset;
        state.per_loop.push(record);
        state.generation = t;
    }
    Ok(state)
}

/// Mean and sample standard deviation per loop across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub generation: usize,
    pub new_mean: f64,
    pub new_std: f64,
    pub cumulative_mean: f64,
    pub cumulative_std: f64,
    pub tap_mean: f64,
    pub tap_std: f64,
    pub arp_mean: f64,
    pub arp_std: f64,
}

#[derive(Debug, Clone)]
pub struct MethodCurve {
    pub label: String,
    pub runs: Vec<LoopState>,
    pub points: Vec<CurvePoint>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(label: impl Into<String>, runs: Vec<LoopState>) -> MethodCurve {
    let loops = runs.iter().map(|r| r.per_loop.len()).min().unwrap_or(0);
    let points = (0..loops)
        .map(|t| {
            let col = |f: fn(&LoopRecord) -> f64| -> (f64, f64) {
                mean_std(&runs.iter().map(|r| f(&r.per_loop[t])).collect::<Vec<_>>())
            };
            let (new_mean, new_std) = col(|r| r.new_interactions as f64);
            let (cumulative_mean, cumulative_std) = col(|r| r.cumulative as f64);
            let (tap_mean, tap_std) = col(|r| r.tap);
            let (arp_mean, arp_std) = col(|r| r.arp);
            CurvePoint {
                generation: t + 1,
                new_mean,
                new_std,
                cumulative_mean,
                cumulative_std,
                tap_mean,
                tap_std,
                arp_mean,
                arp_std,
            }
        })
        .collect();
    MethodCurve { label: label.into(), runs, points }
}

/// Runs every configuration under every seed, labelling curves by loss name.
pub fn compare_methods(cfgs: &[SimConfig], seeds: &[u64]) -> Result<Vec<MethodCurve>> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    cfgs.iter()
        .map(|cfg| {
            let runs = seeds
                .iter()
                .map(|&seed| run_simulation(&SimConfig { seed, ..cfg.clone() }).map_err(Error::from))
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(cfg.hp.loss.name(), runs))
        })
        .collect()
}

pub const CURVE_HEADER: &str = "loop,new,cumulative,tap,arp,new_std,cumulative_std,tap_std,arp_std";

pub fn write_curve(path: &Path, curve: &MethodCurve) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "{CURVE_HEADER}").map_err(io)?;
    for p in &curve.points {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            p.generation,
            p.new_mean,
            p.cumulative_mean,
            p.tap_mean,
            p.arp_mean,
            p.new_std,
            p.cumulative_std,
            p.tap_std,
            p.arp_std
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}
