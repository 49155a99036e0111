//! Item popularity, DPR exposure weights, IPS propensities and the
//! feedback-loop exposure iteration.

use serde::{Deserialize, Serialize};

use crate::data::ImplicitDataset;
use crate::error::{Error, Result};

/// Fraction of the popularity ranking (from the bottom) treated as the long tail.
pub const TAIL_FRACTION_NUM: usize = 4;
pub const TAIL_FRACTION_DEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityTable {
    pub counts: Vec<usize>,
    /// `n_i / max_j n_j`, all zero when no item has a positive.
    pub normalized: Vec<f64>,
    /// 1-based popularity rank, ties broken by ascending item id.
    pub rank: Vec<usize>,
    pub tail: Vec<bool>,
}

impl PopularityTable {
    pub fn from_counts(counts: &[usize]) -> Self {
        let n = counts.len();
        let max = counts.iter().copied().max().unwrap_or(0);
        let normalized = counts
            .iter()
            .map(|&c| if max == 0 { 0.0 } else { c as f64 / max as f64 })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        let mut rank = vec![0; n];
        for (pos, &item) in order.iter().enumerate() {
            rank[item] = pos + 1;
        }
        let head = n - n * TAIL_FRACTION_NUM / TAIL_FRACTION_DEN;
        let tail = rank.iter().map(|&r| r > head).collect();
        PopularityTable {
            counts: counts.to_vec(),
            normalized,
            rank,
            tail,
        }
    }

    pub fn num_items(&self) -> usize {
        self.counts.len()
    }

    /// Items ordered from most to least popular.
    pub fn items_by_rank(&self) -> Vec<usize> {
        let mut order = vec![0; self.rank.len()];
        for (item, &r) in self.rank.iter().enumerate() {
            order[r - 1] = item;
        }
        order
    }
}

pub fn popularity(ds: &ImplicitDataset) -> PopularityTable {
    PopularityTable::from_counts(ds.item_counts())
}

/// How the per-item interaction mass inside `γ_i = (1 + mass)^α` is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// `n_i / max_j n_j`, keeps `γ` inside `[1, 2^α]`.
    #[default]
    Normalized,
    /// Raw count `n_i` (unbounded; ablation only).
    RawSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTable {
    pub alpha: f64,
    pub gamma: Vec<f64>,
}

impl GammaTable {
    /// All-ones table, i.e. plain BPR weighting.
    pub fn ones(num_items: usize) -> Self {
        GammaTable {
            alpha: 0.0,
            gamma: vec![1.0; num_items],
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

pub fn gamma(pop: &PopularityTable, alpha: f64) -> Result<GammaTable> {
    gamma_with_mode(pop, alpha, GammaMode::Normalized)
}

pub fn gamma_with_mode(pop: &PopularityTable, alpha: f64, mode: GammaMode) -> Result<GammaTable> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let gamma = match mode {
        GammaMode::Normalized => {
            // powf may differ by an ulp between call sites; keep the bound exact
            let top = 2f64.powf(alpha);
            pop.normalized.iter().map(|p| (1.0 + p).powf(alpha).clamp(1.0, top)).collect()
        }
        GammaMode::RawSum => pop.counts.iter().map(|&c| (1.0 + c as f64).powf(alpha)).collect(),
    };
    Ok(GammaTable { alpha, gamma })
}

pub const DEFAULT_PROPENSITY_EXPONENT: f64 = 0.5;
pub const DEFAULT_PROPENSITY_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityTable {
    pub theta_pos: Vec<f64>,
    pub theta_neg: Vec<f64>,
    pub exponent: f64,
    pub floor: f64,
}

impl PropensityTable {
    pub fn uniform(num_items: usize, theta_pos: f64, theta_neg: f64) -> Self {
        PropensityTable {
            theta_pos: vec![theta_pos; num_items],
            theta_neg: vec![theta_neg; num_items],
            exponent: 1.0,
            floor: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.theta_pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_pos.is_empty()
    }
}

/// `θ⁺ = p^e` and `θ⁻ = (1 - p)^e`, both clipped to `[floor, 1]`.
pub fn propensities(pop: &PopularityTable, exponent: f64, floor: f64) -> Result<PropensityTable> {
    if !(exponent > 0.0 && exponent.is_finite()) {
        return Err(Error::invalid(format!("propensity exponent must be > 0, got {exponent}")));
    }
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::invalid(format!("propensity floor must be in (0, 1), got {floor}")));
    }
    let clip = |x: f64| x.clamp(floor, 1.0);
    Ok(PropensityTable {
        theta_pos: pop.normalized.iter().map(|&x| clip(x.powf(exponent))).collect(),
        theta_neg: pop.normalized.iter().map(|&x| clip((1.0 - x).powf(exponent))).collect(),
        exponent,
        floor,
    })
}

/// Dense `M x N` relevance probabilities `P(R_{u,i} = 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMatrix {
    num_users: usize,
    num_items: usize,
    data: Vec<f64>,
}

impl RelevanceMatrix {
    pub fn new(num_users: usize, num_items: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_users * num_items {
            return Err(Error::DimensionMismatch {
                what: "relevance entries",
                expected: num_users * num_items,
                found: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::invalid(format!("relevance {bad} outside [0, 1]")));
        }
        Ok(RelevanceMatrix {
            num_users,
            num_items,
            data,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn get(&self, u: usize, i: usize) -> f64 {
        self.data[u * self.num_items + i]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.data[u * self.num_items..(u + 1) * self.num_items]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.num_items];
        for row in self.data.chunks_exact(self.num_items.max(1)) {
            for (s, r) in sums.iter_mut().zip(row) {
                *s += r;
            }
        }
        sums
    }
}

/// Per-item exposure probabilities `O(i)`, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureVector {
    probs: Vec<f64>,
}

const EXPOSURE_SUM_TOL: f64 = 1e-9;

impl ExposureVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("exposure probabilities must be finite and >= 0"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > EXPOSURE_SUM_TOL {
            return Err(Error::invalid(format!("exposure probabilities sum to {sum}, not 1")));
        }
        Ok(ExposureVector { probs })
    }

    /// Random-exposure mechanism, `O(i) = 1/N`.
    pub fn uniform(num_items: usize) -> Self {
        ExposureVector {
            probs: vec![1.0 / num_items as f64; num_items],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// One feedback-loop update of the exposure mechanism:
/// `O^t(i) ∝ (Σ_u R_{u,i}) · O^{t-1}(i)`.
pub fn exposure_step(relevance: &RelevanceMatrix, prev: &ExposureVector) -> Result<ExposureVector> {
    if relevance.num_items() != prev.len() {
        return Err(Error::DimensionMismatch {
            what: "exposure length",
            expected: relevance.num_items(),
            found: prev.len(),
        });
    }
    let mut next: Vec<f64> = relevance
        .column_sums()
        .iter()
        .zip(prev.probs())
        .map(|(r, o)| r * o)
        .collect();
    let total: f64 = next.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::DegenerateExposure);
    }
    next.iter_mut().for_each(|x| *x /= total);
    // renormalize once more so the sum is 1 to within rounding
    let total: f64 = next.iter().sum();
    next.iter_mut().for_each(|x| *x /= total);
    Ok(ExposureVector { probs: next })
}

/// Share of positive interactions per equal-size popularity bucket, most popular first.
pub fn exposure_distribution(ds: &ImplicitDataset, num_groups: usize) -> Result<Vec<f64>> {
    if num_groups == 0 {
        return Err(Error::invalid("num_groups must be >= 1"));
    }
    let pop = popularity(ds);
    let order = pop.items_by_rank();
    let n = order.len();
    let total = ds.num_positives();
    let mut shares = Vec::with_capacity(num_groups);
    for g in 0..num_groups {
        let (lo, hi) = (g * n / num_groups, (g + 1) * n / num_groups);
        let share = if total == 0 {
            (hi - lo) as f64 / n as f64
        } else {
            order[lo..hi].iter().map(|&i| pop.counts[i]).sum::<usize>() as f64 / total as f64
        };
        shares.push(share);
    }
    Ok(shares)
}
