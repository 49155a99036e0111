//! Matrix-factorization backbone and the Adam optimizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::GammaMode;

pub const INIT_STD: f64 = 0.01;
pub const MAX_ALPHA: f64 = 6.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bpr,
    /// DPR with the anti-false-negative weighting on the negative side.
    #[default]
    Dpr,
    /// DPR without the anti-false-negative weighting.
    DprMinus,
    Ubpr,
    Relmf,
    Mfdu,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Bpr,
        LossKind::Dpr,
        LossKind::DprMinus,
        LossKind::Ubpr,
        LossKind::Relmf,
        LossKind::Mfdu,
    ];

    pub fn is_pairwise(self) -> bool {
        !matches!(self, LossKind::Relmf | LossKind::Mfdu)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Bpr => "bpr",
            LossKind::Dpr => "dpr",
            LossKind::DprMinus => "dpr_minus",
            LossKind::Ubpr => "ubpr",
            LossKind::Relmf => "relmf",
            LossKind::Mfdu => "mfdu",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s || (s == "dpr-minus" && *k == LossKind::DprMinus))
            .ok_or_else(|| Error::invalid(format!("unknown loss '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub dim: usize,
    pub lr: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub num_negatives: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub gamma_mode: GammaMode,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            dim: 64,
            lr: 1e-3,
            l2: 1e-6,
            batch_size: 1024,
            num_negatives: 10,
            alpha: 2.0,
            beta: 1.0,
            epochs: 100,
            seed: 0,
            loss: LossKind::Dpr,
            gamma_mode: GammaMode::Normalized,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.dim == 0 {
            return bad("dim must be > 0".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("l2 must be >= 0, got {}", self.l2));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be > 0".into());
        }
        if self.num_negatives == 0 {
            return bad("num_negatives must be >= 1".into());
        }
        if !(0.0..=MAX_ALPHA).contains(&self.alpha) {
            return bad(format!("alpha must be in [0, {MAX_ALPHA}], got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        Ok(())
    }
}

/// User factors `U` (M x d) and item factors `V` (N x d), row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MFParams {
    pub num_users: usize,
    pub num_items: usize,
    pub dim: usize,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
}

impl MFParams {
    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        MFParams {
            num_users,
            num_items,
            dim,
            user_factors: vec![0.0; num_users * dim],
            item_factors: vec![0.0; num_items * dim],
        }
    }

    /// I.i.d. `N(0, 0.01²)` entries, users first, from a seeded ChaCha stream.
    pub fn init(num_users: usize, num_items: usize, hp: &Hyperparams) -> Result<Self> {
        if num_users == 0 || num_items == 0 || hp.dim == 0 {
            return Err(Error::invalid("num_users, num_items and dim must be > 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| normal.sample(&mut rng)).collect() };
        let user_factors = draw(num_users * hp.dim);
        let item_factors = draw(num_items * hp.dim);
        Ok(MFParams {
            num_users,
            num_items,
            dim: hp.dim,
            user_factors,
            item_factors,
        })
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn user_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.user_factors[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.item_factors[i * self.dim..(i + 1) * self.dim]
    }

    fn check_user(&self, u: usize) -> Result<()> {
        if u >= self.num_users {
            return Err(Error::IdOutOfRange {
                kind: "user",
                id: u,
                limit: self.num_users,
            });
        }
        Ok(())
    }

    pub fn score(&self, u: usize, i: usize) -> Result<f64> {
        self.check_user(u)?;
        if i >= self.num_items {
            return Err(Error::IdOutOfRange {
                kind: "item",
                id: i,
                limit: self.num_items,
            });
        }
        Ok(self.score_unchecked(u, i))
    }

    #[inline]
    pub(crate) fn score_unchecked(&self, u: usize, i: usize) -> f64 {
        dot(self.user(u), self.item(i))
    }

    pub fn score_all(&self, u: usize) -> Result<Vec<f64>> {
        self.check_user(u)?;
        let mut out = vec![0.0; self.num_items];
        self.score_all_into(u, &mut out);
        Ok(out)
    }

    pub(crate) fn score_all_into(&self, u: usize, out: &mut [f64]) {
        let pu = self.user(u);
        for (i, s) in out.iter_mut().enumerate() {
            *s = dot(pu, self.item(i));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.user_factors.iter().chain(&self.item_factors).all(|x| x.is_finite())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient rows for one embedding table, keyed by the rows a batch touched.
#[derive(Debug, Clone)]
pub struct RowGrads {
    dim: usize,
    slots: Vec<u32>,
    rows: Vec<usize>,
    data: Vec<f64>,
}

const EMPTY_SLOT: u32 = u32::MAX;

impl RowGrads {
    pub fn new(num_rows: usize, dim: usize) -> Self {
        RowGrads {
            dim,
            slots: vec![EMPTY_SLOT; num_rows],
            rows: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let slot = match self.slots[row] {
            EMPTY_SLOT => {
                let s = self.rows.len();
                self.slots[row] = s as u32;
                self.rows.push(row);
                self.data.resize(self.data.len() + self.dim, 0.0);
                s
            }
            s => s as usize,
        };
        &mut self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn get(&self, row: usize) -> Option<&[f64]> {
        match self.slots.get(row).copied() {
            None | Some(EMPTY_SLOT) => None,
            Some(s) => Some(&self.data[s as usize * self.dim..(s as usize + 1) * self.dim]),
        }
    }

    /// Touched rows in first-touch order.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().copied().zip(self.data.chunks_exact(self.dim.max(1)))
    }

    pub fn num_rows(&self) -> usize {
        self.slots.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn first_non_finite(&self) -> Option<usize> {
        self.iter().find(|(_, g)| g.iter().any(|x| !x.is_finite())).map(|(r, _)| r)
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub users: RowGrads,
    pub items: RowGrads,
}

impl Gradients {
    pub fn new(params: &MFParams) -> Self {
        Gradients {
            users: RowGrads::new(params.num_users, params.dim),
            items: RowGrads::new(params.num_items, params.dim),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.users.is_finite() && self.items.is_finite()
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub user_m: Vec<f64>,
    pub user_v: Vec<f64>,
    pub item_m: Vec<f64>,
    pub item_v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &MFParams) -> Self {
        OptimizerState {
            user_m: vec![0.0; params.user_factors.len()],
            user_v: vec![0.0; params.user_factors.len()],
            item_m: vec![0.0; params.item_factors.len()],
            item_v: vec![0.0; params.item_factors.len()],
            step: 0,
        }
    }
}

/// Dense Adam update with bias correction; rows missing from `grads` see a zero
/// gradient (their moments still decay).
pub fn adam_step(
    params: &mut MFParams,
    grads: &Gradients,
    state: &mut OptimizerState,
    hp: &Hyperparams,
) -> Result<()> {
    if grads.users.num_rows() != params.num_users || grads.items.num_rows() != params.num_items {
        return Err(Error::DimensionMismatch {
            what: "gradient rows",
            expected: params.num_users + params.num_items,
            found: grads.users.num_rows() + grads.items.num_rows(),
        });
    }
    if let Some(row) = grads.users.first_non_finite() {
        return Err(Error::NonFiniteGradient { table: "user", row });
    }
    if let Some(row) = grads.items.first_non_finite() {
        return Err(Error::NonFiniteGradient { table: "item", row });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let dim = params.dim;
    apply(&mut params.user_factors, &mut state.user_m, &mut state.user_v, &grads.users, dim, hp.lr, c1, c2);
    apply(&mut params.item_factors, &mut state.item_m, &mut state.item_v, &grads.items, dim, hp.lr, c1, c2);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn apply(
    table: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    grads: &RowGrads,
    dim: usize,
    lr: f64,
    c1: f64,
    c2: f64,
) {
    for (r, ((w, mr), vr)) in table
        .chunks_exact_mut(dim)
        .zip(m.chunks_exact_mut(dim))
        .zip(v.chunks_exact_mut(dim))
        .enumerate()
    {
        let g = grads.get(r);
        for k in 0..dim {
            let gk = g.map_or(0.0, |g| g[k]);
            mr[k] = ADAM_BETA1 * mr[k] + (1.0 - ADAM_BETA1) * gk;
            vr[k] = ADAM_BETA2 * vr[k] + (1.0 - ADAM_BETA2) * gk * gk;
            let m_hat = mr[k] / c1;
            let v_hat = vr[k] / c2;
            w[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}
