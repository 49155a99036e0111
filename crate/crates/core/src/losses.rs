//! Ranking objectives with analytic gradients.
//!
//! Pairwise losses (BPR, DPR, DPR⁻, UBPR) consume [`TripletBatch`]es and share
//! one kernel: each triple contributes `w · softplus(-x)` where `x` is a
//! (possibly reweighted) score margin. Pointwise losses (Rel-MF, MFDU) consume
//! [`PointBatch`]es and contribute `a · softplus(-s) + b · softplus(s)`.
//! Both reduce by the batch mean and add `λ` times the squared norm of every
//! embedding row each example touches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::{GammaTable, PropensityTable};
use crate::model::{Gradients, Hyperparams, LossKind, MFParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripletBatch {
    pub triples: Vec<Triple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PointExample {
    pub user: usize,
    pub item: usize,
    pub label: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PointBatch {
    pub examples: Vec<PointExample>,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub grads: Gradients,
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `1 - tanh(s)`, evaluated as `2σ(-2s)` so it stays accurate for large `s`.
#[inline]
fn one_minus_tanh(s: f64) -> f64 {
    2.0 * sigmoid(-2.0 * s)
}

/// Anti-false-negative weight `(1 - tanh(s))^β` for a negative item's score.
pub fn ufn_weight(s_neg: f64, beta: f64) -> f64 {
    one_minus_tanh(s_neg).powf(beta)
}

/// `UFN(s)·s` and its derivative `(1 - tanh s)^β · (1 - β s (1 + tanh s))`.
#[inline]
fn ufn_scaled(s: f64, beta: f64) -> (f64, f64) {
    let w = ufn_weight(s, beta);
    let t = s.tanh();
    (w * s, w * (1.0 - beta * s * (1.0 + t)))
}

fn check_pairwise(batch: &TripletBatch, params: &MFParams) -> Result<()> {
    if batch.triples.is_empty() {
        return Err(Error::invalid("empty triplet batch"));
    }
    for t in &batch.triples {
        check_index(params, t.user, t.pos)?;
        check_index(params, t.user, t.neg)?;
    }
    Ok(())
}

fn check_index(params: &MFParams, u: usize, i: usize) -> Result<()> {
    if u >= params.num_users {
        return Err(Error::IdOutOfRange {
            kind: "user",
            id: u,
            limit: params.num_users,
        });
    }
    if i >= params.num_items {
        return Err(Error::IdOutOfRange {
            kind: "item",
            id: i,
            limit: params.num_items,
        });
    }
    Ok(())
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Per-triple margin description returned by a pairwise kernel.
struct Margin {
    x: f64,
    dx_dpos: f64,
    dx_dneg: f64,
    weight: f64,
}

fn pairwise<F>(batch: &TripletBatch, params: &MFParams, l2: f64, margin: F) -> LossOutput
where
    F: Fn(&Triple, f64, f64) -> Margin,
{
    let dim = params.dim;
    let scale = 1.0 / batch.triples.len() as f64;
    let mut grads = Gradients::new(params);
    let mut value = 0.0;
    for t in &batch.triples {
        let (pu, pi, pj) = (params.user(t.user), params.item(t.pos), params.item(t.neg));
        let s_pos = crate::model::dot(pu, pi);
        let s_neg = crate::model::dot(pu, pj);
        let m = margin(t, s_pos, s_neg);
        value += m.weight * softplus(-m.x)
            + l2 * (sq_norm(pu) + sq_norm(pi) + sq_norm(pj));
        // d/dx of w·softplus(-x)
        let gx = -m.weight * sigmoid(-m.x) * scale;
        let (a, b) = (gx * m.dx_dpos, gx * m.dx_dneg);
        let reg = 2.0 * l2 * scale;
        let gu = grads.users.row_mut(t.user);
        for k in 0..dim {
            gu[k] += a * pi[k] + b * pj[k] + reg * pu[k];
        }
        let gi = grads.items.row_mut(t.pos);
        for k in 0..dim {
            gi[k] += a * pu[k] + reg * pi[k];
        }
        let gj = grads.items.row_mut(t.neg);
        for k in 0..dim {
            gj[k] += b * pu[k] + reg * pj[k];
        }
    }
    LossOutput {
        value: value * scale,
        grads,
    }
}

#[inline]
fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn bpr(batch: &TripletBatch, params: &MFParams, hp: &Hyperparams) -> Result<LossOutput> {
    check_pairwise(batch, params)?;
    Ok(pairwise(batch, params, hp.l2, |_, sp, sn| Margin {
        x: sp - sn,
        dx_dpos: 1.0,
        dx_dneg: -1.0,
        weight: 1.0,
    }))
}

/// DPR: margin `s_i/γ_i - s_j/γ_j`; with `use_ufn` the negative side becomes
/// `UFN(s_j)·s_j/γ_j` and is differentiated through.
pub fn dpr(
    batch: &TripletBatch,
    params: &MFParams,
    gamma: &GammaTable,
    hp: &Hyperparams,
    use_ufn: bool,
) -> Result<LossOutput> {
    check_len("gamma length", params.num_items, gamma.len())?;
    check_pairwise(batch, params)?;
    let g = &gamma.gamma;
    let beta = hp.beta;
    Ok(pairwise(batch, params, hp.l2, |t, sp, sn| {
        let (gi, gj) = (g[t.pos], g[t.neg]);
        let (neg, dneg) = if use_ufn { ufn_scaled(sn, beta) } else { (sn, 1.0) };
        Margin {
            x: sp / gi - neg / gj,
            dx_dpos: 1.0 / gi,
            dx_dneg: -dneg / gj,
            weight: 1.0,
        }
    }))
}

/// UBPR: BPR with each triple weighted by `1/θ⁺_i` (sampled negatives are
/// unobserved, so the negative-side factor is 1).
pub fn ubpr(
    batch: &TripletBatch,
    params: &MFParams,
    theta: &PropensityTable,
    hp: &Hyperparams,
) -> Result<LossOutput> {
    check_len("propensity length", params.num_items, theta.len())?;
    check_pairwise(batch, params)?;
    let tp = &theta.theta_pos;
    Ok(pairwise(batch, params, hp.l2, |t, sp, sn| Margin {
        x: sp - sn,
        dx_dpos: 1.0,
        dx_dneg: -1.0,
        weight: 1.0 / tp[t.pos],
    }))
}

fn pointwise<F>(batch: &PointBatch, params: &MFParams, l2: f64, coeffs: F) -> Result<LossOutput>
where
    F: Fn(&PointExample) -> (f64, f64),
{
    if batch.examples.is_empty() {
        return Err(Error::invalid("empty point batch"));
    }
    for e in &batch.examples {
        check_index(params, e.user, e.item)?;
    }
    let dim = params.dim;
    let scale = 1.0 / batch.examples.len() as f64;
    let mut grads = Gradients::new(params);
    let mut value = 0.0;
    for e in &batch.examples {
        let (pu, pi) = (params.user(e.user), params.item(e.item));
        let s = crate::model::dot(pu, pi);
        let (a, b) = coeffs(e);
        value += a * softplus(-s) + b * softplus(s) + l2 * (sq_norm(pu) + sq_norm(pi));
        let gs = (-a * sigmoid(-s) + b * sigmoid(s)) * scale;
        let reg = 2.0 * l2 * scale;
        let gu = grads.users.row_mut(e.user);
        for k in 0..dim {
            gu[k] += gs * pi[k] + reg * pu[k];
        }
        let gi = grads.items.row_mut(e.item);
        for k in 0..dim {
            gi[k] += gs * pu[k] + reg * pi[k];
        }
    }
    Ok(LossOutput {
        value: value * scale,
        grads,
    })
}

/// Rel-MF: `-(y/θ⁺) ln σ(s) - (1 - y/θ⁺) ln(1 - σ(s))`.
pub fn relmf(
    batch: &PointBatch,
    params: &MFParams,
    theta: &PropensityTable,
    hp: &Hyperparams,
) -> Result<LossOutput> {
    check_len("propensity length", params.num_items, theta.len())?;
    let tp = &theta.theta_pos;
    pointwise(batch, params, hp.l2, |e| {
        let y = if e.label { 1.0 / tp[e.item] } else { 0.0 };
        (y, 1.0 - y)
    })
}

/// MFDU: Rel-MF with the negative term additionally divided by `θ⁻`.
pub fn mfdu(
    batch: &PointBatch,
    params: &MFParams,
    theta: &PropensityTable,
    hp: &Hyperparams,
) -> Result<LossOutput> {
    check_len("propensity length", params.num_items, theta.len())?;
    let (tp, tn) = (&theta.theta_pos, &theta.theta_neg);
    pointwise(batch, params, hp.l2, |e| {
        let y = if e.label { 1.0 / tp[e.item] } else { 0.0 };
        (y, (1.0 - y) / tn[e.item])
    })
}

/// A loss bound to the exposure tables it needs.
#[derive(Debug, Clone)]
pub struct Objective {
    pub kind: LossKind,
    pub hp: Hyperparams,
    pub gamma: GammaTable,
    pub theta: PropensityTable,
}

impl Objective {
    pub fn pairwise(&self, batch: &TripletBatch, params: &MFParams) -> Result<LossOutput> {
        match self.kind {
            LossKind::Bpr => bpr(batch, params, &self.hp),
            LossKind::Dpr => dpr(batch, params, &self.gamma, &self.hp, true),
            LossKind::DprMinus => dpr(batch, params, &self.gamma, &self.hp, false),
            LossKind::Ubpr => ubpr(batch, params, &self.theta, &self.hp),
            LossKind::Relmf | LossKind::Mfdu => Err(Error::invalid(format!(
                "{} is a pointwise loss",
                self.kind
            ))),
        }
    }

    pub fn pointwise(&self, batch: &PointBatch, params: &MFParams) -> Result<LossOutput> {
        match self.kind {
            LossKind::Relmf => relmf(batch, params, &self.theta, &self.hp),
            LossKind::Mfdu => mfdu(batch, params, &self.theta, &self.hp),
            _ => Err(Error::invalid(format!("{} is a pairwise loss", self.kind))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::{gamma, PopularityTable};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Naive oracles: direct formulas with ln(σ(x)), no shared kernel.
    fn naive_sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn naive_dot(p: &MFParams, u: usize, i: usize) -> f64 {
        (0..p.dim)
            .map(|k| p.user_factors[u * p.dim + k] * p.item_factors[i * p.dim + k])
            .sum()
    }

    fn naive_reg(p: &MFParams, rows_u: &[usize], rows_i: &[usize]) -> f64 {
        let mut r = 0.0;
        for &u in rows_u {
            for k in 0..p.dim {
                r += p.user_factors[u * p.dim + k].powi(2);
            }
        }
        for &i in rows_i {
            for k in 0..p.dim {
                r += p.item_factors[i * p.dim + k].powi(2);
            }
        }
        r
    }

    enum Kind<'a> {
        Bpr,
        Dpr(&'a [f64], Option<f64>),
        Ubpr(&'a [f64]),
    }

    fn naive_pairwise(b: &TripletBatch, p: &MFParams, l2: f64, kind: &Kind) -> f64 {
        let mut total = 0.0;
        for t in &b.triples {
            let (si, sj) = (naive_dot(p, t.user, t.pos), naive_dot(p, t.user, t.neg));
            let term = match kind {
                Kind::Bpr => -naive_sig(si - sj).ln(),
                Kind::Dpr(g, None) => -naive_sig(si / g[t.pos] - sj / g[t.neg]).ln(),
                Kind::Dpr(g, Some(beta)) => {
                    let w = (1.0 - sj.tanh()).powf(*beta);
                    -naive_sig(si / g[t.pos] - w * sj / g[t.neg]).ln()
                }
                Kind::Ubpr(th) => -naive_sig(si - sj).ln() / th[t.pos],
            };
            total += term + l2 * naive_reg(p, &[t.user], &[t.pos, t.neg]);
        }
        total / b.triples.len() as f64
    }

    fn naive_pointwise(b: &PointBatch, p: &MFParams, l2: f64, tp: &[f64], tn: Option<&[f64]>) -> f64 {
        let mut total = 0.0;
        for e in &b.examples {
            let s = naive_dot(p, e.user, e.item);
            let y = if e.label { 1.0 } else { 0.0 };
            let a = y / tp[e.item];
            let mut neg = -(1.0 - a) * (1.0 - naive_sig(s)).ln();
            if let Some(tn) = tn {
                neg /= tn[e.item];
            }
            total += -a * naive_sig(s).ln() + neg + l2 * naive_reg(p, &[e.user], &[e.item]);
        }
        total / b.examples.len() as f64
    }

    fn random_params(m: usize, n: usize, d: usize, scale: f64, rng: &mut ChaCha8Rng) -> MFParams {
        let mut p = MFParams::zeros(m, n, d);
        p.user_factors.iter_mut().for_each(|x| *x = rng.random_range(-scale..scale));
        p.item_factors.iter_mut().for_each(|x| *x = rng.random_range(-scale..scale));
        p
    }

    fn random_triples(m: usize, n: usize, len: usize, rng: &mut ChaCha8Rng) -> TripletBatch {
        let triples = (0..len)
            .map(|_| {
                let pos = rng.random_range(0..n);
                let mut neg = rng.random_range(0..n);
                while neg == pos {
                    neg = rng.random_range(0..n);
                }
                Triple { user: rng.random_range(0..m), pos, neg }
            })
            .collect();
        TripletBatch { triples }
    }

    fn random_points(m: usize, n: usize, len: usize, rng: &mut ChaCha8Rng) -> PointBatch {
        let examples = (0..len)
            .map(|_| PointExample {
                user: rng.random_range(0..m),
                item: rng.random_range(0..n),
                label: rng.random_bool(0.5),
            })
            .collect();
        PointBatch { examples }
    }

    fn hp(l2: f64, beta: f64) -> Hyperparams {
        Hyperparams { l2, beta, dim: 4, ..Hyperparams::default() }
    }

    fn test_gamma(n: usize, alpha: f64, rng: &mut ChaCha8Rng) -> GammaTable {
        let counts: Vec<usize> = (0..n).map(|_| rng.random_range(0..50)).collect();
        gamma(&PopularityTable::from_counts(&counts), alpha).unwrap()
    }

    fn test_theta(n: usize, rng: &mut ChaCha8Rng) -> PropensityTable {
        let mut t = PropensityTable::uniform(n, 1.0, 1.0);
        t.theta_pos.iter_mut().for_each(|x| *x = rng.random_range(0.1..1.0));
        t.theta_neg.iter_mut().for_each(|x| *x = rng.random_range(0.1..1.0));
        t
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn bpr_at_equal_scores_is_ln2() {
        let p = MFParams::zeros(2, 3, 4);
        let b = TripletBatch { triples: vec![Triple { user: 0, pos: 1, neg: 2 }] };
        let out = bpr(&b, &p, &hp(0.0, 1.0)).unwrap();
        assert!((out.value - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bpr_saturates_to_zero() {
        let mut p = MFParams::zeros(1, 2, 1);
        p.user_mut(0)[0] = 1.0;
        p.item_mut(0)[0] = 400.0;
        p.item_mut(1)[0] = -400.0;
        let b = TripletBatch { triples: vec![Triple { user: 0, pos: 0, neg: 1 }] };
        let out = bpr(&b, &p, &hp(0.0, 1.0)).unwrap();
        assert!(out.value < 1e-300);
        assert!(out.grads.is_finite());
        // and the reverse does not overflow
        let b = TripletBatch { triples: vec![Triple { user: 0, pos: 1, neg: 0 }] };
        let out = bpr(&b, &p, &hp(0.0, 1.0)).unwrap();
        assert!((out.value - 800.0).abs() < 1e-9);
    }

    #[test]
    fn empty_batches_rejected() {
        let p = MFParams::zeros(1, 2, 1);
        assert!(bpr(&TripletBatch::default(), &p, &hp(0.0, 1.0)).is_err());
        let th = PropensityTable::uniform(2, 1.0, 1.0);
        assert!(relmf(&PointBatch::default(), &p, &th, &hp(0.0, 1.0)).is_err());
    }

    #[test]
    fn ufn_weight_cases() {
        assert_eq!(ufn_weight(0.0, 1.0), 1.0);
        assert_eq!(ufn_weight(3.7, 0.0), 1.0);
        assert_eq!(ufn_weight(-2.0, 0.0), 1.0);
        assert!(ufn_weight(30.0, 1.0) < 1e-25);
        assert!(ufn_weight(1e6, 1.0) >= 0.0);
    }

    #[test]
    fn ufn_monotone() {
        let grid: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.25).collect();
        for beta in [0.5, 1.0, 2.0, 4.0] {
            for w in grid.windows(2) {
                assert!(ufn_weight(w[1], beta) <= ufn_weight(w[0], beta));
            }
        }
        for s in grid.iter().filter(|&&s| s > 0.0) {
            for b in [0.0, 0.5, 1.0, 2.0, 4.0f64].windows(2) {
                assert!(ufn_weight(*s, b[1]) <= ufn_weight(*s, b[0]));
            }
        }
    }

    #[test]
    fn dpr_with_zero_scores_and_ufn_is_ln2() {
        let p = MFParams::zeros(1, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = test_gamma(3, 2.0, &mut rng);
        let b = TripletBatch { triples: vec![Triple { user: 0, pos: 0, neg: 2 }] };
        let out = dpr(&b, &p, &g, &hp(0.0, 1.0), true).unwrap();
        assert!((out.value - 2f64.ln()).abs() < 1e-15);
        assert!(dpr(&b, &p, &GammaTable::ones(2), &hp(0.0, 1.0), true).is_err());
    }

    #[test]
    fn dpr_alpha_zero_equals_bpr() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(6, 9, 4, 1.0, &mut rng);
        let b = random_triples(6, 9, 20, &mut rng);
        let g = test_gamma(9, 0.0, &mut rng);
        let h = hp(1e-3, 1.0);
        let a = bpr(&b, &p, &h).unwrap();
        let d = dpr(&b, &p, &g, &h, false).unwrap();
        assert!((a.value - d.value).abs() < 1e-12);
        for (r, row) in a.grads.items.iter() {
            let other = d.grads.items.get(r).unwrap();
            assert!(row.iter().zip(other).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn ubpr_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(4, 6, 4, 0.5, &mut rng);
        let b = random_triples(4, 6, 10, &mut rng);
        let h = hp(0.0, 1.0);
        let base = bpr(&b, &p, &h).unwrap().value;
        let ones = PropensityTable::uniform(6, 1.0, 1.0);
        assert!((ubpr(&b, &p, &ones, &h).unwrap().value - base).abs() < 1e-14);
        let half = PropensityTable::uniform(6, 0.5, 1.0);
        assert!((ubpr(&b, &p, &half, &h).unwrap().value - 2.0 * base).abs() < 1e-14);
    }

    #[test]
    fn pointwise_reduce_to_bce() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_params(4, 6, 4, 0.5, &mut rng);
        let b = random_points(4, 6, 12, &mut rng);
        let h = hp(0.0, 1.0);
        let ones = PropensityTable::uniform(6, 1.0, 1.0);
        let bce: f64 = b
            .examples
            .iter()
            .map(|e| {
                let s = naive_sig(naive_dot(&p, e.user, e.item));
                if e.label { -s.ln() } else { -(1.0 - s).ln() }
            })
            .sum::<f64>()
            / 12.0;
        assert!((relmf(&b, &p, &ones, &h).unwrap().value - bce).abs() < 1e-12);
        assert!((mfdu(&b, &p, &ones, &h).unwrap().value - bce).abs() < 1e-12);

        let z = MFParams::zeros(1, 1, 2);
        let neg = PointBatch { examples: vec![PointExample { user: 0, item: 0, label: false }] };
        let one = PropensityTable::uniform(1, 1.0, 1.0);
        let rel = relmf(&neg, &z, &one, &h).unwrap().value;
        assert!((rel + 0.5f64.ln()).abs() < 1e-15);
        let th = PropensityTable::uniform(1, 1.0, 0.5);
        let md = mfdu(&neg, &z, &th, &h).unwrap().value;
        assert!((md + 2.0 * 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn values_match_naive_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = random_params(7, 11, 4, 1.5, &mut rng);
            let b = random_triples(7, 11, 16, &mut rng);
            let pts = random_points(7, 11, 16, &mut rng);
            let g = test_gamma(11, 2.0, &mut rng);
            let th = test_theta(11, &mut rng);
            let h = hp(1e-2, 1.5);
            let tol = 1e-12;
            assert!(close(bpr(&b, &p, &h).unwrap().value, naive_pairwise(&b, &p, h.l2, &Kind::Bpr), tol));
            assert!(close(
                dpr(&b, &p, &g, &h, false).unwrap().value,
                naive_pairwise(&b, &p, h.l2, &Kind::Dpr(&g.gamma, None)),
                tol
            ));
            assert!(close(
                dpr(&b, &p, &g, &h, true).unwrap().value,
                naive_pairwise(&b, &p, h.l2, &Kind::Dpr(&g.gamma, Some(h.beta))),
                tol
            ));
            assert!(close(
                ubpr(&b, &p, &th, &h).unwrap().value,
                naive_pairwise(&b, &p, h.l2, &Kind::Ubpr(&th.theta_pos)),
                tol
            ));
            assert!(close(
                relmf(&pts, &p, &th, &h).unwrap().value,
                naive_pointwise(&pts, &p, h.l2, &th.theta_pos, None),
                tol
            ));
            assert!(close(
                mfdu(&pts, &p, &th, &h).unwrap().value,
                naive_pointwise(&pts, &p, h.l2, &th.theta_pos, Some(&th.theta_neg)),
                tol
            ));
        }
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_params(5, 8, 4, 1.0, &mut rng);
        let b = random_triples(5, 8, 12, &mut rng);
        let g = test_gamma(8, 3.0, &mut rng);
        let h = hp(1e-3, 1.0);
        let mut rev = b.clone();
        rev.triples.reverse();
        let a = dpr(&b, &p, &g, &h, true).unwrap();
        let r = dpr(&rev, &p, &g, &h, true).unwrap();
        assert!((a.value - r.value).abs() < 1e-13);
        // doubling the batch leaves the mean unchanged
        let mut twice = b.clone();
        twice.triples.extend(b.triples.iter().copied());
        assert!((dpr(&twice, &p, &g, &h, true).unwrap().value - a.value).abs() < 1e-13);
    }

    #[test]
    fn untouched_rows_have_no_gradient() {
        let p = MFParams::init(4, 6, &Hyperparams { dim: 3, ..Hyperparams::default() }).unwrap();
        let b = TripletBatch { triples: vec![Triple { user: 2, pos: 1, neg: 4 }] };
        let out = bpr(&b, &p, &hp(1e-3, 1.0)).unwrap();
        assert_eq!(out.grads.users.rows(), &[2]);
        let mut items = out.grads.items.rows().to_vec();
        items.sort();
        assert_eq!(items, vec![1, 4]);
    }
}
