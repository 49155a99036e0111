//! Helpers shared by the integration and acceptance targets.
#![allow(dead_code)]

use debiasrank::exposure::{gamma, propensities, PopularityTable, DEFAULT_PROPENSITY_FLOOR};
use debiasrank::losses::{self, LossOutput, PointBatch, PointExample, Triple, TripletBatch};
use debiasrank::model::{Gradients, Hyperparams, MFParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Model with entries uniform in [-scale, scale].
pub fn random_params(m: usize, n: usize, d: usize, scale: f64, rng: &mut impl Rng) -> MFParams {
    let mut p = MFParams::zeros(m, n, d);
    p.user_factors.iter_mut().for_each(|x| *x = rng.random_range(-scale..scale));
    p.item_factors.iter_mut().for_each(|x| *x = rng.random_range(-scale..scale));
    p
}

pub fn random_triples(m: usize, n: usize, len: usize, rng: &mut impl Rng) -> TripletBatch {
    let triples = (0..len)
        .map(|_| {
            let pos = rng.random_range(0..n);
            let mut neg = rng.random_range(0..n - 1);
            if neg >= pos {
                neg += 1;
            }
            Triple { user: rng.random_range(0..m), pos, neg }
        })
        .collect();
    TripletBatch { triples }
}

pub fn random_points(m: usize, n: usize, len: usize, rng: &mut impl Rng) -> PointBatch {
    let examples = (0..len)
        .map(|k| PointExample { user: rng.random_range(0..m), item: rng.random_range(0..n), label: k % 2 == 0 })
        .collect();
    PointBatch { examples }
}

pub fn random_popularity(n: usize, rng: &mut impl Rng) -> PopularityTable {
    let counts: Vec<usize> = (0..n).map(|_| rng.random_range(1..50)).collect();
    PopularityTable::from_counts(&counts)
}

/// Flattened analytic gradient in the order users then items, zero for untouched rows.
pub fn flatten(grads: &Gradients, p: &MFParams) -> Vec<f64> {
    let mut out = vec![0.0; p.user_factors.len() + p.item_factors.len()];
    for (row, g) in grads.users.iter() {
        out[row * p.dim..(row + 1) * p.dim].copy_from_slice(g);
    }
    let off = p.user_factors.len();
    for (row, g) in grads.items.iter() {
        out[off + row * p.dim..off + (row + 1) * p.dim].copy_from_slice(g);
    }
    out
}

fn entry(q: &mut MFParams, idx: usize) -> &mut f64 {
    let nu = q.user_factors.len();
    if idx < nu {
        &mut q.user_factors[idx]
    } else {
        &mut q.item_factors[idx - nu]
    }
}

/// Central differences of `f` over every parameter.
pub fn numeric_grad(p: &MFParams, f: &dyn Fn(&MFParams) -> f64) -> Vec<f64> {
    let mut q = p.clone();
    let total = p.user_factors.len() + p.item_factors.len();
    (0..total)
        .map(|idx| {
            let orig = *entry(&mut q, idx);
            *entry(&mut q, idx) = orig + FD_STEP;
            let up = f(&q);
            *entry(&mut q, idx) = orig - FD_STEP;
            let down = f(&q);
            *entry(&mut q, idx) = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// One gradient-check case: a named loss evaluated on fixed inputs.
pub struct GradCase {
    pub name: String,
    pub eval: Box<dyn Fn(&MFParams) -> LossOutput>,
}

/// Every loss (`dpr` with and without UFN at several β) on a batch of
/// `batch` examples over a `d`-dimensional model.
pub fn grad_cases(seed: u64, d: usize, batch: usize) -> (MFParams, Vec<GradCase>) {
    let (m, n) = (6, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_params(m, n, d, 0.8, &mut rng);
    let triples = random_triples(m, n, batch, &mut rng);
    let points = random_points(m, n, batch, &mut rng);
    let pop = random_popularity(n, &mut rng);
    let g = gamma(&pop, 2.0).unwrap();
    let theta = propensities(&pop, 0.5, DEFAULT_PROPENSITY_FLOOR).unwrap();
    let hp = Hyperparams { l2: 1e-3, ..Hyperparams::default() };
    let mut cases: Vec<GradCase> = Vec::new();
    {
        let (t, hp) = (triples.clone(), hp.clone());
        cases.push(GradCase { name: "bpr".into(), eval: Box::new(move |p| losses::bpr(&t, p, &hp).unwrap()) });
    }
    {
        let (t, g, hp) = (triples.clone(), g.clone(), hp.clone());
        cases.push(GradCase {
            name: "dpr-no-ufn".into(),
            eval: Box::new(move |p| losses::dpr(&t, p, &g, &hp, false).unwrap()),
        });
    }
    for beta in [0.5, 1.0, 2.0] {
        let (t, g) = (triples.clone(), g.clone());
        let hp = Hyperparams { beta, ..hp.clone() };
        cases.push(GradCase {
            name: format!("dpr-ufn-beta{beta}"),
            eval: Box::new(move |p| losses::dpr(&t, p, &g, &hp, true).unwrap()),
        });
    }
    {
        let (t, th, hp) = (triples.clone(), theta.clone(), hp.clone());
        cases.push(GradCase { name: "ubpr".into(), eval: Box::new(move |p| losses::ubpr(&t, p, &th, &hp).unwrap()) });
    }
    {
        let (b, th, hp) = (points.clone(), theta.clone(), hp.clone());
        cases.push(GradCase { name: "relmf".into(), eval: Box::new(move |p| losses::relmf(&b, p, &th, &hp).unwrap()) });
    }
    {
        let (b, th, hp) = (points, theta, hp);
        cases.push(GradCase { name: "mfdu".into(), eval: Box::new(move |p| losses::mfdu(&b, p, &th, &hp).unwrap()) });
    }
    (params, cases)
}

/// Relative error between analytic and central-difference gradients.
pub fn check_case(params: &MFParams, case: &GradCase) -> f64 {
    let analytic = flatten(&(case.eval)(params).grads, params);
    let numeric = numeric_grad(params, &|q| (case.eval)(q).value);
    relative_error(&analytic, &numeric)
}
