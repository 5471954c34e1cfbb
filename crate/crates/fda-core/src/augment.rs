//! Fake-interaction generation: cross-group quadruple sampling, bounded
//! per-item perturbations, the fake-data loss, and the mask operation.
//!
//! A fake record asserts that a user in one group shares the click (or
//! non-click) preference of a user in the other group on a "similar" item,
//! where the similar item is the original item's embedding plus a bounded
//! noise vector. The noise is the inner-level variable of the bi-level
//! objective and is optimized to make the fake records plausible.

use rand::Rng;

use crate::backbone::{neg_log_sigmoid, sigmoid, EmbeddingTable, GradAccum, MfRepr, Representer, Row};
use crate::dataset::InteractionDataset;
use crate::{FdaError, Result};

/// A paired cross-group sample: a real triple from each group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadruple {
    pub u0: u32,
    pub i0: u32,
    pub j0: u32,
    pub u1: u32,
    pub i1: u32,
    pub j1: u32,
}

/// Cached per-group user lists for quadruple sampling.
pub struct QuadrupleSampler {
    g0_users: Vec<u32>,
    g1_users: Vec<u32>,
}

impl QuadrupleSampler {
    pub fn new(ds: &InteractionDataset) -> Result<Self> {
        let g0_users = ds.trainable_users(0);
        let g1_users = ds.trainable_users(1);
        for (g, users) in [(0u8, &g0_users), (1u8, &g1_users)] {
            if users.is_empty() {
                return Err(FdaError::InvalidDataset(format!(
                    "group {g} has no user with training interactions"
                )));
            }
        }
        Ok(QuadrupleSampler { g0_users, g1_users })
    }

    fn sample_side(&self, ds: &InteractionDataset, users: &[u32], rng: &mut impl Rng) -> (u32, u32, u32) {
        let u = users[rng.gen_range(0..users.len())];
        let positives = &ds.train[u as usize];
        let i = positives[rng.gen_range(0..positives.len())];
        let j = loop {
            let cand = rng.gen_range(0..ds.num_items as u32);
            if !ds.in_train(u, cand) {
                break cand;
            }
        };
        (u, i, j)
    }

    /// Draws one quadruple: independent uniform triples from each group.
    pub fn sample(&self, ds: &InteractionDataset, rng: &mut impl Rng) -> Quadruple {
        let (u0, i0, j0) = self.sample_side(ds, &self.g0_users, rng);
        let (u1, i1, j1) = self.sample_side(ds, &self.g1_users, rng);
        Quadruple { u0, i0, j0, u1, i1, j1 }
    }

    pub fn sample_batch(&self, ds: &InteractionDataset, n: usize, rng: &mut impl Rng) -> Vec<Quadruple> {
        (0..n).map(|_| self.sample(ds, rng)).collect()
    }
}

/// Draws `batch_size` cross-group quadruples.
pub fn sample_quadruples(
    ds: &InteractionDataset,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Quadruple>> {
    let sampler = QuadrupleSampler::new(ds)?;
    Ok(sampler.sample_batch(ds, batch_size, rng))
}

/// The inner-level variables: one bounded noise vector per item.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    pub dim: usize,
    pub num_items: usize,
    pub epsilon: f32,
    pub delta: Vec<f32>,
}

impl PerturbationSet {
    /// Entries i.i.d. uniform on `[-epsilon, epsilon]`.
    pub fn init(num_items: usize, dim: usize, epsilon: f32, rng: &mut impl Rng) -> Self {
        assert!(epsilon >= 0.0);
        let delta = (0..num_items * dim)
            .map(|_| {
                if epsilon == 0.0 {
                    0.0
                } else {
                    rng.gen_range(-epsilon..=epsilon)
                }
            })
            .collect();
        PerturbationSet {
            dim,
            num_items,
            epsilon,
            delta,
        }
    }

    pub fn zeros(num_items: usize, dim: usize, epsilon: f32) -> Self {
        PerturbationSet {
            dim,
            num_items,
            epsilon,
            delta: vec![0.0; num_items * dim],
        }
    }

    pub fn row(&self, v: usize) -> &[f32] {
        &self.delta[v * self.dim..(v + 1) * self.dim]
    }

    /// Elementwise projection onto the `[-epsilon, epsilon]` box.
    pub fn clamp_row(&mut self, v: usize) {
        let eps = self.epsilon;
        for x in &mut self.delta[v * self.dim..(v + 1) * self.dim] {
            *x = x.clamp(-eps, eps);
        }
    }

    pub fn max_abs(&self) -> f32 {
        self.delta.iter().fold(0.0f32, |m, &x| m.max(x.abs()))
    }
}

fn perturbed_score(user: &[f64], item: &[f64], delta: &[f32]) -> f64 {
    let mut acc = 0.0;
    for ((u, i), d) in user.iter().zip(item).zip(delta) {
        acc += u * (i + *d as f64);
    }
    acc
}

fn plain_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-quadruple representation buffers, reused across a batch.
pub(crate) struct QuadReprs {
    pub eu0: Vec<f64>,
    pub eu1: Vec<f64>,
    pub ei0: Vec<f64>,
    pub ei1: Vec<f64>,
    pub ej0: Vec<f64>,
    pub ej1: Vec<f64>,
}

impl QuadReprs {
    pub fn new(dim: usize) -> Self {
        QuadReprs {
            eu0: vec![0.0; dim],
            eu1: vec![0.0; dim],
            ei0: vec![0.0; dim],
            ei1: vec![0.0; dim],
            ej0: vec![0.0; dim],
            ej1: vec![0.0; dim],
        }
    }

    pub fn load(&mut self, repr: &impl Representer, q: &Quadruple) {
        repr.user_repr(q.u0, &mut self.eu0);
        repr.user_repr(q.u1, &mut self.eu1);
        repr.item_repr(q.i0, &mut self.ei0);
        repr.item_repr(q.i1, &mut self.ei1);
        repr.item_repr(q.j0, &mut self.ej0);
        repr.item_repr(q.j1, &mut self.ej1);
    }
}

/// The four perturbed cross-scores of a quadruple, in the order
/// (fake positive for u1, fake positive for u0, fake negative for u1,
/// fake negative for u0).
pub fn fake_scores(table: &EmbeddingTable, theta: &PerturbationSet, q: &Quadruple) -> [f64; 4] {
    fake_scores_repr(&MfRepr { table }, theta, q)
}

pub fn fake_scores_repr(
    repr: &impl Representer,
    theta: &PerturbationSet,
    q: &Quadruple,
) -> [f64; 4] {
    let mut b = QuadReprs::new(repr.dim());
    b.load(repr, q);
    [
        perturbed_score(&b.eu1, &b.ei0, theta.row(q.i0 as usize)),
        perturbed_score(&b.eu0, &b.ei1, theta.row(q.i1 as usize)),
        perturbed_score(&b.eu1, &b.ej0, theta.row(q.j0 as usize)),
        perturbed_score(&b.eu0, &b.ej1, theta.row(q.j1 as usize)),
    ]
}

/// The four score gaps of the fake-data loss for one quadruple:
/// two fake-positive-vs-real-negative gaps, then two
/// real-positive-vs-fake-negative gaps.
fn inner_gaps(b: &QuadReprs, theta: &PerturbationSet, q: &Quadruple) -> [f64; 4] {
    let s1 = perturbed_score(&b.eu0, &b.ei1, theta.row(q.i1 as usize)) - plain_dot(&b.eu0, &b.ej0);
    let s2 = perturbed_score(&b.eu1, &b.ei0, theta.row(q.i0 as usize)) - plain_dot(&b.eu1, &b.ej1);
    let s3 = plain_dot(&b.eu0, &b.ei0) - perturbed_score(&b.eu0, &b.ej1, theta.row(q.j1 as usize));
    let s4 = plain_dot(&b.eu1, &b.ei1) - perturbed_score(&b.eu1, &b.ej0, theta.row(q.j0 as usize));
    [s1, s2, s3, s4]
}

/// Fake-data loss: the sum over the batch of the four `-ln sigma` terms.
pub fn inner_loss(table: &EmbeddingTable, theta: &PerturbationSet, batch: &[Quadruple]) -> f64 {
    inner_loss_repr(&MfRepr { table }, theta, batch)
}

pub fn inner_loss_repr(
    repr: &impl Representer,
    theta: &PerturbationSet,
    batch: &[Quadruple],
) -> f64 {
    inner_loss_terms(repr, theta, batch, true, true)
}

/// [`inner_loss_repr`] restricted to a hypothesis subset: `use_h1` keeps the
/// two fake-positive terms, `use_h2` the two fake-negative terms.
pub fn inner_loss_terms(
    repr: &impl Representer,
    theta: &PerturbationSet,
    batch: &[Quadruple],
    use_h1: bool,
    use_h2: bool,
) -> f64 {
    assert!(!batch.is_empty());
    assert!(use_h1 || use_h2);
    let mut b = QuadReprs::new(repr.dim());
    let mut total = 0.0;
    for q in batch {
        b.load(repr, q);
        let [s1, s2, s3, s4] = inner_gaps(&b, theta, q);
        if use_h1 {
            total += neg_log_sigmoid(s1) + neg_log_sigmoid(s2);
        }
        if use_h2 {
            total += neg_log_sigmoid(s3) + neg_log_sigmoid(s4);
        }
    }
    total
}

/// Analytic gradient of the fake-data loss w.r.t. the perturbations.
/// Rows are item indices into the perturbation matrix.
pub fn inner_gradients(
    repr: &impl Representer,
    theta: &PerturbationSet,
    batch: &[Quadruple],
) -> GradAccum {
    inner_gradients_terms(repr, theta, batch, true, true)
}

pub fn inner_gradients_terms(
    repr: &impl Representer,
    theta: &PerturbationSet,
    batch: &[Quadruple],
    use_h1: bool,
    use_h2: bool,
) -> GradAccum {
    assert!(!batch.is_empty());
    assert!(use_h1 || use_h2);
    let mut acc = GradAccum::new(repr.dim());
    let mut b = QuadReprs::new(repr.dim());
    for q in batch {
        b.load(repr, q);
        let [s1, s2, s3, s4] = inner_gaps(&b, theta, q);
        // d(-ln sigma(s))/ds = sigma(s) - 1
        if use_h1 {
            acc.add(Row(q.i1 as usize), sigmoid(s1) - 1.0, &b.eu0);
            acc.add(Row(q.i0 as usize), sigmoid(s2) - 1.0, &b.eu1);
        }
        if use_h2 {
            acc.add(Row(q.j1 as usize), -(sigmoid(s3) - 1.0), &b.eu0);
            acc.add(Row(q.j0 as usize), -(sigmoid(s4) - 1.0), &b.eu1);
        }
    }
    acc
}

/// One Adam step on the perturbations against the fake-data loss with the
/// embeddings frozen, followed by projection onto the epsilon box.
/// Returns the pre-step loss.
pub fn inner_step(
    repr: &impl Representer,
    theta: &mut PerturbationSet,
    batch: &[Quadruple],
    adam: &mut crate::backbone::AdamState,
) -> Result<f64> {
    inner_step_terms(repr, theta, batch, adam, true, true)
}

/// [`inner_step`] restricted to a hypothesis subset.
pub fn inner_step_terms(
    repr: &impl Representer,
    theta: &mut PerturbationSet,
    batch: &[Quadruple],
    adam: &mut crate::backbone::AdamState,
    use_h1: bool,
    use_h2: bool,
) -> Result<f64> {
    let loss = inner_loss_terms(repr, theta, batch, use_h1, use_h2);
    if !loss.is_finite() {
        return Err(FdaError::NonFiniteGradient);
    }
    let grads = inner_gradients_terms(repr, theta, batch, use_h1, use_h2);
    let bc = adam.begin_step();
    let dim = theta.dim;
    for (row, g) in grads.iter() {
        adam.update_span(&mut theta.delta, row.0 * dim, g, bc)?;
        theta.clamp_row(row.0);
    }
    Ok(loss)
}

/// Binary per-item fake-data selector with capacity `max_mask`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskVector {
    pub bits: Vec<bool>,
    pub max_mask: usize,
}

impl MaskVector {
    pub fn all_zeros(num_items: usize) -> Self {
        MaskVector {
            bits: vec![false; num_items],
            max_mask: 0,
        }
    }

    pub fn selected(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, v: u32) -> bool {
        self.bits[v as usize]
    }
}

/// Selects exactly `floor(ratio * num_items)` items uniformly without
/// replacement.
pub fn sample_mask(num_items: usize, ratio: f64, rng: &mut impl Rng) -> MaskVector {
    assert!((0.0..=1.0).contains(&ratio), "ratio must be in [0,1]");
    let max_mask = (ratio * num_items as f64).floor() as usize;
    let mut bits = vec![false; num_items];
    if max_mask > 0 {
        for idx in rand::seq::index::sample(rng, num_items, max_mask) {
            bits[idx] = true;
        }
    }
    MaskVector { bits, max_mask }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{AdamParams, AdamState};
    use crate::seeding;
    use crate::synth::{planted_skew, SynthConfig};
    use std::f64::consts::LN_2;

    fn toy() -> InteractionDataset {
        planted_skew(&SynthConfig::tiny(), 42)
    }

    fn table(ds: &InteractionDataset, dim: usize, seed: u64) -> EmbeddingTable {
        let mut rng = seeding::stream(seed, "emb");
        EmbeddingTable::init(ds.num_users, ds.num_items, dim, &mut rng)
    }

    #[test]
    fn quadruples_satisfy_invariants() {
        let ds = toy();
        let mut rng = seeding::stream(0, "quads");
        for q in sample_quadruples(&ds, 500, &mut rng).unwrap() {
            assert_eq!(ds.group_label[q.u0 as usize], 0);
            assert_eq!(ds.group_label[q.u1 as usize], 1);
            assert!(ds.in_train(q.u0, q.i0));
            assert!(!ds.in_train(q.u0, q.j0));
            assert!(ds.in_train(q.u1, q.i1));
            assert!(!ds.in_train(q.u1, q.j1));
        }
    }

    #[test]
    fn quadruples_deterministic_per_seed() {
        let ds = toy();
        let mut a = seeding::stream(3, "quads");
        let mut b = seeding::stream(3, "quads");
        assert_eq!(
            sample_quadruples(&ds, 50, &mut a).unwrap(),
            sample_quadruples(&ds, 50, &mut b).unwrap()
        );
    }

    #[test]
    fn quadruple_sampling_rejects_empty_group() {
        let mut ds = toy();
        for (u, label) in ds.group_label.iter().enumerate() {
            if *label == 1 {
                ds.train[u].clear();
            }
        }
        assert!(QuadrupleSampler::new(&ds).is_err());
    }

    #[test]
    fn quadruple_item_frequencies_uniform() {
        // 2 trainable users (one per group), each with positives over a
        // small item set; positive picks should be uniform within 3 sigma.
        let ds = InteractionDataset {
            num_users: 2,
            num_items: 4,
            train: vec![vec![0, 1, 2], vec![1, 2, 3]],
            validation: vec![vec![], vec![]],
            test: vec![vec![], vec![]],
            group_label: vec![0, 1],
            user_ids: vec!["a".into(), "b".into()],
            item_ids: (0..4).map(|i| format!("i{i}")).collect(),
        };
        let n = 100_000;
        let mut rng = seeding::stream(8, "uniform");
        let quads = sample_quadruples(&ds, n, &mut rng).unwrap();
        let mut counts = [0usize; 3];
        for q in &quads {
            counts[q.i0 as usize] += 1;
        }
        let expect = n as f64 / 3.0;
        let sigma = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - expect).abs() < 3.0 * sigma,
                "count {c} vs expected {expect}"
            );
        }
    }

    #[test]
    fn perturbation_init_respects_bound() {
        let mut rng = seeding::stream(1, "theta");
        let theta = PerturbationSet::init(50, 8, 0.05, &mut rng);
        assert!(theta.max_abs() <= 0.05);
    }

    #[test]
    fn perturbation_init_deterministic() {
        let mut a = seeding::stream(2, "theta");
        let mut b = seeding::stream(2, "theta");
        assert_eq!(
            PerturbationSet::init(10, 4, 0.05, &mut a),
            PerturbationSet::init(10, 4, 0.05, &mut b)
        );
    }

    #[test]
    fn fake_scores_reduce_to_real_cross_scores_at_zero() {
        let ds = toy();
        let t = table(&ds, 8, 5);
        let theta = PerturbationSet::zeros(ds.num_items, 8, 0.05);
        let mut rng = seeding::stream(5, "quads");
        let q = sample_quadruples(&ds, 1, &mut rng).unwrap()[0];
        let [a, b, c, d] = fake_scores(&t, &theta, &q);
        assert!((a - t.score(q.u1 as usize, q.i0 as usize)).abs() < 1e-12);
        assert!((b - t.score(q.u0 as usize, q.i1 as usize)).abs() < 1e-12);
        assert!((c - t.score(q.u1 as usize, q.j0 as usize)).abs() < 1e-12);
        assert!((d - t.score(q.u0 as usize, q.j1 as usize)).abs() < 1e-12);
    }

    #[test]
    fn sign_aligned_noise_raises_fake_positive_score() {
        let ds = toy();
        let t = table(&ds, 2, 6);
        let mut rng = seeding::stream(6, "quads");
        let q = sample_quadruples(&ds, 1, &mut rng).unwrap()[0];
        let eps = 0.05f32;
        let mut theta = PerturbationSet::zeros(ds.num_items, 2, eps);
        let u1 = t.user(q.u1 as usize).to_vec();
        for (k, x) in theta.delta[q.i0 as usize * 2..q.i0 as usize * 2 + 2]
            .iter_mut()
            .enumerate()
        {
            *x = eps * u1[k].signum();
        }
        let zero = PerturbationSet::zeros(ds.num_items, 2, eps);
        assert!(fake_scores(&t, &theta, &q)[0] > fake_scores(&t, &zero, &q)[0]);
    }

    #[test]
    fn fake_score_linear_in_one_delta_entry() {
        let ds = toy();
        let t = table(&ds, 4, 9);
        let mut rng = seeding::stream(9, "quads");
        let q = sample_quadruples(&ds, 1, &mut rng).unwrap()[0];
        let mut theta = PerturbationSet::zeros(ds.num_items, 4, 1.0);
        let base = fake_scores(&t, &theta, &q)[0];
        let h = 0.25f32;
        theta.delta[q.i0 as usize * 4 + 2] += h;
        let bumped = fake_scores(&t, &theta, &q)[0];
        let expected = h as f64 * t.user(q.u1 as usize)[2] as f64;
        assert!((bumped - base - expected).abs() < 1e-9);
    }

    #[test]
    fn inner_loss_at_zero_matches_cross_group_bpr() {
        let ds = toy();
        let t = table(&ds, 8, 7);
        let theta = PerturbationSet::zeros(ds.num_items, 8, 0.05);
        let mut rng = seeding::stream(7, "quads");
        let batch = sample_quadruples(&ds, 20, &mut rng).unwrap();
        let got = inner_loss(&t, &theta, &batch);
        let mut expected = 0.0;
        for q in &batch {
            let (u0, u1) = (q.u0 as usize, q.u1 as usize);
            expected += neg_log_sigmoid(t.score(u0, q.i1 as usize) - t.score(u0, q.j0 as usize));
            expected += neg_log_sigmoid(t.score(u1, q.i0 as usize) - t.score(u1, q.j1 as usize));
            expected += neg_log_sigmoid(t.score(u0, q.i0 as usize) - t.score(u0, q.j1 as usize));
            expected += neg_log_sigmoid(t.score(u1, q.i1 as usize) - t.score(u1, q.j0 as usize));
        }
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn inner_loss_all_zero_embeddings() {
        let ds = toy();
        let t = EmbeddingTable::zeros(ds.num_users, ds.num_items, 4);
        let theta = PerturbationSet::zeros(ds.num_items, 4, 0.05);
        let mut rng = seeding::stream(8, "quads");
        let batch = sample_quadruples(&ds, 3, &mut rng).unwrap();
        let got = inner_loss(&t, &theta, &batch);
        assert!((got - 3.0 * 4.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn inner_loss_symmetric_under_group_swap() {
        let ds = toy();
        let t = table(&ds, 8, 11);
        let theta = PerturbationSet::zeros(ds.num_items, 8, 0.05);
        let mut rng = seeding::stream(11, "quads");
        let batch = sample_quadruples(&ds, 10, &mut rng).unwrap();
        let swapped: Vec<Quadruple> = batch
            .iter()
            .map(|q| Quadruple {
                u0: q.u1,
                i0: q.i1,
                j0: q.j1,
                u1: q.u0,
                i1: q.i0,
                j1: q.j0,
            })
            .collect();
        let a = inner_loss(&t, &theta, &batch);
        let b = inner_loss(&t, &theta, &swapped);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn inner_gradients_match_finite_differences() {
        for seed in 0..50u64 {
            let ds = toy();
            let t = table(&ds, 4, seed);
            let mut trng = seeding::stream(seed, "theta");
            let mut theta = PerturbationSet::init(ds.num_items, 4, 0.05, &mut trng);
            let mut qrng = seeding::stream(seed, "quads");
            let batch = sample_quadruples(&ds, 2, &mut qrng).unwrap();
            let repr = MfRepr { table: &t };
            let grads = inner_gradients(&repr, &theta, &batch);
            let h = 1e-4f32;
            for (row, g) in grads.iter() {
                for (k, &gk) in g.iter().enumerate() {
                    let idx = row.0 * 4 + k;
                    let orig = theta.delta[idx];
                    // the bump rounds to f32, so divide by the realized span
                    let (up, down) = (orig + h, orig - h);
                    theta.delta[idx] = up;
                    let lp = inner_loss(&t, &theta, &batch);
                    theta.delta[idx] = down;
                    let lm = inner_loss(&t, &theta, &batch);
                    theta.delta[idx] = orig;
                    let fd = (lp - lm) / (up as f64 - down as f64);
                    let denom = gk.abs().max(fd.abs()).max(1e-8);
                    assert!(
                        (gk - fd).abs() / denom < 1e-5,
                        "seed {seed} row {row:?} k {k}: {gk} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn inner_step_with_zero_epsilon_keeps_theta_zero() {
        let ds = toy();
        let t = table(&ds, 4, 13);
        let mut theta = PerturbationSet::zeros(ds.num_items, 4, 0.0);
        let mut adam = AdamState::new(theta.delta.len(), AdamParams::default());
        let mut rng = seeding::stream(13, "quads");
        let batch = sample_quadruples(&ds, 4, &mut rng).unwrap();
        let repr = MfRepr { table: &t };
        inner_step(&repr, &mut theta, &batch, &mut adam).unwrap();
        assert!(theta.delta.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn inner_step_respects_bound_and_decreases_loss() {
        let ds = toy();
        let t = table(&ds, 8, 14);
        let eps = 0.05f32;
        let mut trng = seeding::stream(14, "theta");
        let mut theta = PerturbationSet::init(ds.num_items, 8, eps, &mut trng);
        let mut adam = AdamState::new(theta.delta.len(), AdamParams::default());
        let mut rng = seeding::stream(14, "quads");
        let batch = sample_quadruples(&ds, 8, &mut rng).unwrap();
        let repr = MfRepr { table: &t };
        let mut losses = Vec::new();
        for _ in 0..150 {
            losses.push(inner_step(&repr, &mut theta, &batch, &mut adam).unwrap());
            assert!(theta.max_abs() <= eps);
        }
        let early: f64 = losses[..50].iter().sum();
        let late: f64 = losses[100..150].iter().sum();
        assert!(late < early, "inner loss did not decrease: {early} -> {late}");
    }

    #[test]
    fn mask_ratio_zero_and_one() {
        let mut rng = seeding::stream(1, "mask");
        let zero = sample_mask(10, 0.0, &mut rng);
        assert_eq!(zero.selected(), 0);
        let one = sample_mask(10, 1.0, &mut rng);
        assert_eq!(one.selected(), 10);
    }

    #[test]
    fn mask_selects_floor_of_ratio() {
        let mut rng = seeding::stream(2, "mask");
        let m = sample_mask(37, 0.3, &mut rng);
        assert_eq!(m.selected(), 11);
        assert_eq!(m.max_mask, 11);
    }

    #[test]
    fn mask_deterministic_per_seed() {
        let mut a = seeding::stream(3, "mask");
        let mut b = seeding::stream(3, "mask");
        assert_eq!(sample_mask(100, 0.5, &mut a), sample_mask(100, 0.5, &mut b));
    }
}
