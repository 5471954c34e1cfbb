//! The bi-level training loop: inner perturbation steps against the
//! fake-data loss, then outer embedding steps against the mask-mixed
//! augmented loss, alternating per batch.

use serde::{Deserialize, Serialize};

use crate::augment::{
    sample_mask, MaskVector, PerturbationSet, QuadReprs, Quadruple, QuadrupleSampler,
};
use crate::backbone::{
    neg_log_sigmoid, propagate_graph, sigmoid, Adjacency, AdamParams, AdamState, EmbeddingTable,
    GradAccum, GraphRepr, MfRepr, Representer,
};
use crate::dataset::InteractionDataset;
use crate::metrics::{self, TopKLists};
use crate::seeding;
use crate::{FdaError, Result};

/// Which encoder produces the scored representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Mf,
    /// Linear graph propagation over the train graph (one layer).
    Graph,
}

impl std::str::FromStr for BackboneKind {
    type Err = FdaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mf" => Ok(BackboneKind::Mf),
            "graph" => Ok(BackboneKind::Graph),
            other => Err(FdaError::InvalidConfig(format!("unknown backbone {other:?}"))),
        }
    }
}

/// Full training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub outer_lr: f64,
    pub inner_lr: f64,
    pub inner_steps_per_outer: usize,
    pub mask_ratio: f64,
    pub epsilon: f64,
    /// Plain-BPR epochs before the fake terms engage.
    pub warmup_epochs: usize,
    pub seed: u64,
    pub backbone: BackboneKind,
    pub eval_every: usize,
    pub k_list: Vec<usize>,
    /// Master switch; off means plain BPR throughout.
    pub fda: bool,
    /// Enable the fake-positive (clicked) hypothesis terms.
    pub hypothesis1: bool,
    /// Enable the fake-negative (non-clicked) hypothesis terms.
    pub hypothesis2: bool,
    /// Optional L2 weight decay on embedding rows (0 disables).
    pub weight_decay: f64,
    /// Re-draw the perturbations at the start of every epoch instead of
    /// letting them persist.
    pub reinit_theta_each_epoch: bool,
    /// Resample the mask per batch instead of per epoch.
    pub mask_per_batch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 64,
            epochs: 200,
            batch_size: 2048,
            outer_lr: 0.001,
            inner_lr: 0.001,
            inner_steps_per_outer: 1,
            mask_ratio: 0.3,
            epsilon: 0.05,
            warmup_epochs: 5,
            seed: 0,
            backbone: BackboneKind::Mf,
            eval_every: 10,
            k_list: vec![10, 20, 30, 40, 50],
            fda: true,
            hypothesis1: true,
            hypothesis2: true,
            weight_decay: 0.0,
            reinit_theta_each_epoch: false,
            mask_per_batch: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.dim == 0 {
            problems.push("dim must be positive".to_string());
        }
        if self.epochs == 0 {
            problems.push("epochs must be positive".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".to_string());
        }
        if !(self.outer_lr > 0.0) || !(self.inner_lr > 0.0) {
            problems.push("learning rates must be positive".to_string());
        }
        if self.inner_steps_per_outer == 0 {
            problems.push("inner_steps_per_outer must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            problems.push("mask_ratio must be in [0,1]".to_string());
        }
        if self.epsilon < 0.0 {
            problems.push("epsilon must be non-negative".to_string());
        }
        if self.warmup_epochs > self.epochs {
            problems.push("warmup_epochs must not exceed epochs".to_string());
        }
        if self.eval_every == 0 {
            problems.push("eval_every must be positive".to_string());
        }
        if self.k_list.is_empty() || self.k_list.iter().any(|&k| k == 0) {
            problems.push("k_list must be non-empty with positive entries".to_string());
        }
        if self.fda && !(self.hypothesis1 || self.hypothesis2) {
            problems.push("at least one hypothesis must be enabled when fda is on".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(FdaError::InvalidConfig(problems.join("; ")))
        }
    }
}

/// Metric values at one K.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct KMetrics {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
    pub dp: f64,
    pub eo: f64,
}

/// One epoch's log entry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub outer_loss: f64,
    pub inner_loss: Option<f64>,
    pub eval: Option<Vec<KMetrics>>,
}

pub type TrainLog = Vec<EpochRecord>;

/// Serializes the log as `log.csv`: epoch, outer_loss, inner_loss, then
/// hr/ndcg/dp/eo per configured K (blank on non-eval epochs).
pub fn log_to_csv(log: &TrainLog, k_list: &[usize]) -> String {
    let mut out = String::from("epoch,outer_loss,inner_loss");
    for k in k_list {
        out.push_str(&format!(",hr@{k},ndcg@{k},dp@{k},eo@{k}"));
    }
    out.push('\n');
    for rec in log {
        out.push_str(&format!("{},{}", rec.epoch, rec.outer_loss));
        match rec.inner_loss {
            Some(l) => out.push_str(&format!(",{l}")),
            None => out.push(','),
        }
        match &rec.eval {
            Some(per_k) => {
                for m in per_k {
                    out.push_str(&format!(",{},{},{},{}", m.hr, m.ndcg, m.dp, m.eo));
                }
            }
            None => {
                for _ in k_list {
                    out.push_str(",,,,");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Backbone-selected representer over borrowed state.
enum ReprRef<'t> {
    Mf(MfRepr<'t>),
    Graph(GraphRepr<'t>),
}

impl<'t> ReprRef<'t> {
    fn new(table: &'t EmbeddingTable, adj: Option<&'t Adjacency>) -> Self {
        match adj {
            None => ReprRef::Mf(MfRepr { table }),
            Some(adj) => ReprRef::Graph(GraphRepr { table, adj }),
        }
    }
}

impl Representer for ReprRef<'_> {
    fn dim(&self) -> usize {
        match self {
            ReprRef::Mf(r) => r.dim(),
            ReprRef::Graph(r) => r.dim(),
        }
    }

    fn num_users(&self) -> usize {
        match self {
            ReprRef::Mf(r) => r.num_users(),
            ReprRef::Graph(r) => r.num_users(),
        }
    }

    fn user_repr(&self, u: u32, out: &mut [f64]) {
        match self {
            ReprRef::Mf(r) => r.user_repr(u, out),
            ReprRef::Graph(r) => r.user_repr(u, out),
        }
    }

    fn item_repr(&self, v: u32, out: &mut [f64]) {
        match self {
            ReprRef::Mf(r) => r.item_repr(v, out),
            ReprRef::Graph(r) => r.item_repr(v, out),
        }
    }

    fn scatter_user(&self, u: u32, coeff: f64, grad: &[f64], acc: &mut GradAccum) {
        match self {
            ReprRef::Mf(r) => r.scatter_user(u, coeff, grad, acc),
            ReprRef::Graph(r) => r.scatter_user(u, coeff, grad, acc),
        }
    }

    fn scatter_item(&self, v: u32, coeff: f64, grad: &[f64], acc: &mut GradAccum) {
        match self {
            ReprRef::Mf(r) => r.scatter_item(v, coeff, grad, acc),
            ReprRef::Graph(r) => r.scatter_item(v, coeff, grad, acc),
        }
    }
}

/// One ranked-pair slot: accumulates the loss term `-ln sigma(u·pos - u·neg)`
/// and its gradients through the three touched representations.
#[allow(clippy::too_many_arguments)]
fn ranked_slot(
    repr: &impl Representer,
    user: u32,
    u_buf: &[f64],
    pos_buf: &[f64],
    neg_buf: &[f64],
    pos_item: u32,
    neg_item: u32,
    diff: &mut [f64],
    acc: &mut GradAccum,
) -> f64 {
    let mut s = 0.0;
    for ((u, p), n) in u_buf.iter().zip(pos_buf).zip(neg_buf) {
        s += u * (p - n);
    }
    let g = sigmoid(s) - 1.0;
    for ((d, p), n) in diff.iter_mut().zip(pos_buf).zip(neg_buf) {
        *d = p - n;
    }
    repr.scatter_user(user, g, diff, acc);
    repr.scatter_item(pos_item, g, u_buf, acc);
    repr.scatter_item(neg_item, -g, u_buf, acc);
    neg_log_sigmoid(s)
}

struct OuterScratch {
    reprs: QuadReprs,
    fake: Vec<f64>,
    diff: Vec<f64>,
}

impl OuterScratch {
    fn new(dim: usize) -> Self {
        OuterScratch {
            reprs: QuadReprs::new(dim),
            fake: vec![0.0; dim],
            diff: vec![0.0; dim],
        }
    }
}

/// Adds `-ln sigma` terms and gradients of the mask-mixed augmented loss
/// for one quadruple. Slot order: u1-positive, u0-positive, u1-negative,
/// u0-negative.
#[allow(clippy::too_many_arguments)]
fn outer_quadruple(
    repr: &impl Representer,
    theta: &PerturbationSet,
    mask: &MaskVector,
    use_h1: bool,
    use_h2: bool,
    q: &Quadruple,
    scratch: &mut OuterScratch,
    acc: &mut GradAccum,
) -> f64 {
    scratch.reprs.load(repr, q);
    let b = &scratch.reprs;
    let mut loss = 0.0;

    // u1-positive slot: fake similar item from u0's click, else u1's own click
    if use_h1 && mask.get(q.i0) {
        let delta = theta.row(q.i0 as usize);
        for ((f, e), d) in scratch.fake.iter_mut().zip(&b.ei0).zip(delta) {
            *f = e + *d as f64;
        }
        loss += ranked_slot(
            repr, q.u1, &b.eu1, &scratch.fake, &b.ej1, q.i0, q.j1, &mut scratch.diff, acc,
        );
    } else {
        loss += ranked_slot(
            repr, q.u1, &b.eu1, &b.ei1, &b.ej1, q.i1, q.j1, &mut scratch.diff, acc,
        );
    }

    // u0-positive slot
    if use_h1 && mask.get(q.i1) {
        let delta = theta.row(q.i1 as usize);
        for ((f, e), d) in scratch.fake.iter_mut().zip(&b.ei1).zip(delta) {
            *f = e + *d as f64;
        }
        loss += ranked_slot(
            repr, q.u0, &b.eu0, &scratch.fake, &b.ej0, q.i1, q.j0, &mut scratch.diff, acc,
        );
    } else {
        loss += ranked_slot(
            repr, q.u0, &b.eu0, &b.ei0, &b.ej0, q.i0, q.j0, &mut scratch.diff, acc,
        );
    }

    // u1-negative slot: fake similar non-click from u0, else u1's own negative
    if use_h2 && mask.get(q.j0) {
        let delta = theta.row(q.j0 as usize);
        for ((f, e), d) in scratch.fake.iter_mut().zip(&b.ej0).zip(delta) {
            *f = e + *d as f64;
        }
        loss += ranked_slot(
            repr, q.u1, &b.eu1, &b.ei1, &scratch.fake, q.i1, q.j0, &mut scratch.diff, acc,
        );
    } else {
        loss += ranked_slot(
            repr, q.u1, &b.eu1, &b.ei1, &b.ej1, q.i1, q.j1, &mut scratch.diff, acc,
        );
    }

    // u0-negative slot
    if use_h2 && mask.get(q.j1) {
        let delta = theta.row(q.j1 as usize);
        for ((f, e), d) in scratch.fake.iter_mut().zip(&b.ej1).zip(delta) {
            *f = e + *d as f64;
        }
        loss += ranked_slot(
            repr, q.u0, &b.eu0, &b.ei0, &scratch.fake, q.i0, q.j1, &mut scratch.diff, acc,
        );
    } else {
        loss += ranked_slot(
            repr, q.u0, &b.eu0, &b.ei0, &b.ej0, q.i0, q.j0, &mut scratch.diff, acc,
        );
    }

    loss
}

/// The mask-mixed augmented loss over a batch, with the perturbations
/// treated as frozen values.
pub fn outer_loss(
    table: &EmbeddingTable,
    theta: &PerturbationSet,
    mask: &MaskVector,
    batch: &[Quadruple],
) -> f64 {
    let repr = MfRepr { table };
    let mut scratch = OuterScratch::new(table.dim);
    let mut acc = GradAccum::new(table.dim);
    batch
        .iter()
        .map(|q| outer_quadruple(&repr, theta, mask, true, true, q, &mut scratch, &mut acc))
        .sum()
}

/// Analytic gradients of [`outer_loss`] w.r.t. the embedding rows,
/// including the paths through the perturbed items.
pub fn outer_gradients(
    table: &EmbeddingTable,
    theta: &PerturbationSet,
    mask: &MaskVector,
    batch: &[Quadruple],
) -> GradAccum {
    let repr = MfRepr { table };
    let mut scratch = OuterScratch::new(table.dim);
    let mut acc = GradAccum::new(table.dim);
    for q in batch {
        outer_quadruple(&repr, theta, mask, true, true, q, &mut scratch, &mut acc);
    }
    acc
}

/// Plain pairwise-ranking step for one quadruple: the two real triples,
/// each counted once per slot of the augmented objective (so a zero-mask
/// augmented step and a plain step are the same computation).
fn plain_quadruple(
    repr: &impl Representer,
    q: &Quadruple,
    scratch: &mut OuterScratch,
    acc: &mut GradAccum,
) -> f64 {
    scratch.reprs.load(repr, q);
    let b = &scratch.reprs;
    let mut loss = 0.0;
    loss += ranked_slot(repr, q.u1, &b.eu1, &b.ei1, &b.ej1, q.i1, q.j1, &mut scratch.diff, acc);
    loss += ranked_slot(repr, q.u0, &b.eu0, &b.ei0, &b.ej0, q.i0, q.j0, &mut scratch.diff, acc);
    loss += ranked_slot(repr, q.u1, &b.eu1, &b.ei1, &b.ej1, q.i1, q.j1, &mut scratch.diff, acc);
    loss += ranked_slot(repr, q.u0, &b.eu0, &b.ei0, &b.ej0, q.i0, q.j0, &mut scratch.diff, acc);
    loss
}

/// Resumable trainer state.
pub struct Trainer<'a> {
    pub ds: &'a InteractionDataset,
    pub cfg: TrainConfig,
    pub table: EmbeddingTable,
    pub theta: PerturbationSet,
    pub user_adam: AdamState,
    pub item_adam: AdamState,
    pub theta_adam: AdamState,
    pub next_epoch: usize,
    pub log: TrainLog,
    adj: Option<Adjacency>,
    sampler: QuadrupleSampler,
    /// Best validation NDCG@20 snapshot: (score, epoch, embeddings).
    best: Option<(f64, usize, EmbeddingTable)>,
}

impl<'a> Trainer<'a> {
    pub fn new(ds: &'a InteractionDataset, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        ds.validate()?;
        let sampler = QuadrupleSampler::new(ds)?;
        let mut init_rng = seeding::stream(cfg.seed, "init/embeddings");
        let table = EmbeddingTable::init(ds.num_users, ds.num_items, cfg.dim, &mut init_rng);
        let mut theta_rng = seeding::stream(cfg.seed, "init/theta");
        let theta = PerturbationSet::init(ds.num_items, cfg.dim, cfg.epsilon as f32, &mut theta_rng);
        let adj = match cfg.backbone {
            BackboneKind::Mf => None,
            BackboneKind::Graph => Some(Adjacency::from_train(ds)),
        };
        let user_len = ds.num_users * cfg.dim;
        let item_len = ds.num_items * cfg.dim;
        Ok(Trainer {
            user_adam: AdamState::new(user_len, AdamParams::with_lr(cfg.outer_lr)),
            item_adam: AdamState::new(item_len, AdamParams::with_lr(cfg.outer_lr)),
            theta_adam: AdamState::new(item_len, AdamParams::with_lr(cfg.inner_lr)),
            ds,
            cfg,
            table,
            theta,
            adj,
            sampler,
            next_epoch: 0,
            log: Vec::new(),
            best: None,
        })
    }

    /// Rebuilds a trainer from checkpointed state. The config echoed in the
    /// checkpoint is used as-is. Best-snapshot tracking restarts from the
    /// resume point.
    pub fn resume(ds: &'a InteractionDataset, data: crate::checkpoint::CheckpointData) -> Result<Self> {
        data.validate_against(ds)?;
        let cfg = data.manifest.config.clone();
        cfg.validate()?;
        let sampler = QuadrupleSampler::new(ds)?;
        let adj = match cfg.backbone {
            BackboneKind::Mf => None,
            BackboneKind::Graph => Some(Adjacency::from_train(ds)),
        };
        Ok(Trainer {
            ds,
            cfg,
            table: data.table,
            theta: data.theta,
            user_adam: data.user_adam,
            item_adam: data.item_adam,
            theta_adam: data.theta_adam,
            next_epoch: data.manifest.next_epoch,
            log: data.log,
            adj,
            sampler,
            best: None,
        })
    }

    pub fn to_checkpoint(&self) -> crate::checkpoint::CheckpointData {
        crate::checkpoint::CheckpointData {
            manifest: crate::checkpoint::CheckpointManifest {
                schema_version: crate::checkpoint::CHECKPOINT_SCHEMA_VERSION,
                backbone: self.cfg.backbone,
                dim: self.cfg.dim,
                num_users: self.ds.num_users,
                num_items: self.ds.num_items,
                next_epoch: self.next_epoch,
                seed: self.cfg.seed,
                config: self.cfg.clone(),
            },
            table: self.table.clone(),
            theta: self.theta.clone(),
            user_adam: self.user_adam.clone(),
            item_adam: self.item_adam.clone(),
            theta_adam: self.theta_adam.clone(),
            log: self.log.clone(),
        }
    }

    fn quadruples_per_epoch(&self) -> usize {
        (self.ds.train_pair_count() / 2).max(1)
    }

    fn apply_grads(&mut self, acc: &GradAccum) -> Result<()> {
        let dim = self.cfg.dim;
        let m = self.ds.num_users;
        let wd = self.cfg.weight_decay;
        let bc_u = self.user_adam.begin_step();
        let bc_i = self.item_adam.begin_step();
        let mut buf = vec![0.0f64; dim];
        for (row, g) in acc.iter() {
            let (vars, adam, offset, bc) = if row.0 < m {
                (&mut self.table.users, &mut self.user_adam, row.0 * dim, bc_u)
            } else {
                (&mut self.table.items, &mut self.item_adam, (row.0 - m) * dim, bc_i)
            };
            if wd > 0.0 {
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = g[k] + wd * vars[offset + k] as f64;
                }
                adam.update_span(vars, offset, &buf, bc)?;
            } else {
                adam.update_span(vars, offset, g, bc)?;
            }
        }
        Ok(())
    }

    fn run_batches(&mut self, epoch: usize) -> Result<(f64, Option<f64>)> {
        let cfg = self.cfg.clone();
        let adj = self.adj.clone();
        let total = self.quadruples_per_epoch();
        let n_batches = total.div_ceil(cfg.batch_size);
        let mut sample_rng = seeding::epoch_stream(cfg.seed, "sampling", epoch);
        let mut mask_rng = seeding::epoch_stream(cfg.seed, "mask", epoch);

        let fda_active = cfg.fda && cfg.mask_ratio > 0.0;
        let masked = fda_active && epoch >= cfg.warmup_epochs;
        let mut mask = if masked && !cfg.mask_per_batch {
            sample_mask(self.ds.num_items, cfg.mask_ratio, &mut mask_rng)
        } else {
            MaskVector::all_zeros(self.ds.num_items)
        };

        if cfg.fda && cfg.reinit_theta_each_epoch {
            let mut rng = seeding::epoch_stream(cfg.seed, "theta", epoch);
            self.theta =
                PerturbationSet::init(self.ds.num_items, cfg.dim, cfg.epsilon as f32, &mut rng);
        }

        let mut outer_total = 0.0;
        let mut inner_total = 0.0;
        let mut inner_batches = 0usize;
        let mut acc = GradAccum::new(cfg.dim);
        let mut scratch = OuterScratch::new(cfg.dim);

        let mut remaining = total;
        for _ in 0..n_batches {
            let size = remaining.min(cfg.batch_size);
            remaining -= size;
            let batch = self.sampler.sample_batch(self.ds, size, &mut sample_rng);

            if masked && cfg.mask_per_batch {
                mask = sample_mask(self.ds.num_items, cfg.mask_ratio, &mut mask_rng);
            }

            if cfg.fda {
                for _ in 0..cfg.inner_steps_per_outer {
                    let repr = ReprRef::new(&self.table, adj.as_ref());
                    let loss = crate::augment::inner_step_terms(
                        &repr,
                        &mut self.theta,
                        &batch,
                        &mut self.theta_adam,
                        cfg.hypothesis1,
                        cfg.hypothesis2,
                    )?;
                    inner_total += loss / size as f64;
                }
                inner_batches += 1;
            }

            acc.clear();
            let loss = {
                let repr = ReprRef::new(&self.table, adj.as_ref());
                let mut loss = 0.0;
                if masked {
                    for q in &batch {
                        loss += outer_quadruple(
                            &repr,
                            &self.theta,
                            &mask,
                            cfg.hypothesis1,
                            cfg.hypothesis2,
                            q,
                            &mut scratch,
                            &mut acc,
                        );
                    }
                } else {
                    for q in &batch {
                        loss += plain_quadruple(&repr, q, &mut scratch, &mut acc);
                    }
                }
                loss
            };
            if !loss.is_finite() {
                return Err(FdaError::Diverged { quantity: "outer loss", epoch });
            }
            outer_total += loss / size as f64;
            self.apply_grads(&acc)?;
        }

        let inner_mean = if cfg.fda && inner_batches > 0 {
            Some(inner_total / (inner_batches * cfg.inner_steps_per_outer.max(1)) as f64)
        } else {
            None
        };
        Ok((outer_total / n_batches as f64, inner_mean))
    }

    /// The table used for scoring and evaluation (propagated for the graph
    /// backbone).
    pub fn eval_table(&self) -> EmbeddingTable {
        match self.cfg.backbone {
            BackboneKind::Mf => self.table.clone(),
            BackboneKind::Graph => {
                propagate_graph(&self.table, self.adj.as_ref().expect("graph adjacency"), 1)
            }
        }
    }

    fn evaluate(&self, table: &EmbeddingTable) -> Result<Vec<KMetrics>> {
        let mut out = Vec::new();
        for &k in &self.cfg.k_list {
            let top = metrics::topk(table, self.ds, k);
            out.push(KMetrics {
                k,
                hr: metrics::hr_at_k(&top, &self.ds.test),
                ndcg: metrics::ndcg_at_k(&top, &self.ds.test),
                dp: metrics::dp_at_k(&top, &self.ds.group_label, self.ds.num_items)?,
                eo: metrics::eo_at_k(&top, &self.ds.test, &self.ds.group_label, self.ds.num_items)?,
            });
        }
        Ok(out)
    }

    fn validation_ndcg(&self, table: &EmbeddingTable) -> Option<f64> {
        if !self.ds.has_validation() {
            return None;
        }
        let k = 20.min(self.ds.num_items);
        let users: Vec<u32> = (0..self.ds.num_users as u32)
            .filter(|&u| !self.ds.validation[u as usize].is_empty())
            .collect();
        if users.is_empty() {
            return None;
        }
        let lists: Vec<Vec<u32>> = users
            .iter()
            .map(|&u| {
                let scores: Vec<f64> = (0..self.ds.num_items)
                    .map(|v| table.score(u as usize, v))
                    .collect();
                let mut order: Vec<u32> = (0..self.ds.num_items as u32)
                    .filter(|v| self.ds.train[u as usize].binary_search(v).is_err())
                    .collect();
                order.sort_by(|&a, &b| {
                    scores[b as usize].partial_cmp(&scores[a as usize]).unwrap()
                });
                order.truncate(k);
                order
            })
            .collect();
        let top = TopKLists { k, users, lists };
        Some(metrics::ndcg_at_k(&top, &self.ds.validation))
    }

    /// Runs one epoch, appending to the log.
    pub fn run_epoch(&mut self) -> Result<()> {
        let epoch = self.next_epoch;
        let (outer, inner) = self.run_batches(epoch)?;
        let is_eval = (epoch + 1) % self.cfg.eval_every == 0 || epoch + 1 == self.cfg.epochs;
        let eval = if is_eval {
            let table = self.eval_table();
            if let Some(score) = self.validation_ndcg(&table) {
                let better = self.best.as_ref().map(|(s, _, _)| score > *s).unwrap_or(true);
                if better {
                    self.best = Some((score, epoch, self.table.clone()));
                }
            }
            Some(self.evaluate(&table)?)
        } else {
            None
        };
        self.log.push(EpochRecord {
            epoch,
            outer_loss: outer,
            inner_loss: inner,
            eval,
        });
        self.next_epoch += 1;
        Ok(())
    }

    /// Runs the remaining epochs.
    pub fn run_to_end(&mut self) -> Result<()> {
        while self.next_epoch < self.cfg.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    /// The embeddings selected for reporting: best validation NDCG@20
    /// snapshot when a validation split exists, else the final state.
    pub fn selected_table(&self) -> &EmbeddingTable {
        match &self.best {
            Some((_, _, table)) => table,
            None => &self.table,
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.as_ref().map(|(_, e, _)| *e)
    }
}

/// Trains from scratch with the given config.
pub fn train(ds: &InteractionDataset, cfg: TrainConfig) -> Result<(EmbeddingTable, TrainLog)> {
    let mut trainer = Trainer::new(ds, cfg)?;
    trainer.run_to_end()?;
    let table = trainer.selected_table().clone();
    Ok((table, trainer.log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::sample_quadruples;
    use crate::backbone::{item_row, user_row, Row};
    use crate::seeding;
    use crate::synth::{planted_skew, SynthConfig};

    fn toy() -> InteractionDataset {
        planted_skew(&SynthConfig::tiny(), 21)
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            dim: 8,
            epochs: 4,
            batch_size: 64,
            warmup_epochs: 1,
            eval_every: 2,
            k_list: vec![5],
            seed: 77,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation_reports_all_problems() {
        let cfg = TrainConfig {
            epochs: 0,
            mask_ratio: 2.0,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("epochs"));
        assert!(err.contains("mask_ratio"));
    }

    #[test]
    fn outer_loss_zero_mask_is_plain_bpr_with_slot_multiplicity() {
        let ds = toy();
        let mut rng = seeding::stream(1, "emb");
        let table = EmbeddingTable::init(ds.num_users, ds.num_items, 8, &mut rng);
        let theta = PerturbationSet::zeros(ds.num_items, 8, 0.05);
        let mask = MaskVector::all_zeros(ds.num_items);
        let mut qrng = seeding::stream(1, "quads");
        let batch = sample_quadruples(&ds, 10, &mut qrng).unwrap();
        let got = outer_loss(&table, &theta, &mask, &batch);
        // each real triple appears in two slots of the augmented objective
        let mut triples = Vec::new();
        for q in &batch {
            for _ in 0..2 {
                triples.push(crate::backbone::Triple { user: q.u1, pos: q.i1, neg: q.j1 });
                triples.push(crate::backbone::Triple { user: q.u0, pos: q.i0, neg: q.j0 });
            }
        }
        let expected = crate::backbone::bpr_loss(&table, &triples);
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn outer_loss_full_mask_zero_theta_is_inner_loss() {
        let ds = toy();
        let mut rng = seeding::stream(2, "emb");
        let table = EmbeddingTable::init(ds.num_users, ds.num_items, 8, &mut rng);
        let theta = PerturbationSet::zeros(ds.num_items, 8, 0.05);
        let mask = MaskVector {
            bits: vec![true; ds.num_items],
            max_mask: ds.num_items,
        };
        let mut qrng = seeding::stream(2, "quads");
        let batch = sample_quadruples(&ds, 10, &mut qrng).unwrap();
        let got = outer_loss(&table, &theta, &mask, &batch);
        let expected = crate::augment::inner_loss(&table, &theta, &batch);
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn outer_gradients_match_finite_differences() {
        for seed in 0..30u64 {
            let ds = toy();
            let mut rng = seeding::stream(seed, "emb");
            let table = EmbeddingTable::init(ds.num_users, ds.num_items, 2, &mut rng);
            let mut trng = seeding::stream(seed, "theta");
            let theta = PerturbationSet::init(ds.num_items, 2, 0.05, &mut trng);
            let mut mrng = seeding::stream(seed, "mask");
            let mask = sample_mask(ds.num_items, 0.5, &mut mrng);
            let mut qrng = seeding::stream(seed, "quads");
            let batch = sample_quadruples(&ds, 2, &mut qrng).unwrap();
            let acc = outer_gradients(&table, &theta, &mask, &batch);
            let h = 1e-4f32;
            for (row, g) in acc.iter() {
                for (k, &gk) in g.iter().enumerate() {
                    let mut plus = table.clone();
                    let mut minus = table.clone();
                    let bump = |t: &mut EmbeddingTable, d: f32| {
                        if row.0 < ds.num_users {
                            t.user_mut(row.0)[k] += d;
                        } else {
                            t.item_mut(row.0 - ds.num_users)[k] += d;
                        }
                    };
                    let read = |t: &EmbeddingTable| -> f64 {
                        if row.0 < ds.num_users {
                            t.user(row.0)[k] as f64
                        } else {
                            t.item(row.0 - ds.num_users)[k] as f64
                        }
                    };
                    bump(&mut plus, h);
                    bump(&mut minus, -h);
                    // divide by the realized f32 span, not the nominal 2h
                    let span = read(&plus) - read(&minus);
                    let fd = (outer_loss(&plus, &theta, &mask, &batch)
                        - outer_loss(&minus, &theta, &mask, &batch))
                        / span;
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
    fn outer_gradient_untouched_rows_absent() {
        let ds = toy();
        let mut rng = seeding::stream(3, "emb");
        let table = EmbeddingTable::init(ds.num_users, ds.num_items, 4, &mut rng);
        let theta = PerturbationSet::zeros(ds.num_items, 4, 0.05);
        let mask = MaskVector::all_zeros(ds.num_items);
        let mut qrng = seeding::stream(3, "quads");
        let batch = sample_quadruples(&ds, 1, &mut qrng).unwrap();
        let q = batch[0];
        let acc = outer_gradients(&table, &theta, &mask, &batch);
        let touched: std::collections::HashSet<Row> = acc.iter().map(|(r, _)| r).collect();
        let expected: std::collections::HashSet<Row> = [
            user_row(q.u0),
            user_row(q.u1),
            item_row(ds.num_users, q.i0),
            item_row(ds.num_users, q.i1),
            item_row(ds.num_users, q.j0),
            item_row(ds.num_users, q.j1),
        ]
        .into();
        assert!(touched.is_subset(&expected));
    }

    #[test]
    fn training_reduces_loss_on_tiny_dataset() {
        let ds = toy();
        let cfg = TrainConfig {
            dim: 8,
            epochs: 40,
            batch_size: 32,
            fda: false,
            eval_every: 40,
            k_list: vec![5],
            seed: 5,
            ..Default::default()
        };
        let mut t = Trainer::new(&ds, cfg).unwrap();
        t.run_to_end().unwrap();
        let first = t.log[0].outer_loss;
        let last = t.log.last().unwrap().outer_loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn trainer_is_deterministic() {
        let ds = toy();
        let run = || {
            let mut t = Trainer::new(&ds, small_cfg()).unwrap();
            t.run_to_end().unwrap();
            (t.table, t.theta, t.log)
        };
        let (t1, th1, l1) = run();
        let (t2, th2, l2) = run();
        assert_eq!(t1, t2);
        assert_eq!(th1, th2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn zero_mask_ratio_matches_fda_off_bitwise() {
        let ds = toy();
        let mut with_ratio_zero = small_cfg();
        with_ratio_zero.mask_ratio = 0.0;
        let mut fda_off = small_cfg();
        fda_off.fda = false;
        let mut a = Trainer::new(&ds, with_ratio_zero).unwrap();
        a.run_to_end().unwrap();
        let mut b = Trainer::new(&ds, fda_off).unwrap();
        b.run_to_end().unwrap();
        assert_eq!(a.table, b.table);
    }

    #[test]
    fn warmup_equals_epochs_matches_plain_bpr() {
        let ds = toy();
        let mut warmup_all = small_cfg();
        warmup_all.warmup_epochs = warmup_all.epochs;
        let mut plain = small_cfg();
        plain.fda = false;
        let mut a = Trainer::new(&ds, warmup_all).unwrap();
        a.run_to_end().unwrap();
        let mut b = Trainer::new(&ds, plain).unwrap();
        b.run_to_end().unwrap();
        assert_eq!(a.table, b.table);
    }

    #[test]
    fn graph_backbone_trains() {
        let ds = toy();
        let cfg = TrainConfig {
            backbone: BackboneKind::Graph,
            ..small_cfg()
        };
        let mut t = Trainer::new(&ds, cfg).unwrap();
        t.run_to_end().unwrap();
        assert!(t.log.iter().all(|r| r.outer_loss.is_finite()));
    }

    #[test]
    fn log_csv_shape() {
        let log = vec![
            EpochRecord {
                epoch: 0,
                outer_loss: 1.5,
                inner_loss: Some(2.0),
                eval: None,
            },
            EpochRecord {
                epoch: 1,
                outer_loss: 1.2,
                inner_loss: None,
                eval: Some(vec![KMetrics { k: 5, hr: 0.1, ndcg: 0.2, dp: 0.3, eo: 0.4 }]),
            },
        ];
        let csv = log_to_csv(&log, &[5]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,outer_loss,inner_loss,hr@5,ndcg@5,dp@5,eo@5");
        assert!(lines[1].starts_with("0,1.5,2"));
        assert!(lines[2].contains("0.1,0.2,0.3,0.4"));
    }
}
