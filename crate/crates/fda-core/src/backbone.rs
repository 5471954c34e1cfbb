//! The recommendation model: embedding tables, inner-product scoring, BPR
//! loss with analytic gradients, Adam, and an optional linear
//! graph-propagation backbone.
//!
//! Embeddings are stored as row-major `f32` (the checkpoint scalar width);
//! all loss and gradient arithmetic promotes to `f64`.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::InteractionDataset;
use crate::{FdaError, Result};

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `-ln(sigma(x))`, the per-pair BPR loss term.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    softplus(-x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += *x as f64 * *y as f64;
    }
    acc
}

/// Dense user and item embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub num_users: usize,
    pub num_items: usize,
    pub users: Vec<f32>,
    pub items: Vec<f32>,
}

impl EmbeddingTable {
    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        EmbeddingTable {
            dim,
            num_users,
            num_items,
            users: vec![0.0; num_users * dim],
            items: vec![0.0; num_items * dim],
        }
    }

    /// Entries drawn i.i.d. from a zero-mean normal with scale `0.1/sqrt(d)`.
    pub fn init(num_users: usize, num_items: usize, dim: usize, rng: &mut impl Rng) -> Self {
        assert!(num_users > 0 && num_items > 0 && dim > 0);
        let scale = 0.1 / (dim as f64).sqrt();
        let dist = Normal::new(0.0, scale).expect("valid scale");
        let mut draw = |n: usize| -> Vec<f32> {
            (0..n).map(|_| dist.sample(rng) as f32).collect()
        };
        EmbeddingTable {
            dim,
            num_users,
            num_items,
            users: draw(num_users * dim),
            items: draw(num_items * dim),
        }
    }

    pub fn user(&self, u: usize) -> &[f32] {
        &self.users[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item(&self, v: usize) -> &[f32] {
        &self.items[v * self.dim..(v + 1) * self.dim]
    }

    pub fn user_mut(&mut self, u: usize) -> &mut [f32] {
        &mut self.users[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_mut(&mut self, v: usize) -> &mut [f32] {
        &mut self.items[v * self.dim..(v + 1) * self.dim]
    }

    /// Predicted preference: the inner product of the two embeddings.
    pub fn score(&self, u: usize, v: usize) -> f64 {
        dot_f32(self.user(u), self.item(v))
    }
}

/// One pairwise ranking sample: positive item `pos` over negative `neg`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub user: u32,
    pub pos: u32,
    pub neg: u32,
}

/// Row addressing over the combined (user, item) variable space.
/// Users occupy rows `0..M`, items rows `M..M+N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Row(pub usize);

pub fn user_row(u: u32) -> Row {
    Row(u as usize)
}

pub fn item_row(num_users: usize, v: u32) -> Row {
    Row(num_users + v as usize)
}

/// Sparse gradient accumulator over embedding rows.
///
/// Rows are recorded in first-touch order so that downstream optimizer
/// application is deterministic.
#[derive(Debug, Clone)]
pub struct GradAccum {
    dim: usize,
    order: Vec<Row>,
    index: HashMap<Row, usize>,
    grads: Vec<f64>,
}

impl GradAccum {
    pub fn new(dim: usize) -> Self {
        GradAccum {
            dim,
            order: Vec::new(),
            index: HashMap::new(),
            grads: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.order.clear();
        self.index.clear();
        self.grads.clear();
    }

    fn slot(&mut self, row: Row) -> usize {
        match self.index.get(&row) {
            Some(&s) => s,
            None => {
                let s = self.order.len();
                self.order.push(row);
                self.index.insert(row, s);
                self.grads.resize(self.grads.len() + self.dim, 0.0);
                s
            }
        }
    }

    /// Accumulates `coeff * vec` into the row's gradient.
    pub fn add(&mut self, row: Row, coeff: f64, vec: &[f64]) {
        let s = self.slot(row);
        let g = &mut self.grads[s * self.dim..(s + 1) * self.dim];
        for (gk, vk) in g.iter_mut().zip(vec) {
            *gk += coeff * vk;
        }
    }

    pub fn add_f32(&mut self, row: Row, coeff: f64, vec: &[f32]) {
        let s = self.slot(row);
        let g = &mut self.grads[s * self.dim..(s + 1) * self.dim];
        for (gk, vk) in g.iter_mut().zip(vec) {
            *gk += coeff * *vk as f64;
        }
    }

    pub fn get(&self, row: Row) -> Option<&[f64]> {
        self.index
            .get(&row)
            .map(|&s| &self.grads[s * self.dim..(s + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Row, &[f64])> {
        self.order
            .iter()
            .enumerate()
            .map(move |(s, &row)| (row, &self.grads[s * self.dim..(s + 1) * self.dim]))
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Sum of `-ln sigma(score(u,i) - score(u,j))` over the batch.
pub fn bpr_loss(table: &EmbeddingTable, batch: &[Triple]) -> f64 {
    assert!(!batch.is_empty());
    batch
        .iter()
        .map(|t| {
            let s = table.score(t.user as usize, t.pos as usize)
                - table.score(t.user as usize, t.neg as usize);
            neg_log_sigmoid(s)
        })
        .sum()
}

/// Analytic gradient of [`bpr_loss`] with respect to the touched rows.
pub fn bpr_gradients(table: &EmbeddingTable, batch: &[Triple]) -> GradAccum {
    assert!(!batch.is_empty());
    let mut acc = GradAccum::new(table.dim);
    let m = table.num_users;
    for t in batch {
        let (u, i, j) = (t.user as usize, t.pos as usize, t.neg as usize);
        let s = table.score(u, i) - table.score(u, j);
        let g = sigmoid(s) - 1.0; // d(-ln sigma(s))/ds
        // d/de_u = g * (e_i - e_j)
        acc.add_f32(user_row(t.user), g, table.item(i));
        acc.add_f32(user_row(t.user), -g, table.item(j));
        acc.add_f32(item_row(m, t.pos), g, table.user(u));
        acc.add_f32(item_row(m, t.neg), -g, table.user(u));
    }
    acc
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            ..Default::default()
        }
    }
}

/// Adam state for one flat variable array.
///
/// Supports sparse row updates: moments of untouched rows are left as-is
/// and bias correction uses the global step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub params: AdamParams,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize, params: AdamParams) -> Self {
        AdamState {
            params,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// Advances the step counter and returns the bias-correction factors.
    pub fn begin_step(&mut self) -> (f64, f64) {
        self.step += 1;
        let t = self.step as i32;
        (
            1.0 - self.params.beta1.powi(t),
            1.0 - self.params.beta2.powi(t),
        )
    }

    /// Applies one update to `vars[offset..offset+grad.len()]`.
    pub fn update_span(
        &mut self,
        vars: &mut [f32],
        offset: usize,
        grad: &[f64],
        bc: (f64, f64),
    ) -> Result<()> {
        let p = self.params;
        for (k, &g) in grad.iter().enumerate() {
            if !g.is_finite() {
                return Err(FdaError::NonFiniteGradient);
            }
            let idx = offset + k;
            // moments are persisted as f32; round-trip through f32 keeps
            // checkpointed state exact
            let m_new = (p.beta1 * self.m[idx] as f64 + (1.0 - p.beta1) * g) as f32;
            let v_new = (p.beta2 * self.v[idx] as f64 + (1.0 - p.beta2) * g * g) as f32;
            self.m[idx] = m_new;
            self.v[idx] = v_new;
            let m_hat = m_new as f64 / bc.0;
            let v_hat = v_new as f64 / bc.1;
            let delta = p.lr * m_hat / (v_hat.sqrt() + p.eps);
            vars[idx] = (vars[idx] as f64 - delta) as f32;
        }
        Ok(())
    }

    /// One dense Adam step over the whole variable array.
    pub fn step_dense(&mut self, vars: &mut [f32], grads: &[f64]) -> Result<()> {
        assert_eq!(vars.len(), grads.len());
        let bc = self.begin_step();
        self.update_span(vars, 0, grads, bc)
    }
}

/// Bipartite train-graph adjacency with degrees, for the linear
/// graph-propagation backbone.
#[derive(Debug, Clone)]
pub struct Adjacency {
    pub user_items: Vec<Vec<u32>>,
    pub item_users: Vec<Vec<u32>>,
}

impl Adjacency {
    pub fn from_train(ds: &InteractionDataset) -> Self {
        let mut item_users = vec![Vec::new(); ds.num_items];
        for (u, items) in ds.train.iter().enumerate() {
            for &v in items {
                item_users[v as usize].push(u as u32);
            }
        }
        Adjacency {
            user_items: ds.train.clone(),
            item_users,
        }
    }

    pub fn user_degree(&self, u: usize) -> usize {
        self.user_items[u].len()
    }

    pub fn item_degree(&self, v: usize) -> usize {
        self.item_users[v].len()
    }

    fn norm(&self, du: usize, dv: usize) -> f64 {
        1.0 / ((du as f64) * (dv as f64)).sqrt()
    }
}

/// Linear graph propagation: each layer replaces a node's vector with the
/// degree-normalized sum of its neighbors', and the final representation is
/// the sum of all layer outputs (self term included). `layers = 0` is the
/// identity.
pub fn propagate_graph(table: &EmbeddingTable, adj: &Adjacency, layers: usize) -> EmbeddingTable {
    let d = table.dim;
    let mut current = table.clone();
    let mut out = table.clone();
    for _ in 0..layers {
        let mut next = EmbeddingTable::zeros(table.num_users, table.num_items, d);
        for u in 0..table.num_users {
            let du = adj.user_degree(u);
            let acc = next.user_mut(u);
            for &v in &adj.user_items[u] {
                let c = adj.norm(du, adj.item_degree(v as usize));
                for (a, b) in acc.iter_mut().zip(current.item(v as usize)) {
                    *a = (*a as f64 + c * *b as f64) as f32;
                }
            }
        }
        for v in 0..table.num_items {
            let dv = adj.item_degree(v);
            let acc = next.item_mut(v);
            for &u in &adj.item_users[v] {
                let c = adj.norm(adj.user_degree(u as usize), dv);
                for (a, b) in acc.iter_mut().zip(current.user(u as usize)) {
                    *a = (*a as f64 + c * *b as f64) as f32;
                }
            }
        }
        for (o, n) in out.users.iter_mut().zip(&next.users) {
            *o += *n;
        }
        for (o, n) in out.items.iter_mut().zip(&next.items) {
            *o += *n;
        }
        current = next;
    }
    out
}

/// Produces node representations for scoring, and scatters representation
/// gradients back onto base embedding rows.
pub trait Representer {
    fn dim(&self) -> usize;
    fn num_users(&self) -> usize;
    fn user_repr(&self, u: u32, out: &mut [f64]);
    fn item_repr(&self, v: u32, out: &mut [f64]);
    /// Accumulates `coeff * grad` (a gradient w.r.t. the user's
    /// representation) onto the base embedding rows it depends on.
    fn scatter_user(&self, u: u32, coeff: f64, grad: &[f64], acc: &mut GradAccum);
    fn scatter_item(&self, v: u32, coeff: f64, grad: &[f64], acc: &mut GradAccum);
}

/// Plain matrix-factorization representer: representations are the rows.
pub struct MfRepr<'a> {
    pub table: &'a EmbeddingTable,
}

impl Representer for MfRepr<'_> {
    fn dim(&self) -> usize {
        self.table.dim
    }

    fn num_users(&self) -> usize {
        self.table.num_users
    }

    fn user_repr(&self, u: u32, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(self.table.user(u as usize)) {
            *o = *x as f64;
        }
    }

    fn item_repr(&self, v: u32, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(self.table.item(v as usize)) {
            *o = *x as f64;
        }
    }

    fn scatter_user(&self, u: u32, coeff: f64, grad: &[f64], acc: &mut GradAccum) {
        acc.add(user_row(u), coeff, grad);
    }

    fn scatter_item(&self, v: u32, coeff: f64, grad: &[f64], acc: &mut GradAccum) {
        acc.add(item_row(self.table.num_users, v), coeff, grad);
    }
}

/// One-layer linear graph representer computed on the fly:
/// `repr(u) = e_u + sum_{v in N(u)} e_v / sqrt(d_u d_v)`.
pub struct GraphRepr<'a> {
    pub table: &'a EmbeddingTable,
    pub adj: &'a Adjacency,
}

impl Representer for GraphRepr<'_> {
    fn dim(&self) -> usize {
        self.table.dim
    }

    fn num_users(&self) -> usize {
        self.table.num_users
    }

    fn user_repr(&self, u: u32, out: &mut [f64]) {
        let u = u as usize;
        for (o, x) in out.iter_mut().zip(self.table.user(u)) {
            *o = *x as f64;
        }
        let du = self.adj.user_degree(u);
        for &v in &self.adj.user_items[u] {
            let c = self.adj.norm(du, self.adj.item_degree(v as usize));
            for (o, x) in out.iter_mut().zip(self.table.item(v as usize)) {
                *o += c * *x as f64;
            }
        }
    }

    fn item_repr(&self, v: u32, out: &mut [f64]) {
        let v = v as usize;
        for (o, x) in out.iter_mut().zip(self.table.item(v)) {
            *o = *x as f64;
        }
        let dv = self.adj.item_degree(v);
        for &u in &self.adj.item_users[v] {
            let c = self.adj.norm(self.adj.user_degree(u as usize), dv);
            for (o, x) in out.iter_mut().zip(self.table.user(u as usize)) {
                *o += c * *x as f64;
            }
        }
    }

    fn scatter_user(&self, u: u32, coeff: f64, grad: &[f64], acc: &mut GradAccum) {
        acc.add(user_row(u), coeff, grad);
        let du = self.adj.user_degree(u as usize);
        let m = self.table.num_users;
        for &v in &self.adj.user_items[u as usize] {
            let c = self.adj.norm(du, self.adj.item_degree(v as usize));
            acc.add(item_row(m, v), coeff * c, grad);
        }
    }

    fn scatter_item(&self, v: u32, coeff: f64, grad: &[f64], acc: &mut GradAccum) {
        let m = self.table.num_users;
        acc.add(item_row(m, v), coeff, grad);
        let dv = self.adj.item_degree(v as usize);
        for &u in &self.adj.item_users[v as usize] {
            let c = self.adj.norm(self.adj.user_degree(u as usize), dv);
            acc.add(user_row(u), coeff * c, grad);
        }
    }
}
