//! Top-K retrieval and evaluation: HR, NDCG, DP, EO, and JS divergence.

use crate::backbone::EmbeddingTable;
use crate::dataset::InteractionDataset;
use crate::{FdaError, Result};

/// Per-user ranked top-K item lists over the evaluated users.
#[derive(Debug, Clone)]
pub struct TopKLists {
    pub k: usize,
    /// Evaluated users (those with at least one test interaction).
    pub users: Vec<u32>,
    /// `lists[idx]` is the ranked list for `users[idx]`.
    pub lists: Vec<Vec<u32>>,
}

/// Per-group probability vector over items.
#[derive(Debug, Clone)]
pub struct GroupItemDistribution(pub Vec<f64>);

fn topk_for_user(
    scores: &[f64],
    train: &[u32],
    k: usize,
) -> Vec<u32> {
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    order.retain(|v| train.binary_search(v).is_err());
    // ties broken by lower item index; sort is stable on the pre-sorted
    // index order, so only compare scores descending
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .expect("scores are finite")
    });
    order.truncate(k);
    order
}

/// Scores every item for each test user, masks the user's train items, and
/// returns the K highest-scoring items (ties to the lower index).
pub fn topk(table: &EmbeddingTable, ds: &InteractionDataset, k: usize) -> TopKLists {
    topk_with_threads(table, ds, k, 1)
}

/// [`topk`] with per-user scoring fanned out over `threads` workers. The
/// output is independent of the thread count.
pub fn topk_with_threads(
    table: &EmbeddingTable,
    ds: &InteractionDataset,
    k: usize,
    threads: usize,
) -> TopKLists {
    let users: Vec<u32> = (0..ds.num_users as u32)
        .filter(|&u| !ds.test[u as usize].is_empty())
        .collect();
    let compute = |u: u32| -> Vec<u32> {
        let scores: Vec<f64> = (0..ds.num_items)
            .map(|v| table.score(u as usize, v))
            .collect();
        topk_for_user(&scores, &ds.train[u as usize], k)
    };
    let lists: Vec<Vec<u32>> = if threads <= 1 || users.len() < 2 {
        users.iter().map(|&u| compute(u)).collect()
    } else {
        let chunk = users.len().div_ceil(threads);
        let mut out: Vec<Vec<Vec<u32>>> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = users
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(|&u| compute(u)).collect::<Vec<_>>()))
                .collect();
            for h in handles {
                out.push(h.join().expect("scoring worker panicked"));
            }
        });
        out.into_iter().flatten().collect()
    };
    TopKLists { k, users, lists }
}

/// Per-user recall `|TopK_u ∩ Test_u| / |Test_u|` averaged over evaluated
/// users.
pub fn hr_at_k(topk: &TopKLists, test: &[Vec<u32>]) -> f64 {
    assert!(!topk.users.is_empty());
    let mut total = 0.0;
    for (idx, &u) in topk.users.iter().enumerate() {
        let test_u = &test[u as usize];
        let hits = topk.lists[idx]
            .iter()
            .filter(|v| test_u.binary_search(v).is_ok())
            .count();
        total += hits as f64 / test_u.len() as f64;
    }
    total / topk.users.len() as f64
}

/// DCG over hit ranks normalized by the ideal DCG, averaged over evaluated
/// users.
pub fn ndcg_at_k(topk: &TopKLists, test: &[Vec<u32>]) -> f64 {
    assert!(!topk.users.is_empty());
    let mut total = 0.0;
    for (idx, &u) in topk.users.iter().enumerate() {
        let test_u = &test[u as usize];
        let mut dcg = 0.0;
        for (rank0, v) in topk.lists[idx].iter().enumerate() {
            if test_u.binary_search(v).is_ok() {
                dcg += 1.0 / ((rank0 + 2) as f64).log2();
            }
        }
        let ideal = topk.k.min(test_u.len());
        let idcg: f64 = (0..ideal).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
        total += dcg / idcg;
    }
    total / topk.users.len() as f64
}

fn group_counts<F>(topk: &TopKLists, labels: &[u8], num_items: usize, counted: F) -> [Vec<f64>; 2]
where
    F: Fn(u32, u32) -> bool,
{
    let mut counts = [vec![0.0; num_items], vec![0.0; num_items]];
    for (idx, &u) in topk.users.iter().enumerate() {
        let g = labels[u as usize] as usize;
        for &v in &topk.lists[idx] {
            if counted(u, v) {
                counts[g][v as usize] += 1.0;
            }
        }
    }
    counts
}

fn parity(counts: &[Vec<f64>; 2]) -> f64 {
    let n = counts[0].len();
    let mut total = 0.0;
    for v in 0..n {
        let (c0, c1) = (counts[0][v], counts[1][v]);
        let denom = c0 + c1;
        if denom > 0.0 {
            total += (c0 - c1).abs() / denom;
        }
    }
    total / n as f64
}

/// Demographic parity: per-item normalized absolute difference in top-K
/// exposure counts between groups, averaged over all items. Items exposed
/// to neither group contribute 0.
pub fn dp_at_k(topk: &TopKLists, labels: &[u8], num_items: usize) -> Result<f64> {
    for g in [0u8, 1u8] {
        if !topk.users.iter().any(|&u| labels[u as usize] == g) {
            return Err(FdaError::InvalidDataset(format!(
                "group {g} has no evaluated users"
            )));
        }
    }
    Ok(parity(&group_counts(topk, labels, num_items, |_, _| true)))
}

/// Equality of opportunity: like DP but only counting correct hits
/// (top-K items that are also test items).
pub fn eo_at_k(
    topk: &TopKLists,
    test: &[Vec<u32>],
    labels: &[u8],
    num_items: usize,
) -> Result<f64> {
    for g in [0u8, 1u8] {
        if !topk.users.iter().any(|&u| labels[u as usize] == g) {
            return Err(FdaError::InvalidDataset(format!(
                "group {g} has no evaluated users"
            )));
        }
    }
    Ok(parity(&group_counts(topk, labels, num_items, |u, v| {
        test[u as usize].binary_search(&v).is_ok()
    })))
}

/// Jensen-Shannon divergence with base-2 logarithms (bounded by 1).
pub fn js_divergence(p: &GroupItemDistribution, q: &GroupItemDistribution) -> Result<f64> {
    let (p, q) = (&p.0, &q.0);
    if p.len() != q.len() {
        return Err(FdaError::InvalidDataset("distribution length mismatch".into()));
    }
    for dist in [p, q] {
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || dist.iter().any(|&x| x < 0.0) {
            return Err(FdaError::InvalidDataset("distribution not normalized".into()));
        }
    }
    let mut js = 0.0;
    for (&pv, &qv) in p.iter().zip(q) {
        let m = 0.5 * (pv + qv);
        if pv > 0.0 {
            js += 0.5 * pv * (pv / m).log2();
        }
        if qv > 0.0 {
            js += 0.5 * qv * (qv / m).log2();
        }
    }
    Ok(js.clamp(0.0, 1.0))
}

/// Normalized per-group item distributions from per-user event lists
/// (clicked items, or hit items).
pub fn group_click_distribution(
    events: &[Vec<u32>],
    labels: &[u8],
    num_items: usize,
) -> Result<[GroupItemDistribution; 2]> {
    let mut counts = [vec![0.0f64; num_items], vec![0.0f64; num_items]];
    for (u, items) in events.iter().enumerate() {
        let g = labels[u] as usize;
        for &v in items {
            counts[g][v as usize] += 1.0;
        }
    }
    let mut out = Vec::new();
    for (g, c) in counts.into_iter().enumerate() {
        let total: f64 = c.iter().sum();
        if total <= 0.0 {
            return Err(FdaError::InvalidDataset(format!(
                "group {g} has no counted events"
            )));
        }
        out.push(GroupItemDistribution(
            c.into_iter().map(|x| x / total).collect(),
        ));
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap()])
}

/// Per-user hit lists (top-K items that are also test items), the events
/// behind the "Top-K-Hit" distributions.
pub fn hit_lists(topk: &TopKLists, test: &[Vec<u32>], num_users: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); num_users];
    for (idx, &u) in topk.users.iter().enumerate() {
        let test_u = &test[u as usize];
        out[u as usize] = topk.lists[idx]
            .iter()
            .copied()
            .filter(|v| test_u.binary_search(v).is_ok())
            .collect();
    }
    out
}

/// Per-user top-K exposure lists over all users (for "Top-K" distributions).
pub fn exposure_lists(topk: &TopKLists, num_users: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); num_users];
    for (idx, &u) in topk.users.iter().enumerate() {
        out[u as usize] = topk.lists[idx].clone();
    }
    out
}
