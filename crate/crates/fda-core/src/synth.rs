//! Synthetic corpora with planted group-skewed preferences.
//!
//! Items are divided into three blocks: one favored by group 0, one favored
//! by group 1, and a shared block. Each user draws most interactions from
//! the own-group block, so trained models exhibit measurable group skew in
//! their top-K output. Used for fast directional experiments and tests.

use std::collections::HashMap;

use rand::Rng;

use crate::dataset::{self, InteractionDataset, SplitMode, SplitStrategy};
use crate::seeding;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub users_g0: usize,
    pub users_g1: usize,
    pub items: usize,
    pub interactions_per_user: usize,
    /// Probability of drawing from the own-group item block.
    pub own_block_prob: f64,
    /// Probability of drawing from the shared block; the remainder goes to
    /// the other group's block.
    pub shared_block_prob: f64,
}

impl SynthConfig {
    /// Minimal corpus for unit tests.
    pub fn tiny() -> Self {
        SynthConfig {
            users_g0: 8,
            users_g1: 6,
            items: 15,
            interactions_per_user: 6,
            own_block_prob: 0.7,
            shared_block_prob: 0.2,
        }
    }

    /// Unbalanced corpus sized for directional training experiments that
    /// finish in seconds.
    pub fn directional() -> Self {
        SynthConfig {
            users_g0: 60,
            users_g1: 20,
            items: 60,
            interactions_per_user: 24,
            own_block_prob: 0.62,
            shared_block_prob: 0.30,
        }
    }
}

/// Generates interactions with planted skew, then runs the standard per-user
/// 80/20 split and group assignment.
pub fn planted_skew(cfg: &SynthConfig, seed: u64) -> InteractionDataset {
    let block = cfg.items / 3;
    assert!(block >= 1, "need at least 3 items");
    let mut rng = seeding::stream(seed, "synth");
    let mut pairs = Vec::new();
    let total_users = cfg.users_g0 + cfg.users_g1;
    for u in 0..total_users {
        let group = usize::from(u >= cfg.users_g0);
        let mut picked: Vec<usize> = Vec::new();
        let mut guard = 0;
        while picked.len() < cfg.interactions_per_user.min(cfg.items - 1) && guard < 10_000 {
            guard += 1;
            let roll: f64 = rng.gen();
            let (lo, hi) = if roll < cfg.own_block_prob {
                // own-group block
                if group == 0 {
                    (0, block)
                } else {
                    (block, 2 * block)
                }
            } else if roll < cfg.own_block_prob + cfg.shared_block_prob {
                (2 * block, cfg.items)
            } else if group == 0 {
                (block, 2 * block)
            } else {
                (0, block)
            };
            let v = rng.gen_range(lo..hi);
            if !picked.contains(&v) {
                picked.push(v);
            }
        }
        for v in picked {
            pairs.push((format!("u{u:04}"), format!("i{v:04}")));
        }
    }
    let splits = dataset::split(&pairs, SplitStrategy::Ratio8020, SplitMode::PerUser, seed);
    let profiles: HashMap<String, String> = (0..total_users)
        .map(|u| {
            let a = if u < cfg.users_g0 { "A" } else { "B" };
            (format!("u{u:04}"), a.to_string())
        })
        .collect();
    let mapping: HashMap<String, u8> = [("A".to_string(), 0u8), ("B".to_string(), 1u8)].into();
    dataset::build_dataset(&splits, &profiles, &mapping).expect("synthetic corpus is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_corpus_is_valid_and_deterministic() {
        let a = planted_skew(&SynthConfig::tiny(), 7);
        let b = planted_skew(&SynthConfig::tiny(), 7);
        a.validate().unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.group_label, b.group_label);
        assert!(a.trainable_users(0).len() >= 2);
        assert!(a.trainable_users(1).len() >= 2);
    }

    #[test]
    fn groups_prefer_their_block() {
        let ds = planted_skew(&SynthConfig::directional(), 1);
        let block = ds.num_items / 3;
        let mut g0_own = 0usize;
        let mut g0_total = 0usize;
        for u in 0..ds.num_users {
            if ds.group_label[u] == 0 {
                for &v in &ds.train[u] {
                    g0_total += 1;
                    if (v as usize) < block {
                        g0_own += 1;
                    }
                }
            }
        }
        assert!(g0_own as f64 / g0_total as f64 > 0.5);
    }
}
