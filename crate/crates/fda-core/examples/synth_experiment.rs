//! Runs baseline vs augmented training on the synthetic planted-skew corpus
//! over several seeds and prints the metric comparison. Useful for eyeballing
//! the directional effect quickly:
//!
//! ```text
//! cargo run --release -p fda-core --example synth_experiment [epochs] [mask_ratio]
//! ```

use fda_core::report::evaluate_table;
use fda_core::synth::{planted_skew, SynthConfig};
use fda_core::trainer::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let mask_ratio: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let k = 10;

    let base_cfg = TrainConfig {
        dim: 16,
        epochs,
        batch_size: 256,
        warmup_epochs: 5,
        eval_every: epochs,
        k_list: vec![k],
        mask_ratio,
        ..Default::default()
    };

    println!("epochs={epochs} mask_ratio={mask_ratio} k={k}");
    println!(
        "{:>4} {:>10} {:>8} {:>8} {:>8} {:>8}",
        "seed", "variant", "hr", "ndcg", "dp", "eo"
    );
    for seed in 0..5u64 {
        let ds = planted_skew(&SynthConfig::directional(), seed);
        for (name, fda, h1, h2) in [
            ("baseline", false, true, true),
            ("fda", true, true, true),
            ("h1-only", true, true, false),
            ("h2-only", true, false, true),
        ] {
            let cfg = TrainConfig {
                seed,
                fda,
                hypothesis1: h1,
                hypothesis2: h2,
                ..base_cfg.clone()
            };
            let (table, _log) = train(&ds, cfg).unwrap();
            let m = &evaluate_table(&table, &ds, &[k], 1).unwrap()[0];
            let top = fda_core::metrics::topk(&table, &ds, k);
            let js = fda_core::report::js_report(&ds, &top).unwrap();
            println!(
                "{:>4} {:>10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}  js: train={:.4} topk={:.4} hit={:.4}",
                seed, name, m.hr, m.ndcg, m.dp, m.eo, js.training, js.topk, js.topk_hit
            );
        }
    }
}
