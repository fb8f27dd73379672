//! Full CAT against adversarial marginal alignment on class-imbalanced
//! Gaussian domains.
//!
//! cargo run --release --example imbalanced_gaussians

use cat_uda::datasets::{make_imbalanced_gaussians, ImbalancedParams};
use cat_uda::trainer::{train, Ablation, TrainConfig};

fn main() -> cat_uda::Result<()> {
    let params = ImbalancedParams::default();
    for (name, ablation) in [
        ("CAT", Ablation::default()),
        (
            "marginal only",
            Ablation {
                marginal_only: true,
                ..Ablation::default()
            },
        ),
    ] {
        let mut accs = Vec::new();
        for seed in 0..3 {
            let ds = make_imbalanced_gaussians(&params, seed)?;
            let cfg = TrainConfig {
                m: 30.0,
                seed,
                ablation,
                ..TrainConfig::default()
            };
            let run = train(&cfg, &ds, 500)?;
            let last = run.metrics.last().unwrap();
            accs.push(last.target_accuracy);
            println!(
                "{name:>14} seed {seed}: target {:.3}  source {:.3}  clusters {:.3}  selected {:.3}",
                last.target_accuracy, last.source_accuracy, last.clustering_accuracy, last.selection_rate
            );
        }
        println!(
            "{name:>14} mean target accuracy {:.3}",
            accs.iter().sum::<f64>() / accs.len() as f64
        );
    }
    Ok(())
}
