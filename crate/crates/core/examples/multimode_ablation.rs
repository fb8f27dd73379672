//! Ablation sweep on the rotated multi-mode domains.
//!
//! cargo run --release --example multimode_ablation

use cat_uda::datasets::{make_multimode_domains, MultimodeParams};
use cat_uda::trainer::{train, Ablation, TrainConfig};

fn main() -> cat_uda::Result<()> {
    let params = MultimodeParams::default();
    let none = Ablation::default();
    let variants = [
        ("CAT", none),
        ("no L_c", Ablation { no_lc: true, ..none }),
        ("no L_a", Ablation { no_la: true, ..none }),
        (
            "no threshold",
            Ablation {
                no_threshold: true,
                ..none
            },
        ),
        (
            "no teacher",
            Ablation {
                no_teacher: true,
                ..none
            },
        ),
        (
            "marginal only",
            Ablation {
                marginal_only: true,
                ..none
            },
        ),
    ];
    for (name, ablation) in variants {
        let mut accs = Vec::new();
        for seed in 0..3 {
            let ds = make_multimode_domains(&params, seed)?;
            let cfg = TrainConfig {
                m: 30.0,
                seed,
                ablation,
                ..TrainConfig::default()
            };
            accs.push(train(&cfg, &ds, 1000)?.metrics.last().unwrap().target_accuracy);
        }
        let mean = accs.iter().sum::<f64>() / 3.0;
        println!("{name:>14}: {mean:.4}  {accs:.3?}");
    }
    Ok(())
}
