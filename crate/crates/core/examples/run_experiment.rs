//! Runs an experiment config through the library API, the same path the
//! `catuda run` command takes.
//!
//! cargo run --release --example run_experiment -- configs/multimode.toml

use std::path::PathBuf;

use cat_uda::experiment::{self, ExperimentConfig};

fn main() -> cat_uda::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| "configs/imbalanced_gaussians.toml".into());
    let cfg = ExperimentConfig::load(&path)?;
    let summary = experiment::run(&cfg)?;
    for s in &summary.per_seed {
        println!(
            "seed {}: target {:.4}  clusters {:.4} (source {:.4}, target {:.4})  jsd {:.3} -> {:.3}",
            s.seed,
            s.target_accuracy,
            s.cluster_accuracy,
            s.cluster_accuracy_source,
            s.cluster_accuracy_target,
            s.pretrain_jsd_proxy,
            s.jsd_proxy
        );
    }
    println!(
        "{}: {} written to {}",
        path.display(),
        summary.cell,
        cfg.output_dir.display()
    );
    Ok(())
}
