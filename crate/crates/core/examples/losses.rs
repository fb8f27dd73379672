//! The clustering, alignment and thresholded adversarial losses on small
//! hand-made batches.
//!
//! cargo run --example losses

use cat_uda::losses::{alignment_loss, clustering_loss, domain_adversarial_loss, Metric, PseudoLabeledBatch};
use cat_uda::Matrix;

fn main() -> cat_uda::Result<()> {
    let source = PseudoLabeledBatch::labeled(
        Matrix::from_rows(&[[0.0, 0.0], [0.5, 0.0], [3.0, 3.0]])?,
        vec![0, 0, 1],
        2,
    )?;
    let target = PseudoLabeledBatch::new(
        Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]])?,
        vec![0, 0],
        vec![0.95, 0.6],
        2,
    )?;

    for m in [1.0, 3.0, 30.0] {
        println!(
            "L_c(source, m = {m}) = {:.4}",
            clustering_loss(&source, m, Metric::SqEuclidean).0
        );
    }
    let a = alignment_loss(&source, &target)?;
    println!("L_a = {:.4} over classes {:?}", a.loss, a.present_classes);

    let critic_source = [0.7, 0.8, 0.6];
    let critic_target = [0.4, 0.3];
    for p in [0.0, 0.9, 0.99] {
        let d = domain_adversarial_loss(&critic_source, &critic_target, &target.confidences, p)?;
        println!(
            "L_d(p = {p}) = {:.4} with {} target samples selected",
            d.loss, d.selection_count
        );
    }
    Ok(())
}
