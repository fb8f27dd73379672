//! k-means with restarts and majority-label clustering accuracy.
//!
//! cargo run --example kmeans_clustering

use cat_uda::datasets::{make_multimode_domains, MultimodeParams};
use cat_uda::eval::{cluster_accuracy, kmeans_restarts};

fn main() -> cat_uda::Result<()> {
    let params = MultimodeParams {
        extra_mode: false,
        rotation_deg: 0.0,
        ..MultimodeParams::default()
    };
    let ds = make_multimode_domains(&params, 3)?;
    // Four spatial modes but two classes: k = 2 clusters cannot be pure,
    // k = 4 can.
    for k in [2, 4] {
        let km = kmeans_restarts(&ds.source_x, k, 11, 300, 5);
        println!(
            "k = {k}: inertia {:.2} after {} iterations, cluster accuracy {:.3}",
            km.inertia,
            km.inertia_history.len(),
            cluster_accuracy(&km.assignments, &ds.source_y)
        );
    }
    Ok(())
}
