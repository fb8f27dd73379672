//! Finite-difference check of the cross-entropy and clustering-loss
//! gradients of a small network.
//!
//! cargo run --example gradient_check

use cat_uda::diffnet::{finite_diff_check, Activation, Entry, Mode, Network, NetworkSpec};
use cat_uda::losses::{clustering_loss, cross_entropy, Metric, PseudoLabeledBatch};
use cat_uda::Matrix;

fn main() -> cat_uda::Result<()> {
    let net = Network::new(NetworkSpec::classifier(vec![2, 8, 6, 3], Activation::Tanh, 0.0), 7)?;
    let x = Matrix::from_rows(&[
        [0.1, -1.0],
        [1.2, 0.4],
        [-0.7, 0.9],
        [0.3, 0.3],
        [-1.1, -0.2],
        [0.8, -0.6],
    ])?;
    let y = vec![0, 1, 2, 0, 1, 2];
    let trace = net.forward(&x, Mode::Eval, 0)?;

    let ce = cross_entropy(&trace.probabilities, &y)?;
    let grads = net.backward(&trace, &ce.d_logits, Entry::Logits)?;
    let err = finite_diff_check(
        &net,
        |n| {
            cross_entropy(&n.forward(&x, Mode::Eval, 0).unwrap().probabilities, &y)
                .unwrap()
                .loss
        },
        &grads,
        1e-5,
    );
    println!("cross-entropy: loss {:.5}, max relative error {err:.2e}", ce.loss);

    let batch = PseudoLabeledBatch::labeled(trace.features.clone(), y.clone(), 3)?;
    let (lc, d_features) = clustering_loss(&batch, 3.0, Metric::SqEuclidean);
    let grads = net.backward(&trace, &d_features, Entry::Features)?;
    let err = finite_diff_check(
        &net,
        |n| {
            let f = n.forward(&x, Mode::Eval, 0).unwrap().features;
            clustering_loss(
                &PseudoLabeledBatch::labeled(f, y.clone(), 3).unwrap(),
                3.0,
                Metric::SqEuclidean,
            )
            .0
        },
        &grads,
        1e-5,
    );
    println!("clustering:    loss {lc:.5}, max relative error {err:.2e}");
    Ok(())
}
