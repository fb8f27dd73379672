//! Temporal-ensemble teacher: bias correction, confidences and the unseen
//! convention, next to a Π-model teacher.
//!
//! cargo run --example teacher_ensemble

use cat_uda::diffnet::{Activation, Network, NetworkSpec};
use cat_uda::teacher::{pi_predict, pseudo_labels, TeacherMode, TeacherState};
use cat_uda::Matrix;

fn main() -> cat_uda::Result<()> {
    let mut teacher = TeacherState::new(TeacherMode::Temporal, 3, 2, 0.6)?;
    let steps = [[0.2, 0.8], [0.4, 0.6], [0.9, 0.1]];
    for (t, p) in steps.iter().enumerate() {
        teacher.temporal_update(&[0], &Matrix::from_rows(&[*p])?)?;
        let labels = teacher.pseudo_labels(&[0, 1])?;
        println!(
            "step {}: corrected {:?}  label {} confidence {:.3}  (sample 1 seen: {})",
            t + 1,
            teacher.corrected(&[0])?.row(0),
            labels.labels[0],
            labels.confidences[0],
            labels.seen[1]
        );
    }
    teacher.write_csv(std::io::stdout())?;

    let net = Network::new(NetworkSpec::classifier(vec![2, 16, 2], Activation::Relu, 0.3), 1)?;
    let x = Matrix::from_rows(&[[1.0, 0.5], [-0.5, 2.0]])?;
    for noise in 0..3 {
        let labels = pseudo_labels(&pi_predict(&net, &x, noise)?);
        println!(
            "Π-model pass {noise}: labels {:?} confidences {:.3?}",
            labels.labels, labels.confidences
        );
    }
    Ok(())
}
