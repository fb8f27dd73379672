//! The training loop: source-only pretraining, then the clustering,
//! alignment and confidence-thresholded adversarial terms ramped in.
//!
//! One step runs, in order: student forwards on both batches, the teacher
//! read (and temporal update), pseudo labelling, the four losses, gradient
//! composition with reversal on the critic path, and momentum SGD on the
//! student and the critic.

mod config;
mod schedule;

pub use config::{Ablation, TrainConfig};
pub use schedule::{alpha_exp_ramp, alpha_logistic, lr_schedule, AlphaSchedule, LambdaSchedule};

use crate::datasets::{BatchPair, BatchStream, DomainDataset};
use crate::diffnet::{
    reverse_gradient, sgd_step, Entry, ForwardTrace, GradientSet, Mode, Network, NetworkSpec, OptimizerState,
};
use crate::error::{Error, Result};
use crate::eval::{self, RunMetrics};
use crate::losses::{
    alignment_loss, clustering_loss, cross_entropy, domain_adversarial_loss, total_objective, LossBundle,
    PseudoLabeledBatch,
};
use crate::matrix::Matrix;
use crate::seed::{self, stream};
use crate::teacher::{pi_predict, pseudo_labels, PseudoLabels, TeacherMode, TeacherState};

#[derive(Debug, Clone)]
pub struct TrainState {
    pub student: Network,
    pub critic: Network,
    pub student_opt: OptimizerState,
    pub critic_opt: OptimizerState,
    pub teacher: TeacherState,
    pub iteration: usize,
    pub metrics: Vec<RunMetrics>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig, ds: &DomainDataset) -> Result<Self> {
        cfg.validate()?;
        let student = Network::new(
            cfg.student_spec(ds.dim(), ds.classes()),
            seed::derive(cfg.seed, stream::INIT_STUDENT, 0),
        )?;
        let critic = Network::new(
            NetworkSpec::critic(student.spec().feature_dim(), cfg.critic_hidden),
            seed::derive(cfg.seed, stream::INIT_CRITIC, 0),
        )?;
        Ok(TrainState {
            student_opt: OptimizerState::new(&student, cfg.momentum, cfg.lr_base)?,
            critic_opt: OptimizerState::new(&critic, cfg.momentum, cfg.lr_base)?,
            teacher: TeacherState::new(cfg.teacher_mode, ds.target_len(), ds.classes(), cfg.decay)?,
            student,
            critic,
            iteration: 0,
            metrics: Vec::new(),
        })
    }
}

/// Student forward passes of one step. Noise seeds depend only on the run
/// seed and the iteration.
pub struct StudentPasses {
    pub source: ForwardTrace,
    pub target: ForwardTrace,
}

pub fn student_passes(
    student: &Network,
    batch: &BatchPair,
    cfg: &TrainConfig,
    iteration: usize,
) -> Result<StudentPasses> {
    let it = iteration as u64;
    Ok(StudentPasses {
        source: student.forward(
            &batch.source_x,
            Mode::Train,
            seed::derive(cfg.seed, stream::STUDENT_NOISE, 2 * it),
        )?,
        target: student.forward(
            &batch.target_x,
            Mode::Train,
            seed::derive(cfg.seed, stream::STUDENT_NOISE, 2 * it + 1),
        )?,
    })
}

/// Teacher labels for the target batch, read before any temporal update.
pub fn teacher_labels(
    state: &TrainState,
    batch: &BatchPair,
    passes: &StudentPasses,
    cfg: &TrainConfig,
) -> Result<PseudoLabels> {
    if cfg.ablation.no_teacher {
        return Ok(pseudo_labels(&passes.target.probabilities));
    }
    match state.teacher.mode() {
        TeacherMode::Pi => {
            let noise = seed::derive(cfg.seed, stream::TEACHER_NOISE, state.iteration as u64);
            Ok(pseudo_labels(&pi_predict(&state.student, &batch.target_x, noise)?))
        }
        TeacherMode::Temporal => state.teacher.pseudo_labels(&batch.target_indices),
    }
}

/// Loss values plus the composed student gradient of one step.
pub struct Composed {
    pub bundle: LossBundle,
    pub student_grads: GradientSet,
    pub objective: f64,
}

fn rows_where(m: &Matrix, keep: &[bool]) -> (Matrix, Vec<usize>) {
    let idx: Vec<usize> = keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect();
    (m.select_rows(&idx), idx)
}

/// Evaluates all four losses on given student passes and teacher labels and
/// composes gradients: the student gets `∂L_y + α(∂L_c + ∂L_a) + λ∂L_d`
/// (the last through gradient reversal of the critic's loss), the critic
/// gets the gradient of `-L_d`, i.e. it ascends `L_d`.
#[allow(clippy::too_many_arguments)]
pub fn compose(
    student: &Network,
    critic: &Network,
    batch: &BatchPair,
    passes: &StudentPasses,
    labels: &PseudoLabels,
    cfg: &TrainConfig,
    alpha: f64,
    lambda: f64,
) -> Result<Composed> {
    let classes = student.spec().output_dim();
    let fs = &passes.source.features;
    let ft = &passes.target.features;

    let ce = cross_entropy(&passes.source.probabilities, &batch.source_y)?;

    // Unseen target samples have no teacher label and sit out L_c and L_a.
    let (ft_seen, seen_idx) = rows_where(ft, &labels.seen);
    let source_batch = PseudoLabeledBatch::labeled(fs.clone(), batch.source_y.clone(), classes)?;
    let target_batch = PseudoLabeledBatch::new(
        ft_seen,
        seen_idx.iter().map(|&i| labels.labels[i]).collect(),
        seen_idx.iter().map(|&i| labels.confidences[i]).collect(),
        classes,
    )?;
    let (lc_s, dlc_s) = clustering_loss(&source_batch, cfg.m, cfg.metric);
    let (lc_t, dlc_t_seen) = clustering_loss(&target_batch, cfg.m, cfg.metric);
    let align = alignment_loss(&source_batch, &target_batch)?;

    let critic_s = critic.forward(fs, Mode::Train, 0)?;
    let critic_t = critic.forward(ft, Mode::Train, 0)?;
    let adv = domain_adversarial_loss(
        critic_s.probabilities.values(),
        critic_t.probabilities.values(),
        &labels.confidences,
        cfg.threshold(),
    )?;
    // Upstream for the critic's own loss, -L_d.
    let up_s = Matrix::from_vec(adv.d_source.len(), 1, adv.d_source.iter().map(|v| -v).collect())?;
    let up_t = Matrix::from_vec(adv.d_target.len(), 1, adv.d_target.iter().map(|v| -v).collect())?;
    let back_s = critic.backward_multi(&critic_s, &[(Entry::Probabilities, &up_s)])?;
    let back_t = critic.backward_multi(&critic_t, &[(Entry::Probabilities, &up_t)])?;
    let mut critic_grads = back_s.grads;
    critic_grads.axpy(1.0, &back_t.grads)?;

    let (l_c, l_a) = (lc_s + lc_t, align.loss);
    let l_y = ce.loss;
    let l_d = adv.loss;

    // Feature-space gradients for the student.
    let mut d_fs = Matrix::zeros(fs.rows(), fs.cols());
    let mut d_ft = Matrix::zeros(ft.rows(), ft.cols());
    let use_lc = !cfg.ablation.no_lc;
    let use_la = !cfg.ablation.no_la;
    if alpha != 0.0 {
        if use_lc {
            d_fs.axpy(alpha, &dlc_s)?;
            for (k, &i) in seen_idx.iter().enumerate() {
                for (d, g) in d_ft.row_mut(i).iter_mut().zip(dlc_t_seen.row(k)) {
                    *d += alpha * g;
                }
            }
        }
        if use_la {
            d_fs.axpy(alpha, &align.d_features_source)?;
            for (k, &i) in seen_idx.iter().enumerate() {
                for (d, g) in d_ft.row_mut(i).iter_mut().zip(align.d_features_target.row(k)) {
                    *d += alpha * g;
                }
            }
        }
    }
    if lambda != 0.0 {
        d_fs.add_assign(&reverse_gradient(&back_s.d_input, lambda))?;
        d_ft.add_assign(&reverse_gradient(&back_t.d_input, lambda))?;
    }

    let back_student_s = student.backward_multi(
        &passes.source,
        &[(Entry::Logits, &ce.d_logits), (Entry::Features, &d_fs)],
    )?;
    let back_student_t = student.backward_multi(&passes.target, &[(Entry::Features, &d_ft)])?;
    let mut student_grads = back_student_s.grads;
    student_grads.axpy(1.0, &back_student_t.grads)?;

    let alpha_eff_c = if use_lc { alpha } else { 0.0 };
    let alpha_eff_a = if use_la { alpha } else { 0.0 };
    let objective = l_y + alpha_eff_c * l_c + alpha_eff_a * l_a + lambda * l_d;
    debug_assert!(
        !(use_lc && use_la)
            || (objective - total_objective(l_y, l_c, l_a, l_d, alpha, lambda)).abs() <= 1e-9 * (1.0 + objective.abs())
    );

    Ok(Composed {
        bundle: LossBundle {
            l_y,
            l_c,
            l_a,
            l_d,
            d_features_source: d_fs,
            d_features_target: d_ft,
            d_logits_source: ce.d_logits,
            critic_grads,
            selection_count: adv.selection_count,
        },
        student_grads,
        objective,
    })
}

fn check_finite(state: &TrainState, bundle: &LossBundle) -> Result<()> {
    let losses = [
        ("l_y", bundle.l_y),
        ("l_c", bundle.l_c),
        ("l_a", bundle.l_a),
        ("l_d", bundle.l_d),
    ];
    if let Some((name, v)) = losses.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Diverged {
            iteration: state.iteration,
            detail: format!("{name} = {v}; losses {losses:?}"),
        });
    }
    if !state.student.params_finite() || !state.critic.params_finite() {
        return Err(Error::Diverged {
            iteration: state.iteration,
            detail: format!("non-finite parameters after update; losses {losses:?}"),
        });
    }
    Ok(())
}

/// Reports overflow inside a forward pass as divergence at `iteration`.
fn diverged_at(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(what) => Error::Diverged {
            iteration,
            detail: format!("non-finite value in {what}"),
        },
        other => other,
    }
}

/// One training step on `batch`.
pub fn train_step(state: &mut TrainState, batch: &BatchPair, cfg: &TrainConfig) -> Result<LossBundle> {
    let it = state.iteration;
    let (alpha, lambda) = cfg.weights_at(it);
    let passes = student_passes(&state.student, batch, cfg, it).map_err(diverged_at(it))?;
    let labels = teacher_labels(state, batch, &passes, cfg).map_err(diverged_at(it))?;
    if state.teacher.mode() == TeacherMode::Temporal {
        state
            .teacher
            .temporal_update(&batch.target_indices, &passes.target.probabilities)?;
    }
    let composed = compose(
        &state.student,
        &state.critic,
        batch,
        &passes,
        &labels,
        cfg,
        alpha,
        lambda,
    )
    .map_err(diverged_at(it))?;

    let lr = lr_schedule(it as f64 / cfg.total_iters as f64, cfg.lr_base);
    sgd_step(&mut state.student, &mut state.student_opt, &composed.student_grads, lr)?;
    sgd_step(
        &mut state.critic,
        &mut state.critic_opt,
        &composed.bundle.critic_grads,
        lr,
    )?;
    state.iteration += 1;
    check_finite(state, &composed.bundle)?;
    Ok(composed.bundle)
}

/// Eval-mode features and teacher output over the whole dataset.
pub struct Snapshot {
    pub source_features: Matrix,
    pub target_features: Matrix,
    pub source_probabilities: Matrix,
    pub target_probabilities: Matrix,
    pub teacher: PseudoLabels,
}

pub fn snapshot(state: &TrainState, ds: &DomainDataset, cfg: &TrainConfig) -> Result<Snapshot> {
    let s = state.student.forward(&ds.source_x, Mode::Eval, 0)?;
    let t = state.student.forward(&ds.target_x, Mode::Eval, 0)?;
    let teacher = if cfg.ablation.no_teacher {
        pseudo_labels(&t.probabilities)
    } else {
        match state.teacher.mode() {
            TeacherMode::Temporal => state.teacher.pseudo_labels(&state.teacher.all_indices())?,
            TeacherMode::Pi => {
                let noise = seed::derive(cfg.seed, stream::EVAL_TEACHER, state.iteration as u64);
                pseudo_labels(&pi_predict(&state.student, &ds.target_x, noise)?)
            }
        }
    };
    Ok(Snapshot {
        source_features: s.features,
        target_features: t.features,
        source_probabilities: s.probabilities,
        target_probabilities: t.probabilities,
        teacher,
    })
}

/// Full-dataset evaluation at the current iteration.
pub fn evaluate(state: &TrainState, ds: &DomainDataset, cfg: &TrainConfig) -> Result<RunMetrics> {
    let snap = snapshot(state, ds, cfg)?;
    let classes = ds.classes();
    let l_y = cross_entropy(&snap.source_probabilities, &ds.source_y)?.loss;

    let (ft_seen, seen_idx) = rows_where(&snap.target_features, &snap.teacher.seen);
    let source_batch = PseudoLabeledBatch::labeled(snap.source_features.clone(), ds.source_y.clone(), classes)?;
    let target_batch = PseudoLabeledBatch::new(
        ft_seen,
        seen_idx.iter().map(|&i| snap.teacher.labels[i]).collect(),
        seen_idx.iter().map(|&i| snap.teacher.confidences[i]).collect(),
        classes,
    )?;
    let l_c = clustering_loss(&source_batch, cfg.m, cfg.metric).0 + clustering_loss(&target_batch, cfg.m, cfg.metric).0;
    let l_a = alignment_loss(&source_batch, &target_batch)?.loss;

    let cs = state.critic.predict(&snap.source_features)?;
    let ct = state.critic.predict(&snap.target_features)?;
    let threshold = cfg.threshold();
    let l_d = domain_adversarial_loss(cs.values(), ct.values(), &snap.teacher.confidences, threshold)?.loss;
    let all_selected = vec![1.0; ds.target_len()];
    let l_d_all = domain_adversarial_loss(cs.values(), ct.values(), &all_selected, 0.0)?.loss;

    let clusters = eval::combined_cluster_accuracy(
        &snap.source_features,
        &snap.target_features,
        ds,
        seed::derive(cfg.seed, stream::KMEANS, state.iteration as u64),
    )?;

    Ok(RunMetrics {
        iteration: state.iteration,
        target_accuracy: eval::accuracy_of(&snap.target_probabilities, eval::hidden_target_labels(ds)),
        source_accuracy: eval::accuracy_of(&snap.source_probabilities, &ds.source_y),
        clustering_accuracy: clusters.combined,
        jsd_proxy: eval::jsd_proxy(l_d_all),
        selection_rate: eval::selection_rate(&snap.teacher.confidences, threshold),
        l_y,
        l_c,
        l_a,
        l_d,
    })
}

/// Result of a full run.
pub struct TrainRun {
    pub metrics: Vec<RunMetrics>,
    pub state: TrainState,
}

/// Runs `cfg.total_iters` steps, evaluating at iteration 0 and after every
/// `eval_every` steps.
pub fn train(cfg: &TrainConfig, ds: &DomainDataset, eval_every: usize) -> Result<TrainRun> {
    train_with(cfg, ds, eval_every, |_| Ok(()))
}

/// [`train`] with a callback invoked on each evaluation as it is produced.
pub fn train_with<F>(cfg: &TrainConfig, ds: &DomainDataset, eval_every: usize, mut on_eval: F) -> Result<TrainRun>
where
    F: FnMut(&RunMetrics) -> Result<()>,
{
    if eval_every == 0 {
        return Err(Error::Config("eval_every must be positive".into()));
    }
    let mut state = TrainState::new(cfg, ds)?;
    let mut batches = BatchStream::new(ds, cfg.batch_source, cfg.batch_target, cfg.seed)?;
    let first = evaluate(&state, ds, cfg)?;
    on_eval(&first)?;
    state.metrics.push(first);
    while state.iteration < cfg.total_iters {
        let batch = batches.next().expect("endless stream");
        train_step(&mut state, &batch, cfg)?;
        if state.iteration % eval_every == 0 {
            let m = evaluate(&state, ds, cfg).map_err(diverged_at(state.iteration))?;
            on_eval(&m)?;
            state.metrics.push(m);
        }
    }
    Ok(TrainRun {
        metrics: state.metrics.clone(),
        state,
    })
}
