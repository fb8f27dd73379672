//! Experiment runner: TOML configuration, scenario presets, seed sweeps and
//! CSV/JSON export.
//!
//! One run writes, per seed, `metrics_<seed>.csv` and `features_<seed>.csv`,
//! then a single `summary.json` once every seed has finished.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{
    load_idx, make_imbalanced_gaussians, make_multimode_domains, DomainDataset, ImbalancedParams, MultimodeParams,
};
use crate::error::{Error, Result};
use crate::eval::{self, ClusterReport, RunMetrics};
use crate::matrix::Matrix;
use crate::seed::{self, stream};
use crate::teacher::argmax;
use crate::trainer::{self, snapshot, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ImbalancedGaussians,
    Multimode,
    IdxDigits,
}

/// Ablation switches as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AblationFlag {
    #[serde(rename = "no_Lc")]
    NoLc,
    #[serde(rename = "no_La")]
    NoLa,
    #[serde(rename = "no_rRevGrad_threshold")]
    NoThreshold,
    #[serde(rename = "no_teacher")]
    NoTeacher,
    #[serde(rename = "marginal_only")]
    MarginalOnly,
}

/// Source and target IDX file pairs. Images of different sizes are
/// resampled to the smaller side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxParams {
    pub source_images: PathBuf,
    pub source_labels: PathBuf,
    pub target_images: PathBuf,
    pub target_labels: PathBuf,
    #[serde(default = "default_source_n")]
    pub source_n: usize,
    #[serde(default = "default_target_n")]
    pub target_n: usize,
    #[serde(default = "default_digit_classes")]
    pub classes: usize,
}

fn default_source_n() -> usize {
    2000
}

fn default_target_n() -> usize {
    1800
}

fn default_digit_classes() -> usize {
    10
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_eval_every() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub ablation: Vec<AblationFlag>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub imbalanced_gaussians: ImbalancedParams,
    #[serde(default)]
    pub multimode: MultimodeParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idx_digits: Option<IdxParams>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario) -> Self {
        ExperimentConfig {
            scenario,
            seeds: default_seeds(),
            ablation: Vec::new(),
            output_dir: default_output_dir(),
            eval_every: default_eval_every(),
            train: TrainConfig::default(),
            imbalanced_gaussians: ImbalancedParams::default(),
            multimode: MultimodeParams::default(),
            idx_digits: None,
        }
    }

    /// Parses and validates. Parse errors carry line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("seeds: duplicate seed {}", w[0])));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every: must be positive".into()));
        }
        self.train.validate().map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("train: {msg}")),
            other => other,
        })?;
        let section = |name: &str, r: Result<()>| r.map_err(|e| Error::Config(format!("{name}: {e}")));
        match self.scenario {
            Scenario::ImbalancedGaussians => section("imbalanced_gaussians", self.imbalanced_gaussians.validate()),
            Scenario::Multimode => section("multimode", self.multimode.validate()),
            Scenario::IdxDigits => match &self.idx_digits {
                None => Err(Error::Config(
                    "idx_digits: section required for scenario idx_digits".into(),
                )),
                Some(p) if p.source_n == 0 || p.target_n == 0 || p.classes < 2 => Err(Error::Config(
                    "idx_digits: sample counts must be positive and classes at least 2".into(),
                )),
                Some(_) => Ok(()),
            },
        }
    }

    /// Training configuration of one seed with the ablation flags applied.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let mut cfg = self.train.clone();
        cfg.seed = seed;
        for flag in &self.ablation {
            match flag {
                AblationFlag::NoLc => cfg.ablation.no_lc = true,
                AblationFlag::NoLa => cfg.ablation.no_la = true,
                AblationFlag::NoThreshold => cfg.ablation.no_threshold = true,
                AblationFlag::NoTeacher => cfg.ablation.no_teacher = true,
                AblationFlag::MarginalOnly => cfg.ablation.marginal_only = true,
            }
        }
        cfg
    }

    pub fn dataset(&self, seed: u64) -> Result<DomainDataset> {
        match self.scenario {
            Scenario::ImbalancedGaussians => make_imbalanced_gaussians(&self.imbalanced_gaussians, seed),
            Scenario::Multimode => make_multimode_domains(&self.multimode, seed),
            Scenario::IdxDigits => {
                let p = self
                    .idx_digits
                    .as_ref()
                    .ok_or_else(|| Error::Config("idx_digits: section missing".into()))?;
                load_digit_domains(p, seed)
            }
        }
    }

    /// The config with every default filled in, as TOML.
    pub fn resolved_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved TOML without the output directory, hex
    /// encoded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let digest = Sha256::digest(canonical.resolved_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn load_digit_domains(p: &IdxParams, seed: u64) -> Result<DomainDataset> {
    let (sx, sy) = load_idx(
        &p.source_images,
        &p.source_labels,
        p.source_n,
        seed::derive(seed, stream::DATA, 0),
    )?;
    let (tx, ty) = load_idx(
        &p.target_images,
        &p.target_labels,
        p.target_n,
        seed::derive(seed, stream::DATA, 1),
    )?;
    let (sx, tx) = match sx.cols().cmp(&tx.cols()) {
        std::cmp::Ordering::Greater => (resample_square(&sx, tx.cols())?, tx),
        std::cmp::Ordering::Less => (sx.clone(), resample_square(&tx, sx.cols())?),
        std::cmp::Ordering::Equal => (sx, tx),
    };
    DomainDataset::new(sx, sy, tx, ty, p.classes)
}

fn square_side(dim: usize) -> Result<usize> {
    let side = (dim as f64).sqrt().round() as usize;
    if side * side == dim {
        Ok(side)
    } else {
        Err(Error::Parameter(format!("image dimension {dim} is not square")))
    }
}

/// Bilinear resampling of flattened square images to `to_dim` pixels.
pub fn resample_square(images: &Matrix, to_dim: usize) -> Result<Matrix> {
    let (from, to) = (square_side(images.cols())?, square_side(to_dim)?);
    let scale = from as f64 / to as f64;
    let mut out = Matrix::zeros(images.rows(), to_dim);
    for (src, dst) in images.iter_rows().zip(0..) {
        for r in 0..to {
            let y = ((r as f64 + 0.5) * scale - 0.5).clamp(0.0, (from - 1) as f64);
            let (y0, fy) = (y.floor() as usize, y.fract());
            let y1 = (y0 + 1).min(from - 1);
            for c in 0..to {
                let x = ((c as f64 + 0.5) * scale - 0.5).clamp(0.0, (from - 1) as f64);
                let (x0, fx) = (x.floor() as usize, x.fract());
                let x1 = (x0 + 1).min(from - 1);
                let px = |yy: usize, xx: usize| src[yy * from + xx];
                let top = px(y0, x0) * (1.0 - fx) + px(y0, x1) * fx;
                let bottom = px(y1, x0) * (1.0 - fx) + px(y1, x1) * fx;
                out[(dst, r * to + c)] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Ok(out)
}

/// Final numbers of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub target_accuracy: f64,
    pub source_accuracy: f64,
    pub clusters: ClusterReport,
    pub jsd_proxy: f64,
    pub selection_rate: f64,
    /// Metrics at the last evaluation not after the end of pretraining.
    pub pretrain: RunMetrics,
    pub metrics: Vec<RunMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: Scenario,
    pub ablation: Vec<AblationFlag>,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub final_target_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// `mean ± std` in percent.
    pub cell: String,
    pub per_seed: Vec<SeedSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub target_accuracy: f64,
    pub source_accuracy: f64,
    pub cluster_accuracy: f64,
    pub cluster_accuracy_source: f64,
    pub cluster_accuracy_target: f64,
    pub jsd_proxy: f64,
    pub pretrain_jsd_proxy: f64,
    pub selection_rate: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn table_cell(mean: f64, std: f64) -> String {
    format!("{:.1} ± {:.1}", 100.0 * mean, 100.0 * std)
}

impl Summary {
    pub fn new(cfg: &ExperimentConfig, results: &[SeedResult]) -> Self {
        let accs: Vec<f64> = results.iter().map(|r| r.target_accuracy).collect();
        let (mean, std) = mean_std(&accs);
        Summary {
            scenario: cfg.scenario,
            ablation: cfg.ablation.clone(),
            config_hash: cfg.hash(),
            seeds: results.iter().map(|r| r.seed).collect(),
            final_target_accuracies: accs,
            mean,
            std,
            cell: table_cell(mean, std),
            per_seed: results
                .iter()
                .map(|r| SeedSummary {
                    seed: r.seed,
                    target_accuracy: r.target_accuracy,
                    source_accuracy: r.source_accuracy,
                    cluster_accuracy: r.clusters.combined,
                    cluster_accuracy_source: r.clusters.source,
                    cluster_accuracy_target: r.clusters.target,
                    jsd_proxy: r.jsd_proxy,
                    pretrain_jsd_proxy: r.pretrain.jsd_proxy,
                    selection_rate: r.selection_rate,
                })
                .collect(),
        }
    }
}

/// Trains one seed, streaming `metrics_<seed>.csv` as evaluations arrive
/// and writing `features_<seed>.csv` at the end.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<SeedResult> {
    let tc = cfg.train_config(seed);
    let ds = cfg.dataset(seed)?;
    let mut metrics_file = BufWriter::new(File::create(out.join(format!("metrics_{seed}.csv")))?);
    writeln!(metrics_file, "{}", RunMetrics::CSV_HEADER)?;
    let run = trainer::train_with(&tc, &ds, cfg.eval_every, |m| {
        writeln!(metrics_file, "{}", m.csv_row())?;
        metrics_file.flush()?;
        Ok(())
    })?;
    drop(metrics_file);

    let snap = snapshot(&run.state, &ds, &tc)?;
    let features = BufWriter::new(File::create(out.join(format!("features_{seed}.csv")))?);
    write_features(features, &snap, &ds)?;

    let last = run.metrics.last().expect("initial evaluation").clone();
    let pretrain = run
        .metrics
        .iter()
        .rev()
        .find(|m| m.iteration <= tc.pretrain_iters)
        .expect("iteration 0 is evaluated")
        .clone();
    let clusters = eval::combined_cluster_accuracy(
        &snap.source_features,
        &snap.target_features,
        &ds,
        seed::derive(tc.seed, stream::KMEANS, run.state.iteration as u64),
    )?;
    Ok(SeedResult {
        seed,
        target_accuracy: last.target_accuracy,
        source_accuracy: last.source_accuracy,
        clusters,
        jsd_proxy: last.jsd_proxy,
        selection_rate: last.selection_rate,
        pretrain,
        metrics: run.metrics,
    })
}

fn write_features<W: Write>(mut w: W, snap: &trainer::Snapshot, ds: &DomainDataset) -> Result<()> {
    let mut header = String::from("domain,true_class,pseudo_class,confidence");
    for c in 0..snap.source_features.cols() {
        header.push_str(&format!(",f{c}"));
    }
    writeln!(w, "{header}")?;
    for (i, (row, probs)) in snap
        .source_features
        .iter_rows()
        .zip(snap.source_probabilities.iter_rows())
        .enumerate()
    {
        let (pred, conf) = argmax(probs);
        write_feature_row(&mut w, "source", ds.source_y[i], pred, conf, row)?;
    }
    let truth = eval::hidden_target_labels(ds);
    for (i, row) in snap.target_features.iter_rows().enumerate() {
        let (label, conf) = (snap.teacher.labels[i], snap.teacher.confidences[i]);
        write_feature_row(&mut w, "target", truth[i], label, conf, row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_feature_row<W: Write>(
    w: &mut W,
    domain: &str,
    truth: usize,
    pseudo: usize,
    conf: f64,
    f: &[f64],
) -> Result<()> {
    let mut line = format!("{domain},{truth},{pseudo},{conf}");
    for v in f {
        line.push_str(&format!(",{v}"));
    }
    writeln!(w, "{line}")?;
    Ok(())
}

/// Runs every seed on its own thread and writes `summary.json` once all
/// succeed. Files of finished or aborted seeds are left in place.
pub fn run(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let out = cfg.output_dir.as_path();
    let results: Vec<Result<SeedResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| s.spawn(move || run_seed(cfg, seed, out)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("seed thread panicked"))
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = Summary::new(cfg, &results);
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(out.join("summary.json"), json + "\n")?;
    Ok(summary)
}
