use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cat_uda::datasets::{encode_idx_images, encode_idx_labels};
use cat_uda::eval::RunMetrics;
use cat_uda::experiment::{self, ExperimentConfig, Summary};

const SMALL: &str = r#"
scenario = "imbalanced_gaussians"
seeds = [0, 1, 2]
eval_every = 50

[train]
total_iters = 200
pretrain_iters = 50
m = 30.0
hidden = [8]

[imbalanced_gaussians]
n_major = 120
n_minor = 20
"#;

fn catuda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catuda")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_reports_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "scenario = \"multimode\"\n");
    let out = catuda(&["validate", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("m = 3.0"), "{text}");
    assert!(text.contains("p = 0.9"));
    assert!(text.contains("teacher_mode = \"temporal\""));
    // The printed config is itself a valid config.
    ExperimentConfig::from_toml_str(&text).unwrap();
}

#[test]
fn validate_rejects_bad_values_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.toml", "scenario = \"multimode\"\n[train]\np = 1.5\n");
    let out = catuda(&["validate", &cfg]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("train: p must lie in [0, 1]"), "{}", stderr(&out));

    let cfg = write_config(
        dir.path(),
        "f.toml",
        "scenario = \"multimode\"\nablation = [\"no_Lc\", \"no_Lq\"]\n",
    );
    let out = catuda(&["validate", &cfg]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("no_Lq") && err.contains("line 2"), "{err}");

    let cfg = write_config(dir.path(), "s.toml", "scenario = \"spirals\"\n");
    assert!(!catuda(&["validate", &cfg]).status.success());
    assert!(!catuda(&["validate", "/nonexistent/config.toml"]).status.success());
}

#[test]
fn run_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = catuda(&["run", &cfg, "--output-dir", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for seed in 0..3 {
        for kind in ["metrics", "features"] {
            let name = format!("{kind}_{seed}.csv");
            let bytes = fs::read(a.join(&name)).unwrap();
            assert_eq!(bytes, fs::read(b.join(&name)).unwrap(), "{name}");
        }
        let metrics = fs::read_to_string(a.join(format!("metrics_{seed}.csv"))).unwrap();
        let lines: Vec<&str> = metrics.lines().collect();
        assert_eq!(lines[0], RunMetrics::CSV_HEADER);
        assert_eq!(lines.len(), 1 + 200 / 50 + 1);
        let features = fs::read_to_string(a.join(format!("features_{seed}.csv"))).unwrap();
        let mut lines = features.lines();
        assert_eq!(lines.next().unwrap(), "domain,true_class,pseudo_class,confidence,f0,f1");
        assert_eq!(lines.clone().count(), 140 + 140);
        assert_eq!(lines.filter(|l| l.starts_with("target,")).count(), 140);
    }

    let summary: Summary = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.final_target_accuracies.len(), 3);
    assert_eq!(summary.seeds, vec![0, 1, 2]);
    let (mean, std) = experiment::mean_std(&summary.final_target_accuracies);
    assert_eq!((summary.mean, summary.std), (mean, std));
    assert_eq!(summary.cell, experiment::table_cell(mean, std));
    assert_eq!(summary.config_hash.len(), 64);
    assert_eq!(
        fs::read(a.join("summary.json")).unwrap(),
        fs::read(b.join("summary.json")).unwrap()
    );
}

#[test]
fn seed_override_replaces_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let out_dir = dir.path().join("o");
    let out = catuda(&[
        "run",
        &cfg,
        "--seed-override",
        "5,9",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out_dir.join("metrics_5.csv").exists() && out_dir.join("metrics_9.csv").exists());
    assert!(!out_dir.join("metrics_0.csv").exists());
    let summary: Summary = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.seeds, vec![5, 9]);
}

#[test]
fn divergence_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("[train]\n", "[train]\nlr_base = 1e200\n")
        .replace("seeds = [0, 1, 2]", "seeds = [0]");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out_dir = dir.path().join("o");
    let out = catuda(&["run", &cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("diverged"), "{}", stderr(&out));
    let metrics = fs::read_to_string(out_dir.join("metrics_0.csv")).unwrap();
    assert!(metrics.starts_with(RunMetrics::CSV_HEADER));
    assert!(metrics.lines().count() >= 2);
    assert!(!out_dir.join("summary.json").exists());
}

#[test]
fn idx_scenario_runs_on_small_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Source 4x4 images, target 2x2: the source is resampled to the target size.
    let (ns, nt) = (40usize, 30usize);
    let pattern = |label: usize, side: usize, i: usize| -> Vec<u8> {
        (0..side * side)
            .map(|p| {
                if (p % side < side / 2) == (label == 0) {
                    200 + (i % 50) as u8
                } else {
                    (i % 30) as u8
                }
            })
            .collect()
    };
    let src_labels: Vec<u8> = (0..ns).map(|i| (i % 2) as u8).collect();
    let tgt_labels: Vec<u8> = (0..nt).map(|i| (i % 2) as u8).collect();
    let src: Vec<u8> = (0..ns).flat_map(|i| pattern(i % 2, 4, i)).collect();
    let tgt: Vec<u8> = (0..nt).flat_map(|i| pattern(i % 2, 2, i)).collect();
    fs::write(d.join("si"), encode_idx_images(ns, 4, 4, &src)).unwrap();
    fs::write(d.join("sl"), encode_idx_labels(&src_labels)).unwrap();
    fs::write(d.join("ti"), encode_idx_images(nt, 2, 2, &tgt)).unwrap();
    fs::write(d.join("tl"), encode_idx_labels(&tgt_labels)).unwrap();
    let text = format!(
        "scenario = \"idx_digits\"\nseeds = [0]\neval_every = 20\noutput_dir = \"{}\"\n\n[train]\ntotal_iters = 40\npretrain_iters = 20\nbatch_source = 8\nbatch_target = 8\nhidden = [6]\n\n[idx_digits]\nsource_images = \"{}\"\nsource_labels = \"{}\"\ntarget_images = \"{}\"\ntarget_labels = \"{}\"\nsource_n = 30\ntarget_n = 20\nclasses = 2\n",
        d.join("o").display(),
        d.join("si").display(),
        d.join("sl").display(),
        d.join("ti").display(),
        d.join("tl").display()
    );
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    let ds = cfg.dataset(0).unwrap();
    assert_eq!((ds.source_len(), ds.target_len(), ds.dim()), (30, 20, 4));
    let summary = experiment::run(&cfg).unwrap();
    assert_eq!(summary.final_target_accuracies.len(), 1);

    let mut bad = cfg.clone();
    bad.idx_digits.as_mut().unwrap().source_labels = d.join("si");
    let err = bad.dataset(0).unwrap_err().to_string();
    assert!(err.contains("byte 0"), "{err}");
}
