use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scdiff::checkpoint::Checkpoint;
use scdiff_core::{DenoiserConfig, DenoiserModel, NoiseSchedule, PreprocessSpec, Tensor};

fn scdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scdiff"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TOY: &str = "cell_id,a,b,c\nc1,0,1,5\nc2,2,1,0\nc3,4,1,0\nc4,0,1,6\n";

const TOY_CONFIG: &str = r#"{
  "schedule": {"steps": 40},
  "model": {"patch_size": 2, "hidden_size": 8, "n_blocks": 1, "n_heads": 2, "t_embed_dim": 8},
  "train": {"epochs": 4, "batch_size": 8, "learning_rate": 0.001, "seed": 3, "log_every": 0}
}"#;

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path
    }

    /// Generated, preprocessed 8-gene data plus a toy config.
    fn training_inputs(&self) -> (PathBuf, PathBuf) {
        let raw = self.path("raw.csv");
        let o = scdiff(&["synth", "--out", p(&raw), "--genes", "8", "--cells", "30", "--seed", "2"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let data = self.path("data.csv");
        let o = scdiff(&[
            "preprocess", "--input", p(&raw), "--output", p(&data), "--top-k", "8", "--negation", "-3",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (data, self.write("config.json", TOY_CONFIG))
    }

    fn train(&self, out: &str) -> PathBuf {
        let (data, config) = self.training_inputs();
        let dir = self.path(out);
        let o = scdiff(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&dir)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        dir
    }
}

#[test]
fn version_lists_formats() {
    let o = scdiff(&["--version"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("checkpoint format 1") && out.contains("report schema 1"), "{out}");
}

#[test]
fn preprocess_keeps_top_k() {
    let f = Fixture::new();
    let input = f.write("toy.csv", TOY);
    let output = f.path("out.csv");
    let o = scdiff(&["preprocess", "--input", p(&input), "--output", p(&output), "--top-k", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&output).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 3);
    // Gene b is constant (cv 0) and drops out; zeros became -10.
    assert!(!header.contains(",b"));
    assert!(text.contains("-10"));
    assert!(f.path("out.genes.json").exists());
}

#[test]
fn preprocess_errors_exit_2() {
    let f = Fixture::new();
    let missing = f.path("nope.csv");
    let o = scdiff(&["preprocess", "--input", p(&missing), "--output", p(&f.path("o.csv"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nope.csv"), "{}", stderr(&o));

    let input = f.write("toy.csv", TOY);
    let o = scdiff(&[
        "preprocess", "--input", p(&input), "--output", p(&f.path("o.csv")), "--negation", "1",
    ]);
    assert_eq!(code(&o), 2);

    let o = scdiff(&["preprocess", "--input", p(&input)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_writes_losses_and_is_reproducible() {
    let f = Fixture::new();
    let a = f.train("run_a");
    let b = f.train("run_b");
    let losses = fs::read_to_string(a.join("loss.csv")).unwrap();
    assert_eq!(losses.lines().count(), 1 + 4);
    assert!(losses.starts_with("epoch,mean_loss\n1,"));
    assert_eq!(fs::read(a.join("final.scrd")).unwrap(), fs::read(b.join("final.scrd")).unwrap());
    assert!(a.join("config.json").exists());
}

#[test]
fn resume_matches_uninterrupted_run() {
    let f = Fixture::new();
    let (data, _) = f.training_inputs();
    let with_ckpt = TOY_CONFIG.replace("\"log_every\": 0", "\"log_every\": 0, \"checkpoint_every\": 2");
    let config = f.write("ck.json", &with_ckpt);
    let full = f.path("full");
    let o = scdiff(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&full)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mid = full.join("checkpoint_000002.scrd");
    assert!(mid.exists());
    let resumed = f.path("resumed");
    let o = scdiff(&[
        "train", "--config", p(&config), "--data", p(&data), "--out", p(&resumed), "--resume", p(&mid),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read(full.join("final.scrd")).unwrap(),
        fs::read(resumed.join("final.scrd")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(full.join("loss.csv")).unwrap(),
        fs::read_to_string(resumed.join("loss.csv")).unwrap()
    );
}

#[test]
fn bad_config_exits_2_with_location() {
    let f = Fixture::new();
    let (data, _) = f.training_inputs();
    let bad = f.write("bad.json", "{\n  \"train\": {\"epochs\": }\n}");
    let o = scdiff(&["train", "--config", p(&bad), "--data", p(&data), "--out", p(&f.path("x"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    let unknown = f.write("unknown.json", r#"{"train": {"epoks": 2}}"#);
    let o = scdiff(&["train", "--config", p(&unknown), "--data", p(&data), "--out", p(&f.path("y"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sample_records_calls_and_validates_flags() {
    let f = Fixture::new();
    let run = f.train("run");
    let ck = run.join("final.scrd");
    let out = f.path("s.csv");
    let o = scdiff(&[
        "sample", "--checkpoint", p(&ck), "--n", "5", "--method", "ddim", "--steps", "10", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path("s.json")).unwrap()).unwrap();
    assert_eq!(side["denoiser_calls"], 10);
    assert_eq!(side["tau"].as_array().unwrap().len(), 10);
    assert_eq!(side["checkpoint_sha256"].as_str().unwrap().len(), 64);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 6);

    let o = scdiff(&[
        "sample", "--checkpoint", p(&ck), "--n", "2", "--method", "ddpm", "--steps", "10", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path("s.json")).unwrap()).unwrap();
    assert_eq!(side["denoiser_calls"], 40);

    let o = scdiff(&["sample", "--checkpoint", p(&ck), "--n", "2", "--eta", "1.5", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn numeric_failure_exits_3() {
    let f = Fixture::new();
    let cfg = DenoiserConfig::tiny(4);
    let base = DenoiserModel::new(cfg.clone(), 10, 0).unwrap();
    let huge = base
        .parameters()
        .iter()
        .map(|q| (q.name.clone(), Tensor::full(q.value.shape(), 1e200)))
        .collect();
    let ck = Checkpoint {
        model: DenoiserModel::from_parameters(cfg, 10, huge).unwrap(),
        schedule: NoiseSchedule::linear(10, 1e-3, 0.02).unwrap(),
        preprocess: PreprocessSpec {
            top_k: 4,
            negation: -1.0,
            selected_gene_indices: vec![],
            selected_gene_names: (0..4).map(|g| format!("g{g}")).collect(),
        },
        train_state: None,
    };
    let path = f.path("huge.scrd");
    ck.save(&path).unwrap();
    let o = scdiff(&["sample", "--checkpoint", p(&path), "--n", "2", "--out", p(&f.path("s.csv"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

const REAL: &str = "cell_id,g1,g2,g3\nr1,0,1.5,2\nr2,3,0,1\nr3,1,2.5,0\nr4,0,0.5,4\n";
const SYNTH: &str = "cell_id,g1,g2,g3\ns1,0.5,1,2\ns2,2,0,0\ns3,0,2,1.5\n";

#[test]
fn evaluate_identical_and_golden() {
    let f = Fixture::new();
    let real = f.write("real.csv", REAL);
    let synth = f.write("synth.csv", SYNTH);
    let out = f.path("same.json");
    let o = scdiff(&["evaluate", "--real", p(&real), "--synth", p(&real), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    for k in ["kl", "wasserstein", "mmd"] {
        assert!(v[k].as_f64().unwrap() <= 1e-10, "{k}");
    }

    let out = f.path("report.json");
    let per_gene = f.path("genes.csv");
    let pca = f.path("pca.csv");
    let o = scdiff(&[
        "evaluate", "--real", p(&real), "--synth", p(&synth), "--out", p(&out), "--bins", "4",
        "--per-gene", p(&per_gene), "--pca", p(&pca),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/report.json");
    assert_eq!(fs::read_to_string(&out).unwrap(), fs::read_to_string(golden).unwrap());
    let genes = fs::read_to_string(per_gene).unwrap();
    assert!(genes.starts_with("gene,cv_real,cv_synth,zeroprop_real,zeroprop_synth\ng1,"));
    assert_eq!(fs::read_to_string(pca).unwrap().lines().count(), 1 + 4 + 3);
}

#[test]
fn evaluate_header_mismatch_exits_2() {
    let f = Fixture::new();
    let real = f.write("real.csv", REAL);
    let other = f.write("other.csv", "cell_id,g1,gX,g3\ns1,1,1,1\n");
    let o = scdiff(&["evaluate", "--real", p(&real), "--synth", p(&other), "--out", p(&f.path("r.json"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("g2") && stderr(&o).contains("gX"), "{}", stderr(&o));
}

#[test]
fn evaluate_reduces_real_to_gene_list() {
    let f = Fixture::new();
    let raw = f.write("toy.csv", TOY);
    let prep = f.path("prep.csv");
    let o = scdiff(&["preprocess", "--input", p(&raw), "--output", p(&prep), "--top-k", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let synth = f.write("synth.csv", "cell_id,a,c\ns1,1,2\ns2,0,3\n");
    let out = f.path("r.json");
    let o = scdiff(&["evaluate", "--real", p(&raw), "--synth", p(&synth), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    let genes = f.path("prep.genes.json");
    let o = scdiff(&[
        "evaluate", "--real", p(&raw), "--synth", p(&synth), "--out", p(&out), "--genes", p(&genes),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["per_gene_zero_prop_real"].as_array().unwrap().len(), 2);
}

#[test]
fn schedule_dump() {
    let o = scdiff(&["schedule", "--steps", "5", "--beta-start", "0.1", "--beta-end", "0.5"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().count(), 6);
    assert!(out.starts_with("t,beta,alpha,alpha_bar,beta_tilde\n1,0.1,0.9,0.9,"));
    let o = scdiff(&["schedule", "--steps", "5", "--beta-start", "0.5", "--beta-end", "0.1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn synth_writes_spec_sidecar() {
    let f = Fixture::new();
    let out = f.path("d.csv");
    let o = scdiff(&["synth", "--out", p(&out), "--genes", "4", "--cells", "10"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let spec = f.path("d.spec.json");
    let again = f.path("e.csv");
    let o = scdiff(&["synth", "--out", p(&again), "--spec", p(&spec)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn bench_writes_rate_table() {
    let f = Fixture::new();
    let config = f.write(
        "bench.json",
        r#"{
  "schedule": {"steps": 100},
  "model": {"patch_size": 2, "hidden_size": 8, "n_blocks": 1, "n_heads": 2, "t_embed_dim": 8},
  "train": {"epochs": 2, "batch_size": 32, "learning_rate": 0.001, "log_every": 0},
  "sample": {"n_samples": 20},
  "synth": {"n_genes": 6, "n_cells": 40, "holdout_cells": 20}
}"#,
    );
    let out = f.path("bench");
    let o = scdiff(&["bench", "--config", p(&config), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(out.join("bench.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(table.lines().next().unwrap(), "rate,kl,wasserstein,mmd,wallclock_s,denoiser_calls");
    let rates: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(rates, ["1", "10", "20", "50", "100"]);
    let calls: Vec<&str> = rows.iter().map(|r| r[5]).collect();
    assert_eq!(calls, ["100", "10", "5", "2", "1"]);
}
