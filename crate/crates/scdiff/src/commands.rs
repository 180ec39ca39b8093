//! The work behind each subcommand. Every function reads its inputs, writes
//! its outputs and reports progress on stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use scdiff_core::dataset::{select_hypervariable, zero_negate};
use scdiff_core::metrics::{self, pca_project};
use scdiff_core::sampler::{self, make_tau, SampleOutput, TauMode};
use scdiff_core::synthdata::{self, GeneratorSpec};
use scdiff_core::{
    DenoiserModel, ExpressionMatrix, Method, MetricsReport, NoiseSchedule, PreprocessSpec,
    SampleRequest, TrainConfig, Trainer,
};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{file_sha256, Checkpoint};
use crate::config::{load_config, to_json, RunConfig};
use crate::csv_io::{read_matrix, read_raw_matrix, write_matrix};
use crate::error::{CliError, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const BENCH_RATES: [usize; 5] = [1, 10, 20, 50, 100];

/// `dir/stem.csv` with the extension swapped for `suffix`, e.g. `.genes.json`.
pub fn sidecar_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Sidecar written by `preprocess`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneList {
    pub spec: PreprocessSpec,
    pub cv: Vec<f64>,
    pub skipped: Vec<String>,
}

pub fn read_gene_list(path: &Path) -> Result<GeneList> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn preprocess(input: &Path, output: &Path, top_k: usize, negation: f64) -> Result<()> {
    if !(negation < 0.0) {
        return Err(scdiff_core::Error::InvalidNegation(negation).into());
    }
    let raw = read_raw_matrix(input)?;
    let sel = select_hypervariable(&raw, top_k, negation)?;
    let negated = zero_negate(&sel.matrix, negation)?;
    write_matrix(output, &negated)?;
    let list = GeneList {
        spec: sel.spec,
        cv: sel.cvs,
        skipped: sel.skipped,
    };
    write_text(&sidecar_path(output, ".genes.json"), &to_json(&list))?;
    eprintln!(
        "kept {} of {} genes ({} zero-mean skipped)",
        negated.n_genes(),
        raw.n_genes(),
        list.skipped.len()
    );
    Ok(())
}

/// Runs `trainer` to completion, saving periodic checkpoints into `out` when
/// given.
fn drive(
    trainer: &mut Trainer<'_>,
    model: &mut DenoiserModel,
    schedule: &NoiseSchedule,
    preprocess: &PreprocessSpec,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = trainer.config().clone();
    while !trainer.is_finished() {
        let loss = trainer.run_epoch(model)?;
        let epoch = trainer.state().epoch;
        if cfg.log_every > 0 && epoch % cfg.log_every == 0 {
            eprintln!("epoch {epoch}/{}: mean loss {loss:.6}", cfg.epochs);
        }
        if let Some(dir) = out {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                let ck = Checkpoint {
                    model: model.clone(),
                    schedule: schedule.clone(),
                    preprocess: preprocess.clone(),
                    train_state: Some(trainer.state().clone()),
                };
                ck.save(&dir.join(format!("checkpoint_{epoch:06}.scrd")))?;
            }
        }
    }
    Ok(())
}

fn write_losses(path: &Path, history: &[f64]) -> Result<()> {
    let mut s = String::from("epoch,mean_loss\n");
    for (i, l) in history.iter().enumerate() {
        s.push_str(&format!("{},{l}\n", i + 1));
    }
    write_text(path, &s)
}

pub fn train(
    config: Option<&Path>,
    data: &Path,
    out: &Path,
    resume: Option<&Path>,
    genes: Option<&Path>,
) -> Result<()> {
    let cfg = match config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let matrix = read_matrix(data)?;
    let (mut model, schedule, preprocess, state) = match resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let state = ck.train_state.ok_or_else(|| {
                CliError::Usage(format!("{} holds no training state to resume", p.display()))
            })?;
            check_genes(&ck.preprocess.selected_gene_names, matrix.gene_names(), "checkpoint", "data")?;
            (ck.model, ck.schedule, ck.preprocess, Some(state))
        }
        None => {
            let schedule = cfg.schedule.build()?;
            let model = DenoiserModel::new(
                cfg.model.denoiser(matrix.n_genes()),
                schedule.steps(),
                cfg.model.seed,
            )?;
            let preprocess = match genes {
                Some(p) => {
                    let list = read_gene_list(p)?;
                    check_genes(&list.spec.selected_gene_names, matrix.gene_names(), "gene list", "data")?;
                    list.spec
                }
                None => PreprocessSpec {
                    top_k: cfg.data.top_k,
                    negation: cfg.data.negation,
                    selected_gene_indices: Vec::new(),
                    selected_gene_names: matrix.gene_names().to_vec(),
                },
            };
            (model, schedule, preprocess, None)
        }
    };
    create_dir(out)?;
    write_text(&out.join("config.json"), &to_json(&cfg))?;
    let mut trainer = match state {
        Some(s) => Trainer::resume(&model, &matrix, &schedule, cfg.train.clone(), s)?,
        None => Trainer::new(&model, &matrix, &schedule, cfg.train.clone())?,
    };
    drive(&mut trainer, &mut model, &schedule, &preprocess, Some(out))?;
    let state = trainer.into_state();
    write_losses(&out.join("loss.csv"), &state.loss_history)?;
    Checkpoint {
        model,
        schedule,
        preprocess,
        train_state: Some(state),
    }
    .save(&out.join("final.scrd"))
}

fn check_genes(a: &[String], b: &[String], a_name: &str, b_name: &str) -> Result<()> {
    let first = a.iter().zip(b).position(|(x, y)| x != y);
    match first {
        Some(i) => Err(CliError::Usage(format!(
            "gene mismatch at column {}: {a_name} has `{}`, {b_name} has `{}`",
            i + 1,
            a[i],
            b[i]
        ))),
        None if a.len() != b.len() => Err(CliError::Usage(format!(
            "gene count mismatch: {a_name} has {}, {b_name} has {}",
            a.len(),
            b.len()
        ))),
        None => Ok(()),
    }
}

/// Sidecar written by `sample`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SampleRecord {
    pub checkpoint_sha256: String,
    pub method: Method,
    pub tau: Option<Vec<usize>>,
    pub eta: Option<f64>,
    pub seed: u64,
    pub n_samples: usize,
    pub postprocess: bool,
    pub denoiser_calls: usize,
    pub wallclock_s: f64,
}

pub struct SampleArgs<'a> {
    pub checkpoint: &'a Path,
    pub n: usize,
    pub method: Method,
    pub steps: Option<usize>,
    pub eta: f64,
    pub seed: u64,
    pub out: &'a Path,
    pub tau_mode: TauMode,
    pub batch_size: Option<usize>,
    pub postprocess: bool,
}

pub const DEFAULT_DDIM_STEPS: usize = 100;

pub fn build_request(
    steps_total: usize,
    n: usize,
    method: Method,
    steps: Option<usize>,
    eta: f64,
    tau_mode: TauMode,
    seed: u64,
) -> Result<SampleRequest> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(scdiff_core::Error::InvalidEta(eta).into());
    }
    Ok(match method {
        Method::Ddpm => {
            if steps.is_some() {
                eprintln!("warning: --steps is ignored by ddpm, which runs all {steps_total} steps");
            }
            SampleRequest::ddpm(n, seed)
        }
        Method::Ddim => {
            let k = steps.unwrap_or(DEFAULT_DDIM_STEPS.min(steps_total));
            SampleRequest::ddim(n, make_tau(steps_total, k, tau_mode, eta)?, seed)
        }
    })
}

pub fn sample(args: &SampleArgs<'_>) -> Result<()> {
    if args.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let ck = Checkpoint::load(args.checkpoint)?;
    let mut req = build_request(
        ck.schedule.steps(),
        args.n,
        args.method,
        args.steps,
        args.eta,
        args.tau_mode,
        args.seed,
    )?;
    req.batch_size = args.batch_size;
    req.postprocess = args.postprocess;
    let start = Instant::now();
    let SampleOutput {
        matrix,
        denoiser_calls,
    } = sampler::sample(&ck.model, &ck.schedule, &req, &ck.preprocess.selected_gene_names)?;
    let wallclock_s = start.elapsed().as_secs_f64();
    write_matrix(args.out, &matrix)?;
    let record = SampleRecord {
        checkpoint_sha256: file_sha256(args.checkpoint)?,
        method: args.method,
        tau: req.tau.as_ref().map(|t| t.tau().to_vec()),
        eta: req.tau.as_ref().map(|t| t.eta()),
        seed: args.seed,
        n_samples: args.n,
        postprocess: args.postprocess,
        denoiser_calls,
        wallclock_s,
    };
    write_text(&sidecar_path(args.out, ".json"), &to_json(&record))
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    schema_version: u32,
    #[serde(flatten)]
    report: &'a MetricsReport,
}

pub fn report_json(report: &MetricsReport) -> String {
    to_json(&ReportDocument {
        schema_version: REPORT_SCHEMA_VERSION,
        report,
    })
}

pub struct EvaluateArgs<'a> {
    pub real: &'a Path,
    pub synth: &'a Path,
    pub out: &'a Path,
    pub bins: Option<usize>,
    pub bandwidth: Option<f64>,
    pub per_gene: Option<&'a Path>,
    pub pca: Option<&'a Path>,
    /// Gene-list sidecar; selects and orders the real columns to match it.
    pub genes: Option<&'a Path>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn evaluate(args: &EvaluateArgs<'_>) -> Result<()> {
    let mut real = read_matrix(args.real)?;
    if let Some(p) = args.genes {
        real = real.select_by_name(&read_gene_list(p)?.spec.selected_gene_names)?;
    }
    let synth = read_matrix(args.synth)?;
    check_genes(real.gene_names(), synth.gene_names(), "real", "synthetic")?;
    let report = metrics::evaluate(&real, &synth, args.bins, args.bandwidth)?;
    write_text(args.out, &report_json(&report))?;
    if let Some(p) = args.per_gene {
        let mut s = String::from("gene,cv_real,cv_synth,zeroprop_real,zeroprop_synth\n");
        for (g, name) in real.gene_names().iter().enumerate() {
            s.push_str(&format!(
                "{name},{},{},{},{}\n",
                opt(report.per_gene_cv_real[g]),
                opt(report.per_gene_cv_synth[g]),
                report.per_gene_zero_prop_real[g],
                report.per_gene_zero_prop_synth[g]
            ));
        }
        write_text(p, &s)?;
    }
    if let Some(p) = args.pca {
        let proj = pca_project(&real, &synth, 2)?;
        let mut s = String::from("set,dim1,dim2\n");
        for (set, rows) in [("real", &proj.real), ("synth", &proj.synth)] {
            for r in rows {
                s.push_str(&format!("{set},{},{}\n", r[0], r[1]));
            }
        }
        write_text(p, &s)?;
    }
    eprintln!(
        "kl {:.6}  wasserstein {:.6}  mmd {:.6}",
        report.kl, report.wasserstein, report.mmd
    );
    Ok(())
}

pub fn schedule_csv(s: &NoiseSchedule) -> String {
    let mut out = String::from("t,beta,alpha,alpha_bar,beta_tilde\n");
    for t in 1..=s.steps() {
        out.push_str(&format!(
            "{t},{},{},{},{}\n",
            s.beta(t),
            s.alpha(t),
            s.alpha_bar(t),
            s.beta_tilde(t)
        ));
    }
    out
}

pub fn schedule(steps: usize, beta_start: f64, beta_end: f64, out: Option<&Path>) -> Result<()> {
    let s = NoiseSchedule::linear(steps, beta_start, beta_end)?;
    let csv = schedule_csv(&s);
    match out {
        Some(p) => write_text(p, &csv),
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

pub fn synth(spec: &GeneratorSpec, out: &Path) -> Result<()> {
    let m = synthdata::generate(spec)?;
    write_matrix(out, &m)?;
    write_text(&sidecar_path(out, ".spec.json"), &to_json(spec))
}

pub fn load_spec(path: &Path) -> Result<GeneratorSpec> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub rate: usize,
    pub kl: f64,
    pub wasserstein: f64,
    pub mmd: f64,
    pub wallclock_s: f64,
    pub denoiser_calls: usize,
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("rate,kl,wasserstein,mmd,wallclock_s,denoiser_calls\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.rate, r.kl, r.wasserstein, r.mmd, r.wallclock_s, r.denoiser_calls
        ));
    }
    s
}

/// Samples at each acceleration rate with DDIM and scores against `reference`.
pub fn acceleration_study(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    reference: &ExpressionMatrix,
    sample_cfg: &crate::config::SampleSection,
    rates: &[usize],
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(rates.len());
    for &rate in rates {
        let n_steps = (schedule.steps() / rate).max(1);
        let tau = make_tau(schedule.steps(), n_steps, sample_cfg.tau_mode, sample_cfg.eta)?;
        let mut req = SampleRequest::ddim(sample_cfg.n_samples, tau, sample_cfg.seed);
        req.batch_size = sample_cfg.batch_size;
        let start = Instant::now();
        let out = sampler::sample(model, schedule, &req, reference.gene_names())?;
        let wallclock_s = start.elapsed().as_secs_f64();
        let r = metrics::evaluate(reference, &out.matrix, None, None)?;
        eprintln!(
            "rate {rate}: kl {:.4} w1 {:.4} mmd {:.4} ({:.2}s, {} calls)",
            r.kl, r.wasserstein, r.mmd, wallclock_s, out.denoiser_calls
        );
        rows.push(BenchRow {
            rate,
            kl: r.kl,
            wasserstein: r.wasserstein,
            mmd: r.mmd,
            wallclock_s,
            denoiser_calls: out.denoiser_calls,
        });
    }
    Ok(rows)
}

/// Trains on freshly generated data, then runs the acceleration study
/// against a held-out draw from the same generator.
pub fn bench(config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = match config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    create_dir(out)?;
    write_text(&out.join("config.json"), &to_json(&cfg))?;
    let train_raw = synthdata::generate(&cfg.synth.training_spec())?;
    let holdout = synthdata::generate(&cfg.synth.holdout_spec())?;
    let data = zero_negate(&train_raw, cfg.data.negation)?;
    let schedule = cfg.schedule.build()?;
    let mut model =
        DenoiserModel::new(cfg.model.denoiser(data.n_genes()), schedule.steps(), cfg.model.seed)?;
    let preprocess = PreprocessSpec {
        top_k: data.n_genes(),
        negation: cfg.data.negation,
        selected_gene_indices: (0..data.n_genes()).collect(),
        selected_gene_names: data.gene_names().to_vec(),
    };
    let train_cfg: TrainConfig = cfg.train.clone();
    let mut trainer = Trainer::new(&model, &data, &schedule, train_cfg)?;
    drive(&mut trainer, &mut model, &schedule, &preprocess, Some(out))?;
    let state = trainer.into_state();
    write_losses(&out.join("loss.csv"), &state.loss_history)?;
    Checkpoint {
        model: model.clone(),
        schedule: schedule.clone(),
        preprocess,
        train_state: Some(state),
    }
    .save(&out.join("final.scrd"))?;
    let rows = acceleration_study(&model, &schedule, &holdout, &cfg.sample, &BENCH_RATES)?;
    write_text(&out.join("bench.csv"), &bench_csv(&rows))
}
