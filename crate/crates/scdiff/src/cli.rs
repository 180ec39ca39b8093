use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use scdiff_core::dataset::{DEFAULT_NEGATION, DEFAULT_TOP_K};
use scdiff_core::sampler::TauMode;
use scdiff_core::schedule::{DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS};
use scdiff_core::synthdata::GeneratorSpec;
use scdiff_core::Method;

use crate::commands::{self, EvaluateArgs, SampleArgs};
use crate::error::Result;

/// Printed by `--version`; the numbers must track `checkpoint::VERSION` and
/// `commands::REPORT_SCHEMA_VERSION`.
pub const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (checkpoint format 1, report schema 1)"
);

#[derive(Debug, Parser)]
#[command(name = "scdiff", version = VERSION, about = "Diffusion-transformer synthesis of expression matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Ddpm,
    Ddim,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TauArg {
    Equidistant,
    Quadratic,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Keep the top-k genes by coefficient of variation and replace zeros.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
        #[arg(long, default_value_t = DEFAULT_NEGATION, allow_negative_numbers = true)]
        negation: f64,
    },
    /// Train a denoiser on a preprocessed matrix.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint that carries training state.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Gene-list sidecar written by `preprocess`.
        #[arg(long)]
        genes: Option<PathBuf>,
    },
    /// Generate cells from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "ddim")]
        method: MethodArg,
        /// DDIM steps (default 100).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        eta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "equidistant")]
        tau_mode: TauArg,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Keep negative values instead of truncating them to zero.
        #[arg(long)]
        no_postprocess: bool,
    },
    /// Compare a synthetic matrix with a real one.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Per-gene cv and zero-proportion CSV.
        #[arg(long)]
        per_gene: Option<PathBuf>,
        /// 2-D PCA coordinates CSV.
        #[arg(long)]
        pca: Option<PathBuf>,
        /// Gene-list sidecar from `preprocess`; the real matrix is reduced to those genes.
        #[arg(long)]
        genes: Option<PathBuf>,
    },
    /// Dump the noise schedule as CSV.
    Schedule {
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_BETA_START)]
        beta_start: f64,
        #[arg(long, default_value_t = DEFAULT_BETA_END)]
        beta_end: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on generated data and measure quality across DDIM acceleration rates.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a zero-inflated log-normal mixture dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Generator spec JSON; overrides the preset flags.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        genes: usize,
        #[arg(long, default_value_t = 1000)]
        cells: usize,
        #[arg(long, default_value_t = 2)]
        components: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess {
            input,
            output,
            top_k,
            negation,
        } => commands::preprocess(&input, &output, top_k, negation),
        Command::Train {
            config,
            data,
            out,
            resume,
            genes,
        } => commands::train(
            config.as_deref(),
            &data,
            &out,
            resume.as_deref(),
            genes.as_deref(),
        ),
        Command::Sample {
            checkpoint,
            n,
            method,
            steps,
            eta,
            seed,
            out,
            tau_mode,
            batch_size,
            no_postprocess,
        } => commands::sample(&SampleArgs {
            checkpoint: &checkpoint,
            n,
            method: match method {
                MethodArg::Ddpm => Method::Ddpm,
                MethodArg::Ddim => Method::Ddim,
            },
            steps,
            eta,
            seed,
            out: &out,
            tau_mode: match tau_mode {
                TauArg::Equidistant => TauMode::Equidistant,
                TauArg::Quadratic => TauMode::Quadratic,
            },
            batch_size,
            postprocess: !no_postprocess,
        }),
        Command::Evaluate {
            real,
            synth,
            out,
            bins,
            bandwidth,
            per_gene,
            pca,
            genes,
        } => commands::evaluate(&EvaluateArgs {
            real: &real,
            synth: &synth,
            out: &out,
            bins,
            bandwidth,
            per_gene: per_gene.as_deref(),
            pca: pca.as_deref(),
            genes: genes.as_deref(),
        }),
        Command::Schedule {
            steps,
            beta_start,
            beta_end,
            out,
        } => commands::schedule(steps, beta_start, beta_end, out.as_deref()),
        Command::Bench { config, out } => commands::bench(config.as_deref(), &out),
        Command::Synth {
            out,
            spec,
            genes,
            cells,
            components,
            seed,
        } => {
            let spec = match spec {
                Some(p) => commands::load_spec(&p)?,
                None => GeneratorSpec::mixture_preset(genes, cells, components, seed),
            };
            commands::synth(&spec, &out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_tracks_formats() {
        assert!(VERSION.contains(&format!("checkpoint format {}", crate::checkpoint::VERSION)));
        assert!(VERSION.contains(&format!(
            "report schema {}",
            crate::commands::REPORT_SCHEMA_VERSION
        )));
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
