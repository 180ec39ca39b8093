//! JSON run configuration. Every section and field is optional and unknown
//! keys are rejected.

use std::path::Path;

use scdiff_core::dataset::{DEFAULT_NEGATION, DEFAULT_TOP_K};
use scdiff_core::sampler::TauMode;
use scdiff_core::schedule::{DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS};
use scdiff_core::synthdata::GeneratorSpec;
use scdiff_core::{DenoiserConfig, Method, NoiseSchedule, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub schedule: ScheduleSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub sample: SampleSection,
    pub synth: SynthSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub top_k: usize,
    pub negation: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            top_k: DEFAULT_TOP_K,
            negation: DEFAULT_NEGATION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
        }
    }
}

impl ScheduleSection {
    pub fn build(&self) -> Result<NoiseSchedule> {
        Ok(NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub patch_size: usize,
    pub hidden_size: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub mlp_ratio: f64,
    pub t_embed_dim: usize,
    /// Seed for parameter initialisation.
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = DenoiserConfig::new(1);
        ModelSection {
            patch_size: d.patch_size,
            hidden_size: d.hidden_size,
            n_blocks: d.n_blocks,
            n_heads: d.n_heads,
            mlp_ratio: d.mlp_ratio,
            t_embed_dim: d.t_embed_dim,
            seed: 0,
        }
    }
}

impl ModelSection {
    pub fn denoiser(&self, n_genes: usize) -> DenoiserConfig {
        DenoiserConfig {
            n_genes,
            patch_size: self.patch_size,
            hidden_size: self.hidden_size,
            n_blocks: self.n_blocks,
            n_heads: self.n_heads,
            mlp_ratio: self.mlp_ratio,
            t_embed_dim: self.t_embed_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub method: Method,
    /// DDIM steps; ignored by DDPM.
    pub n_steps: usize,
    pub eta: f64,
    pub tau_mode: TauMode,
    pub n_samples: usize,
    pub seed: u64,
    pub batch_size: Option<usize>,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            method: Method::Ddim,
            n_steps: 100,
            eta: 0.0,
            tau_mode: TauMode::Equidistant,
            n_samples: 500,
            seed: 0,
            batch_size: None,
        }
    }
}

/// Ground-truth data for `bench`: either an explicit generator spec or the
/// random mixture preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub spec: Option<GeneratorSpec>,
    pub n_genes: usize,
    pub n_cells: usize,
    pub n_components: usize,
    pub layout_seed: u64,
    /// Held-out reference cells, drawn from the same mixture.
    pub holdout_cells: usize,
    pub holdout_seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            spec: None,
            n_genes: 32,
            n_cells: 1000,
            n_components: 2,
            layout_seed: 0,
            holdout_cells: 500,
            holdout_seed: 1,
        }
    }
}

impl SynthSection {
    pub fn training_spec(&self) -> GeneratorSpec {
        self.spec.clone().unwrap_or_else(|| {
            GeneratorSpec::mixture_preset(
                self.n_genes,
                self.n_cells,
                self.n_components,
                self.layout_seed,
            )
        })
    }

    pub fn holdout_spec(&self) -> GeneratorSpec {
        let mut s = self.training_spec();
        s.n_cells = self.holdout_cells;
        s.seed = self.holdout_seed;
        s
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig> {
    serde_json::from_str(text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, path)
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig> {
        parse_config(s, Path::new("c.json"))
    }

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train.learning_rate, 1e-4);
        assert_eq!(c.schedule.steps, 1000);
        assert_eq!(c.data.negation, -10.0);
    }

    #[test]
    fn partial_sections() {
        let c = parse(r#"{"train": {"epochs": 3}, "sample": {"method": "ddpm"}}"#).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(c.sample.method, Method::Ddpm);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(r#"{"trian": {}}"#).is_err());
        assert!(parse(r#"{"train": {"epoch": 3}}"#).is_err());
    }

    #[test]
    fn parse_errors_carry_location() {
        let msg = parse("{\n  \"train\": {,}\n}").unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.synth.spec = Some(GeneratorSpec::mixture_preset(3, 10, 2, 1));
        let back = parse(&to_json(&c)).unwrap();
        assert_eq!(back, c);
    }
}
