//! Experiment configuration file: one self-describing TOML document per
//! experiment. Every section has defaults; unknown keys are rejected and
//! parse failures carry line/column diagnostics.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mlas::corpus::CorpusConfig;
use mlas::model::{ModelConfig, Variant};
use mlas::trainer::TrainConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub encoder_layers: usize,
    pub encoder_width: usize,
    pub decoder_layers: usize,
    pub decoder_width: usize,
    pub attention_width: usize,
    pub char_embedding_dim: usize,
    pub lang_embedding_dim: usize,
    pub lambda: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::desk_default(Variant::Joint, 1, 1, 1);
        ModelSection {
            encoder_layers: d.encoder_layers,
            encoder_width: d.encoder_width,
            decoder_layers: d.decoder_layers,
            decoder_width: d.decoder_width,
            attention_width: d.attention_width,
            char_embedding_dim: d.char_embedding_dim,
            lang_embedding_dim: d.lang_embedding_dim,
            lambda: d.lambda,
        }
    }
}

impl ModelSection {
    pub fn to_model_config(
        &self,
        variant: Variant,
        input_dim: usize,
        vocab_size: usize,
        num_languages: usize,
    ) -> ModelConfig {
        ModelConfig {
            variant,
            input_dim,
            encoder_layers: self.encoder_layers,
            encoder_width: self.encoder_width,
            decoder_layers: self.decoder_layers,
            decoder_width: self.decoder_width,
            attention_width: self.attention_width,
            char_embedding_dim: self.char_embedding_dim,
            lang_embedding_dim: self.lang_embedding_dim,
            lambda: self.lambda,
            vocab_size,
            num_languages,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub beam_width: usize,
    pub max_decode_length: Option<usize>,
}

impl Default for DecodeSection {
    fn default() -> Self {
        DecodeSection {
            beam_width: 1,
            max_decode_length: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendSection {
    pub stack_window: usize,
    pub stack_stride: usize,
}

impl Default for FrontendSection {
    fn default() -> Self {
        FrontendSection {
            stack_window: mlas::trainer::STACK_WINDOW,
            stack_stride: mlas::trainer::STACK_STRIDE,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Single top-level seed; recorded into every produced artifact.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub frontend: FrontendSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub decode: DecodeSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            corpus: CorpusConfig::default(),
            frontend: FrontendSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            decode: DecodeSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| format!("config {}: {e}", path.display()))?;
        // All randomness flows from the one top-level seed.
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.output_dir.join("corpus")
    }

    pub fn input_dim(&self) -> usize {
        self.corpus.feature_dim * self.frontend.stack_window
    }
}
