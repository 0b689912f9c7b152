use serde::{Deserialize, Serialize};

use crate::data::{CorpusSplit, MAX_TEXT_TOKENS};
use crate::error::{bail, Result};

/// Which input the step encoder consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Visual,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Visual => "visual",
        })
    }
}

/// Width and depth settings, independent of any corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub d: usize,
    pub temporal_layers: usize,
    pub output_layers: usize,
    pub heads: usize,
    /// Depth of the sentence encoder used by text-modality models.
    pub text_layers: usize,
    pub ffn_mult: usize,
    /// Maximum generated content tokens per step.
    pub max_len: usize,
    /// Maximum number of procedure steps (excluding the ingredient slot).
    pub max_steps: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            d: 768,
            temporal_layers: 2,
            output_layers: 3,
            heads: 8,
            text_layers: 1,
            ffn_mult: 4,
            max_len: 24,
            max_steps: 9,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            bail!(Config, "hidden width {} must be a positive multiple of heads {}", self.d, self.heads);
        }
        if self.temporal_layers == 0 || self.output_layers == 0 || self.text_layers == 0 {
            bail!(Config, "layer counts must be at least 1");
        }
        if self.ffn_mult == 0 {
            bail!(Config, "ffn_mult must be positive");
        }
        if self.max_len == 0 || self.max_len > MAX_TEXT_TOKENS {
            bail!(Config, "max_len must lie in 1..={MAX_TEXT_TOKENS}");
        }
        if self.max_steps == 0 {
            bail!(Config, "max_steps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: ArchConfig,
    pub modality: Modality,
    pub vocab_size: usize,
    pub n_ingredients: usize,
    /// Frame feature width; required for visual models.
    pub d_frame: Option<usize>,
}

impl ModelConfig {
    pub fn for_corpus(arch: ArchConfig, modality: Modality, corpus: &CorpusSplit) -> Result<Self> {
        let d_frame = match modality {
            Modality::Visual => match corpus.d_frame() {
                Some(d) if corpus.has_frames => Some(d),
                _ => bail!(Config, "visual model needs a corpus with frame features"),
            },
            Modality::Text => {
                if !corpus.has_text {
                    bail!(Config, "text model needs a corpus with observable step text");
                }
                None
            }
        };
        if corpus.max_steps() > arch.max_steps {
            bail!(Config, "corpus has {} steps, above max_steps {}", corpus.max_steps(), arch.max_steps);
        }
        let cfg = Self {
            arch,
            modality,
            vocab_size: corpus.vocab.len(),
            n_ingredients: corpus.n_ingredients(),
            d_frame,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.vocab_size < 5 {
            bail!(Config, "vocabulary too small");
        }
        if self.n_ingredients == 0 {
            bail!(Config, "ingredient inventory is empty");
        }
        if self.modality == Modality::Visual && self.d_frame.unwrap_or(0) == 0 {
            bail!(Config, "visual model needs a positive d_frame");
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.arch.d
    }
}
