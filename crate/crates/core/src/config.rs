//! The experiment file: one TOML document drives data generation, every
//! training role, evaluation and the full report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{mix_seed, GeneratorConfig};
use crate::distill::{DistillConfig, DistillMode};
use crate::error::{bail, Error, Result};
use crate::model::ArchConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSizes {
    /// Base seed; the two corpora use seeds derived from it.
    pub seed: u64,
    pub pretrain_samples: usize,
    pub target_samples: usize,
}

impl Default for CorpusSizes {
    fn default() -> Self {
        Self {
            seed: 7,
            pretrain_samples: 2000,
            target_samples: 600,
        }
    }
}

impl CorpusSizes {
    pub fn pretrain_seed(&self) -> u64 {
        mix_seed(self.seed, &[1])
    }

    pub fn target_seed(&self) -> u64 {
        mix_seed(self.seed, &[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub lr: f64,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub eval_every: usize,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub student_epochs: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            batch_size: 16,
            grad_clip: 1.0,
            eval_every: 2,
            pretrain_epochs: 4,
            finetune_epochs: 8,
            student_epochs: 16,
        }
    }
}

impl TrainSettings {
    fn with_epochs(&self, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            epochs,
            seed,
            grad_clip: self.grad_clip,
            eval_every: self.eval_every,
        }
    }

    pub fn pretrain(&self, seed: u64) -> TrainConfig {
        self.with_epochs(self.pretrain_epochs, seed)
    }

    pub fn finetune(&self, seed: u64) -> TrainConfig {
        self.with_epochs(self.finetune_epochs, seed)
    }

    pub fn student(&self, seed: u64) -> TrainConfig {
        self.with_epochs(self.student_epochs, seed)
    }
}

/// Weights of the two baseline distillation losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineWeights {
    pub logits_kl: f64,
    pub feature_l2: f64,
}

impl Default for BaselineWeights {
    fn default() -> Self {
        Self {
            logits_kl: 1.0,
            feature_l2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSettings {
    /// Test samples whose generated steps go into the qualitative dump.
    pub qualitative_samples: usize,
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self { qualitative_samples: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub generator: GeneratorConfig,
    pub corpus: CorpusSizes,
    pub teacher: ArchConfig,
    pub student: ArchConfig,
    /// Narrower student for the width ablation.
    pub student_small: ArchConfig,
    pub distill: DistillConfig,
    pub baselines: BaselineWeights,
    pub train: TrainSettings,
    pub report: ReportSettings,
}

fn desk_arch(d: usize, heads: usize) -> ArchConfig {
    ArchConfig {
        d,
        heads,
        temporal_layers: 2,
        output_layers: 1,
        ffn_mult: 2,
        ..ArchConfig::default()
    }
}

/// The desk-scale experiment: a full `reproduce` fits in half an hour on one core.
impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs"),
            seeds: vec![0, 1, 2],
            generator: GeneratorConfig::default(),
            corpus: CorpusSizes::default(),
            teacher: desk_arch(64, 4),
            student: desk_arch(32, 4),
            student_small: desk_arch(16, 2),
            // The CCD loss is summed over every tap position in the batch, so the
            // weight is far below the per-sample default.
            distill: DistillConfig {
                weight: 0.003,
                ..DistillConfig::default()
            },
            baselines: BaselineWeights::default(),
            train: TrainSettings::default(),
            report: ReportSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        for (name, a) in [("teacher", &self.teacher), ("student", &self.student), ("student_small", &self.student_small)] {
            a.validate().map_err(|e| Error::Config(format!("[{name}] {e}")))?;
            if a.max_steps < self.generator.grammar.max_steps {
                bail!(Config, "[{name}] max_steps is below the grammar's max_steps");
            }
        }
        if self.teacher.temporal_layers != self.student.temporal_layers
            || self.teacher.output_layers != self.student.output_layers
        {
            bail!(Config, "teacher and student must have the same layer counts for per-layer taps");
        }
        self.distill.validate()?;
        for (name, w) in [("logits_kl", self.baselines.logits_kl), ("feature_l2", self.baselines.feature_l2)] {
            if !(w >= 0.0 && w.is_finite()) {
                bail!(Config, "[baselines] {name} must be a non-negative weight");
            }
        }
        if self.seeds.is_empty() {
            bail!(Config, "seeds must not be empty");
        }
        let c = &self.corpus;
        if c.pretrain_samples < 10 || c.target_samples < 10 {
            bail!(Config, "corpora need at least 10 samples");
        }
        self.train.student(0).validate()?;
        self.train.pretrain(0).validate()?;
        self.train.finetune(0).validate()?;
        Ok(())
    }

    pub fn distill_for(&self, mode: DistillMode) -> DistillConfig {
        match mode {
            DistillMode::None => DistillConfig::none(),
            DistillMode::Ccd => DistillConfig {
                mode,
                ..self.distill.clone()
            },
            DistillMode::LogitsKl => DistillConfig {
                mode,
                weight: self.baselines.logits_kl,
                ..self.distill.clone()
            },
            DistillMode::FeatureL2 => DistillConfig {
                mode,
                weight: self.baselines.feature_l2,
                ..self.distill.clone()
            },
        }
    }
}
