//! Teacher pretraining and fine-tuning, and student training with optional distillation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{mix_seed, CorpusSplit, ProcedureSample, Split};
use crate::distill::{combined_loss, DistillConfig, DistillMode, Distiller};
use crate::error::{bail, Error, Result};
use crate::eval::{evaluate_next_step, EvalReport};
use crate::model::{AnticipationModel, ArchConfig, Modality, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm cap; 0 disables clipping.
    pub grad_clip: f64,
    /// Validate every this many epochs (the last epoch is always validated).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 16,
            epochs: 40,
            seed: 0,
            grad_clip: 1.0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bail!(Config, "learning rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.eval_every == 0 {
            bail!(Config, "batch_size, epochs and eval_every must be at least 1");
        }
        if !(self.grad_clip >= 0.0) {
            bail!(Config, "grad_clip must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    TeacherPretrain,
    TeacherFinetune,
    Student,
}

impl Role {
    fn tag(self) -> u64 {
        match self {
            Role::TeacherPretrain => 11,
            Role::TeacherFinetune => 12,
            Role::Student => 13,
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::TeacherPretrain => "teacher_pretrain",
            Role::TeacherFinetune => "teacher_finetune",
            Role::Student => "student",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "teacher_pretrain" => Ok(Role::TeacherPretrain),
            "teacher_finetune" => Ok(Role::TeacherFinetune),
            "student" => Ok(Role::Student),
            _ => bail!(Config, "unknown role {s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_cap: f64,
    pub l_distill: f64,
    pub loss: f64,
    pub val_bleu1: Option<f64>,
    pub val_bleu4: Option<f64>,
    pub wall_time_s: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub role: Role,
    pub model: ModelConfig,
    pub distill: DistillConfig,
    pub train: TrainConfig,
    pub corpus_seed: u64,
    pub vocab_hash: String,
    pub teacher_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub header: LogHeader,
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept (highest validation BLEU4).
    pub best_epoch: usize,
}

impl TrainLog {
    /// Header line, one line per epoch, then a `{"best_epoch": ..}` line.
    pub fn to_jsonl(&self, include_wall_time: bool) -> String {
        let mut out = serde_json::to_string(&serde_json::json!({ "header": self.header })).expect("serializable");
        out.push('\n');
        for e in &self.epochs {
            let mut v = serde_json::to_value(e).expect("serializable");
            if !include_wall_time {
                v.as_object_mut().expect("object").remove("wall_time_s");
            }
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out.push_str(&serde_json::json!({ "best_epoch": self.best_epoch }).to_string());
        out.push('\n');
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl(true).as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AnticipationModel,
    pub log: TrainLog,
    /// Validation report of the kept parameters.
    pub val_report: EvalReport,
}

const EVAL_BATCH: usize = 32;

/// Deterministic visiting order for one epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0xe90c, epoch as u64])));
    idx
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
fn clip_gradients(grads: &mut candle_core::backprop::GradStore, vars: &[Var], max_norm: f64) -> Result<f64> {
    let mut sq = 0.0;
    for v in vars {
        if let Some(g) = grads.get(v.as_tensor()) {
            sq += scalar(&g.sqr()?.sum_all()?)?;
        }
    }
    let norm = sq.sqrt();
    if !norm.is_finite() {
        bail!(Numeric, "non-finite gradient norm");
    }
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for v in vars {
            if let Some(g) = grads.get(v.as_tensor()) {
                let scaled = (g * s)?;
                grads.insert(v.as_tensor(), scaled);
            }
        }
    }
    Ok(norm)
}

struct Run<'a> {
    role: Role,
    model: AnticipationModel,
    teacher: Option<&'a AnticipationModel>,
    distiller: Option<Distiller>,
    corpus: &'a CorpusSplit,
    cfg: &'a TrainConfig,
}

impl Run<'_> {
    fn execute(self) -> Result<TrainOutcome> {
        self.cfg.validate()?;
        let train = self.corpus.split(Split::Train);
        if train.is_empty() {
            bail!(Data, "training split is empty");
        }
        let mut vars = self.model.params().vars();
        if let Some(d) = &self.distiller {
            vars.extend(d.bank().params().vars());
        }
        let mut opt = AdamW::new(
            vars.clone(),
            ParamsAdamW {
                lr: self.cfg.lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                weight_decay: 0.0,
            },
        )?;
        let teacher_hash = self.teacher.map(|t| t.params().hash()).transpose()?;
        let distill_cfg = self.distiller.as_ref().map(|d| d.cfg.clone()).unwrap_or_else(DistillConfig::none);
        let weight = if distill_cfg.mode == DistillMode::None { 0.0 } else { distill_cfg.weight };
        let header = LogHeader {
            role: self.role,
            model: self.model.config().clone(),
            distill: distill_cfg,
            train: self.cfg.clone(),
            corpus_seed: self.corpus.seed,
            vocab_hash: self.corpus.vocab.hash(),
            teacher_hash: teacher_hash.clone(),
        };

        let mut epochs = Vec::with_capacity(self.cfg.epochs);
        let mut best: Option<(f64, usize, BTreeMap<String, Tensor>, EvalReport)> = None;
        for epoch in 1..=self.cfg.epochs {
            let start = Instant::now();
            let order = epoch_order(train.len(), self.cfg.seed, epoch);
            let (mut sum_cap, mut sum_dis, mut sum_loss) = (0.0, 0.0, 0.0);
            let mut n_batches = 0usize;
            for chunk in order.chunks(self.cfg.batch_size) {
                let samples: Vec<&ProcedureSample> = chunk.iter().map(|&i| &train[i]).collect();
                let batch = self.model.batch(&samples)?;
                let trace = self.model.forward(&batch)?;
                let l_cap = self.model.caption_loss(&trace, &batch)?;
                let l_dis = match (&self.distiller, self.teacher) {
                    (Some(d), Some(teacher)) if d.cfg.mode != DistillMode::None => {
                        let tb = teacher.batch(&samples)?;
                        let tt = teacher.forward(&tb)?.detach();
                        d.loss(&trace, &tt, &batch)?
                    }
                    _ => Tensor::zeros((), l_cap.dtype(), l_cap.device())?,
                };
                let loss = combined_loss(&l_cap, &l_dis, weight).map_err(|e| {
                    let ids: Vec<u64> = samples.iter().map(|s| s.id).collect();
                    Error::Numeric(format!("{e} (epoch {epoch}, samples {ids:?})"))
                })?;
                let mut grads = loss.backward()?;
                clip_gradients(&mut grads, &vars, self.cfg.grad_clip)?;
                opt.step(&grads)?;
                sum_cap += scalar(&l_cap)?;
                sum_dis += scalar(&l_dis)?;
                sum_loss += scalar(&loss)?;
                n_batches += 1;
            }
            let n = n_batches as f64;
            let mut entry = EpochLog {
                epoch,
                l_cap: sum_cap / n,
                l_distill: sum_dis / n,
                loss: sum_loss / n,
                val_bleu1: None,
                val_bleu4: None,
                wall_time_s: 0.0,
                seed: self.cfg.seed,
            };
            let has_val = !self.corpus.split(Split::Val).is_empty();
            if has_val && (epoch % self.cfg.eval_every == 0 || epoch == self.cfg.epochs) {
                let report = evaluate_next_step(&self.model, self.corpus, Split::Val, EVAL_BATCH)?;
                entry.val_bleu1 = Some(report.bleu1);
                entry.val_bleu4 = Some(report.bleu4);
                if best.as_ref().is_none_or(|b| report.bleu4 > b.0) {
                    best = Some((report.bleu4, epoch, self.model.params().snapshot()?, report));
                }
            }
            entry.wall_time_s = start.elapsed().as_secs_f64();
            log::info!(
                "{} epoch {epoch}: l_cap {:.4} l_distill {:.4} val_bleu4 {:?}",
                self.role,
                entry.l_cap,
                entry.l_distill,
                entry.val_bleu4
            );
            epochs.push(entry);
        }

        if let (Some(t), Some(h)) = (self.teacher, &teacher_hash) {
            if &t.params().hash()? != h {
                bail!(Numeric, "teacher parameters changed during student training");
            }
        }
        let (best_epoch, val_report) = match best {
            Some((_, epoch, snapshot, report)) => {
                self.model.params().load(&snapshot)?;
                (epoch, report)
            }
            None => bail!(Data, "validation split is empty; cannot select a checkpoint"),
        };
        Ok(TrainOutcome {
            model: self.model,
            log: TrainLog {
                header,
                epochs,
                best_epoch,
            },
            val_report,
        })
    }
}

fn check_vocab(corpus: &CorpusSplit, cfg: &ModelConfig) -> Result<()> {
    if corpus.vocab.len() != cfg.vocab_size {
        bail!(Data, "corpus vocabulary has {} entries, model expects {}", corpus.vocab.len(), cfg.vocab_size);
    }
    if corpus.n_ingredients() != cfg.n_ingredients {
        bail!(Data, "corpus has {} ingredients, model expects {}", corpus.n_ingredients(), cfg.n_ingredients);
    }
    corpus.validate()
}

/// Text-modality teacher trained from scratch with the caption loss.
pub fn pretrain_teacher(corpus: &CorpusSplit, arch: ArchConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let model_cfg = ModelConfig::for_corpus(arch, Modality::Text, corpus)?;
    check_vocab(corpus, &model_cfg)?;
    let model = AnticipationModel::new(model_cfg, mix_seed(cfg.seed, &[Role::TeacherPretrain.tag()]), DType::F32, &Device::Cpu)?;
    Run {
        role: Role::TeacherPretrain,
        model,
        teacher: None,
        distiller: None,
        corpus,
        cfg,
    }
    .execute()
}

/// Continues training a teacher on the target corpus. `teacher_vocab_hash`
/// is the vocabulary the teacher was trained with.
pub fn finetune_teacher(
    teacher: &AnticipationModel,
    teacher_vocab_hash: &str,
    corpus: &CorpusSplit,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if teacher_vocab_hash != corpus.vocab.hash() {
        bail!(
            Version,
            "teacher vocabulary {teacher_vocab_hash} does not match corpus vocabulary {}",
            corpus.vocab.hash()
        );
    }
    if teacher.modality() != Modality::Text {
        bail!(Config, "fine-tuning expects a text teacher");
    }
    check_vocab(corpus, teacher.config())?;
    if corpus.max_steps() > teacher.config().arch.max_steps {
        bail!(Config, "corpus steps exceed the teacher's max_steps");
    }
    // Fresh variables so the source teacher stays untouched.
    let model = AnticipationModel::new(teacher.config().clone(), 0, DType::F32, &Device::Cpu)?;
    model.params().load(&teacher.params().snapshot()?)?;
    Run {
        role: Role::TeacherFinetune,
        model,
        teacher: None,
        distiller: None,
        corpus,
        cfg,
    }
    .execute()
}

/// Visual-modality student; with a teacher and a distillation mode other
/// than `none`, the distillation loss is added with weight `distill.weight`.
pub fn train_student(
    corpus: &CorpusSplit,
    teacher: Option<&AnticipationModel>,
    arch: ArchConfig,
    distill: &DistillConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    distill.validate()?;
    let model_cfg = ModelConfig::for_corpus(arch, Modality::Visual, corpus)?;
    check_vocab(corpus, &model_cfg)?;
    let seed = mix_seed(cfg.seed, &[Role::Student.tag()]);
    let model = AnticipationModel::new(model_cfg.clone(), seed, DType::F32, &Device::Cpu)?;
    let (teacher, distiller) = match (distill.mode, teacher) {
        (DistillMode::None, _) => (None, None),
        (_, None) => bail!(Config, "distillation mode {} needs a teacher checkpoint", distill.mode),
        (_, Some(t)) => {
            if t.modality() != Modality::Text {
                bail!(Config, "the teacher must be a text model");
            }
            check_vocab(corpus, t.config())?;
            let d = Distiller::new(
                distill.clone(),
                &model_cfg,
                t.config(),
                mix_seed(seed, &[0x9a0]),
                DType::F32,
                &Device::Cpu,
            )?;
            (Some(t), Some(d))
        }
    };
    Run {
        role: Role::Student,
        model,
        teacher,
        distiller,
        corpus,
        cfg,
    }
    .execute()
}
