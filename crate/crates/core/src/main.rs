use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ccd::config::ExperimentConfig;
use ccd::data::Split;
use ccd::distill::DistillMode;
use ccd::error::{Error, Result};
use ccd::eval::{evaluate_next_step, CopyOracle};
use ccd::experiment::{load_data, reproduce, student_run_name, write_data, write_eval, write_log};
use ccd::model::{load_checkpoint, save_checkpoint, AnticipationModel, Modality};
use ccd::train::{finetune_teacher, pretrain_teacher, train_student, Role, TrainOutcome};

/// Environment variable that overrides the configured output root.
const OUT_ROOT_ENV: &str = "CCD_OUT_ROOT";

#[derive(Parser)]
#[command(name = "ccd", version, about = "Next-step anticipation with cross-modal contrastive distillation")]
struct Cli {
    /// Experiment configuration (TOML). Defaults to the built-in desk-scale setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; overrides the config and the CCD_OUT_ROOT variable.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override. For gen-data this is the corpus seed, otherwise the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the pretraining and target corpora plus the vocabulary.
    GenData,
    /// Train one model and write its checkpoint and loss log.
    Train {
        #[arg(long)]
        role: Role,
        /// Pretrained teacher to fine-tune, or fine-tuned teacher to distill from.
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a split of the target corpus.
    Eval {
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Score the copy-ground-truth oracle instead of a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        oracle: bool,
    },
    /// Run every table and figure end to end and write the report bundle.
    Reproduce,
}

fn out_root(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.out_dir.clone())
}

fn require_teacher(teacher: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    teacher.clone().ok_or_else(|| Error::Config(format!("{what} needs --teacher PATH")))
}

fn cmd_train(cfg: &ExperimentConfig, out: &Path, role: Role, teacher: &Option<PathBuf>, seed: u64) -> Result<()> {
    let (pretrain, target) = load_data(out)?;
    let vocab_hash = target.vocab.hash();
    let (name, outcome): (String, TrainOutcome) = match role {
        Role::TeacherPretrain => (
            format!("teacher_pretrain_s{seed}"),
            pretrain_teacher(&pretrain, cfg.teacher, &cfg.train.pretrain(seed))?,
        ),
        Role::TeacherFinetune => {
            let path = require_teacher(teacher, "teacher_finetune")?;
            let (model, header) = load_checkpoint(&path, None)?;
            (
                format!("teacher_finetune_s{seed}"),
                finetune_teacher(&model, &header.vocab_hash, &target, &cfg.train.finetune(seed))?,
            )
        }
        Role::Student => {
            let distill = cfg.distill_for(cfg.distill.mode);
            let teacher: Option<AnticipationModel> = match distill.mode {
                DistillMode::None => None,
                mode => {
                    let path = require_teacher(teacher, &format!("distillation mode {mode}"))?;
                    Some(load_checkpoint(&path, Some(&vocab_hash))?.0)
                }
            };
            (
                student_run_name(&cfg.student, &distill, seed),
                train_student(&target, teacher.as_ref(), cfg.student, &distill, &cfg.train.student(seed))?,
            )
        }
    };
    let meta = BTreeMap::from([("role".to_string(), role.to_string()), ("seed".to_string(), seed.to_string())]);
    let ckpt = out.join("checkpoints").join(format!("{name}.ckpt"));
    save_checkpoint(&outcome.model, &vocab_hash, meta, &ckpt)?;
    write_log(&outcome.log, &out.join("logs").join(format!("{name}.jsonl")))?;
    log::info!(
        "{name}: best epoch {:?}, val BLEU4 {:.4}, checkpoint {}",
        outcome.log.best_epoch,
        outcome.val_report.bleu4,
        ckpt.display()
    );
    Ok(())
}

fn cmd_eval(out: &Path, checkpoint: &Option<PathBuf>, split: Split, oracle: bool) -> Result<()> {
    let (_, target) = load_data(out)?;
    let (name, report) = if oracle {
        ("oracle".to_string(), evaluate_next_step(&CopyOracle(Modality::Visual), &target, split, 32)?)
    } else {
        let path = checkpoint.as_ref().expect("clap enforces --checkpoint");
        let (model, _) = load_checkpoint(path, Some(&target.vocab.hash()))?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
        (stem, evaluate_next_step(&model, &target, split, 32)?)
    };
    let dir = out.join("eval").join(format!("{name}_{split}"));
    write_eval(&report, &dir)?;
    println!("{name} {split}: BLEU1 {:.4} BLEU4 {:.4}", report.bleu1, report.bleu4);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let out = out_root(&cli, &cfg);
    match &cli.command {
        Command::GenData => {
            if let Some(s) = cli.seed {
                cfg.corpus.seed = s;
            }
            let (pretrain, target) = write_data(&cfg, &out)?;
            log::info!(
                "wrote {} pretraining and {} target samples, vocabulary {}",
                pretrain.iter_all().count(),
                target.iter_all().count(),
                target.vocab.len()
            );
        }
        Command::Train { role, teacher } => {
            let seed = cli.seed.unwrap_or(cfg.seeds[0]);
            cmd_train(&cfg, &out, *role, teacher, seed)?;
        }
        Command::Eval {
            checkpoint,
            split,
            oracle,
        } => cmd_eval(&out, checkpoint, *split, *oracle)?,
        Command::Reproduce => {
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let bundle = reproduce(&cfg, &out)?;
            print!("{}", bundle.summary_markdown());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
