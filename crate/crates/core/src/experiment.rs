//! The end-to-end pipeline behind the command-line tool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::ExperimentConfig;
use crate::data::{generate_corpora, load_corpus, save_corpus, CorpusRequest, CorpusSplit, Split};
use crate::distill::{DistillConfig, DistillMode};
use crate::error::{Error, Result};
use crate::eval::{
    emit_report, evaluate_next_step, run_dim_ablation, run_tap_ablation, EvalReport, QualitativeEntry, ReportBundle,
    ResultTable, SeedScore, SeededTeacher, StepCurve, StudentRuns, TableRow,
};
use crate::model::{save_checkpoint, AnticipationModel, ArchConfig};
use crate::train::{finetune_teacher, pretrain_teacher, TrainLog};

pub const PRETRAIN_FILE: &str = "pretrain.jsonl";
pub const TARGET_FILE: &str = "target.jsonl";

pub fn data_dir(out: &Path) -> PathBuf {
    out.join("data")
}

/// Text-only pretraining corpus and paired target corpus sharing one vocabulary.
pub fn generate_data(cfg: &ExperimentConfig) -> Result<(CorpusSplit, CorpusSplit)> {
    let mut v = generate_corpora(
        &[
            CorpusRequest {
                seed: cfg.corpus.pretrain_seed(),
                n_samples: cfg.corpus.pretrain_samples,
                with_frames: false,
            },
            CorpusRequest {
                seed: cfg.corpus.target_seed(),
                n_samples: cfg.corpus.target_samples,
                with_frames: true,
            },
        ],
        &cfg.generator,
    )?;
    let target = v.pop().expect("two corpora");
    let pretrain = v.pop().expect("two corpora");
    Ok((pretrain, target))
}

/// Generates both corpora and writes them, plus the vocabulary, under `out/data`.
pub fn write_data(cfg: &ExperimentConfig, out: &Path) -> Result<(CorpusSplit, CorpusSplit)> {
    let (pretrain, target) = generate_data(cfg)?;
    let dir = data_dir(out);
    save_corpus(&pretrain, &dir.join(PRETRAIN_FILE))?;
    save_corpus(&target, &dir.join(TARGET_FILE))?;
    let vocab = serde_json::to_string_pretty(&target.vocab.tokens()).expect("serializable") + "\n";
    let p = dir.join("vocab.json");
    std::fs::write(&p, vocab).map_err(|e| Error::io(p, e))?;
    Ok((pretrain, target))
}

pub fn load_data(out: &Path) -> Result<(CorpusSplit, CorpusSplit)> {
    let dir = data_dir(out);
    Ok((load_corpus(&dir.join(PRETRAIN_FILE))?, load_corpus(&dir.join(TARGET_FILE))?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loss logs are written without wall-clock fields so reruns are byte-identical.
pub fn write_log(log: &TrainLog, path: &Path) -> Result<()> {
    write_text(path, &log.to_jsonl(false))
}

/// Writes `report.json`, `scores.csv` and `per_step.csv` for one evaluation.
pub fn write_eval(report: &EvalReport, dir: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("serializable") + "\n";
    write_text(&dir.join("report.json"), &json)?;
    write_text(
        &dir.join("scores.csv"),
        &format!("split,bleu1,bleu4\n{},{:.6},{:.6}\n", report.split, report.bleu1, report.bleu4),
    )?;
    let mut csv = String::from("step,count,bleu1,bleu4\n");
    for (i, step) in report.steps().enumerate() {
        csv += &format!(
            "{step},{},{:.6},{:.6}\n",
            report.per_step_count[i], report.per_step_bleu1[i], report.per_step_bleu4[i]
        );
    }
    write_text(&dir.join("per_step.csv"), &csv)
}

pub fn student_run_name(arch: &ArchConfig, distill: &DistillConfig, seed: u64) -> String {
    let taps = if distill.mode == DistillMode::None {
        String::new()
    } else {
        format!("_{}", distill.active_taps().iter().map(|t| t.name()).collect::<Vec<_>>().join("-"))
    };
    format!("student_d{}_{}{}_s{seed}", arch.d, distill.mode, taps)
}

fn score(seed: u64, r: &EvalReport) -> SeedScore {
    SeedScore {
        seed,
        bleu1: r.bleu1,
        bleu4: r.bleu4,
    }
}

struct Teachers {
    seed: u64,
    target_only: EvalReport,
    finetuned_report: EvalReport,
    finetuned: AnticipationModel,
}

fn holds(ok: bool) -> &'static str {
    if ok {
        "holds"
    } else {
        "does not hold"
    }
}

/// Runs every table and the per-step comparison across all seeds and writes
/// the report bundle to `out/report`. Returns the bundle.
pub fn reproduce(cfg: &ExperimentConfig, out: &Path) -> Result<ReportBundle> {
    cfg.validate()?;
    cfg.distill_for(DistillMode::Ccd).validate()?;
    let mut timing: Vec<(String, f64)> = Vec::new();
    let started = Instant::now();
    let (pretrain, target) = write_data(cfg, out)?;
    timing.push(("data".into(), started.elapsed().as_secs_f64()));
    let vocab_hash = target.vocab.hash();

    let mut teachers = Vec::new();
    for &seed in &cfg.seeds {
        let t = Instant::now();
        let only = pretrain_teacher(&target, cfg.teacher, &cfg.train.finetune(seed))?;
        write_log(&only.log, &out.join(format!("logs/teacher_target_only_s{seed}.jsonl")))?;
        let pre = pretrain_teacher(&pretrain, cfg.teacher, &cfg.train.pretrain(seed))?;
        write_log(&pre.log, &out.join(format!("logs/teacher_pretrain_s{seed}.jsonl")))?;
        let fin = finetune_teacher(&pre.model, &pretrain.vocab.hash(), &target, &cfg.train.finetune(seed))?;
        write_log(&fin.log, &out.join(format!("logs/teacher_finetune_s{seed}.jsonl")))?;
        let meta = BTreeMap::from([("role".to_string(), "teacher_finetune".to_string()), ("seed".to_string(), seed.to_string())]);
        save_checkpoint(&fin.model, &vocab_hash, meta, &out.join(format!("checkpoints/teacher_s{seed}.ckpt")))?;
        teachers.push(Teachers {
            seed,
            target_only: evaluate_next_step(&only.model, &target, Split::Test, 32)?,
            finetuned_report: evaluate_next_step(&fin.model, &target, Split::Test, 32)?,
            finetuned: fin.model,
        });
        timing.push((format!("teachers_s{seed}"), t.elapsed().as_secs_f64()));
    }
    let seeded: Vec<SeededTeacher> = teachers.iter().map(|t| SeededTeacher { seed: t.seed, model: &t.finetuned }).collect();

    let runs = StudentRuns::new(&target, cfg.train.student(0));
    let t = Instant::now();
    let methods = [
        ("visual-alone", DistillMode::None),
        ("logits-kl", DistillMode::LogitsKl),
        ("feature-l2", DistillMode::FeatureL2),
        ("ccd", DistillMode::Ccd),
    ];
    let mut student_reports: BTreeMap<&str, Vec<(u64, EvalReport)>> = BTreeMap::new();
    for (name, mode) in methods {
        let distill = cfg.distill_for(mode);
        for t in &seeded {
            let r = runs.run(t.seed, Some(t.model), cfg.student, &distill)?;
            write_log(&r.log, &out.join(format!("logs/{}.jsonl", student_run_name(&cfg.student, &distill, t.seed))))?;
            student_reports.entry(name).or_default().push((t.seed, r.report));
        }
    }
    timing.push(("students".into(), t.elapsed().as_secs_f64()));

    let row = |label: &str, method: &str, scores: Vec<SeedScore>| TableRow {
        label: label.into(),
        method: method.into(),
        scores,
    };
    let student_row = |label: &str, name: &str| {
        row(label, name, student_reports[name].iter().map(|(s, r)| score(*s, r)).collect())
    };
    let main_table = ResultTable {
        name: "table_main".into(),
        title: "Teachers, visual-alone student and distillation methods".into(),
        rows: vec![
            row("a", "text teacher, target only", teachers.iter().map(|t| score(t.seed, &t.target_only)).collect()),
            row(
                "b",
                "text teacher, pretrain + finetune",
                teachers.iter().map(|t| score(t.seed, &t.finetuned_report)).collect(),
            ),
            student_row("c", "visual-alone"),
            student_row("d", "logits-kl"),
            student_row("e", "feature-l2"),
            student_row("f", "ccd"),
        ],
    };

    let t = Instant::now();
    let taps = run_tap_ablation(&runs, &seeded, cfg.student, &cfg.distill_for(DistillMode::Ccd))?;
    timing.push(("tap_ablation".into(), t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let dims = run_dim_ablation(&runs, &seeded, cfg.student, cfg.student_small, &cfg.distill_for(DistillMode::Ccd))?;
    timing.push(("dim_ablation".into(), t.elapsed().as_secs_f64()));

    let mut curves = Vec::new();
    for t in &teachers {
        curves.push(StepCurve::from_report("text-teacher", t.seed, &t.finetuned_report));
    }
    for (name, _) in methods {
        for (seed, r) in &student_reports[name] {
            curves.push(StepCurve::from_report(name, *seed, r));
        }
    }

    let qualitative = qualitative_entries(cfg, &target, &teachers[0].finetuned_report, &student_reports);

    let mut bundle = ReportBundle {
        tables: vec![main_table, taps, dims],
        curves,
        qualitative,
        notes: Vec::new(),
    };
    bundle.notes = direction_notes(&bundle);
    emit_report(&bundle, &out.join("report"))?;
    timing.push(("total".into(), started.elapsed().as_secs_f64()));
    let timing_text: String = timing.iter().map(|(k, v)| format!("{k}\t{v:.1}\n")).collect();
    write_text(&out.join("report/timing.txt"), &timing_text)?;
    Ok(bundle)
}

fn qualitative_entries(
    cfg: &ExperimentConfig,
    target: &CorpusSplit,
    teacher: &EvalReport,
    students: &BTreeMap<&str, Vec<(u64, EvalReport)>>,
) -> Vec<QualitativeEntry> {
    let ids: Vec<u64> = target.test.iter().take(cfg.report.qualitative_samples).map(|s| s.id).collect();
    let mut sources: Vec<(&str, &EvalReport)> = vec![("text-teacher", teacher)];
    for name in ["visual-alone", "ccd"] {
        if let Some((_, r)) = students.get(name).and_then(|v| v.first()) {
            sources.push((name, r));
        }
    }
    teacher
        .predictions
        .iter()
        .filter(|p| ids.contains(&p.sample_id))
        .map(|p| QualitativeEntry {
            sample_id: p.sample_id,
            step: p.step,
            reference: target.vocab.decode(&p.reference),
            generated: sources
                .iter()
                .map(|(name, r)| {
                    let g = r
                        .predictions
                        .iter()
                        .find(|q| q.sample_id == p.sample_id && q.step == p.step)
                        .map(|q| target.vocab.decode(&q.generated))
                        .unwrap_or_default();
                    (name.to_string(), g)
                })
                .collect(),
        })
        .collect()
}

/// Plain-language checks of the expected orderings, for the summary.
pub fn direction_notes(bundle: &ReportBundle) -> Vec<String> {
    let mut notes = Vec::new();
    let table = |name: &str| bundle.tables.iter().find(|t| t.name == name);
    if let Some(t) = table("table_main") {
        if let (Some(a), Some(b)) = (t.row("a"), t.row("b")) {
            notes.push(format!(
                "pretrain + finetune teacher BLEU4 {:.2} vs target-only {:.2}: improvement {}",
                100.0 * b.bleu4_mean(),
                100.0 * a.bleu4_mean(),
                holds(b.bleu4_mean() > a.bleu4_mean())
            ));
        }
        if let (Some(c), Some(f)) = (t.row("c"), t.row("f")) {
            notes.push(format!(
                "ccd student BLEU4 {:.2} vs visual-alone {:.2}: improvement {}",
                100.0 * f.bleu4_mean(),
                100.0 * c.bleu4_mean(),
                holds(f.bleu4_mean() > c.bleu4_mean())
            ));
        }
    }
    let base = bundle.mean_curve("visual-alone");
    let ccd = bundle.mean_curve("ccd");
    if !base.is_empty() && base.len() == ccd.len() {
        let wins = base.iter().zip(&ccd).filter(|(b, c)| c >= b).count();
        notes.push(format!(
            "ccd per-step BLEU4 at or above visual-alone at {wins} of {} step indices: majority {}",
            base.len(),
            holds(2 * wins > base.len())
        ));
    }
    if let Some(t) = table("table_dims") {
        for (no, yes) in [("a", "b"), ("c", "d")] {
            if let (Some(n), Some(y)) = (t.row(no), t.row(yes)) {
                notes.push(format!(
                    "{} vs {}: BLEU4 {:.2} vs {:.2}, ccd gain {}",
                    y.method,
                    n.method,
                    100.0 * y.bleu4_mean(),
                    100.0 * n.bleu4_mean(),
                    holds(y.bleu4_mean() >= n.bleu4_mean())
                ));
            }
        }
    }
    notes
}
