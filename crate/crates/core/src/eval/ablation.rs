use std::cell::RefCell;
use std::collections::BTreeMap;

use super::protocol::{evaluate_next_step, EvalReport};
use super::report::{ResultTable, SeedScore, TableRow};
use crate::data::{CorpusSplit, Split};
use crate::distill::{DistillConfig, DistillMode, TapKind};
use crate::error::Result;
use crate::model::{AnticipationModel, ArchConfig};
use crate::train::{train_student, TrainConfig, TrainLog};

/// A fine-tuned teacher for one seed.
pub struct SeededTeacher<'a> {
    pub seed: u64,
    pub model: &'a AnticipationModel,
}

/// Test-split outcome of one student run.
#[derive(Debug, Clone)]
pub struct StudentResult {
    pub report: EvalReport,
    pub log: TrainLog,
}

/// Trains students on one corpus and memoizes them by configuration, so a
/// row shared between tables is trained once. Training is deterministic, so
/// a cache hit returns exactly what a fresh run would.
pub struct StudentRuns<'a> {
    pub corpus: &'a CorpusSplit,
    pub train: TrainConfig,
    cache: RefCell<BTreeMap<String, StudentResult>>,
}

impl<'a> StudentRuns<'a> {
    pub fn new(corpus: &'a CorpusSplit, train: TrainConfig) -> Self {
        Self {
            corpus,
            train,
            cache: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn run(
        &self,
        seed: u64,
        teacher: Option<&AnticipationModel>,
        arch: ArchConfig,
        distill: &DistillConfig,
    ) -> Result<StudentResult> {
        let teacher = teacher.filter(|_| distill.mode != DistillMode::None);
        let teacher_hash = teacher.map(|t| t.params().hash()).transpose()?;
        let key = serde_json::json!({
            "seed": seed,
            "arch": arch,
            "distill": distill,
            "teacher": teacher_hash,
        })
        .to_string();
        if let Some(hit) = self.cache.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let cfg = TrainConfig { seed, ..self.train.clone() };
        let out = train_student(self.corpus, teacher, arch, distill, &cfg)?;
        let report = evaluate_next_step(&out.model, self.corpus, Split::Test, 32)?;
        let result = StudentResult { report, log: out.log };
        self.cache.borrow_mut().insert(key, result.clone());
        Ok(result)
    }

    fn row(
        &self,
        label: &str,
        method: &str,
        teachers: &[SeededTeacher],
        arch: ArchConfig,
        distill: &DistillConfig,
    ) -> Result<TableRow> {
        let scores = teachers
            .iter()
            .map(|t| {
                let r = self.run(t.seed, Some(t.model), arch, distill)?;
                Ok(SeedScore {
                    seed: t.seed,
                    bleu1: r.report.bleu1,
                    bleu4: r.report.bleu4,
                })
            })
            .collect::<Result<_>>()?;
        Ok(TableRow {
            label: label.to_string(),
            method: method.to_string(),
            scores,
        })
    }
}

/// The eight tap subsets, in table order (a) to (h).
pub fn tap_subsets() -> Vec<(&'static str, Vec<TapKind>)> {
    use TapKind::*;
    vec![
        ("a", vec![]),
        ("b", vec![Clip]),
        ("c", vec![Dec]),
        ("d", vec![Temporal]),
        ("e", vec![Output]),
        ("f", vec![Clip, Dec]),
        ("g", vec![Temporal, Output]),
        ("h", vec![Clip, Dec, Temporal, Output]),
    ]
}

fn subset_name(taps: &[TapKind]) -> String {
    if taps.is_empty() {
        "none".into()
    } else {
        taps.iter().map(|t| t.name()).collect::<Vec<_>>().join("+")
    }
}

fn with_taps(base: &DistillConfig, taps: Vec<TapKind>) -> DistillConfig {
    if taps.is_empty() {
        DistillConfig::none()
    } else {
        DistillConfig {
            mode: DistillMode::Ccd,
            taps,
            ..base.clone()
        }
    }
}

/// One student per tap subset and seed; the empty subset trains without distillation.
pub fn run_tap_ablation(
    runs: &StudentRuns,
    teachers: &[SeededTeacher],
    arch: ArchConfig,
    base: &DistillConfig,
) -> Result<ResultTable> {
    let rows = tap_subsets()
        .into_iter()
        .map(|(label, taps)| {
            let name = subset_name(&taps);
            runs.row(label, &name, teachers, arch, &with_taps(base, taps))
        })
        .collect::<Result<_>>()?;
    Ok(ResultTable {
        name: "table_taps".into(),
        title: "CCD tap position ablation".into(),
        rows,
    })
}

/// Students at two widths, each with and without CCD against the same teacher.
pub fn run_dim_ablation(
    runs: &StudentRuns,
    teachers: &[SeededTeacher],
    large: ArchConfig,
    small: ArchConfig,
    base: &DistillConfig,
) -> Result<ResultTable> {
    let ccd = DistillConfig {
        mode: DistillMode::Ccd,
        ..base.clone()
    };
    let none = DistillConfig::none();
    let rows = vec![
        runs.row("a", &format!("d={} no-ccd", large.d), teachers, large, &none)?,
        runs.row("b", &format!("d={} ccd", large.d), teachers, large, &ccd)?,
        runs.row("c", &format!("d={} no-ccd", small.d), teachers, small, &none)?,
        runs.row("d", &format!("d={} ccd", small.d), teachers, small, &ccd)?,
    ];
    Ok(ResultTable {
        name: "table_dims".into(),
        title: "Student width with a fixed teacher".into(),
        rows,
    })
}
