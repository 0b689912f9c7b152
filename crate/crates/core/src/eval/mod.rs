//! BLEU scoring, the next-step protocol, ablation tables and report files.

mod ablation;
mod bleu;
mod protocol;
mod report;

pub use ablation::{run_dim_ablation, run_tap_ablation, tap_subsets, SeededTeacher, StudentResult, StudentRuns};
pub use bleu::{bleu, BleuStats};
pub use protocol::{check_modality, evaluate_next_step, Anticipator, CopyOracle, EvalReport, StepPrediction};
pub use report::{emit_report, QualitativeEntry, ReportBundle, ResultTable, SeedScore, StepCurve, TableRow};
