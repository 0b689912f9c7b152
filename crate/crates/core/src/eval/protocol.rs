use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bleu::BleuStats;
use crate::data::{CorpusSplit, ProcedureSample, Split};
use crate::error::{bail, Result};
use crate::model::{AnticipationModel, Modality};

/// Anything that predicts the next step of every prefix of a batch of samples.
///
/// `predict` returns one content-token sequence per `(sample, t)` with
/// `t = 1..=T`, sample-major, where entry `(s, t)` is the prediction of step
/// `t` having observed the ingredients and steps `1..t-1`.
pub trait Anticipator {
    fn modality(&self) -> Modality;
    fn predict(&self, samples: &[&ProcedureSample]) -> Result<Vec<Vec<u32>>>;
}

impl Anticipator for AnticipationModel {
    fn modality(&self) -> Modality {
        AnticipationModel::modality(self)
    }

    /// One causal forward pass covers every observation boundary at once:
    /// position `t - 1` of the temporal module only sees steps before `t`.
    fn predict(&self, samples: &[&ProcedureSample]) -> Result<Vec<Vec<u32>>> {
        let batch = self.batch(samples)?;
        AnticipationModel::predict(self, &batch)
    }
}

/// Returns the ground truth; scores exactly 1.0 on any split.
#[derive(Debug, Clone, Copy)]
pub struct CopyOracle(pub Modality);

impl Anticipator for CopyOracle {
    fn modality(&self) -> Modality {
        self.0
    }

    fn predict(&self, samples: &[&ProcedureSample]) -> Result<Vec<Vec<u32>>> {
        Ok(samples
            .iter()
            .flat_map(|s| s.steps.iter().map(|st| st.content().to_vec()))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPrediction {
    pub sample_id: u64,
    pub step: usize,
    pub reference: Vec<u32>,
    pub generated: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub bleu1: f64,
    pub bleu4: f64,
    /// Entry `i` scores predictions of step `i + 1`.
    pub per_step_bleu1: Vec<f64>,
    pub per_step_bleu4: Vec<f64>,
    pub per_step_count: Vec<usize>,
    pub predictions: Vec<StepPrediction>,
    pub provenance: BTreeMap<String, String>,
}

impl EvalReport {
    /// Step indices covered by the per-step arrays.
    pub fn steps(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.per_step_bleu1.len()
    }
}

pub fn check_modality(modality: Modality, corpus: &CorpusSplit) -> Result<()> {
    match modality {
        Modality::Text if !corpus.has_text => bail!(Config, "text model cannot run on a corpus without step text"),
        Modality::Visual if !corpus.has_frames => bail!(Config, "visual model cannot run on a corpus without frames"),
        _ => Ok(()),
    }
}

/// Next-step evaluation: every target step `t` of every sample is generated
/// from the ingredients and steps `1..t-1`, then scored against step `t`.
pub fn evaluate_next_step(
    model: &dyn Anticipator,
    corpus: &CorpusSplit,
    split: Split,
    batch_size: usize,
) -> Result<EvalReport> {
    evaluate_samples(model, corpus.split(split), corpus, split, batch_size)
}

pub(crate) fn evaluate_samples(
    model: &dyn Anticipator,
    samples: &[ProcedureSample],
    corpus: &CorpusSplit,
    split: Split,
    batch_size: usize,
) -> Result<EvalReport> {
    check_modality(model.modality(), corpus)?;
    if samples.is_empty() {
        bail!(Data, "{split} split is empty");
    }
    let max_t = samples.iter().map(ProcedureSample::n_steps).max().unwrap_or(0);
    let mut total = BleuStats::default();
    let mut per_step = vec![BleuStats::default(); max_t];
    let mut counts = vec![0usize; max_t];
    let mut predictions = Vec::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&ProcedureSample> = chunk.iter().collect();
        let generated = model.predict(&refs)?;
        let expected: usize = chunk.iter().map(ProcedureSample::n_steps).sum();
        if generated.len() != expected {
            bail!(Alignment, "predictor returned {} rows for {expected} steps", generated.len());
        }
        let mut rows = generated.into_iter();
        for s in chunk {
            for (t, st) in s.steps.iter().enumerate() {
                let gen = rows.next().expect("length checked");
                let reference = st.content().to_vec();
                total.add(&gen, &reference);
                per_step[t].add(&gen, &reference);
                counts[t] += 1;
                predictions.push(StepPrediction {
                    sample_id: s.id,
                    step: t + 1,
                    reference,
                    generated: gen,
                });
            }
        }
    }
    Ok(EvalReport {
        split,
        bleu1: total.score(1),
        bleu4: total.score(4),
        per_step_bleu1: per_step.iter().map(|s| s.score(1)).collect(),
        per_step_bleu4: per_step.iter().map(|s| s.score(4)).collect(),
        per_step_count: counts,
        predictions,
        provenance: BTreeMap::new(),
    })
}
