use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frames::{mix_seed, synthesize_frames, FrameProjector, NoiseConfig};
use super::grammar::{GrammarConfig, RawProcedure, GRAMMAR_TAG};
use super::vocab::{Vocab, EOS, RESERVED};
use crate::error::{bail, Error, Result};

pub const CORPUS_SCHEMA_VERSION: u32 = 1;
/// Maximum content tokens per step text (EOS excluded).
pub const MAX_TEXT_TOKENS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Token ids, terminated by EOS.
    pub text: Vec<u32>,
    /// `n_frames x d_frame`; empty for text-only corpora.
    #[serde(default)]
    pub frames: Vec<Vec<f32>>,
}

impl StepRecord {
    /// Text without the trailing EOS.
    pub fn content(&self) -> &[u32] {
        match self.text.split_last() {
            Some((&EOS, rest)) => rest,
            _ => &self.text,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureSample {
    pub id: u64,
    /// Sorted, de-duplicated ingredient ids.
    pub ingredients: Vec<u32>,
    pub steps: Vec<StepRecord>,
}

impl ProcedureSample {
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub vocab: Vocab,
    pub seed: u64,
    pub grammar: String,
    pub ingredient_names: Vec<String>,
    /// Whether step texts may be observed as model input.
    pub has_text: bool,
    /// Whether steps carry frame features.
    pub has_frames: bool,
    pub train: Vec<ProcedureSample>,
    pub val: Vec<ProcedureSample>,
    pub test: Vec<ProcedureSample>,
}

impl CorpusSplit {
    pub fn split(&self, split: Split) -> &[ProcedureSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn n_ingredients(&self) -> usize {
        self.ingredient_names.len()
    }

    pub fn d_frame(&self) -> Option<usize> {
        self.iter_all()
            .flat_map(|(_, s)| s.steps.iter())
            .find_map(|st| st.frames.first().map(Vec::len))
    }

    pub fn max_steps(&self) -> usize {
        self.iter_all().map(|(_, s)| s.n_steps()).max().unwrap_or(0)
    }

    pub fn iter_all(&self) -> impl Iterator<Item = (Split, &ProcedureSample)> {
        self.train
            .iter()
            .map(|s| (Split::Train, s))
            .chain(self.val.iter().map(|s| (Split::Val, s)))
            .chain(self.test.iter().map(|s| (Split::Test, s)))
    }

    /// Checks every sample invariant against the vocabulary and inventory.
    pub fn validate(&self) -> Result<()> {
        let n_ing = self.n_ingredients() as u32;
        let v = self.vocab.len() as u32;
        let mut d_frame = None;
        let mut ids = std::collections::HashSet::new();
        for (split, s) in self.iter_all() {
            if !ids.insert(s.id) {
                bail!(Data, "duplicate sample id {} (in {split})", s.id);
            }
            if s.steps.is_empty() {
                bail!(Data, "sample {} has no steps", s.id);
            }
            if let Some(&bad) = s.ingredients.iter().find(|&&i| i >= n_ing) {
                bail!(Data, "sample {}: ingredient id {bad} out of range {n_ing}", s.id);
            }
            if s.ingredients.windows(2).any(|w| w[0] >= w[1]) {
                bail!(Data, "sample {}: ingredient ids must be sorted and unique", s.id);
            }
            for (t, step) in s.steps.iter().enumerate() {
                let content = match step.text.split_last() {
                    Some((&EOS, rest)) if !rest.is_empty() => rest,
                    _ => bail!(Data, "sample {} step {}: text must be non-empty and end with EOS", s.id, t + 1),
                };
                if content.len() > MAX_TEXT_TOKENS {
                    bail!(Data, "sample {} step {}: {} tokens exceed {MAX_TEXT_TOKENS}", s.id, t + 1, content.len());
                }
                if let Some(&bad) = content.iter().find(|&&tok| tok >= v || (tok as usize) < 3) {
                    bail!(Data, "sample {} step {}: invalid content token {bad}", s.id, t + 1);
                }
                if self.has_frames {
                    if step.frames.is_empty() {
                        bail!(Data, "sample {} step {}: missing frames", s.id, t + 1);
                    }
                    for row in &step.frames {
                        let d = *d_frame.get_or_insert(row.len());
                        if row.len() != d || d == 0 {
                            bail!(Data, "sample {} step {}: inconsistent frame width", s.id, t + 1);
                        }
                        if row.iter().any(|x| !x.is_finite()) {
                            bail!(Data, "sample {} step {}: non-finite frame value", s.id, t + 1);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitFractions {
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            val: 1.0 / 12.0,
            test: 1.0 / 12.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub grammar: GrammarConfig,
    pub noise: NoiseConfig,
    pub splits: SplitFractions,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.grammar.validate()?;
        self.noise.validate()?;
        let SplitFractions { val, test } = self.splits;
        if !(val >= 0.0 && test >= 0.0 && val + test < 1.0) {
            bail!(Config, "split fractions must be non-negative and leave room for training");
        }
        Ok(())
    }
}

/// One corpus to generate in a family sharing a vocabulary.
#[derive(Debug, Clone, Copy)]
pub struct CorpusRequest {
    pub seed: u64,
    pub n_samples: usize,
    pub with_frames: bool,
}

/// Generates a single paired text/frame corpus with its own vocabulary.
pub fn generate_corpus(seed: u64, n_samples: usize, cfg: &GeneratorConfig) -> Result<CorpusSplit> {
    let mut out = generate_corpora(
        &[CorpusRequest {
            seed,
            n_samples,
            with_frames: true,
        }],
        cfg,
    )?;
    Ok(out.remove(0))
}

/// Generates several corpora from the same grammar. The shared vocabulary is
/// built from the union of their training splits, so checkpoints trained on
/// one remain valid on the others.
pub fn generate_corpora(requests: &[CorpusRequest], cfg: &GeneratorConfig) -> Result<Vec<CorpusSplit>> {
    cfg.validate()?;
    let mut raws = Vec::with_capacity(requests.len());
    for req in requests {
        if req.n_samples < 10 {
            bail!(Config, "need at least 10 samples, got {}", req.n_samples);
        }
        let procs = (0..req.n_samples)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(req.seed, &[1, i as u64]));
                cfg.grammar.generate(&mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let n_val = (req.n_samples as f64 * cfg.splits.val).round() as usize;
        let n_test = (req.n_samples as f64 * cfg.splits.test).round() as usize;
        let n_train = req.n_samples.saturating_sub(n_val + n_test);
        if n_train == 0 {
            bail!(Config, "split fractions leave no training samples");
        }
        raws.push((procs, n_train, n_val));
    }

    let vocab = Vocab::from_words(
        raws.iter()
            .flat_map(|(procs, n_train, _)| procs[..*n_train].iter())
            .flat_map(|p| p.steps.iter().flatten()),
    )?;

    let mut out = Vec::with_capacity(requests.len());
    for (req, (procs, n_train, n_val)) in requests.iter().zip(raws) {
        let projector = FrameProjector::new(req.seed, vocab.len(), cfg.noise.d_frame);
        let samples = procs
            .into_iter()
            .enumerate()
            .map(|(i, raw)| encode_sample(i as u64, raw, &vocab, req, &cfg.noise, &projector))
            .collect::<Result<Vec<_>>>()?;
        let mut it = samples.into_iter();
        let train: Vec<_> = it.by_ref().take(n_train).collect();
        let val: Vec<_> = it.by_ref().take(n_val).collect();
        let test: Vec<_> = it.collect();
        out.push(CorpusSplit {
            vocab: vocab.clone(),
            seed: req.seed,
            grammar: GRAMMAR_TAG.to_string(),
            ingredient_names: cfg.grammar.ingredients.iter().map(|i| i.name.clone()).collect(),
            has_text: true,
            has_frames: req.with_frames,
            train,
            val,
            test,
        });
    }
    Ok(out)
}

fn encode_sample(
    id: u64,
    raw: RawProcedure,
    vocab: &Vocab,
    req: &CorpusRequest,
    noise: &NoiseConfig,
    projector: &FrameProjector,
) -> Result<ProcedureSample> {
    let mut ingredients = raw.ingredients;
    ingredients.sort_unstable();
    let steps = raw
        .steps
        .iter()
        .enumerate()
        .map(|(t, words)| {
            let mut text: Vec<u32> = words.iter().map(|w| vocab.id(w)).collect();
            text.truncate(MAX_TEXT_TOKENS);
            text.push(EOS);
            let frames = if req.with_frames {
                synthesize_frames(&text, mix_seed(req.seed, &[2, id, t as u64]), noise, projector)?
            } else {
                Vec::new()
            };
            Ok(StepRecord { text, frames })
        })
        .collect::<Result<_>>()?;
    Ok(ProcedureSample {
        id,
        ingredients,
        steps,
    })
}

/// Rebuilds a frequency-ordered vocabulary from the training split's texts.
pub fn build_vocab(corpus: &CorpusSplit) -> Result<Vocab> {
    let words = corpus.train.iter().flat_map(|s| s.steps.iter()).flat_map(|st| {
        st.content()
            .iter()
            .map(|&id| corpus.vocab.token(id).unwrap_or(RESERVED[3]).to_string())
    });
    Vocab::from_words(words)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: u32,
    vocab: Vec<String>,
    seed: u64,
    #[serde(default = "external_tag")]
    grammar: String,
    ingredients: Vec<String>,
    modalities: Vec<String>,
}

fn external_tag() -> String {
    "external".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: u64,
    split: Split,
    ingredients: Vec<u32>,
    steps: Vec<StepRecord>,
}

pub fn save_corpus(corpus: &CorpusSplit, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut modalities = Vec::new();
    if corpus.has_text {
        modalities.push("text".to_string());
    }
    if corpus.has_frames {
        modalities.push("visual".to_string());
    }
    let header = Header {
        schema_version: CORPUS_SCHEMA_VERSION,
        vocab: corpus.vocab.tokens().to_vec(),
        seed: corpus.seed,
        grammar: corpus.grammar.clone(),
        ingredients: corpus.ingredient_names.clone(),
        modalities,
    };
    let io = |e: std::io::Error| Error::io(path, e);
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n").map_err(io)?;
    for (split, s) in corpus.iter_all() {
        let rec = Record {
            id: s.id,
            split,
            ingredients: s.ingredients.clone(),
            steps: s.steps.clone(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_corpus(path: &Path) -> Result<CorpusSplit> {
    let corpus = read_corpus(path)?;
    corpus.validate()?;
    Ok(corpus)
}

/// Loads a corpus whose frame features were produced outside this crate
/// (one feature matrix per annotated step). Frames are mandatory and the
/// frame count may vary from step to step.
pub fn ingest_external(path: &Path) -> Result<CorpusSplit> {
    let corpus = read_corpus(path)?;
    if !corpus.has_frames {
        bail!(Data, "external corpus {} declares no visual modality", path.display());
    }
    corpus.validate()?;
    Ok(corpus)
}

fn read_corpus(path: &Path) -> Result<CorpusSplit> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => bail!(Data, "corpus file {} is empty", path.display()),
    };
    let version: serde_json::Value = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    match version.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == CORPUS_SCHEMA_VERSION as u64 => {}
        Some(v) => bail!(Version, "corpus schema version {v}, expected {CORPUS_SCHEMA_VERSION}"),
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing schema_version".into(),
            })
        }
    }
    let header: Header = serde_json::from_value(version).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let vocab = Vocab::from_tokens(header.vocab)?;
    let mut corpus = CorpusSplit {
        vocab,
        seed: header.seed,
        grammar: header.grammar,
        ingredient_names: header.ingredients,
        has_text: header.modalities.iter().any(|m| m == "text"),
        has_frames: header.modalities.iter().any(|m| m == "visual"),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    if let Some(m) = header.modalities.iter().find(|m| *m != "text" && *m != "visual") {
        bail!(Data, "unknown modality {m:?}");
    }
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let sample = ProcedureSample {
            id: rec.id,
            ingredients: rec.ingredients,
            steps: rec.steps,
        };
        match rec.split {
            Split::Train => corpus.train.push(sample),
            Split::Val => corpus.val.push(sample),
            Split::Test => corpus.test.push(sample),
        }
    }
    if corpus.train.is_empty() && corpus.val.is_empty() && corpus.test.is_empty() {
        bail!(Data, "corpus file {} contains no samples", path.display());
    }
    Ok(corpus)
}
