//! The anticipation transformer: step encoder, causal temporal module and a
//! single output module shared by every step.

use candle_core::{DType, Device, Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Modality, ModelConfig};
use super::layers::{causal_mask, key_padding_mask, log_softmax_last, TransformerBlock};
use super::params::{Embedding, LayerNorm, Linear, ParamStore};
use crate::data::{ProcedureSample, BOS, EOS, PAD};
use crate::error::{bail, Result};

#[derive(Debug, Clone)]
struct TextEncoder {
    token_embedding: Embedding,
    position_embedding: Embedding,
    layers: Vec<TransformerBlock>,
    norm: LayerNorm,
    proj: Linear,
}

#[derive(Debug, Clone)]
enum StepEncoder {
    Visual { proj: Linear },
    Text(TextEncoder),
}

#[derive(Debug, Clone)]
struct OutputModule {
    token_embedding: Embedding,
    position_embedding: Embedding,
    layers: Vec<TransformerBlock>,
    norm: LayerNorm,
    vocab_proj: Linear,
}

#[derive(Debug, Clone)]
pub struct AnticipationModel {
    cfg: ModelConfig,
    params: ParamStore,
    ingredient_embedding: Tensor,
    ingredient_proj: Linear,
    step_encoder: StepEncoder,
    step_embedding: Embedding,
    temporal: Vec<TransformerBlock>,
    temporal_norm: LayerNorm,
    output: OutputModule,
}

/// Model-ready tensors for a batch of procedures.
///
/// Temporal position 0 holds the ingredient set; position `t` holds step `t`.
/// Decoder rows enumerate `(sample, t)` for `t < T`: the feature anticipated
/// at position `t` is decoded into the text of step `t + 1`.
#[derive(Debug, Clone)]
pub struct ModelBatch {
    pub sample_ids: Vec<u64>,
    pub steps: Vec<usize>,
    /// `max(T) + 1`.
    pub n_positions: usize,
    nhot: Tensor,
    step_input: StepInput,
    clip_index: Tensor,
    position_rows: Tensor,
    dec_rows: Tensor,
    pub dec_inputs: Tensor,
    pub dec_targets: Tensor,
    pub dec_mask: Tensor,
    dec_valid: Vec<usize>,
    /// Content tokens of each decoder row's target step.
    pub references: Vec<Vec<u32>>,
    /// `(sample index in batch, target step)` for each decoder row.
    pub row_origin: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
enum StepInput {
    Frames(Tensor),
    Text { ids: Tensor, valid: Vec<usize> },
}

/// Every intermediate the distillation taps can read, plus the logits.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `(B, S, d)` step-encoder outputs; position 0 is the ingredient feature.
    pub clip_feats: Tensor,
    /// `(B, S, d)` anticipated features; position `t` anticipates step `t + 1`.
    pub dec_feats: Tensor,
    /// One `(B, S, d)` tensor per temporal layer.
    pub temporal_hidden: Vec<Tensor>,
    /// One `(R, d)` tensor per output layer, mean-pooled over token positions.
    pub output_hidden: Vec<Tensor>,
    /// `(R, L, V)` teacher-forced logits.
    pub logits: Tensor,
    pub steps: Vec<usize>,
    pub sample_ids: Vec<u64>,
    position_rows: Tensor,
}

impl ForwardTrace {
    /// Flattened `(sum(T + 1), d)` view of a `(B, S, d)` trace tensor,
    /// keeping only real positions in sample-major order.
    pub fn valid_positions(&self, t: &Tensor) -> Result<Tensor> {
        let (b, s, d) = t.dims3()?;
        Ok(t.reshape((b * s, d))?.index_select(&self.position_rows, 0)?)
    }

    pub fn n_positions(&self) -> usize {
        self.steps.iter().map(|t| t + 1).sum()
    }

    pub fn n_rows(&self) -> usize {
        self.steps.iter().sum()
    }

    pub fn detach(&self) -> Self {
        Self {
            clip_feats: self.clip_feats.detach(),
            dec_feats: self.dec_feats.detach(),
            temporal_hidden: self.temporal_hidden.iter().map(Tensor::detach).collect(),
            output_hidden: self.output_hidden.iter().map(Tensor::detach).collect(),
            logits: self.logits.detach(),
            steps: self.steps.clone(),
            sample_ids: self.sample_ids.clone(),
            position_rows: self.position_rows.clone(),
        }
    }
}

fn u32_tensor(data: Vec<u32>, shape: &[usize], device: &Device) -> Result<Tensor> {
    Ok(Tensor::from_vec(data, shape, device)?)
}

fn float_tensor(data: Vec<f64>, shape: &[usize], dtype: DType, device: &Device) -> Result<Tensor> {
    Ok(Tensor::from_vec(data, shape, device)?.to_dtype(dtype)?)
}

impl ModelBatch {
    pub fn new(samples: &[&ProcedureSample], cfg: &ModelConfig, dtype: DType, device: &Device) -> Result<Self> {
        if samples.is_empty() {
            bail!(Input, "empty batch");
        }
        let b = samples.len();
        let steps: Vec<usize> = samples.iter().map(|s| s.n_steps()).collect();
        let max_t = *steps.iter().max().expect("non-empty");
        if steps.contains(&0) {
            bail!(Input, "sample without steps");
        }
        if max_t > cfg.arch.max_steps {
            bail!(Input, "{max_t} steps exceed the model's max_steps {}", cfg.arch.max_steps);
        }
        let s = max_t + 1;
        let total_steps: usize = steps.iter().sum();

        let mut nhot = vec![0.0; b * cfg.n_ingredients];
        for (i, smp) in samples.iter().enumerate() {
            for &ing in &smp.ingredients {
                if ing as usize >= cfg.n_ingredients {
                    bail!(Input, "ingredient id {ing} out of range");
                }
                nhot[i * cfg.n_ingredients + ing as usize] = 1.0;
            }
        }
        let nhot = float_tensor(nhot, &[b, cfg.n_ingredients], dtype, device)?;

        let step_input = match cfg.modality {
            Modality::Visual => {
                let d_frame = cfg.d_frame.expect("validated");
                let f_max = samples
                    .iter()
                    .flat_map(|s| s.steps.iter().map(|st| st.frames.len()))
                    .max()
                    .unwrap_or(0);
                if f_max == 0 {
                    bail!(Input, "visual model needs frame features");
                }
                let mut data = Vec::with_capacity(total_steps * f_max * d_frame);
                for st in samples.iter().flat_map(|s| s.steps.iter()) {
                    if st.frames.is_empty() {
                        bail!(Input, "step without frames");
                    }
                    // Repeating a real frame leaves the max-pool unchanged.
                    for k in 0..f_max {
                        let row = &st.frames[k.min(st.frames.len() - 1)];
                        if row.len() != d_frame {
                            bail!(Input, "frame width {} != {d_frame}", row.len());
                        }
                        data.extend(row.iter().map(|&x| x as f64));
                    }
                }
                StepInput::Frames(float_tensor(data, &[total_steps, f_max, d_frame], dtype, device)?)
            }
            Modality::Text => {
                let l_enc = samples
                    .iter()
                    .flat_map(|s| s.steps.iter().map(|st| st.text.len()))
                    .max()
                    .unwrap_or(0);
                if l_enc == 0 || l_enc > cfg.arch.max_len + 1 {
                    bail!(Input, "step text length {l_enc} outside 1..={}", cfg.arch.max_len + 1);
                }
                let mut ids = Vec::with_capacity(total_steps * l_enc);
                let mut valid = Vec::with_capacity(total_steps);
                for st in samples.iter().flat_map(|s| s.steps.iter()) {
                    if st.text.is_empty() {
                        bail!(Input, "empty step text");
                    }
                    ids.extend(st.text.iter().copied().chain(std::iter::repeat(PAD)).take(l_enc));
                    valid.push(st.text.len());
                }
                StepInput::Text {
                    ids: u32_tensor(ids, &[total_steps, l_enc], device)?,
                    valid,
                }
            }
        };

        // Lookup table rows: [ingredients (b), steps (total_steps), zero (1)].
        let zero_row = (b + total_steps) as u32;
        let mut clip_index = Vec::with_capacity(b * s);
        let mut position_rows = Vec::new();
        let mut next_step_row = b as u32;
        for (i, &t) in steps.iter().enumerate() {
            clip_index.push(i as u32);
            for _ in 0..t {
                clip_index.push(next_step_row);
                next_step_row += 1;
            }
            clip_index.extend(std::iter::repeat_n(zero_row, s - 1 - t));
            position_rows.extend((0..=t).map(|p| (i * s + p) as u32));
        }

        let l_dec = samples
            .iter()
            .flat_map(|s| s.steps.iter().map(|st| st.content().len()))
            .max()
            .unwrap_or(0)
            + 1;
        if l_dec > cfg.arch.max_len + 1 {
            bail!(Input, "target text longer than max_len {}", cfg.arch.max_len);
        }
        let mut dec_rows = Vec::with_capacity(total_steps);
        let mut inputs = Vec::with_capacity(total_steps * l_dec);
        let mut targets = Vec::with_capacity(total_steps * l_dec);
        let mut mask = Vec::with_capacity(total_steps * l_dec);
        let mut dec_valid = Vec::with_capacity(total_steps);
        let mut references = Vec::with_capacity(total_steps);
        let mut row_origin = Vec::with_capacity(total_steps);
        for (i, smp) in samples.iter().enumerate() {
            for (t, st) in smp.steps.iter().enumerate() {
                let content = st.content();
                dec_rows.push((i * s + t) as u32);
                let n = content.len() + 1;
                inputs.extend(std::iter::once(BOS).chain(content.iter().copied()).chain(std::iter::repeat(PAD)).take(l_dec));
                targets.extend(content.iter().copied().chain(std::iter::once(EOS)).chain(std::iter::repeat(PAD)).take(l_dec));
                mask.extend((0..l_dec).map(|j| if j < n { 1.0 } else { 0.0 }));
                dec_valid.push(n);
                references.push(content.to_vec());
                row_origin.push((i, t + 1));
            }
        }
        let r = dec_rows.len();
        Ok(Self {
            sample_ids: samples.iter().map(|s| s.id).collect(),
            steps,
            n_positions: s,
            nhot,
            step_input,
            clip_index: u32_tensor(clip_index, &[b * s], device)?,
            position_rows: u32_tensor(position_rows.clone(), &[position_rows.len()], device)?,
            dec_rows: u32_tensor(dec_rows, &[r], device)?,
            dec_inputs: u32_tensor(inputs, &[r, l_dec], device)?,
            dec_targets: u32_tensor(targets, &[r, l_dec], device)?,
            dec_mask: float_tensor(mask, &[r, l_dec], dtype, device)?,
            dec_valid,
            references,
            row_origin,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.steps.len()
    }

    pub fn n_rows(&self) -> usize {
        self.references.len()
    }
}

impl AnticipationModel {
    pub fn new(cfg: ModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(dtype, device.clone());
        let a = cfg.arch;
        let d = a.d;
        let rng = &mut rng;

        let ingredient_embedding = Embedding::new(&mut store, "ingredients.embedding", cfg.n_ingredients, d, rng)?
            .table()
            .clone();
        let ingredient_proj = Linear::new(&mut store, "ingredients.proj", d, d, true, rng)?;
        let step_encoder = match cfg.modality {
            Modality::Visual => StepEncoder::Visual {
                proj: Linear::new(&mut store, "clip.proj", cfg.d_frame.expect("validated"), d, true, rng)?,
            },
            Modality::Text => StepEncoder::Text(TextEncoder {
                token_embedding: Embedding::new(&mut store, "text.token_embedding", cfg.vocab_size, d, rng)?,
                position_embedding: Embedding::new(&mut store, "text.position_embedding", a.max_len + 1, d, rng)?,
                layers: (0..a.text_layers)
                    .map(|i| TransformerBlock::new(&mut store, &format!("text.layers.{i}"), d, a.heads, a.ffn_mult, rng))
                    .collect::<Result<_>>()?,
                norm: LayerNorm::new(&mut store, "text.norm", d, rng)?,
                proj: Linear::new(&mut store, "text.proj", d, d, true, rng)?,
            }),
        };
        let step_embedding = Embedding::new(&mut store, "temporal.step_embedding", a.max_steps + 1, d, rng)?;
        let temporal = (0..a.temporal_layers)
            .map(|i| TransformerBlock::new(&mut store, &format!("temporal.layers.{i}"), d, a.heads, a.ffn_mult, rng))
            .collect::<Result<_>>()?;
        let temporal_norm = LayerNorm::new(&mut store, "temporal.norm", d, rng)?;
        let output = OutputModule {
            token_embedding: Embedding::new(&mut store, "output.token_embedding", cfg.vocab_size, d, rng)?,
            position_embedding: Embedding::new(&mut store, "output.position_embedding", a.max_len + 2, d, rng)?,
            layers: (0..a.output_layers)
                .map(|i| TransformerBlock::new(&mut store, &format!("output.layers.{i}"), d, a.heads, a.ffn_mult, rng))
                .collect::<Result<_>>()?,
            norm: LayerNorm::new(&mut store, "output.norm", d, rng)?,
            vocab_proj: Linear::new(&mut store, "output.vocab_proj", d, cfg.vocab_size, true, rng)?,
        };
        Ok(Self {
            cfg,
            params: store,
            ingredient_embedding,
            ingredient_proj,
            step_encoder,
            step_embedding,
            temporal,
            temporal_norm,
            output,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn modality(&self) -> Modality {
        self.cfg.modality
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    pub fn batch(&self, samples: &[&ProcedureSample]) -> Result<ModelBatch> {
        ModelBatch::new(samples, &self.cfg, self.dtype(), self.device())
    }

    /// Max-pools `(..., n_frames, d_frame)` over the frame axis, then maps to width `d`.
    pub fn encode_clip(&self, frames: &Tensor) -> Result<Tensor> {
        let StepEncoder::Visual { proj } = &self.step_encoder else {
            bail!(Config, "encode_clip called on a {} model", self.cfg.modality);
        };
        if frames.rank() < 2 || frames.dim(D::Minus2)? == 0 {
            bail!(Input, "encode_clip needs at least one frame");
        }
        proj.forward(&frames.max(D::Minus2)?)
    }

    /// Encodes an ingredient id set (order and duplicates are irrelevant).
    pub fn encode_ingredients(&self, ids: &[u32]) -> Result<Tensor> {
        let mut nhot = vec![0.0; self.cfg.n_ingredients];
        for &i in ids {
            if i as usize >= self.cfg.n_ingredients {
                bail!(Input, "ingredient id {i} out of range {}", self.cfg.n_ingredients);
            }
            nhot[i as usize] = 1.0;
        }
        let nhot = float_tensor(nhot, &[1, self.cfg.n_ingredients], self.dtype(), self.device())?;
        Ok(self.encode_ingredient_nhot(&nhot)?.squeeze(0)?)
    }

    fn encode_ingredient_nhot(&self, nhot: &Tensor) -> Result<Tensor> {
        self.ingredient_proj.forward(&nhot.matmul(&self.ingredient_embedding)?)
    }

    /// Bidirectional encoding of one step sentence (ending in EOS), mean-pooled.
    pub fn encode_text_step(&self, ids: &[u32]) -> Result<Tensor> {
        if ids.is_empty() {
            bail!(Input, "empty step text");
        }
        if ids.len() > self.cfg.arch.max_len + 1 {
            bail!(Input, "step text longer than {}", self.cfg.arch.max_len + 1);
        }
        let t = u32_tensor(ids.to_vec(), &[1, ids.len()], self.device())?;
        Ok(self.encode_text_batch(&t, &[ids.len()])?.squeeze(0)?)
    }

    fn encode_text_batch(&self, ids: &Tensor, valid: &[usize]) -> Result<Tensor> {
        let StepEncoder::Text(enc) = &self.step_encoder else {
            bail!(Config, "text encoding requested from a {} model", self.cfg.modality);
        };
        let (rows, l) = ids.dims2()?;
        let mut x = enc.token_embedding.forward(ids)?.broadcast_add(&enc.position_embedding.prefix(l)?)?;
        let mask = key_padding_mask(valid, l, self.dtype(), self.device())?;
        for layer in &enc.layers {
            x = layer.forward(&x, &mask)?;
        }
        let x = enc.norm.forward(&x)?;
        let pool: Vec<f64> = valid
            .iter()
            .flat_map(|&v| (0..l).map(move |j| if j < v { 1.0 / v as f64 } else { 0.0 }))
            .collect();
        let pool = float_tensor(pool, &[rows, l, 1], self.dtype(), self.device())?;
        enc.proj.forward(&x.broadcast_mul(&pool)?.sum(1)?)
    }

    fn encode_steps(&self, input: &StepInput) -> Result<Tensor> {
        match input {
            StepInput::Frames(f) => self.encode_clip(f),
            StepInput::Text { ids, valid } => self.encode_text_batch(ids, valid),
        }
    }

    /// Causal temporal module over `(B, S, d)` step features. Returns the
    /// anticipated features and each layer's output.
    pub fn temporal_forward(&self, step_feats: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (_, s, _) = step_feats.dims3()?;
        if s == 0 || s > self.cfg.arch.max_steps + 1 {
            bail!(Input, "temporal sequence length {s} outside 1..={}", self.cfg.arch.max_steps + 1);
        }
        let mask = causal_mask(s, self.dtype(), self.device())?;
        let mut x = step_feats.broadcast_add(&self.step_embedding.prefix(s)?)?;
        let mut hidden = Vec::with_capacity(self.temporal.len());
        for layer in &self.temporal {
            x = layer.forward(&x, &mask)?;
            hidden.push(x.clone());
        }
        Ok((self.temporal_norm.forward(&x)?, hidden))
    }

    /// Runs the shared output module over `[dec_feat, BOS, tokens...]`.
    /// Returns the final normalized states at token positions and each layer's output.
    fn decode_states(&self, dec_feats: &Tensor, inputs: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (r, l) = inputs.dims2()?;
        let out = &self.output;
        let tokens = out.token_embedding.forward(inputs)?;
        let x = Tensor::cat(&[&dec_feats.unsqueeze(1)?, &tokens], 1)?;
        let mut x = x.broadcast_add(&out.position_embedding.prefix(l + 1)?)?;
        let mask = causal_mask(l + 1, self.dtype(), self.device())?;
        let mut hidden = Vec::with_capacity(out.layers.len());
        for layer in &out.layers {
            x = layer.forward(&x, &mask)?;
            hidden.push(x.clone());
        }
        let states = out.norm.forward(&x.narrow(1, 1, l)?)?;
        debug_assert_eq!(states.dims()[0], r);
        Ok((states, hidden))
    }

    /// Teacher-forced decoding of `R` rows. `inputs` is `[BOS, content...]`
    /// padded to `L`; `valid[r]` counts the real positions of row `r`.
    /// Logits at position `i` score token `i + 1` of the target.
    pub fn decode_teacher_forcing_batch(
        &self,
        dec_feats: &Tensor,
        inputs: &Tensor,
        valid: &[usize],
    ) -> Result<(Tensor, Vec<Tensor>)> {
        let (r, l) = inputs.dims2()?;
        if l > self.cfg.arch.max_len + 1 {
            bail!(Input, "decoder input length {l} exceeds {}", self.cfg.arch.max_len + 1);
        }
        let (states, hidden) = self.decode_states(dec_feats, inputs)?;
        let logits = self.output.vocab_proj.forward(&states)?;
        let pool: Vec<f64> = valid
            .iter()
            .flat_map(|&v| (0..l).map(move |j| if j < v { 1.0 / v as f64 } else { 0.0 }))
            .collect();
        let pool = float_tensor(pool, &[r, l, 1], self.dtype(), self.device())?;
        let pooled = hidden
            .iter()
            .map(|h| Ok(h.narrow(1, 1, l)?.broadcast_mul(&pool)?.sum(1)?))
            .collect::<Result<Vec<_>>>()?;
        Ok((logits, pooled))
    }

    /// Single-row convenience: `dec_feat` of width `d`, `gt_tokens` the content
    /// tokens of the target (no BOS/EOS). Logits have `len + 1` rows.
    pub fn decode_teacher_forcing(&self, dec_feat: &Tensor, gt_tokens: &[u32]) -> Result<(Tensor, Vec<Tensor>)> {
        if gt_tokens.len() > self.cfg.arch.max_len {
            bail!(Input, "{} target tokens exceed max_len {}", gt_tokens.len(), self.cfg.arch.max_len);
        }
        let n = gt_tokens.len() + 1;
        let ids: Vec<u32> = std::iter::once(BOS).chain(gt_tokens.iter().copied()).collect();
        let inputs = u32_tensor(ids, &[1, n], self.device())?;
        let (logits, hidden) = self.decode_teacher_forcing_batch(&dec_feat.reshape((1, self.cfg.d()))?, &inputs, &[n])?;
        Ok((logits.squeeze(0)?, hidden.into_iter().map(|h| h.squeeze(0)).collect::<candle_core::Result<_>>()?))
    }

    fn clip_features(&self, batch: &ModelBatch) -> Result<Tensor> {
        let ing = self.encode_ingredient_nhot(&batch.nhot)?;
        let steps = self.encode_steps(&batch.step_input)?;
        let zero = Tensor::zeros((1, self.cfg.d()), self.dtype(), self.device())?;
        let table = Tensor::cat(&[&ing, &steps, &zero], 0)?;
        let b = batch.batch_size();
        Ok(table.index_select(&batch.clip_index, 0)?.reshape((b, batch.n_positions, self.cfg.d()))?)
    }

    /// Anticipated features for every decoder row, `(R, d)`.
    pub fn anticipate(&self, batch: &ModelBatch) -> Result<Tensor> {
        let clip = self.clip_features(batch)?;
        let (dec, _) = self.temporal_forward(&clip)?;
        let (b, s, d) = dec.dims3()?;
        Ok(dec.reshape((b * s, d))?.index_select(&batch.dec_rows, 0)?)
    }

    /// Full teacher-forced forward pass over a batch.
    pub fn forward(&self, batch: &ModelBatch) -> Result<ForwardTrace> {
        let clip = self.clip_features(batch)?;
        let (dec, temporal_hidden) = self.temporal_forward(&clip)?;
        let (b, s, d) = dec.dims3()?;
        let rows = dec.reshape((b * s, d))?.index_select(&batch.dec_rows, 0)?;
        let (logits, output_hidden) = self.decode_teacher_forcing_batch(&rows, &batch.dec_inputs, &batch.dec_valid)?;
        Ok(ForwardTrace {
            clip_feats: clip,
            dec_feats: dec,
            temporal_hidden,
            output_hidden,
            logits,
            steps: batch.steps.clone(),
            sample_ids: batch.sample_ids.clone(),
            position_rows: batch.position_rows.clone(),
        })
    }

    /// Caption loss of a teacher-forced forward pass.
    pub fn caption_loss(&self, trace: &ForwardTrace, batch: &ModelBatch) -> Result<Tensor> {
        caption_loss(&trace.logits, &batch.dec_targets, &batch.dec_mask)
    }

    /// Greedy decoding from `BOS` for each row of `(R, d)` anticipated
    /// features. Stops at EOS or after `max_len` content tokens; ties go to
    /// the lowest token id.
    pub fn generate_batch(&self, dec_feats: &Tensor) -> Result<Vec<Vec<u32>>> {
        let (r, _) = dec_feats.dims2()?;
        let mut seqs: Vec<Vec<u32>> = vec![Vec::new(); r];
        let mut active: Vec<usize> = (0..r).collect();
        for step in 0..self.cfg.arch.max_len {
            if active.is_empty() {
                break;
            }
            let ids: Vec<u32> = active
                .iter()
                .flat_map(|&i| std::iter::once(BOS).chain(seqs[i].iter().copied()))
                .collect();
            let inputs = u32_tensor(ids, &[active.len(), step + 1], self.device())?;
            let idx = u32_tensor(active.iter().map(|&i| i as u32).collect(), &[active.len()], self.device())?;
            let feats = dec_feats.index_select(&idx, 0)?;
            let (states, _) = self.decode_states(&feats, &inputs)?;
            let last = states.narrow(1, step, 1)?.squeeze(1)?;
            let scores = self.output.vocab_proj.forward(&last)?.to_dtype(DType::F64)?.to_vec2::<f64>()?;
            let mut still = Vec::with_capacity(active.len());
            for (&i, row) in active.iter().zip(&scores) {
                let tok = argmax_lowest(row) as u32;
                if tok != EOS {
                    seqs[i].push(tok);
                    still.push(i);
                }
            }
            active = still;
        }
        Ok(seqs)
    }

    pub fn generate(&self, dec_feat: &Tensor) -> Result<Vec<u32>> {
        let mut out = self.generate_batch(&dec_feat.reshape((1, self.cfg.d()))?)?;
        Ok(out.remove(0))
    }

    /// Next-step predictions for every decoder row of the batch.
    pub fn predict(&self, batch: &ModelBatch) -> Result<Vec<Vec<u32>>> {
        self.generate_batch(&self.anticipate(batch)?)
    }

    /// Raw handles to named tensors, for tests that need to pin specific weights.
    pub fn output_vocab_bias(&self) -> Option<&Tensor> {
        self.output.vocab_proj.bias()
    }
}

/// Index of the maximum; the first index wins ties.
pub fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean token-level cross-entropy over positions where `mask` is 1.
pub fn caption_loss(logits: &Tensor, targets: &Tensor, mask: &Tensor) -> Result<Tensor> {
    if logits.dims()[..2] != *targets.dims() || targets.dims() != mask.dims() {
        bail!(Input, "caption_loss shape mismatch: {:?} {:?} {:?}", logits.dims(), targets.dims(), mask.dims());
    }
    let count = mask.to_dtype(DType::F64)?.sum_all()?.to_scalar::<f64>()?;
    if count <= 0.0 {
        bail!(Input, "caption_loss target has no non-PAD positions");
    }
    let logp = log_softmax_last(logits)?;
    let picked = logp.gather(&targets.unsqueeze(D::Minus1)?, D::Minus1)?.squeeze(D::Minus1)?;
    Ok(((picked * mask)?.sum_all()? * (-1.0 / count))?)
}
