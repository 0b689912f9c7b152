use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{ccd_loss_projected, feature_l2_projected, logits_distill_loss};
use crate::error::{bail, Result};
use crate::model::{ForwardTrace, Linear, ModelBatch, ModelConfig, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TapKind {
    Clip,
    Dec,
    Temporal,
    Output,
}

impl TapKind {
    pub const ALL: [TapKind; 4] = [TapKind::Clip, TapKind::Dec, TapKind::Temporal, TapKind::Output];

    pub fn name(self) -> &'static str {
        match self {
            TapKind::Clip => "clip",
            TapKind::Dec => "dec",
            TapKind::Temporal => "temporal",
            TapKind::Output => "output",
        }
    }
}

impl std::fmt::Display for TapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillMode {
    Ccd,
    LogitsKl,
    FeatureL2,
    None,
}

impl std::fmt::Display for DistillMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistillMode::Ccd => "ccd",
            DistillMode::LogitsKl => "logits_kl",
            DistillMode::FeatureL2 => "feature_l2",
            DistillMode::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    pub mode: DistillMode,
    pub margin: f64,
    pub weight: f64,
    pub taps: Vec<TapKind>,
    /// Common projection width; `None` means `min(d_student, d_teacher)`.
    pub proj_dim: Option<usize>,
    pub temperature: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            mode: DistillMode::Ccd,
            margin: 0.2,
            weight: 10.0,
            taps: TapKind::ALL.to_vec(),
            proj_dim: None,
            temperature: 1.0,
        }
    }
}

impl DistillConfig {
    pub fn none() -> Self {
        Self {
            mode: DistillMode::None,
            weight: 0.0,
            taps: Vec::new(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            bail!(Config, "margin must be positive");
        }
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            bail!(Config, "distillation weight must be non-negative");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            bail!(Config, "temperature must be positive");
        }
        if self.mode != DistillMode::None && self.taps.is_empty() {
            bail!(Config, "distillation mode {} needs at least one tap", self.mode);
        }
        if self.proj_dim == Some(0) {
            bail!(Config, "proj_dim must be positive");
        }
        Ok(())
    }

    /// Active taps, deduplicated in canonical order.
    pub fn active_taps(&self) -> Vec<TapKind> {
        TapKind::ALL.into_iter().filter(|k| self.taps.contains(k)).collect()
    }
}

/// Where one tap pair came from. `position` is the temporal position
/// (0 = ingredients) for every tap kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapOrigin {
    pub sample_id: u64,
    pub position: usize,
}

/// Pairs for one `(kind, layer)`; row `k` of `student` pairs with row `k` of `teacher`.
#[derive(Debug, Clone)]
pub struct TapGroup {
    pub kind: TapKind,
    pub layer: usize,
    pub student: Tensor,
    pub teacher: Tensor,
    pub origins: Vec<TapOrigin>,
}

impl TapGroup {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TapBatch {
    pub groups: Vec<TapGroup>,
}

impl TapBatch {
    /// Total number of pairs over all groups.
    pub fn len(&self) -> usize {
        self.groups.iter().map(TapGroup::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pairs teacher and student features at the configured taps. Teacher
/// features are detached.
pub fn collect_taps(student: &ForwardTrace, teacher: &ForwardTrace, cfg: &DistillConfig) -> Result<TapBatch> {
    if cfg.mode != DistillMode::None && cfg.taps.is_empty() {
        bail!(Config, "distillation mode {} needs at least one tap", cfg.mode);
    }
    if student.steps != teacher.steps || student.sample_ids != teacher.sample_ids {
        bail!(
            Alignment,
            "teacher and student traces cover different steps: {:?} vs {:?}",
            teacher.steps,
            student.steps
        );
    }
    let positions: Vec<TapOrigin> = student
        .sample_ids
        .iter()
        .zip(&student.steps)
        .flat_map(|(&id, &t)| (0..=t).map(move |p| TapOrigin { sample_id: id, position: p }))
        .collect();
    let rows: Vec<TapOrigin> = student
        .sample_ids
        .iter()
        .zip(&student.steps)
        .flat_map(|(&id, &t)| (0..t).map(move |p| TapOrigin { sample_id: id, position: p }))
        .collect();
    let mut groups = Vec::new();
    let positional = |kind, layer, s: &Tensor, t: &Tensor| -> Result<TapGroup> {
        Ok(TapGroup {
            kind,
            layer,
            student: student.valid_positions(s)?,
            teacher: teacher.valid_positions(t)?.detach(),
            origins: positions.clone(),
        })
    };
    for kind in cfg.active_taps() {
        match kind {
            TapKind::Clip => groups.push(positional(kind, 0, &student.clip_feats, &teacher.clip_feats)?),
            TapKind::Dec => groups.push(positional(kind, 0, &student.dec_feats, &teacher.dec_feats)?),
            TapKind::Temporal => {
                if student.temporal_hidden.len() != teacher.temporal_hidden.len() {
                    bail!(Alignment, "temporal depth differs between teacher and student");
                }
                for (l, (s, t)) in student.temporal_hidden.iter().zip(&teacher.temporal_hidden).enumerate() {
                    groups.push(positional(kind, l, s, t)?);
                }
            }
            TapKind::Output => {
                if student.output_hidden.len() != teacher.output_hidden.len() {
                    bail!(Alignment, "output depth differs between teacher and student");
                }
                for (l, (s, t)) in student.output_hidden.iter().zip(&teacher.output_hidden).enumerate() {
                    groups.push(TapGroup {
                        kind,
                        layer: l,
                        student: s.clone(),
                        teacher: t.detach(),
                        origins: rows.clone(),
                    });
                }
            }
        }
    }
    Ok(TapBatch { groups })
}

/// Learnable maps applied before comparing a pair. `None` is the identity.
#[derive(Debug, Clone)]
pub struct Projection {
    pub student: Option<Linear>,
    pub teacher: Option<Linear>,
}

impl Projection {
    pub fn identity() -> Self {
        Self { student: None, teacher: None }
    }

    pub fn apply(&self, group: &TapGroup) -> Result<(Tensor, Tensor)> {
        let zs = match &self.student {
            Some(p) => p.forward(&group.student)?,
            None => group.student.clone(),
        };
        let zt = match &self.teacher {
            Some(p) => p.forward(&group.teacher)?,
            None => group.teacher.clone(),
        };
        Ok((zs, zt))
    }
}

/// One projection pair per `(tap kind, layer)`.
#[derive(Debug, Clone)]
pub struct ProjectionBank {
    params: ParamStore,
    maps: BTreeMap<(TapKind, usize), Projection>,
}

impl ProjectionBank {
    /// CCD projects both sides into `proj_dim` (default `min(d_S, d_T)`);
    /// feature L2 maps the student to the teacher width only when they differ.
    pub fn new(
        cfg: &DistillConfig,
        student: &ModelConfig,
        teacher: &ModelConfig,
        seed: u64,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new(dtype, device.clone());
        let mut maps = BTreeMap::new();
        let (ds, dt) = (student.d(), teacher.d());
        let dc = cfg.proj_dim.unwrap_or(ds.min(dt));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = |kind| match kind {
            TapKind::Clip | TapKind::Dec => 1,
            TapKind::Temporal => student.arch.temporal_layers.min(teacher.arch.temporal_layers),
            TapKind::Output => student.arch.output_layers.min(teacher.arch.output_layers),
        };
        for kind in cfg.active_taps() {
            for l in 0..layers(kind) {
                let name = format!("proj.{kind}.{l}");
                let proj = match cfg.mode {
                    DistillMode::Ccd => Projection {
                        student: Some(Linear::new(&mut params, &format!("{name}.student"), ds, dc, false, &mut rng)?),
                        teacher: Some(Linear::new(&mut params, &format!("{name}.teacher"), dt, dc, false, &mut rng)?),
                    },
                    DistillMode::FeatureL2 if ds != dt => Projection {
                        student: Some(Linear::new(&mut params, &format!("{name}.student"), ds, dt, false, &mut rng)?),
                        teacher: None,
                    },
                    _ => Projection::identity(),
                };
                maps.insert((kind, l), proj);
            }
        }
        Ok(Self { params, maps })
    }

    /// A bank built from explicit projections (tests and foreign callers).
    pub fn from_projections(maps: BTreeMap<(TapKind, usize), Projection>, dtype: DType, device: &Device) -> Self {
        Self {
            params: ParamStore::new(dtype, device.clone()),
            maps,
        }
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn get(&self, kind: TapKind, layer: usize) -> Result<&Projection> {
        match self.maps.get(&(kind, layer)) {
            Some(p) => Ok(p),
            None => bail!(Alignment, "no projection for tap {kind} layer {layer}"),
        }
    }
}

/// Sum of the per-group triplet losses; negatives never cross groups.
pub fn ccd_loss(batch: &TapBatch, bank: &ProjectionBank, alpha: f64) -> Result<Tensor> {
    if batch.is_empty() {
        bail!(Input, "empty tap batch");
    }
    let mut total: Option<Tensor> = None;
    for g in &batch.groups {
        let (zs, zt) = bank.get(g.kind, g.layer)?.apply(g)?;
        let l = ccd_loss_projected(&zs, &zt, alpha)?;
        total = Some(match total {
            Some(t) => (t + l)?,
            None => l,
        });
    }
    Ok(total.expect("non-empty"))
}

/// Mean squared difference over every pair and dimension of the batch.
pub fn feature_distill_loss(batch: &TapBatch, bank: &ProjectionBank) -> Result<Tensor> {
    if batch.is_empty() {
        bail!(Input, "empty tap batch");
    }
    let mut zs = Vec::with_capacity(batch.groups.len());
    let mut zt = Vec::with_capacity(batch.groups.len());
    for g in &batch.groups {
        let (s, t) = bank.get(g.kind, g.layer)?.apply(g)?;
        if s.dims() != t.dims() {
            bail!(Input, "tap {} layer {} pairs differ after projection", g.kind, g.layer);
        }
        zs.push(s);
        zt.push(t);
    }
    feature_l2_projected(&Tensor::cat(&zs, 0)?, &Tensor::cat(&zt, 0)?)
}

/// Distillation objective for one training configuration.
#[derive(Debug, Clone)]
pub struct Distiller {
    pub cfg: DistillConfig,
    bank: ProjectionBank,
}

impl Distiller {
    pub fn new(
        cfg: DistillConfig,
        student: &ModelConfig,
        teacher: &ModelConfig,
        seed: u64,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        let bank = ProjectionBank::new(&cfg, student, teacher, seed, dtype, device)?;
        Ok(Self { cfg, bank })
    }

    pub fn bank(&self) -> &ProjectionBank {
        &self.bank
    }

    /// Unweighted distillation loss for one batch.
    pub fn loss(&self, student: &ForwardTrace, teacher: &ForwardTrace, batch: &ModelBatch) -> Result<Tensor> {
        match self.cfg.mode {
            DistillMode::None => Ok(Tensor::zeros((), student.logits.dtype(), student.logits.device())?),
            DistillMode::Ccd => ccd_loss(&collect_taps(student, teacher, &self.cfg)?, &self.bank, self.cfg.margin),
            DistillMode::FeatureL2 => feature_distill_loss(&collect_taps(student, teacher, &self.cfg)?, &self.bank),
            DistillMode::LogitsKl => {
                if student.steps != teacher.steps || student.sample_ids != teacher.sample_ids {
                    bail!(Alignment, "teacher and student traces cover different steps");
                }
                logits_distill_loss(&student.logits, &teacher.logits, &batch.dec_mask, self.cfg.temperature)
            }
        }
    }
}
